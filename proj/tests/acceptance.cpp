// Acceptance suite: one PASS/FAIL line per criterion.
//   acceptance            run everything
//   acceptance 1 4 10     run a subset
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "cdnas/cd_ops.hpp"
#include "cdnas/cdn_net.hpp"
#include "cdnas/dynamic_rep.hpp"
#include "cdnas/errors.hpp"
#include "cdnas/harness.hpp"
#include "cdnas/meta_nas.hpp"
#include "cdnas/metrics.hpp"
#include "cdnas/supernet.hpp"
#include "cdnas/supervision.hpp"
#include "test_util.hpp"
#include "toy_models.hpp"

using namespace cdnas;
using cdnas::testing::grad_check;
using cdnas::testing::random_tensor;
namespace fs = std::filesystem;

namespace {

// Collects failed expectations; the first few end up on the result line.
class Check {
 public:
  void expect(bool ok, const std::string& what) {
    ++count_;
    if (!ok) failures_.push_back(what);
  }
  void note(const std::string& s) { notes_.push_back(s); }
  bool passed() const { return failures_.empty(); }
  std::string detail() const {
    std::ostringstream os;
    if (!passed()) {
      os << failures_.size() << "/" << count_ << " failed: ";
      for (std::size_t i = 0; i < failures_.size() && i < 3; ++i) os << (i ? "; " : "") << failures_[i];
    } else {
      os << count_ << " checks";
    }
    for (const auto& n : notes_) os << " | " << n;
    return os.str();
  }

 private:
  std::size_t count_ = 0;
  std::vector<std::string> failures_, notes_;
};

std::string fmt(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.4g", v);
  return b;
}

template <typename T>
CdcParams<T> cdc_params(Tensor<T> w, double theta, ConvGeometry g) {
  CdcParams<T> p;
  p.base.weight = Var<T>(std::move(w));
  p.base.geometry = g;
  p.theta = static_cast<T>(theta);
  return p;
}

// ---------------------------------------------------------------------------

void operator_identities(Check& c) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const ConvGeometry g{1 + rng.index(2), rng.index(2), 1, 1};
    auto x = random_tensor({2, 3, 7, 6}, rng).cast<float>();
    auto w = random_tensor({4, 3, 3, 3}, rng).cast<float>();
    const auto ref = conv2d<float>(Var<float>(x), Var<float>(w), std::nullopt, g).value();
    const auto cdc = cdc_forward_efficient(Var<float>(x), cdc_params(w, 0.0, g)).value();
    const auto lit = cdc_forward(x, cdc_params(w, 0.0, g));
    const double scale = ref.max_abs();
    c.expect(max_abs_diff(cdc, ref) <= 4 * std::numeric_limits<float>::epsilon() * scale, "CDC(theta=0) != conv2d");
    c.expect(max_abs_diff(lit, ref) <= 16 * std::numeric_limits<float>::epsilon() * scale,
             "literal CDC(theta=0) != conv2d");
    for (std::size_t k : {3u, 5u}) {
      const auto p = cdp_forward(Var<float>(x), CdpParams{k, 2, 0.0}).value();
      const auto a = avg_pool2d(Var<float>(x), k, 2, k / 2).value();
      c.expect(max_abs_diff(p, a) <= 4 * std::numeric_limits<float>::epsilon() * a.max_abs(), "CDP(lambda=0) != avg_pool");
    }
  }
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = rng.index(2) ? 3 : 5;
    const std::size_t dil = 1 + rng.index(2);
    const std::size_t groups = rng.index(2) ? 2 : 1;
    const std::size_t cin = 2 * (1 + rng.index(2)), cout = 2 * (1 + rng.index(2));
    const std::size_t h = dil * (k - 1) + 1 + rng.index(5);
    const ConvGeometry g{1 + rng.index(2), rng.index(k / 2 + 1), dil, groups};
    auto x = random_tensor({1 + rng.index(2), cin, h, h + rng.index(3)}, rng).cast<float>();
    auto w = random_tensor({cout, cin / groups, k, k}, rng).cast<float>();
    auto p = cdc_params(w, rng.uniform(0, 1), g);
    const auto e = cdc_forward_efficient(Var<float>(x), p).value().cast<double>();
    const auto l = cdc_forward(x, p).cast<double>();
    worst = std::max(worst, max_abs_diff(e, l) / l.max_abs());
  }
  c.expect(worst < 1e-6, "efficient vs literal CDC rel err " + fmt(worst));
  c.note("efficient vs literal max rel err " + fmt(worst));
}

void gradient_suite(Check& c) {
  Rng rng(2);
  double worst = 0;
  auto gc = [&](const std::string& name, auto f, std::vector<Tensor<double>> in, double h = 1e-5,
                double floor = 1e-6) {
    const double e = grad_check(f, in, h, floor).max_rel_error;
    worst = std::max(worst, e);
    c.expect(e < 1e-4, name + " rel err " + fmt(e));
  };
  auto probe = random_tensor({2, 3, 3, 3}, rng);
  gc("conv2d",
     [&](const std::vector<Var<double>>& v) {
       return sum(mul(conv2d<double>(v[0], v[1], v[2], {2, 1, 1, 1}), Var<double>(probe)));
     },
     {random_tensor({2, 2, 6, 5}, rng), random_tensor({3, 2, 3, 3}, rng), random_tensor({3}, rng)});
  for (double theta : {0.3, 0.7}) {
    gc("cdc",
       [&](const std::vector<Var<double>>& v) {
         CdcParams<double> p;
         p.base.weight = v[1];
         p.base.bias = v[2];
         p.base.geometry = {2, 1, 1, 1};
         p.theta = theta;
         return sum(mul(cdc_forward_efficient(v[0], p), Var<double>(probe)));
       },
       {random_tensor({2, 2, 6, 5}, rng), random_tensor({3, 2, 3, 3}, rng), random_tensor({3}, rng)});
  }
  auto pool_probe = random_tensor({2, 2, 3, 4}, rng);
  gc("cdp",
     [&](const std::vector<Var<double>>& v) {
       return sum(mul(cdp_forward(v[0], CdpParams{3, 2, 0.7}), Var<double>(pool_probe)));
     },
     {random_tensor({2, 2, 6, 7}, rng)});
  gc("attention",
     [](const std::vector<Var<double>>& v) {
       Rng r(11);
       SpatialAttention<double> att(3, r);
       return sum(square(att.forward(v[0])));
     },
     {random_tensor({2, 3, 5, 5}, rng)});

  const auto target = random_tensor({2, 1, 4, 5}, rng, 0, 1);
  Tensor<double> bin(target.shape());
  for (auto& x : bin.data()) x = double(rng.index(2));
  gc("mse", [&](const std::vector<Var<double>>& x) { return mse_loss(x[0], Var<double>(target)); },
     {random_tensor({2, 1, 4, 5}, rng)});
  gc("contrastive depth",
     [&](const std::vector<Var<double>>& x) { return contrastive_depth_loss(x[0], Var<double>(target)); },
     {random_tensor({2, 1, 4, 5}, rng)});
  gc("overall depth",
     [&](const std::vector<Var<double>>& x) { return overall_depth_loss(x[0], Var<double>(target)); },
     {random_tensor({2, 1, 4, 5}, rng)});
  gc("deeppixel", [&](const std::vector<Var<double>>& x) { return deeppixel_loss(x[0], Var<double>(bin)); },
     {random_tensor({2, 1, 4, 5}, rng, -3, 3)});
  gc("cross entropy", [&](const std::vector<Var<double>>& x) { return cross_entropy(x[0], {0, 1, 1}); },
     {random_tensor({3, 2}, rng, -2, 2)});

  SearchSpace space = fas_space(OpVariant::cd);
  space.ops = {"none", "skip_connect", "avg_pool_3x3", "conv_3x3", "CDC_3x3"};
  Tensor<double> a({5});
  for (auto& v : a.data()) v = rng.normal();
  gc("mixed op",
     [&](const std::vector<Var<double>>& v) {
       Rng init(8);
       MixedOp<double> mixed(space, v[1], 2, 1, 1, init);
       return sum(square(mixed.forward(v[0])));
     },
     {random_tensor({2, 2, 4, 4}, rng), a});

  // Meta steps on the two-op toy: inner gradient at phi, query gradient at
  // phi' = phi - g1 grad L_s, and the outer update that consumes it.
  cdnas::testing::TwoOpToy toy(0.3, {1.0, 0.4}, 0.1);
  toy.alpha().mutable_value()[0] = 0.2;
  Batch<double> s, q;
  s.x = Tensor<double>({3}, std::vector<double>{0.5, 1.0, 1.5});
  s.target = Tensor<double>({3}, std::vector<double>{1.0, 2.1, 2.9});
  q.x = Tensor<double>({3}, std::vector<double>{0.2, 0.9, 1.7});
  q.target = Tensor<double>({3}, std::vector<double>{0.5, 1.6, 3.5});
  auto w = toy.weights()[0];
  auto fd = [&](const Batch<double>& b, Var<double> p) {
    const double orig = p.value()[0], h = 1e-6;
    NoGradGuard guard;
    p.mutable_value()[0] = orig + h;
    const double lp = toy.loss(b).value().item();
    p.mutable_value()[0] = orig - h;
    const double lm = toy.loss(b).value().item();
    p.mutable_value()[0] = orig;
    return (lp - lm) / (2 * h);
  };
  auto rel = [](double x, double y) { return std::abs(x - y) / std::max({std::abs(x), std::abs(y), 1e-12}); };
  std::vector<Tensor<double>> g;
  loss_and_grads<double>(toy, {s}, {w}, g);
  const double inner = rel(g[0][0], fd(s, w));
  c.expect(inner < 1e-4, "meta inner step rel err " + fmt(inner));
  const double g1 = 0.1, phi0 = w.value()[0];
  w.mutable_value()[0] = phi0 - g1 * g[0][0];
  const double query = fd(q, w);
  w.mutable_value()[0] = phi0;
  Sgd<double> outer(1.0), arch(0.0);
  meta_step<double>(toy, {s}, q, outer, arch, g1, 1, false);
  const double outer_err = rel(phi0 - toy.weights()[0].value()[0], query);
  c.expect(outer_err < 1e-4, "meta outer step rel err " + fmt(outer_err));
  const double alpha_fd = [&] {
    auto al = toy.alpha();
    return fd(q, al);
  }();
  std::vector<Tensor<double>> ga;
  loss_and_grads<double>(toy, {q}, {toy.alpha()}, ga);
  const double arch_err = rel(ga[0][0], alpha_fd);
  c.expect(arch_err < 1e-4, "arch gradient rel err " + fmt(arch_err));
  worst = std::max({worst, inner, outer_err, arch_err});
  c.note("worst rel err " + fmt(worst));
}

void parameter_budget(Check& c) {
  std::vector<std::size_t> n;
  for (auto v : {CdnVariant::depthnet, CdnVariant::cdn_cdc, CdnVariant::cdn_cdp}) {
    CdnConfig cfg;
    cfg.variant = v;
    cfg.input_size = 256;
    Rng rng(3);
    n.push_back(build_cdn<float>(cfg, rng)->param_count());
  }
  c.expect(std::abs(double(n[0]) - 2.25e6) <= 0.1 * 2.25e6, "count " + std::to_string(n[0]));
  c.expect(n[0] == n[1] && n[0] == n[2], "variants differ");
  c.note("params " + std::to_string(n[0]));
}

void space_cardinality(Check& c) {
  using boost::multiprecision::cpp_int;
  cpp_int b = 1, f = 1;
  for (int i = 0; i < 20; ++i) b *= 7;
  for (int i = 0; i < 12; ++i) f *= 8;
  for (auto v : {OpVariant::vanilla, OpVariant::cd}) {
    c.expect(space_size(baseline_space(v)) == b, "baseline != 7^20");
    c.expect(space_size(fas_space(v)) == f, "fas != 8^12");
  }
  c.note("baseline " + space_size(baseline_space(OpVariant::cd)).str() + ", fas " +
         space_size(fas_space(OpVariant::cd)).str());
}

void rank_pooling(Check& c) {
  Rng rng(5);
  RankPoolOptions exact;
  exact.solver = RankPoolSolver::exact;
  exact.max_sweeps = 20000;
  auto random_frame = [&](const Shape& s) {
    Tensor<float> f(s);
    for (auto& v : f.data()) v = float(rng.uniform());
    return f;
  };
  const auto base = random_frame({3, 4, 4});
  const FrameSequence constant{{base, base, base, base, base}};
  c.expect(rank_pool_detailed(constant, exact).image.max_abs() < 1e-6, "constant sequence (exact) not zero");
  c.expect(rank_pool(constant, RankPoolSolver::approximate).max_abs() < 1e-6, "constant sequence (approx) not zero");

  // K = 2: D = c v with v = mean - first and c = min(1, 1 / |v|^2); checked
  // against a golden-section search of the convex objective along v.
  for (double scale : {0.05, 0.2, 1.0, 3.0}) {
    FrameSequence seq{{random_frame({3, 2, 2}), random_frame({3, 2, 2})}};
    for (auto& v : seq.frames[1].data()) v = float(v * scale);
    std::vector<double> v(12);
    double vv = 0;
    for (std::size_t i = 0; i < 12; ++i) {
      v[i] = (double(seq.frames[0][i]) + double(seq.frames[1][i])) / 2 - double(seq.frames[0][i]);
      vv += v[i] * v[i];
    }
    auto f = [&](double t) { return 0.5 * t * t * vv + std::max(0.0, 1 - t * vv); };
    double lo = 0, hi = 10.0 / std::min(vv, 1.0);
    const double phi = (std::sqrt(5.0) - 1) / 2;
    for (int it = 0; it < 300; ++it) {
      const double a = hi - phi * (hi - lo), b = lo + phi * (hi - lo);
      if (f(a) < f(b)) hi = b;
      else lo = a;
    }
    const double t = (lo + hi) / 2;
    const auto d = rank_pool_detailed(seq, exact).image;
    double err = 0;
    for (std::size_t i = 0; i < 12; ++i) err = std::max(err, std::abs(double(d[i]) - t * v[i]));
    c.expect(err < 1e-4, "K=2 oracle err " + fmt(err) + " at scale " + fmt(scale));
  }

  for (int trial = 0; trial < 5; ++trial) {
    FrameSequence a, b;
    const float shift = 0.25f * float(1 + rng.index(3));
    for (int t = 0; t < 5; ++t) {
      Tensor<float> f({3, 3, 3});
      for (auto& v : f.data()) v = float(rng.index(16)) / 32.0f;  // dyadic, so the shift is exact
      a.frames.push_back(f);
      for (auto& v : f.data()) v += shift;
      b.frames.push_back(f);
    }
    c.expect(rank_pool(a, RankPoolSolver::approximate) == rank_pool(b, RankPoolSolver::approximate),
             "approximate pool not translation invariant");
    c.expect(rank_pool_detailed(a, exact).image == rank_pool_detailed(b, exact).image,
             "exact pool not translation invariant");
  }
}

void discretization(Check& c) {
  Rng rng(6);
  const auto dir = fs::temp_directory_path() / ("cdnas_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  for (const auto& space : {baseline_space(OpVariant::cd), fas_space(OpVariant::cd)}) {
    c.expect(space.keep == (space.kind == SpaceKind::baseline ? 2u : 1u), "keep rule for " + space.id());
    for (int trial = 0; trial < 10; ++trial) {
      Rng init(7);
      Supernet<double> net(space, NetworkOptions{2, 16}, SupernetOptions{}, init);
      for (std::size_t cell = 0; cell < space.cell_types; ++cell)
        for (std::size_t e = 0; e < space.edges.size(); ++e)
          for (auto& v : net.alpha(cell, e).mutable_value().data()) v = rng.normal();
      const auto g = net.discretize();
      for (const auto& cell : g.cells)
        for (std::size_t j = space.input_nodes; j < space.input_nodes + space.intermediate_nodes; ++j) {
          std::size_t in = 0;
          for (const auto& e : cell.edges) in += e.to == j;
          c.expect(in == space.keep, space.id() + ": node " + std::to_string(j) + " keeps " + std::to_string(in));
        }
      for (std::size_t cell = 0; cell < space.cell_types; ++cell)
        for (std::size_t e = 0; e < space.edges.size(); ++e) {
          const double shift = rng.uniform(-5, 5);
          for (auto& v : net.alpha(cell, e).mutable_value().data()) v += shift;
        }
      c.expect(net.discretize() == g, space.id() + ": genotype changed under alpha shift");

      auto sampled = random_sample(space, rng);
      const auto p1 = dir / "a.json", p2 = dir / "b.json";
      save_genotype(p1, sampled);
      const auto back = load_genotype(p1);
      save_genotype(p2, back);
      auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), {});
      };
      c.expect(back == sampled && slurp(p1) == slurp(p2), space.id() + ": genotype round trip not stable");
    }
  }
  fs::remove_all(dir);
}

void meta_algebra(Check& c) {
  using cdnas::testing::scalar_batch;
  using cdnas::testing::ScalarToy;
  {
    ScalarToy toy(0.7, -0.2);
    Sgd<double> outer(0.0), arch(0.0);
    for (int it = 0; it < 5; ++it)
      meta_step<double>(toy, {scalar_batch(1.0), scalar_batch(-2.0)}, scalar_batch(3.0), outer, arch, 0.0, 1, true);
    c.expect(toy.phi() == 0.7 && toy.a() == -0.2, "zero rates moved the parameters");
  }
  {
    // gamma1 = 0 on a linear model: phi' = phi - gt * N * grad L_q.
    Tensor<double> phi0({3}, std::vector<double>{0.3, -1.2, 2.0});
    cdnas::testing::LinearToy meta(phi0, Tensor<double>({2}, std::vector<double>{0.1, 0.4}));
    auto batch = [](std::vector<double> m, std::vector<double> t) {
      Batch<double> b;
      const std::size_t nm = m.size(), nt = t.size();
      b.x = Tensor<double>({nm}, std::move(m));
      b.target = Tensor<double>({nt}, std::move(t));
      b.labels = {1};
      return b;
    };
    const auto q = batch({0.25, -3, 1.5}, {0.2, -0.7});
    const double gt = 0.1;
    Sgd<double> outer(gt), arch(0.0);
    meta_step<double>(meta, {batch({1, 2, 3}, {0, 0}), batch({-1, 0.5, 4}, {1, 1})}, q, outer, arch, 0.0, 1, false);
    const auto phi = meta.weights()[0].value();
    double err = 0;
    for (std::size_t k = 0; k < 3; ++k) err = std::max(err, std::abs(phi[k] - (phi0[k] - gt * 2 * q.x[k])));
    c.expect(err < 1e-10, "gamma1 = 0 step err " + fmt(err));
  }
  {
    // L = 1/2 (phi - c)^2 + a phi + 1/2 a^2, support c1, query c2, then swapped.
    const double phi = 0.4, a = 0.3, c1 = 1.0, c2 = -0.5, g1 = 0.1, gt = 0.2, g2 = 0.3;
    const double p1 = phi - gt * ((phi - g1 * (phi - c1 + a)) - c2 + a);
    const double a1 = a - g2 * (p1 + a);
    const double p2 = p1 - gt * ((p1 - g1 * (p1 - c2 + a1)) - c1 + a1);
    const double a2 = a1 - g2 * (p2 + a1);
    ScalarToy toy(phi, a);
    Sgd<double> outer(gt), arch(g2);
    meta_step<double>(toy, {scalar_batch(c1)}, scalar_batch(c2), outer, arch, g1, 1, true);
    c.expect(std::abs(toy.phi() - p1) < 1e-10 && std::abs(toy.a() - a1) < 1e-10, "first oracle iteration");
    meta_step<double>(toy, {scalar_batch(c2)}, scalar_batch(c1), outer, arch, g1, 1, true);
    c.expect(std::abs(toy.phi() - p2) < 1e-10 && std::abs(toy.a() - a2) < 1e-10, "second oracle iteration");
  }
}

void metric_oracles(Check& c) {
  Rng rng(10);
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s;
    std::vector<int> l;
    for (int i = 0; i < 20; ++i) {
      l.push_back(i < 2 ? i : int(rng.index(2)));
      const double v = rng.uniform() + 0.3 * l.back();
      s.push_back(trial % 3 == 0 ? std::round(v * 5) / 5 : v);  // some sets with ties
    }
    double num = 0, den = 0;
    for (int i = 0; i < 20; ++i)
      for (int j = 0; j < 20; ++j)
        if (l[i] == 1 && l[j] == 0) {
          den += 1;
          num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
        }
    worst = std::max(worst, std::abs(auc(s, l) - num / den));
    for (int k = 0; k < 10; ++k) {
      const auto r = error_rates(s, l, rng.uniform(-0.2, 1.5));
      c.expect(r.acer == (r.apcer + r.bpcer) / 2, "ACER != (APCER + BPCER) / 2");
    }
  }
  c.expect(worst < 1e-9, "AUC vs pairwise oracle " + fmt(worst));
  c.expect(relative_improvement(0.2, 0.2) == 0.0, "RI equal");
  c.expect(std::abs(relative_improvement(0.1, 0.2) - 50.0) < 1e-12, "RI 0.1 vs 0.2");
  c.expect(std::abs(relative_improvement(0.03, 0.04) - 25.0) < 1e-12, "RI 0.03 vs 0.04");
  c.expect(std::abs(relative_improvement(0.05, 0.04) + 25.0) < 1e-12, "RI 0.05 vs 0.04");
  c.expect(relative_improvement(0.0, 0.0) == 0.0, "RI 0 vs 0");
  c.expect(std::isinf(relative_improvement(0.1, 0.0)), "RI against 0");
  c.note("AUC max err " + fmt(worst));
}

// Shared synthetic task for the end-to-end criteria: three domains, 64x64,
// leave-one-domain-out with domain 0 held out.
const Workspace& e2e_workspace() {
  static const Workspace ws = [] {
    TaskSpec spec;
    spec.per_class = 16;
    spec.seed = 1;
    Workspace w;
    w.data = gen_dataset(spec);
    w.split = split(w.data, SplitMode::leave_one_domain_out, 0, Rng(0).substream("data").seed());
    return w;
  }();
  return ws;
}

const std::vector<std::uint64_t> kSeeds{0, 1, 2};

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / double(v.size());
}

std::string list(const std::vector<double>& v) {
  std::string out;
  for (double x : v) out += (out.empty() ? "" : "/") + fmt(x);
  return out;
}

void end_to_end_search(Check& c) {
  const auto& ws = e2e_workspace();
  RunConfig cfg;
  cfg.space = "fas/cd/max/noatt";
  cfg.scheme = SearchScheme::dt_meta;
  cfg.channels = 4;
  cfg.partial_channels = 2;
  cfg.seeds = kSeeds;
  const auto t0 = std::chrono::steady_clock::now();
  const auto g = search_genotype(cfg, ws, {});
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  c.expect(secs < 1800, "search took " + fmt(secs) + " s");
  const auto space = SearchSpace::from_id(cfg.space);
  bool valid = true;
  try {
    g.validate(space);
  } catch (const ConfigError&) {
    valid = false;
  }
  c.expect(valid, "searched genotype invalid");
  const auto r = compare_genotypes(cfg, ws, g, sample_genotypes(space, 3, cfg.seed), {});
  std::vector<double> searched, random;
  for (const auto& run : r.runs)
    (run.at("role") == "searched" ? searched : random).push_back(run.at("metrics").at("acer").get<double>());
  c.expect(r.acer_search < 0.25, "searched LODO ACER " + fmt(r.acer_search) + " >= 0.25");
  c.expect(r.ri >= 0, "RI " + fmt(r.ri) + " < 0");
  c.note("search " + fmt(secs) + " s, searched ACER " + list(searched) + " mean " + fmt(r.acer_search) +
         ", random " + list(random) + " mean " + fmt(r.acer_random) + ", RI " + fmt(r.ri));
}

void cd_vs_vanilla(Check& c) {
  const auto& ws = e2e_workspace();
  std::vector<double> acer[2];
  int k = 0;
  for (auto v : {CdnVariant::depthnet, CdnVariant::cdn_cdc}) {
    RunConfig cfg;
    cfg.variant = v;
    cfg.theta = 0.7;
    for (auto seed : kSeeds) acer[k].push_back(train_cdn(cfg, ws, seed, {}).metrics.rates.acer);
    ++k;
  }
  c.expect(mean(acer[1]) < mean(acer[0]),
           "CDN_CDC mean ACER " + fmt(mean(acer[1])) + " not below DepthNet " + fmt(mean(acer[0])));
  c.note("DepthNet " + list(acer[0]) + " mean " + fmt(mean(acer[0])) + ", CDN_CDC " + list(acer[1]) + " mean " +
         fmt(mean(acer[1])));
}

struct Criterion {
  int id;
  std::string name;
  std::function<void(Check&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "operator identities", operator_identities},
      {2, "gradient suite", gradient_suite},
      {3, "parameter budget", parameter_budget},
      {4, "search-space cardinality", space_cardinality},
      {5, "rank pooling", rank_pooling},
      {6, "discretization", discretization},
      {7, "meta-NAS algebra", meta_algebra},
      {8, "end-to-end synthetic search", end_to_end_search},
      {9, "CD vs vanilla direction", cd_vs_vanilla},
      {10, "metric oracles", metric_oracles},
  };
  std::vector<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));
  int failed = 0;
  for (const auto& cr : all) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), cr.id) == wanted.end()) continue;
    Check c;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      cr.run(c);
    } catch (const std::exception& e) {
      c.expect(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !c.passed();
    std::cout << "criterion " << cr.id << " (" << cr.name << "): " << (c.passed() ? "PASS" : "FAIL") << " ["
              << fmt(secs) << " s] " << c.detail() << std::endl;
  }
  return failed ? 1 : 0;
}
