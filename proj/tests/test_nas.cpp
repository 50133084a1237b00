#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "cdnas/meta_nas.hpp"
#include "test_util.hpp"
#include "toy_models.hpp"

using namespace cdnas;
using cdnas::testing::random_tensor;

namespace {

SearchSpace toy_space(std::vector<std::string> ops) {
  SearchSpace s = fas_space(OpVariant::vanilla);
  s.ops = std::move(ops);
  return s;
}

Var<double> alpha_var(const std::vector<double>& v) {
  Tensor<double> t({v.size()});
  for (std::size_t i = 0; i < v.size(); ++i) t[i] = v[i];
  return Var<double>(t, true);
}

// Copies each candidate's parameters out of a mixed op into a standalone op.
void copy_candidate(const MixedOp<double>& mixed, const std::string& name, Module<double>& op) {
  auto src = mixed.named_parameters();
  auto dst = op.named_parameters();
  for (auto& [n, v] : dst) {
    for (auto& [m, w] : src)
      if (m == name + "." + n) v.mutable_value() = w.value();
  }
}

SampleSet<double> tiny_data(std::size_t n, std::size_t s, std::size_t head, int groups, std::uint64_t seed) {
  Rng rng(seed);
  SampleSet<double> d;
  d.x = random_tensor({n, 3, s, s}, rng, 0, 1);
  d.target = Tensor<double>({n, 1, head, head});
  for (std::size_t i = 0; i < n; ++i) {
    const int live = int(i % 2);
    d.labels.push_back(live);
    d.groups.push_back(int(i / 2) % groups);
    for (std::size_t k = 0; k < head * head; ++k) d.target[i * head * head + k] = live ? rng.uniform(0.5, 1) : 0;
  }
  return d;
}

}  // namespace

TEST(MixedOp, SaturatedAlphaSelectsOneOp) {
  Rng rng(1);
  const auto space = toy_space({"none", "skip_connect", "max_pool_3x3", "conv_3x3"});
  Var<double> x(random_tensor({2, 3, 6, 6}, rng));
  for (std::size_t pick = 0; pick < space.ops.size(); ++pick) {
    std::vector<double> a(space.ops.size(), -20.0);
    a[pick] = 20.0;
    Rng init(2);
    MixedOp<double> mixed(space, alpha_var(a), 3, 1, 1, init);
    Rng other(3);
    auto op = make_candidate_op<double>(space.ops[pick], 3, 1, space, other);
    copy_candidate(mixed, space.ops[pick], *op);
    const auto y = mixed.forward(x).value(), ref = op->forward(x).value();
    for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-5) << space.ops[pick];
  }
}

TEST(MixedOp, EqualAlphaIdentityAndZeroGivesHalf) {
  Rng rng(4);
  const auto space = toy_space({"none", "skip_connect"});
  MixedOp<double> mixed(space, alpha_var({0.3, 0.3}), 3, 1, 1, rng);
  Var<double> x(random_tensor({2, 3, 5, 5}, rng));
  const auto y = mixed.forward(x).value();
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_DOUBLE_EQ(y[i], x.value()[i] / 2);
}

TEST(MixedOp, MatchesWeightedSumOracle) {
  Rng rng(5);
  const auto space = toy_space({"avg_pool_3x3", "conv_3x3", "conv_2_2"});
  for (int trial = 0; trial < 3; ++trial) {
    std::vector<double> a{rng.normal(), rng.normal(), rng.normal()};
    Rng init(6 + trial);
    MixedOp<double> mixed(space, alpha_var(a), 2, 1, 1, init);
    Var<double> x(random_tensor({2, 2, 5, 5}, rng));
    const auto y = mixed.forward(x).value();
    double z = 0;
    for (double v : a) z += std::exp(v);
    Tensor<double> ref(y.shape());
    for (std::size_t k = 0; k < 3; ++k) {
      Rng other(0);
      auto op = make_candidate_op<double>(space.ops[k], 2, 1, space, other);
      copy_candidate(mixed, space.ops[k], *op);
      const auto o = op->forward(x).value();
      for (std::size_t i = 0; i < ref.numel(); ++i) ref[i] += std::exp(a[k]) / z * o[i];
    }
    for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
  }
}

TEST(MixedOp, GradientMatchesFiniteDifferences) {
  Rng rng(7);
  const auto space = toy_space({"none", "skip_connect", "avg_pool_3x3", "conv_3x3", "CDC_3x3"});
  const auto x = random_tensor({2, 2, 4, 4}, rng);
  Tensor<double> a({5});
  for (auto& v : a.data()) v = rng.normal();
  auto res = cdnas::testing::grad_check(
      [&](const std::vector<Var<double>>& v) {
        Rng init(8);
        MixedOp<double> mixed(space, v[1], 2, 1, 1, init);
        return sum(square(mixed.forward(v[0])));
      },
      {x, a});
  EXPECT_LT(res.max_rel_error, 1e-4);
}

TEST(PartialChannels, KOneIsPlainMixedOp) {
  Rng rng(9);
  const auto space = toy_space({"none", "skip_connect", "conv_3x3"});
  Var<double> x(random_tensor({2, 4, 5, 5}, rng));
  auto a = alpha_var({0.1, -0.4, 0.7});
  Rng i1(10), i2(10);
  MixedOp<double> plain(space, a, 4, 1, 1, i1), same(space, a, 4, 1, 1, i2);
  const auto y1 = plain.forward(x).value(), y2 = same.forward(x).value();
  for (std::size_t i = 0; i < y1.numel(); ++i) EXPECT_EQ(y1[i], y2[i]);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(plain.permutation()[c], c);
}

TEST(PartialChannels, ShapesBypassAndDeterminism) {
  Rng rng(11);
  const auto space = toy_space({"none", "skip_connect", "conv_3x3"});
  Var<double> x(random_tensor({2, 8, 6, 6}, rng));
  // alpha saturated on `none`: routed channels go to zero, bypassed ones pass through.
  auto a = alpha_var({40, -40, -40});
  Rng i1(12), i2(12);
  MixedOp<double> m1(space, a, 8, 1, 4, i1), m2(space, a, 8, 1, 4, i2);
  EXPECT_EQ(m1.permutation(), m2.permutation());
  const auto y = m1.forward(x).value();
  ASSERT_EQ(y.shape(), x.shape());
  const auto& perm = m1.permutation();
  for (std::size_t k = 0; k < 8; ++k) {
    const auto ch = perm[k];
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 6; ++j) {
        const double expect = k < 2 ? 0.0 : x.value().at(1, ch, i, j);
        EXPECT_NEAR(y.at(1, ch, i, j), expect, 1e-12);
      }
  }
  const auto reduction = toy_space({"none", "skip_connect", "max_pool_3x3"});
  Rng i3(13);
  MixedOp<double> strided(reduction, alpha_var({0, 0, 0}), 8, 2, 4, i3);
  EXPECT_EQ(strided.forward(x).shape(), (Shape{2, 8, 3, 3}));
  Rng i4(14);
  EXPECT_THROW(MixedOp<double>(space, alpha_var({0, 0, 0}), 6, 1, 4, i4), ConfigError);
}

TEST(Supernet, BetasAreDistributions) {
  Rng rng(15);
  Supernet<double> net(fas_space(OpVariant::cd), NetworkOptions{2, 16}, SupernetOptions{}, rng);
  auto check = [&] {
    for (const auto& cell : net.betas())
      for (const auto& b : cell) {
        double s = 0;
        for (double v : b) {
          EXPECT_GT(v, 0.0);
          s += v;
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
      }
  };
  check();
  auto data = tiny_data(8, 16, 2, 2, 1);
  MetaConfig cfg;
  cfg.epochs = 1;
  cfg.iterations = 2;
  cfg.batch_size = 2;
  cfg.gamma2 = 0.5;
  nas_search(net, data, cfg);
  check();
}

TEST(Supernet, ArchParametersAreSeparateFromWeights) {
  Rng rng(16);
  SupernetOptions so;
  so.edge_normalization = true;
  Supernet<double> net(baseline_space(OpVariant::cd), NetworkOptions{2, 16}, so, rng);
  EXPECT_EQ(net.arch().size(), 2u * 14u + 2u * 4u);
  for (const auto& [name, _] : net.named_parameters()) EXPECT_EQ(name.find("alpha"), std::string::npos);
  const auto w = net.weights();
  for (const auto& a : net.arch())
    for (const auto& p : w) EXPECT_NE(a.node(), p.node());
}

TEST(Discretize, HandSetAlpha) {
  const auto space = fas_space(OpVariant::vanilla);
  // ops: none skip max conv conv_2_2 conv_2_4 conv_2_6 conv_2_8
  std::vector<std::vector<std::vector<double>>> betas(3, std::vector<std::vector<double>>(4));
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t e = 0; e < 4; ++e) {
      std::vector<double> b(8, 0.01);
      b[0] = 0.9;            // none never wins
      b[1 + (c + e) % 7] = 0.05;
      betas[c][e] = b;
    }
  const auto g = discretize(space, betas);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t e = 0; e < 4; ++e) EXPECT_EQ(g.cells[c].edges[e].op, space.ops[1 + (c + e) % 7]);
  EXPECT_NO_THROW(g.validate(space));

  // Ties resolve to the lowest op index.
  for (auto& cell : betas)
    for (auto& b : cell) std::fill(b.begin(), b.end(), 0.125);
  for (const auto& cell : discretize(space, betas).cells)
    for (const auto& e : cell.edges) EXPECT_EQ(e.op, "skip_connect");
}

TEST(Discretize, KeepsStrongestTwoEdges) {
  const auto space = baseline_space(OpVariant::vanilla);
  std::vector<std::vector<std::vector<double>>> betas(2, std::vector<std::vector<double>>(14));
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t e = 0; e < 14; ++e) {
      std::vector<double> b(7, 0.1);
      b[4] = 0.1 + 0.01 * double(e);  // later edges are stronger
      betas[c][e] = b;
    }
  const auto g = discretize(space, betas);
  for (const auto& cell : g.cells) {
    ASSERT_EQ(cell.edges.size(), 8u);
    for (std::size_t j = 2; j < 6; ++j) {
      std::vector<std::size_t> src;
      for (const auto& e : cell.edges)
        if (e.to == j) src.push_back(e.from);
      EXPECT_EQ(src, (std::vector<std::size_t>{j - 2, j - 1})) << j;
    }
  }
  // Edge weights re-rank: boost the inputs of node 5.
  std::vector<std::vector<double>> ew(2, std::vector<double>(14, 1.0));
  for (auto e : space.incoming(5))
    if (space.edges[e].from < 2) ew[0][e] = 10.0;
  const auto g2 = discretize(space, betas, ew);
  std::vector<std::size_t> src;
  for (const auto& e : g2.cells[0].edges)
    if (e.to == 5) src.push_back(e.from);
  EXPECT_EQ(src, (std::vector<std::size_t>{0, 1}));
}

TEST(Discretize, ShiftInvarianceAndSortOracle) {
  Rng rng(17);
  for (const auto& space : {baseline_space(OpVariant::cd), fas_space(OpVariant::cd)}) {
    for (int trial = 0; trial < 20; ++trial) {
      Rng init(18);
      Supernet<double> net(space, NetworkOptions{2, 16}, SupernetOptions{}, init);
      for (std::size_t c = 0; c < space.cell_types; ++c)
        for (std::size_t e = 0; e < space.edges.size(); ++e)
          for (auto& v : net.alpha(c, e).mutable_value().data()) v = rng.normal();
      const auto g = net.discretize();
      EXPECT_NO_THROW(g.validate(space));

      // Oracle: repeated selection of the strongest remaining edge.
      const auto betas = net.betas();
      for (std::size_t c = 0; c < space.cell_types; ++c) {
        std::vector<GenotypeEdge> expect;
        for (std::size_t j = space.input_nodes; j < space.input_nodes + space.intermediate_nodes; ++j) {
          std::vector<std::tuple<double, std::size_t, std::string>> cand;  // strength, from, op
          for (auto e : space.incoming(j)) {
            std::size_t best = 1;
            for (std::size_t o = 1; o < space.ops.size(); ++o)
              if (betas[c][e][o] > betas[c][e][best]) best = o;
            cand.emplace_back(betas[c][e][best], space.edges[e].from, space.ops[best]);
          }
          std::vector<std::tuple<double, std::size_t, std::string>> kept;
          for (std::size_t m = 0; m < space.keep; ++m) {
            auto it = std::max_element(cand.begin(), cand.end(), [](const auto& a, const auto& b) {
              if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) < std::get<0>(b);
              return std::get<1>(a) > std::get<1>(b);
            });
            kept.push_back(*it);
            cand.erase(it);
          }
          std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return std::get<1>(a) < std::get<1>(b); });
          for (const auto& [s, from, op] : kept) expect.push_back({j, from, op});
        }
        EXPECT_EQ(g.cells[c].edges, expect);
      }

      // Per-edge constant shift leaves the genotype unchanged.
      for (std::size_t c = 0; c < space.cell_types; ++c)
        for (std::size_t e = 0; e < space.edges.size(); ++e) {
          const double shift = rng.uniform(-5, 5);
          for (auto& v : net.alpha(c, e).mutable_value().data()) v += shift;
        }
      EXPECT_EQ(net.discretize(), g);
    }
  }
}

TEST(Materialize, MatchesSaturatedSupernet) {
  for (const auto& space : {baseline_space(OpVariant::cd, HeadKind::deeppixel), fas_space(OpVariant::cd, PoolKind::cdp, true)}) {
    NetworkOptions opt{2, 16};
    Rng rng(19);
    Supernet<double> net(space, opt, SupernetOptions{}, rng);
    Rng pick(20);
    const auto g = random_sample(space, pick);
    for (std::size_t c = 0; c < space.cell_types; ++c)
      for (std::size_t e = 0; e < space.edges.size(); ++e) {
        auto& a = net.alpha(c, e).mutable_value();
        std::fill(a.data().begin(), a.data().end(), -40.0);
        std::size_t chosen = 0;
        for (const auto& ge : g.cells[c].edges)
          if (ge.to == space.edges[e].to && ge.from == space.edges[e].from) chosen = space.op_index(ge.op);
        a[chosen] = 40.0;
      }
    Rng init(21);
    auto discrete = materialize<double>(g, opt, init);
    const auto copied = copy_matching_parameters<double>(net, *discrete);
    EXPECT_EQ(copied, discrete->named_parameters().size());
    Rng data(22);
    Var<double> x(random_tensor({2, 3, 16, 16}, data, 0, 1));
    const auto a = net.forward(x).value(), b = discrete->forward(x).value();
    ASSERT_EQ(a.shape(), b.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a[i], b[i], 1e-9) << space.id();
  }
}

TEST(Materialize, HeadShapes) {
  Rng rng(23);
  NetworkOptions opt{2, 64};
  const auto ce = random_sample(baseline_space(OpVariant::vanilla), rng);
  Rng i1(1);
  auto net = materialize<float>(ce, opt, i1);
  Var<float> x(cdnas::testing::random_tensor_f({2, 3, 64, 64}, rng));
  EXPECT_EQ(net->forward(x).shape(), (Shape{2, 2}));
  const auto fas = random_sample(fas_space(OpVariant::cd), rng);
  Rng i2(2);
  auto f = materialize<float>(fas, opt, i2);
  EXPECT_EQ(f->forward(x).shape(), (Shape{2, 1, 8, 8}));
  EXPECT_EQ(head_size(fas_space(OpVariant::cd), opt), 8u);
}

TEST(InnerWeightStep, ZeroRateAndQuadratic) {
  cdnas::testing::LinearToy lin(Tensor<double>({3}, 0.5), Tensor<double>({2}, 0.1));
  Batch<double> b;
  b.x = Tensor<double>({3}, 2.0);
  b.target = Tensor<double>({2}, 0.0);
  inner_weight_step<double>(lin, b, 0.0);
  for (double v : lin.weights()[0].value().data()) EXPECT_EQ(v, 0.5);

  // L = 1/2 |phi|^2 via the scalar toy with c = 0, a = 0: phi <- (1 - g) phi.
  cdnas::testing::ScalarToy q(2.0, 0.0);
  inner_weight_step<double>(q, cdnas::testing::scalar_batch(0.0), 0.25);
  EXPECT_DOUBLE_EQ(q.phi(), 1.5);
  EXPECT_DOUBLE_EQ(q.a(), 0.0);
}

TEST(InnerWeightStep, NonFiniteLossAborts) {
  cdnas::testing::ScalarToy q(std::numeric_limits<double>::infinity(), 0.0);
  EXPECT_THROW(inner_weight_step<double>(q, cdnas::testing::scalar_batch(0.0), 0.1), NumericError);
}

TEST(InnerWeightStep, SupernetGradientMatchesFiniteDifferences) {
  Rng rng(24);
  Supernet<double> net(fas_space(OpVariant::cd, PoolKind::cdp, true), NetworkOptions{1, 8}, SupernetOptions{}, rng);
  auto data = tiny_data(2, 8, 1, 1, 3);
  const auto batch = make_batch(data, {0, 1});
  auto w = net.weights();
  std::vector<Tensor<double>> g;
  loss_and_grads<double>(net, {batch}, w, g);
  double worst = 0;
  Rng pick(25);
  for (int probe = 0; probe < 40; ++probe) {
    const auto p = pick.index(w.size());
    const auto i = pick.index(w[p].numel());
    const double orig = w[p].value()[i];
    auto eval = [&](double v) {
      w[p].mutable_value()[i] = v;
      NoGradGuard guard;
      return net.loss(batch).value().item();
    };
    const double l0 = eval(orig);
    double h = 1e-5;
    double up = (eval(orig + h) - l0) / h, down = (l0 - eval(orig - h)) / h;
    // One-sided slopes that disagree mean a ReLU/max kink inside [-h, h].
    if (std::abs(up - down) > 1e-3 * std::max({std::abs(up), std::abs(down), 1e-6})) {
      h = 1e-7;
      up = (eval(orig + h) - l0) / h;
      down = (l0 - eval(orig - h)) / h;
    }
    const double num = (up + down) / 2;
    w[p].mutable_value()[i] = orig;
    worst = std::max(worst, std::abs(num - g[p][i]) / std::max({std::abs(num), std::abs(g[p][i]), 1e-6}));
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(ArchStep, ZeroRateLeavesAlpha) {
  cdnas::testing::ScalarToy q(1.0, 0.3);
  Sgd<double> opt(0.0);
  arch_step<double>(q, cdnas::testing::scalar_batch(2.0), opt);
  EXPECT_EQ(q.a(), 0.3);
  Adam<double> adam(0.0, 1e-3);
  arch_step<double>(q, cdnas::testing::scalar_batch(2.0), adam);
  EXPECT_EQ(q.a(), 0.3);
}

TEST(ArchStep, FirstOrderAndUnrolledAgreeWithoutInnerStep) {
  cdnas::testing::TwoOpToy toy(0.7, {1.0, 0.5}, 0.1);
  toy.alpha().mutable_value()[0] = 0.2;
  Batch<double> s, q;
  s.x = Tensor<double>({3});
  s.target = Tensor<double>({3});
  q = s;
  for (std::size_t i = 0; i < 3; ++i) {
    s.x[i] = 1.0 + double(i);
    s.target[i] = 2.0 * s.x[i];
    q.x[i] = 0.5 + double(i);
    q.target[i] = 2.0 * q.x[i];
  }
  const auto a = arch_gradient<double>(toy, {s}, q, 0.0, ArchGradMode::first_order);
  const auto b = arch_gradient<double>(toy, {s}, q, 0.0, ArchGradMode::unrolled);
  for (std::size_t k = 0; k < 2; ++k) EXPECT_EQ(a[0][k], b[0][k]);
}

TEST(ArchStep, UnrolledGradientMatchesFiniteDifferences) {
  // d/dalpha L_q(phi - g1 * dL_s/dphi(phi, alpha), alpha), by central differences.
  cdnas::testing::TwoOpToy toy(0.7, {1.0, 0.5}, 0.1);
  toy.alpha().mutable_value()[0] = 0.2;
  toy.alpha().mutable_value()[1] = -0.3;
  Batch<double> s, q;
  s.x = Tensor<double>({3});
  s.target = Tensor<double>({3});
  q = s;
  for (std::size_t i = 0; i < 3; ++i) {
    s.x[i] = 1.0 + double(i);
    s.target[i] = 2.0 * s.x[i];
    q.x[i] = 0.5 + double(i);
    q.target[i] = 1.5 * q.x[i];
  }
  const double g1 = 0.05;
  const auto analytic = arch_gradient<double>(toy, {s}, q, g1, ArchGradMode::unrolled)[0];
  const auto first = arch_gradient<double>(toy, {s}, q, g1, ArchGradMode::first_order)[0];
  auto objective = [&](std::size_t k, double delta) {
    auto a = toy.arch()[0];
    const auto saved_a = a.value();
    auto w = toy.weights()[0];
    const auto saved_w = w.value();
    a.mutable_value()[k] += delta;
    std::vector<Tensor<double>> gs;
    loss_and_grads<double>(toy, {s}, {w}, gs);
    w.mutable_value()[0] -= g1 * gs[0][0];
    NoGradGuard guard;
    const double l = toy.loss(q).value().item();
    a.mutable_value() = saved_a;
    w.mutable_value() = saved_w;
    return l;
  };
  double diff_first = 0;
  for (std::size_t k = 0; k < 2; ++k) {
    const double h = 1e-6;
    const double num = (objective(k, h) - objective(k, -h)) / (2 * h);
    EXPECT_LT(std::abs(num - analytic[k]) / std::max(std::abs(num), 1e-6), 1e-4) << k;
    diff_first = std::max(diff_first, std::abs(num - first[k]));
  }
  EXPECT_GT(diff_first, 1e-6);  // the second-order term matters here
}

TEST(ArchStep, DominantOpAlphaRises) {
  cdnas::testing::TwoOpToy toy(0.5, {1.0, 0.25}, 0.2);
  Batch<double> b;
  b.x = Tensor<double>({4});
  b.target = Tensor<double>({4});
  for (std::size_t i = 0; i < 4; ++i) {
    b.x[i] = 0.5 + 0.5 * double(i);
    b.target[i] = 2.0 * b.x[i];
  }
  Sgd<double> wopt(0.05), aopt(0.5);
  std::vector<double> trace;
  for (int it = 0; it < 50; ++it) {
    bilevel_step<double>(toy, {b}, b, wopt, aopt, 0.05, ArchGradMode::first_order, true);
    trace.push_back(toy.beta()[0]);
  }
  for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_GE(trace[i], trace[i - 1]) << i;
  EXPECT_GT(trace.back(), trace.front());
}

TEST(Bilevel, ConvexToyConverges) {
  for (auto mode : {ArchGradMode::first_order, ArchGradMode::unrolled}) {
    cdnas::testing::TwoOpToy toy(0.1, {1.0, 0.5}, 0.2);
    Batch<double> s, q;
    s.x = Tensor<double>({4});
    s.target = Tensor<double>({4});
    q = s;
    for (std::size_t i = 0; i < 4; ++i) {
      s.x[i] = 0.25 + 0.5 * double(i);
      s.target[i] = 2.0 * s.x[i];
      q.x[i] = 0.5 + 0.5 * double(i);
      q.target[i] = 2.0 * q.x[i];
    }
    Sgd<double> wopt(0.05), aopt(1.0);
    for (int it = 0; it < 200; ++it) bilevel_step<double>(toy, {s}, q, wopt, aopt, 0.05, mode, true);
    EXPECT_GT(toy.beta()[0], 0.9) << to_string(mode);
  }
}

TEST(Bilevel, BetterOpChosenAcrossSeeds) {
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    cdnas::testing::TwoOpToy toy(rng.uniform(-1, 1), {0.5, 1.0}, 0.2);
    toy.alpha().mutable_value()[0] = 1e-3 * rng.normal();
    toy.alpha().mutable_value()[1] = 1e-3 * rng.normal();
    // 50/50 split of noisy samples of t = 2x into support and query.
    std::vector<double> xs, ts;
    for (int i = 0; i < 16; ++i) {
      xs.push_back(rng.uniform(0.2, 2.0));
      ts.push_back(2.0 * xs.back() + 0.1 * rng.normal());
    }
    Batch<double> s, q;
    s.x = Tensor<double>({8});
    s.target = Tensor<double>({8});
    q = s;
    for (std::size_t i = 0; i < 8; ++i) {
      s.x[i] = xs[i];
      s.target[i] = ts[i];
      q.x[i] = xs[8 + i];
      q.target[i] = ts[8 + i];
    }
    Adam<double> wopt(0.05), aopt(0.05);
    for (int it = 0; it < 200; ++it) bilevel_step<double>(toy, {s}, q, wopt, aopt, 0.05, ArchGradMode::first_order, true);
    wins += toy.beta()[1] > toy.beta()[0] ? 1 : 0;
  }
  EXPECT_GE(wins, 4);
}

TEST(Bilevel, PhasesTouchOnlyTheirParameters) {
  cdnas::testing::ScalarToy q(1.0, 0.5);
  Adam<double> wopt(0.1, 1e-3), aopt(0.1, 1e-3);
  weight_step<double>(q, {cdnas::testing::scalar_batch(3.0)}, wopt);
  EXPECT_EQ(q.a(), 0.5);
  EXPECT_NE(q.phi(), 1.0);
  const double phi = q.phi();
  arch_step<double>(q, cdnas::testing::scalar_batch(3.0), aopt);
  EXPECT_EQ(q.phi(), phi);
  EXPECT_NE(q.a(), 0.5);
}

TEST(NasSearch, DeterministicAndZeroRatesKeepInitialArchitecture) {
  const auto space = fas_space(OpVariant::cd, PoolKind::max, true);
  auto data = tiny_data(8, 16, 2, 2, 4);
  MetaConfig cfg;
  cfg.epochs = 2;
  cfg.iterations = 2;
  cfg.batch_size = 2;
  cfg.gamma1 = 1e-2;
  cfg.gamma2 = 0.3;
  cfg.seed = 5;
  auto run = [&](const MetaConfig& c) {
    Rng rng(6);
    Supernet<double> net(space, NetworkOptions{2, 16}, SupernetOptions{}, rng);
    const auto initial = net.discretize();
    auto g = nas_search(net, data, c);
    return std::make_tuple(g, initial, net.betas());
  };
  const auto [g1, i1, b1] = run(cfg);
  const auto [g2, i2, b2] = run(cfg);
  EXPECT_EQ(g1, g2);
  EXPECT_EQ(b1, b2);
  EXPECT_NO_THROW(g1.validate(space));

  auto zero = cfg;
  zero.gamma1 = zero.gamma2 = zero.outer_lr = 0;
  const auto [gz, iz, bz] = run(zero);
  auto expect = iz;
  expect.seed = zero.seed;
  expect.epochs = zero.epochs;
  EXPECT_EQ(gz, expect);
}

TEST(NasSearch, AlphaFrozenDuringWarmup) {
  const auto space = baseline_space(OpVariant::cd, HeadKind::deeppixel);
  auto data = tiny_data(8, 16, 2, 2, 7);
  Rng rng(8);
  Supernet<double> net(space, NetworkOptions{2, 16}, SupernetOptions{2, true, 1e-3}, rng);
  const auto alpha0 = values_of(net.arch());
  const auto w0 = values_of(net.weights());
  MetaConfig cfg;
  cfg.epochs = 2;
  cfg.iterations = 1;
  cfg.batch_size = 2;
  cfg.gamma1 = 1e-2;
  cfg.gamma2 = 0.5;
  cfg.alpha_freeze_epochs = 2;
  std::vector<nlohmann::ordered_json> log;
  nas_search(net, data, cfg, [&](const nlohmann::ordered_json& j) { log.push_back(j); });
  const auto alpha1 = values_of(net.arch());
  for (std::size_t i = 0; i < alpha0.size(); ++i)
    for (std::size_t k = 0; k < alpha0[i].numel(); ++k) EXPECT_EQ(alpha0[i][k], alpha1[i][k]);
  bool moved = false;
  const auto w1 = values_of(net.weights());
  for (std::size_t i = 0; i < w0.size(); ++i)
    for (std::size_t k = 0; k < w0[i].numel(); ++k) moved = moved || w0[i][k] != w1[i][k];
  EXPECT_TRUE(moved);
  ASSERT_FALSE(log.empty());
  EXPECT_TRUE(log.front()["alpha_frozen"].get<bool>());

  cfg.alpha_freeze_epochs = 1;
  nas_search(net, data, cfg);
  const auto alpha2 = values_of(net.arch());
  bool changed = false;
  for (std::size_t i = 0; i < alpha0.size(); ++i)
    for (std::size_t k = 0; k < alpha0[i].numel(); ++k) changed = changed || alpha0[i][k] != alpha2[i][k];
  EXPECT_TRUE(changed);
}
