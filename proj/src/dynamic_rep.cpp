#include "cdnas/dynamic_rep.hpp"

#include <algorithm>
#include <cmath>

namespace cdnas {

void FrameSequence::validate(std::size_t min_frames) const {
  if (frames.size() < min_frames) {
    throw ConfigError("frame sequence needs at least " + std::to_string(min_frames) +
                      " frames, got " + std::to_string(frames.size()));
  }
  for (const auto& f : frames) {
    if (f.shape() != frames[0].shape()) {
      throw ShapeError("frames differ in shape: " + shape_str(frames[0].shape()) + " vs " +
                       shape_str(f.shape()));
    }
    if (!f.all_finite()) throw NumericError("frame sequence contains non-finite values");
  }
}

RankPoolSolver parse_solver(const std::string& name) {
  if (name == "exact") return RankPoolSolver::exact;
  if (name == "approximate" || name == "approx") return RankPoolSolver::approximate;
  throw ConfigError("unknown rank-pool solver '" + name + "' (expected exact|approximate)");
}

namespace {

// Prefix means relative to the first: e_t = S_t - S_1 (e_1 = 0), in double.
std::vector<std::vector<double>> prefix_offsets(const FrameSequence& seq) {
  const auto k = seq.size(), p = seq.frames[0].numel();
  std::vector<double> running(p, 0.0);
  std::vector<std::vector<double>> s(k, std::vector<double>(p));
  for (std::size_t t = 0; t < k; ++t) {
    const auto& f = seq.frames[t];
    for (std::size_t i = 0; i < p; ++i) {
      running[i] += f[i];
      s[t][i] = running[i] / double(t + 1);
    }
  }
  for (std::size_t t = k; t-- > 0;) {
    for (std::size_t i = 0; i < p; ++i) s[t][i] -= s[0][i];
  }
  return s;
}

struct Pair {
  std::size_t i, j;  // i > j
};

std::vector<Pair> ordered_pairs(std::size_t k) {
  std::vector<Pair> out;
  for (std::size_t i = 1; i < k; ++i)
    for (std::size_t j = 0; j < i; ++j) out.push_back({i, j});
  return out;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

double rank_pool_objective(const FrameSequence& seq, const Tensor<float>& d) {
  seq.validate();
  const auto k = seq.size();
  const double delta = 2.0 / double(k * (k - 1));
  auto e = prefix_offsets(seq);
  std::vector<double> dv(d.data().begin(), d.data().end());
  if (dv.size() != e[0].size()) throw ShapeError("rank_pool_objective: D has wrong size");
  std::vector<double> proj(k);
  for (std::size_t t = 0; t < k; ++t) proj[t] = dot(dv, e[t]);
  double obj = 0.5 * dot(dv, dv);
  for (const auto& pr : ordered_pairs(k)) obj += delta * std::max(0.0, 1.0 - (proj[pr.i] - proj[pr.j]));
  return obj;
}

RankPoolResult rank_pool_detailed(const FrameSequence& seq, const RankPoolOptions& opt) {
  seq.validate();
  const auto k = seq.size();
  const auto& shape = seq.frames[0].shape();
  const auto p = seq.frames[0].numel();
  RankPoolResult res;

  if (opt.solver == RankPoolSolver::approximate) {
    std::vector<double> d(p, 0.0);
    for (std::size_t t = 0; t < k; ++t) {
      const double a = 2.0 * double(t + 1) - double(k) - 1.0;
      for (std::size_t i = 0; i < p; ++i) d[i] += a * seq.frames[t][i];
    }
    res.image = Tensor<float>(shape, std::vector<float>(d.begin(), d.end()));
    res.primal = rank_pool_objective(seq, res.image);
    return res;
  }

  // Exact: the minimizer is D = sum_p mu_p (S_i - S_j) where mu solves the box QP
  //   max sum mu - 1/2 mu' Q mu,  0 <= mu <= delta,  Q_pq = (S_i - S_j).(S_k - S_l).
  // D lives in span{e_t}, so everything reduces to the K x K Gram matrix of e.
  const double delta = 2.0 / double(k * (k - 1));
  auto e = prefix_offsets(seq);
  std::vector<double> gram(k * k);
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = a; b < k; ++b) gram[a * k + b] = gram[b * k + a] = dot(e[a], e[b]);
  const auto pairs = ordered_pairs(k);
  const auto m = pairs.size();
  std::vector<double> q(m * m);
  for (std::size_t x = 0; x < m; ++x)
    for (std::size_t y = 0; y < m; ++y) {
      const auto [i, j] = pairs[x];
      const auto [u, v] = pairs[y];
      q[x * m + y] = gram[i * k + u] - gram[i * k + v] - gram[j * k + u] + gram[j * k + v];
    }

  std::vector<double> mu(m, 0.0), qmu(m, 0.0);
  auto dual_value = [&] {
    double s = 0;
    for (std::size_t x = 0; x < m; ++x) s += mu[x] - 0.5 * mu[x] * qmu[x];
    return s;
  };
  double prev = dual_value();
  for (std::size_t sweep = 0; sweep < opt.max_sweeps; ++sweep) {
    double biggest = 0.0;
    for (std::size_t x = 0; x < m; ++x) {
      const double qxx = q[x * m + x];
      const double grad = 1.0 - qmu[x];
      double next = qxx > 0 ? mu[x] + grad / qxx : (grad > 0 ? delta : mu[x]);
      next = std::clamp(next, 0.0, delta);
      const double step = next - mu[x];
      if (step != 0.0) {
        for (std::size_t y = 0; y < m; ++y) qmu[y] += step * q[y * m + x];
        mu[x] = next;
        biggest = std::max(biggest, std::abs(step));
      }
    }
    const double cur = dual_value();
    if (!std::isfinite(cur)) throw NumericError("rank pooling: non-finite dual objective");
    if (cur < prev - 1e-9 * std::max(1.0, std::abs(prev))) {
      throw NumericError("rank pooling: dual objective decreased across a sweep (" +
                         std::to_string(prev) + " -> " + std::to_string(cur) + ")");
    }
    prev = cur;
    res.dual_trace.push_back(cur);
    res.sweeps = sweep + 1;
    if (biggest <= opt.tolerance * delta) break;
  }

  // D = sum_pairs mu (e_i - e_j) = sum_t c_t e_t.
  std::vector<double> c(k, 0.0);
  for (std::size_t x = 0; x < m; ++x) {
    c[pairs[x].i] += mu[x];
    c[pairs[x].j] -= mu[x];
  }
  std::vector<double> d(p, 0.0);
  for (std::size_t t = 0; t < k; ++t) {
    if (c[t] == 0.0) continue;
    for (std::size_t i = 0; i < p; ++i) d[i] += c[t] * e[t][i];
  }
  res.image = Tensor<float>(shape, std::vector<float>(d.begin(), d.end()));
  res.dual = prev;
  // Primal from the double-precision D (the float image loses digits).
  std::vector<double> proj(k);
  for (std::size_t t = 0; t < k; ++t) proj[t] = dot(d, e[t]);
  double obj = 0.5 * dot(d, d);
  for (const auto& pr : pairs) obj += delta * std::max(0.0, 1.0 - (proj[pr.i] - proj[pr.j]));
  res.primal = obj;
  return res;
}

Tensor<float> rank_pool(const FrameSequence& seq, RankPoolSolver solver) {
  RankPoolOptions opt;
  opt.solver = solver;
  return rank_pool_detailed(seq, opt).image;
}

Tensor<float> sliding_dynamic(const FrameSequence& seq, std::size_t t, std::size_t window,
                              RankPoolSolver solver) {
  if (window < 2) throw ConfigError("dynamic window must cover at least 2 frames");
  if (t + window > seq.size()) {
    throw ConfigError("window [" + std::to_string(t) + ", " + std::to_string(t + window) +
                      ") exceeds sequence of " + std::to_string(seq.size()) + " frames");
  }
  FrameSequence sub;
  sub.frames.assign(seq.frames.begin() + long(t), seq.frames.begin() + long(t + window));
  return rank_pool(sub, solver);
}

Tensor<float> fuse_static_dynamic(const Tensor<float>& still, const Tensor<float>& dynamic) {
  still.require_same_shape(dynamic, "fuse_static_dynamic");
  Tensor<float> s = still + dynamic;
  if (s.empty()) return s;
  const auto [lo, hi] = std::minmax_element(s.data().begin(), s.data().end());
  const float mn = *lo, mx = *hi;
  if (!(mx > mn)) return Tensor<float>(s.shape());
  const float range = mx - mn;
  for (auto& v : s.data()) v = (v - mn) / range;
  return s;
}

}  // namespace cdnas
