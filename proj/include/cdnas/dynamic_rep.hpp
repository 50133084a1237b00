#pragma once

#include <vector>

#include "cdnas/tensor.hpp"

namespace cdnas {

inline constexpr std::size_t kDynamicWindow = 7;

/// Temporally ordered frames, each 3 x H x W with values in [0, 1].
struct FrameSequence {
  std::vector<Tensor<float>> frames;

  std::size_t size() const { return frames.size(); }
  void validate(std::size_t min_frames = 2) const;
};

enum class RankPoolSolver { exact, approximate };

RankPoolSolver parse_solver(const std::string& name);

struct RankPoolOptions {
  RankPoolSolver solver = RankPoolSolver::approximate;
  /// Exact solver: coordinate sweeps over the dual box QP and the stopping
  /// threshold on the largest dual-variable change in a sweep.
  std::size_t max_sweeps = 20000;
  double tolerance = 1e-12;
};

struct RankPoolResult {
  Tensor<float> image;           // D reshaped to the frame shape
  double primal = 0.0;           // 1/2 |D|^2 + delta * sum hinge
  double dual = 0.0;             // dual objective at the final iterate
  std::vector<double> dual_trace;  // dual objective after every sweep
  std::size_t sweeps = 0;
};

/// Rank pooling over raw pixels. Exact mode minimizes
///   1/2 |D|^2 + delta * sum_{i>j} max(0, 1 - D.(S_i - S_j)),  delta = 2/(K(K-1)),
/// with S_i the mean of frames 1..i; approximate mode returns
///   D = sum_t (2t - K - 1) * frame_t.
RankPoolResult rank_pool_detailed(const FrameSequence& seq, const RankPoolOptions& opt = {});
Tensor<float> rank_pool(const FrameSequence& seq, RankPoolSolver solver);

/// Primal objective of a candidate D for the sequence (used by tests and the solver).
double rank_pool_objective(const FrameSequence& seq, const Tensor<float>& d);

/// Rank pooling over frames [t, t + window).
Tensor<float> sliding_dynamic(const FrameSequence& seq, std::size_t t,
                              std::size_t window = kDynamicWindow,
                              RankPoolSolver solver = RankPoolSolver::approximate);

/// (s - min s) / (max s - min s) with s = static + dynamic; all zeros when s is constant.
Tensor<float> fuse_static_dynamic(const Tensor<float>& still, const Tensor<float>& dynamic);

}  // namespace cdnas
