#pragma once

#include <vector>

#include "cdnas/ops.hpp"

namespace cdnas {

inline constexpr double kProbabilityClamp = 1e-7;

template <typename T>
Var<T> mse_loss(const Var<T>& pred, const Var<T>& target);

/// Eight directional differences x(p + d) - x(p), one channel per neighbor
/// direction (N x 1 x H x W -> N x 8 x H x W). Out-of-range neighbors repeat
/// the border sample, so each response is zero-sum everywhere.
template <typename T>
Var<T> contrast_maps(const Var<T>& x);

/// Sum over the eight directions of the MSE between contrast responses.
template <typename T>
Var<T> contrastive_depth_loss(const Var<T>& pred, const Var<T>& target);

/// L_MSE + L_CDL with unit weights.
template <typename T>
Var<T> overall_depth_loss(const Var<T>& pred, const Var<T>& target);

/// Mean binary cross-entropy of sigmoid(logits) against a {0,1} map.
template <typename T>
Var<T> deeppixel_loss(const Var<T>& logits, const Var<T>& target);

/// Mean two-class cross-entropy; logits N x 2, labels in {0 = attack, 1 = live}.
template <typename T>
Var<T> cross_entropy(const Var<T>& logits, const std::vector<int>& labels);

/// Decision score of a predicted map: its arithmetic mean.
template <typename T>
T score_from_map(const Tensor<T>& map);

/// Per-sample scores of an N x C x H x W map batch.
template <typename T>
std::vector<double> scores_from_maps(const Tensor<T>& maps);

}  // namespace cdnas
