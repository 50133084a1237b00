#include <gtest/gtest.h>

#include <cmath>

#include "cdnas/supervision.hpp"
#include "test_util.hpp"

using namespace cdnas;
using cdnas::testing::grad_check;
using cdnas::testing::random_tensor;

namespace {

Var<double> v(const Tensor<double>& t) { return Var<double>(t); }

// Eight 3x3 kernels (-1 center, +1 at one neighbor) applied as correlations
// over a border-replicated copy of each map.
double cdl_oracle(const Tensor<double>& pred, const Tensor<double>& target) {
  const long n = long(pred.dim(0)), h = long(pred.dim(2)), w = long(pred.dim(3));
  double total = 0;
  for (int ky = 0; ky < 3; ++ky)
    for (int kx = 0; kx < 3; ++kx) {
      if (ky == 1 && kx == 1) continue;
      double kernel[3][3] = {};
      kernel[1][1] = -1;
      kernel[ky][kx] = 1;
      double se = 0;
      for (long b = 0; b < n; ++b)
        for (long y = 0; y < h; ++y)
          for (long x = 0; x < w; ++x) {
            double rp = 0, rt = 0;
            for (int a = 0; a < 3; ++a)
              for (int c = 0; c < 3; ++c) {
                const long sy = std::clamp(y + a - 1, 0L, h - 1);
                const long sx = std::clamp(x + c - 1, 0L, w - 1);
                rp += kernel[a][c] * pred.at(b, 0, sy, sx);
                rt += kernel[a][c] * target.at(b, 0, sy, sx);
              }
            se += (rp - rt) * (rp - rt);
          }
      total += se / double(n * h * w);
    }
  return total;
}

}  // namespace

TEST(Mse, Examples) {
  Rng rng(1);
  auto t = random_tensor({2, 1, 4, 4}, rng);
  EXPECT_EQ(mse_loss(v(t), v(t)).value().item(), 0.0);
  Tensor<double> shifted = t;
  for (auto& x : shifted.data()) x += 1;
  EXPECT_NEAR(mse_loss(v(shifted), v(t)).value().item(), 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(
      mse_loss(v(Tensor<double>({2}, {0.5, 0.5})), v(Tensor<double>({2}, {0.0, 1.0}))).value().item(),
      0.25);
  EXPECT_THROW(mse_loss(v(Tensor<double>({2})), v(Tensor<double>({3}))), ShapeError);
}

TEST(ContrastiveDepth, ZeroForEqualAndOffsetMaps) {
  Rng rng(2);
  auto t = random_tensor({2, 1, 6, 5}, rng);
  EXPECT_EQ(contrastive_depth_loss(v(t), v(t)).value().item(), 0.0);
  Tensor<double> shifted = t;
  for (auto& x : shifted.data()) x += 0.37;
  EXPECT_NEAR(contrastive_depth_loss(v(shifted), v(t)).value().item(), 0.0, 1e-24);
}

TEST(ContrastiveDepth, HandCaseMatchesEightConvolutions) {
  // 2x2 pattern embedded in zeros.
  Tensor<double> pred({1, 1, 4, 4}), target({1, 1, 4, 4});
  pred.at(0, 0, 1, 1) = 1;
  pred.at(0, 0, 1, 2) = 2;
  pred.at(0, 0, 2, 1) = 3;
  pred.at(0, 0, 2, 2) = 4;
  EXPECT_NEAR(contrastive_depth_loss(v(pred), v(target)).value().item(), cdl_oracle(pred, target),
              1e-12);
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    auto p = random_tensor({2, 1, 5, 7}, rng), q = random_tensor({2, 1, 5, 7}, rng);
    EXPECT_NEAR(contrastive_depth_loss(v(p), v(q)).value().item(), cdl_oracle(p, q), 1e-12);
  }
}

TEST(ContrastiveDepth, InvariantToGlobalOffset) {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    auto p = random_tensor({1, 1, 8, 8}, rng), q = random_tensor({1, 1, 8, 8}, rng);
    const double c = rng.uniform(-3, 3);
    Tensor<double> p2 = p, q2 = q;
    for (auto& x : p2.data()) x += c;
    for (auto& x : q2.data()) x += c;
    EXPECT_NEAR(contrastive_depth_loss(v(p2), v(q2)).value().item(),
                contrastive_depth_loss(v(p), v(q)).value().item(), 1e-12);
  }
}

TEST(OverallDepth, IsSumOfComponentsAndBounded) {
  Rng rng(5);
  auto t = random_tensor({1, 1, 4, 4}, rng);
  EXPECT_EQ(overall_depth_loss(v(t), v(t)).value().item(), 0.0);
  for (int trial = 0; trial < 20; ++trial) {
    auto p = random_tensor({2, 1, 6, 6}, rng), q = random_tensor({2, 1, 6, 6}, rng, 0, 1);
    const double total = overall_depth_loss(v(p), v(q)).value().item();
    const double m = mse_loss(v(p), v(q)).value().item();
    EXPECT_NEAR(total, m + contrastive_depth_loss(v(p), v(q)).value().item(), 1e-12);
    EXPECT_GE(total, m);
    EXPECT_GE(m, 0.0);
  }
}

TEST(DeepPixel, Examples) {
  Tensor<double> big({1, 1, 2, 2}, 50.0), ones({1, 1, 2, 2}, 1.0), zeros({1, 1, 2, 2});
  EXPECT_NEAR(deeppixel_loss(v(big), v(ones)).value().item(), -std::log(1 - 1e-7), 1e-9);
  // Clamp keeps the opposite case finite.
  EXPECT_NEAR(deeppixel_loss(v(big), v(zeros)).value().item(), -std::log(1e-7), 1e-6);
  for (const auto* t : {&ones, &zeros}) {
    EXPECT_NEAR(deeppixel_loss(v(zeros), v(*t)).value().item(), std::log(2.0), 1e-12);
  }
}

TEST(DeepPixel, MatchesScalarLoop) {
  Rng rng(6);
  auto z = random_tensor({3, 1, 4, 4}, rng, -4, 4);
  Tensor<double> y(z.shape());
  for (auto& x : y.data()) x = rng.index(2);
  double s = 0;
  for (std::size_t i = 0; i < z.numel(); ++i) {
    const double p = 1 / (1 + std::exp(-z[i]));
    s += -(y[i] * std::log(p) + (1 - y[i]) * std::log(1 - p));
  }
  EXPECT_NEAR(deeppixel_loss(v(z), v(y)).value().item(), s / double(z.numel()), 1e-12);
}

TEST(CrossEntropy, MatchesFormula) {
  Tensor<double> logits({3, 2}, {0.0, 0.0, 2.0, -1.0, -0.5, 1.5});
  const std::vector<int> labels{1, 0, 1};
  auto nll = [&](std::size_t b, int l) {
    const double z0 = logits[b * 2], z1 = logits[b * 2 + 1];
    const double m = std::max(z0, z1);
    const double lse = m + std::log(std::exp(z0 - m) + std::exp(z1 - m));
    return lse - (l ? z1 : z0);
  };
  const double expected = (nll(0, 1) + nll(1, 0) + nll(2, 1)) / 3;
  EXPECT_NEAR(cross_entropy(v(logits), labels).value().item(), expected, 1e-12);
  EXPECT_NEAR(nll(0, 1), std::log(2.0), 1e-15);
  EXPECT_THROW(cross_entropy(v(logits), {1, 0}), ShapeError);
}

TEST(Score, MeanOfMap) {
  EXPECT_EQ(score_from_map(Tensor<double>({1, 1, 4, 4})), 0.0);
  EXPECT_EQ(score_from_map(Tensor<double>({1, 1, 4, 4}, 1.0)), 1.0);
  EXPECT_EQ(score_from_map(Tensor<double>({2, 2}, {0, 1, 1, 0})), 0.5);
  Tensor<float> maps({2, 1, 1, 2}, {0.f, 1.f, 0.5f, 0.5f});
  auto s = scores_from_maps(maps);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_DOUBLE_EQ(s[0], 0.5);
  EXPECT_DOUBLE_EQ(s[1], 0.5);
}

TEST(LossGradients, FiniteDifferences) {
  Rng rng(7);
  auto target = random_tensor({2, 1, 4, 5}, rng, 0, 1);
  using F = std::function<Var<double>(const std::vector<Var<double>>&)>;
  const std::vector<std::pair<const char*, F>> cases = {
      {"mse", [&](auto& x) { return mse_loss(x[0], v(target)); }},
      {"cdl", [&](auto& x) { return contrastive_depth_loss(x[0], v(target)); }},
      {"overall", [&](auto& x) { return overall_depth_loss(x[0], v(target)); }},
  };
  for (const auto& [name, f] : cases) {
    EXPECT_LT(grad_check(f, {random_tensor({2, 1, 4, 5}, rng)}).max_rel_error, 1e-4) << name;
  }
  Tensor<double> bin(target.shape());
  for (auto& x : bin.data()) x = rng.index(2);
  EXPECT_LT(grad_check([&](auto& x) { return deeppixel_loss(x[0], v(bin)); },
                       {random_tensor({2, 1, 4, 5}, rng, -3, 3)})
                .max_rel_error,
            1e-4);
  EXPECT_LT(grad_check([&](auto& x) { return cross_entropy(x[0], {0, 1, 1}); },
                       {random_tensor({3, 2}, rng, -2, 2)})
                .max_rel_error,
            1e-4);
}
