#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "cdnas/cdn_net.hpp"
#include "cdnas/optim.hpp"
#include "cdnas/supervision.hpp"
#include "test_util.hpp"

using namespace cdnas;

namespace {

CdnConfig config(CdnVariant v, std::size_t size, double width = 1.0) {
  CdnConfig c;
  c.variant = v;
  c.input_size = size;
  c.width = width;
  return c;
}

}  // namespace

TEST(CdnNet, FullSizeOutputIs32x32) {
  Rng rng(1);
  // Thin network: only the spatial arithmetic matters here.
  auto net = build_cdn<float>(config(CdnVariant::depthnet, 256, 1.0 / 32), rng);
  auto x = cdnas::testing::random_tensor_f({1, 3, 256, 256}, rng, 0, 1);
  NoGradGuard guard;
  EXPECT_EQ(net->forward(Var<float>(x)).shape(), (Shape{1, 1, 32, 32}));
}

TEST(CdnNet, DeskSizeOutputIs8x8AndFinite) {
  for (auto v : {CdnVariant::depthnet, CdnVariant::cdn_cdc, CdnVariant::cdn_cdp}) {
    Rng rng(2);
    auto net = build_cdn<float>(config(v, 64, 0.125), rng);
    auto y = forward_depth<float>(*net, Tensor<float>({3, 64, 64}));
    EXPECT_EQ(y.shape(), (Shape{8, 8})) << to_string(v);
    EXPECT_TRUE(y.all_finite());
    auto r = cdnas::testing::random_tensor_f({3, 64, 64}, rng, 0, 1);
    auto yr = forward_depth<float>(*net, r);
    EXPECT_TRUE(yr.all_finite());
    for (float val : yr.data()) EXPECT_GE(val, 0.0f);
  }
}

TEST(CdnNet, ParameterCountMatchesReferenceAndVariants) {
  std::size_t counts[3];
  int i = 0;
  for (auto v : {CdnVariant::depthnet, CdnVariant::cdn_cdc, CdnVariant::cdn_cdp}) {
    Rng rng(3);
    counts[i++] = build_cdn<float>(config(v, 256), rng)->param_count();
  }
  EXPECT_EQ(counts[0], counts[1]);
  EXPECT_EQ(counts[0], counts[2]);
  EXPECT_NEAR(double(counts[0]), 2.25e6, 0.1 * 2.25e6);
  // Hand count: conv weights + BN affine pairs + one output bias.
  const std::size_t convs = 3 * 64 * 9 + 64 * 128 * 9 + 2 * (128 * 196 * 9 + 196 * 128 * 9) +
                            2 * 128 * 128 * 9 + 128 * 196 * 9 + 196 * 128 * 9 + 384 * 128 * 9 +
                            128 * 64 * 9 + 64 * 9;
  const std::size_t bn = 2 * (64 + 3 * (128 + 196 + 128) + 128 + 64);
  EXPECT_EQ(counts[0], convs + bn + 1);
}

TEST(CdnNet, HalvingWidthsQuartersCount) {
  Rng r1(4), r2(4);
  const double full = double(build_cdn<float>(config(CdnVariant::depthnet, 64), r1)->param_count());
  const double half =
      double(build_cdn<float>(config(CdnVariant::depthnet, 64, 0.5), r2)->param_count());
  EXPECT_NEAR(full / half, 4.0, 0.1);
}

TEST(CdnNet, SingleConvCount) {
  Rng rng(5);
  Conv2d<float> conv({3, 64, 3, {1, 1, 1, 1}, true, 0.0}, rng);
  EXPECT_EQ(conv.param_count(), 1792u);
}

TEST(CdnNet, CdcWithThetaZeroEqualsVanilla) {
  Rng r1(6), r2(7);
  auto plain = build_cdn<double>(config(CdnVariant::depthnet, 32, 0.125), r1);
  auto cfg = config(CdnVariant::cdn_cdc, 32, 0.125);
  cfg.theta = 0.0;
  auto cdc = build_cdn<double>(cfg, r2);
  EXPECT_EQ(copy_matching_parameters(*plain, *cdc), plain->named_parameters().size());
  auto x = cdnas::testing::random_tensor({2, 3, 32, 32}, r1, 0, 1);
  NoGradGuard guard;
  EXPECT_EQ(plain->forward(Var<double>(x)).value(), cdc->forward(Var<double>(x)).value());
}

TEST(CdnNet, RejectsBadSizes) {
  Rng rng(8);
  EXPECT_THROW(build_cdn<float>(config(CdnVariant::depthnet, 60), rng), ConfigError);
  auto net = build_cdn<float>(config(CdnVariant::depthnet, 64, 0.125), rng);
  EXPECT_THROW(net->forward(Var<float>(Tensor<float>({1, 3, 32, 32}))), ShapeError);
  EXPECT_THROW(parse_cdn_variant("resnet"), ConfigError);
}

TEST(CdnNet, GradientReachesStem) {
  for (auto v : {CdnVariant::depthnet, CdnVariant::cdn_cdc, CdnVariant::cdn_cdp}) {
    Rng rng(9);
    auto net = build_cdn<float>(config(v, 32, 0.125), rng);
    auto x = cdnas::testing::random_tensor_f({2, 3, 32, 32}, rng, 0, 1);
    auto target = cdnas::testing::random_tensor_f({2, 1, 4, 4}, rng, 0, 1);
    backward(overall_depth_loss(net->forward(Var<float>(x)), Var<float>(target)));
    double norm = 0;
    for (auto& [name, p] : net->named_parameters()) {
      if (name.rfind("stem.", 0) == 0) norm += double(p.grad().max_abs());
    }
    EXPECT_GT(norm, 0.0) << to_string(v);
  }
}

TEST(CdnNet, OneAdamStepDecreasesLoss) {
  for (auto v : {CdnVariant::depthnet, CdnVariant::cdn_cdc, CdnVariant::cdn_cdp}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      Rng rng(100 + seed);
      auto net = build_cdn<float>(config(v, 32, 0.25), rng);
      auto x = cdnas::testing::random_tensor_f({4, 3, 32, 32}, rng, 0, 1);
      auto target = cdnas::testing::random_tensor_f({4, 1, 4, 4}, rng, 0, 1);
      auto loss0 = overall_depth_loss(net->forward(Var<float>(x)), Var<float>(target));
      const float before = loss0.value().item();
      backward(loss0);
      Adam<float> opt(1e-4, 5e-5);
      auto params = net->parameters();
      opt.step(params);
      NoGradGuard guard;
      const float after =
          overall_depth_loss(net->forward(Var<float>(x)), Var<float>(target)).value().item();
      EXPECT_LT(after, before) << to_string(v) << " seed " << seed;
    }
  }
}

TEST(CdnNet, ConfigJsonRoundTrip) {
  auto c = config(CdnVariant::cdn_cdp, 64, 0.25);
  c.lambda = 0.4;
  auto back = CdnConfig::from_json(c.to_json());
  EXPECT_EQ(back.variant, c.variant);
  EXPECT_EQ(back.lambda, 0.4);
  EXPECT_EQ(back.input_size, 64u);
  EXPECT_EQ(back.width, 0.25);
}

TEST(Checkpoint, RoundTripsParametersAndConfig) {
  Rng r1(10), r2(11);
  auto cfg = config(CdnVariant::cdn_cdc, 32, 0.125);
  auto a = build_cdn<float>(cfg, r1);
  auto b = build_cdn<float>(cfg, r2);
  const auto path = std::filesystem::temp_directory_path() / "cdnas_ckpt_test.cdnc";
  save_checkpoint<float>(path, *a, cfg.to_json());
  auto echo = load_checkpoint<float>(path, *b);
  EXPECT_EQ(echo["variant"], "cdn_cdc");
  EXPECT_EQ(read_checkpoint_config(path), echo);
  auto pa = a->named_parameters(), pb = b->named_parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i].second.value(), pb[i].second.value());
  // A different architecture refuses the archive.
  auto other = build_cdn<float>(config(CdnVariant::depthnet, 32, 0.25), r1);
  EXPECT_THROW(load_checkpoint<float>(path, *other), IoError);
  std::filesystem::remove(path);
}
