#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "rvhate/head.hpp"
#include "support/expect_error.hpp"
#include "support/synthetic.hpp"

using namespace rvhate;

TEST(Head, ZeroParametersGiveBiasLogitsAndFlagProjection) {
  ModuleHead h(ModuleId::M0, 4, 3);
  h.cls_b()[0] = 0.25;
  h.cls_b()[1] = -0.5;
  const auto out = forward(h, Vec{1, 2, 3, 4});
  EXPECT_TRUE(out.degenerate);
  for (double p : out.projected) EXPECT_EQ(p, 0.0);
  EXPECT_EQ(out.logits[0], 0.25);
  EXPECT_EQ(out.logits[1], -0.5);
}

TEST(Head, DeterministicInit) {
  std::mt19937_64 a(5), b(5);
  const auto h1 = ModuleHead::initialized(ModuleId::M2, 6, 4, a);
  const auto h2 = ModuleHead::initialized(ModuleId::M2, 6, 4, b);
  EXPECT_EQ(h1, h2);
  const Vec x{0.1, -0.2, 0.3, 0.0, 0.5, -0.7};
  EXPECT_EQ(forward(h1, x).logits, forward(h2, x).logits);
  EXPECT_EQ(h1.params.size(), ModuleHead::parameter_count(6, 4));
}

TEST(Head, ProjectionIsUnit) {
  std::mt19937_64 rng(6);
  const auto h = ModuleHead::initialized(ModuleId::M0, 8, 5, rng);
  for (int t = 0; t < 20; ++t) {
    const auto out = forward(h, synth::unit_vec(rng, 8));
    ASSERT_FALSE(out.degenerate);
    double s = 0;
    for (double p : out.projected) s += p * p;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Head, DimensionMismatch) {
  ModuleHead h(ModuleId::M0, 4, 2);
  EXPECT_RVHATE_ERROR(forward(h, Vec{1, 2}), DimensionMismatch);
}

TEST(Head, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  ModuleHead h = ModuleHead::initialized(ModuleId::M0, 5, 4, rng);
  for (auto& b : h.proj_b()) b = 0.1 * synth::gaussian_vec(rng, 1)[0];
  const Vec x = synth::gaussian_vec(rng, 5);
  const Logits c{0.7, -1.3};
  const Vec g = synth::gaussian_vec(rng, 4);
  // Scalar L = c . logits + g . activation
  auto loss = [&](const ModuleHead& m) {
    const auto o = forward(m, x);
    double l = c[0] * o.logits[0] + c[1] * o.logits[1];
    for (std::size_t j = 0; j < 4; ++j) l += g[j] * o.activation[j];
    return l;
  };
  std::vector<double> grad(h.params.size(), 0.0);
  backward(h, x, forward(h, x), c, g, grad);
  const double step = 1e-4;
  for (std::size_t p = 0; p < h.params.size(); ++p) {
    ModuleHead plus = h, minus = h;
    plus.params[p] += step;
    minus.params[p] -= step;
    const double fd = (loss(plus) - loss(minus)) / (2 * step);
    EXPECT_TRUE(synth::rel_close(grad[p], fd, 1e-4)) << "param " << p << ": " << grad[p] << " vs " << fd;
  }
}

TEST(Head, EachLogitGradient) {
  std::mt19937_64 rng(8);
  const ModuleHead h = ModuleHead::initialized(ModuleId::M1, 3, 3, rng);
  const Vec x = synth::gaussian_vec(rng, 3);
  for (int k = 0; k < 2; ++k) {
    Logits sel{0, 0};
    sel[static_cast<std::size_t>(k)] = 1.0;
    std::vector<double> grad(h.params.size(), 0.0);
    backward(h, x, forward(h, x), sel, {}, grad);
    for (std::size_t p = 0; p < h.params.size(); ++p) {
      ModuleHead plus = h, minus = h;
      plus.params[p] += 1e-4;
      minus.params[p] -= 1e-4;
      const double fd = (forward(plus, x).logits[static_cast<std::size_t>(k)] -
                         forward(minus, x).logits[static_cast<std::size_t>(k)]) / 2e-4;
      EXPECT_TRUE(synth::rel_close(grad[p], fd, 1e-4)) << k << "/" << p;
    }
  }
}

TEST(Head, PredictionTiesGoToZero) {
  EXPECT_EQ(predict_label({0.3, 0.3}), 0);
  EXPECT_EQ(predict_label({0.3, 0.4}), 1);
  EXPECT_DOUBLE_EQ(hate_probability({0.0, 0.0}), 0.5);
  EXPECT_NEAR(hate_probability({0.0, std::log(3.0)}), 0.75, 1e-12);
}

TEST(Head, CheckpointRoundTrip) {
  const auto dir = scratch_dir();
  std::mt19937_64 rng(9);
  auto h = ModuleHead::initialized(ModuleId::M3, 7, 5, rng);
  h.round_to_float32();
  write_head(h, dir / "h.rvhd");
  EXPECT_EQ(std::filesystem::file_size(dir / "h.rvhd"), 17u + 4u * h.params.size());
  const auto back = read_head(dir / "h.rvhd");
  EXPECT_EQ(back, h);
  const Vec x = synth::unit_vec(rng, 7);
  EXPECT_EQ(forward(back, x).logits, forward(h, x).logits);
}

TEST(Head, CheckpointCorruption) {
  std::mt19937_64 rng(10);
  const auto bytes = encode_head(ModuleHead::initialized(ModuleId::M0, 3, 2, rng));
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_RVHATE_ERROR(decode_head(bad), BadMagic);
  bad = bytes;
  bad[4] = 9;
  EXPECT_RVHATE_ERROR(decode_head(bad), VersionMismatch);
  bad = bytes;
  bad.pop_back();
  EXPECT_RVHATE_ERROR(decode_head(bad), TruncatedFile);
  bad = bytes;
  bad[8] = 7;
  EXPECT_RVHATE_ERROR(decode_head(bad), ParseError);
}

TEST(ModuleIdNames, RoundTrip) {
  for (auto id : {ModuleId::M0, ModuleId::M1, ModuleId::M2, ModuleId::M3, ModuleId::Combined}) {
    EXPECT_EQ(parse_module_id(to_string(id)), id);
  }
  EXPECT_FALSE(parse_module_id("M4").has_value());
}
