#include <gtest/gtest.h>

#include <cmath>

#include "tcl/error.hpp"
#include "tcl/numerics.hpp"
#include "tcl/rng.hpp"

using namespace tcl;

namespace {

Vector naive_softmax(const Vector& z) {
  Vector p(z.size());
  double s = 0.0;
  for (double v : z) s += std::exp(v);
  for (std::size_t i = 0; i < z.size(); ++i) p[i] = std::exp(z[i]) / s;
  return p;
}

}  // namespace

TEST(Softmax, EqualLogitsGiveUniform) {
  const Vector p = softmax(Vector{0.0, 0.0});
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.5);
}

TEST(Softmax, LogTwo) {
  const Vector p = softmax(Vector{std::log(2.0), 0.0});
  EXPECT_NEAR(p[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(p[1], 1.0 / 3.0, 1e-15);
}

TEST(Softmax, MatchesNaiveEvaluation) {
  RngStream rng(1);
  for (int rep = 0; rep < 50; ++rep) {
    Vector z(5);
    for (auto& v : z) v = rng.normal();
    const Vector p = softmax(z), q = naive_softmax(z);
    for (std::size_t i = 0; i < z.size(); ++i) EXPECT_NEAR(p[i], q[i], 1e-12);
  }
}

TEST(Softmax, LargeLogitsStayFinite) {
  const Vector p = softmax(Vector{1000.0, 999.0});
  EXPECT_TRUE(std::isfinite(p[0]));
  EXPECT_NEAR(p[0] + p[1], 1.0, 1e-15);
}

TEST(Softmax, RejectsEmptyAndNonFinite) {
  EXPECT_THROW(softmax(Vector{}), ArgumentError);
  EXPECT_THROW(softmax(Vector{1.0, NAN}), NumericError);
}

TEST(Mse, IdentityIsZero) {
  Matrix a(3, 4, 1.5);
  EXPECT_EQ(mse(a, a), 0.0);
}

TEST(Mse, OnesVsZeros) { EXPECT_DOUBLE_EQ(mse(Matrix(1, 2, 1.0), Matrix(1, 2, 0.0)), 1.0); }

TEST(Mse, MatchesLoop) {
  RngStream rng(2);
  Matrix a(3, 4), b(3, 4);
  for (auto& v : a.data()) v = rng.normal();
  for (auto& v : b.data()) v = rng.normal();
  double s = 0.0;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) s += (a(i, j) - b(i, j)) * (a(i, j) - b(i, j));
  EXPECT_NEAR(mse(a, b), s / 12.0, 1e-12);
}

TEST(Mse, ShapeMismatchThrows) { EXPECT_THROW(mse(Matrix(2, 2), Matrix(2, 3)), ArgumentError); }

TEST(VectorNorm, Cases) {
  EXPECT_DOUBLE_EQ(vector_norm(Vector{3, -4}, NormKind::L1), 7.0);
  EXPECT_DOUBLE_EQ(vector_norm(Vector{3, -4}, NormKind::L2), 5.0);
  EXPECT_EQ(vector_norm(Vector{0, 0, 0}, NormKind::L1), 0.0);
  EXPECT_EQ(vector_norm(Vector{0, 0, 0}, NormKind::L2), 0.0);
}

TEST(VectorNorm, ParseNames) {
  EXPECT_EQ(parse_norm("l1"), NormKind::L1);
  EXPECT_EQ(parse_norm("L2"), NormKind::L2);
  EXPECT_THROW(parse_norm("l3"), ConfigError);
}

TEST(GaussianNoise, ZeroSigma) {
  RngStream rng(3);
  const Matrix m = gaussian_noise(4, 5, 0.0, rng);
  for (double v : m.data()) EXPECT_EQ(v, 0.0);
}

TEST(GaussianNoise, Moments) {
  RngStream rng(4);
  const Matrix m = gaussian_noise(100, 100, 1.0, rng);
  double s = 0.0, s2 = 0.0;
  for (double v : m.data()) s += v;
  const double mean = s / 10000.0;
  for (double v : m.data()) s2 += (v - mean) * (v - mean);
  EXPECT_NEAR(mean, 0.0, 0.05);
  EXPECT_NEAR(std::sqrt(s2 / 10000.0), 1.0, 0.05);
}

TEST(GaussianNoise, Deterministic) {
  RngStream a(5, 1), b(5, 1);
  EXPECT_EQ(gaussian_noise(3, 3, 0.5, a), gaussian_noise(3, 3, 0.5, b));
}

TEST(GaussianNoise, NegativeSigmaThrows) {
  RngStream rng(6);
  EXPECT_THROW(gaussian_noise(2, 2, -1.0, rng), ArgumentError);
}

TEST(KeepMask, Extremes) {
  RngStream rng(7);
  const Matrix drop = keep_mask(3, 3, 1.0, rng);
  for (double v : drop.data()) EXPECT_EQ(v, 0.0);
  const Matrix keep = keep_mask(3, 3, 0.0, rng);
  for (double v : keep.data()) EXPECT_EQ(v, 1.0);
}

TEST(FiniteDiff, Quadratic) {
  const Vector g = finite_diff_grad(
      [](std::span<const double> t) { return t[0] * t[0] + t[1] * t[1]; }, Vector{1.0, 2.0}, 1e-5);
  EXPECT_NEAR(g[0], 2.0, 1e-6);
  EXPECT_NEAR(g[1], 4.0, 1e-6);
}

TEST(FiniteDiff, ConstantIsZero) {
  const Vector g = finite_diff_grad([](std::span<const double>) { return 3.0; }, Vector{1, 2, 3}, 1e-5);
  for (double v : g) EXPECT_EQ(v, 0.0);
}

TEST(FiniteDiff, NonFiniteThrows) {
  EXPECT_THROW(finite_diff_grad([](std::span<const double>) { return NAN; }, Vector{1.0}, 1e-5),
               NumericError);
}
