#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "gradcheck.hpp"
#include "tcl/engine.hpp"
#include "tcl/error.hpp"
#include "tcl/persist.hpp"

using namespace tcl;
namespace fs = std::filesystem;

namespace {

TclConfig small_config(std::size_t d = 5, std::size_t h = 8, std::size_t k = 4) {
  TclConfig c;
  c.input_dim = d;
  c.hidden = h;
  c.latent = k;
  return c;
}

TclModel zero_model(const TclConfig& c) {
  return {c, TclParams::zeros(c.input_dim, c.hidden, c.latent)};
}

Matrix random_matrix(std::size_t r, std::size_t c, RngStream& rng) {
  Matrix m(r, c);
  for (auto& v : m.data()) v = rng.normal();
  return m;
}

double loop_mse(const Matrix& a, const Matrix& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) s += (a(i, j) - b(i, j)) * (a(i, j) - b(i, j));
  return s / static_cast<double>(a.rows() * a.cols());
}

// Two well-separated clusters in 6 dimensions.
Matrix two_clusters(std::size_t n, RngStream& rng) {
  Matrix x(n, 6);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < 6; ++j) x(i, j) = (i % 2 ? 1.0 : -1.0) + 0.3 * rng.normal();
  return x;
}

}  // namespace

TEST(Config, DefaultsResolveWidths) {
  const TclConfig c = TclConfig{}.resolved(3);
  EXPECT_EQ(c.hidden, 16u);
  EXPECT_EQ(c.latent, 8u);
  const TclConfig w = TclConfig{}.resolved(200);
  EXPECT_EQ(w.hidden, 256u);
  EXPECT_EQ(w.latent, 128u);
  EXPECT_EQ(TclConfig{}.batch_size, 256u);
}

TEST(Config, Validation) {
  TclConfig c = small_config();
  c.temperature = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.mask_p = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.batch_size = 1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, JsonRoundTripAndUnknownKey) {
  TclConfig c = small_config();
  c.noise = NoiseMode::Mask;
  c.mask_p = 0.35;
  c.seed = 77;
  const TclConfig d = tcl_config_from_json(to_json(c));
  EXPECT_EQ(to_json(d), to_json(c));
  EXPECT_THROW(tcl_config_from_json({{"epochs", 3}}), ConfigError);
}

TEST(Augment, ZeroSigmaCopiesInput) {
  RngStream rng(1);
  const Matrix x = random_matrix(4, 5, rng);
  TclConfig c = small_config();
  c.sigma = 0.0;
  const auto [a, b] = augment(x, c, rng);
  EXPECT_EQ(a, x);
  EXPECT_EQ(b, x);
}

TEST(Augment, DeterministicAndIndependentViews) {
  RngStream data(2);
  const Matrix x = random_matrix(4, 5, data);
  RngStream r1(3), r2(3);
  const auto p1 = augment(x, small_config(), r1);
  const auto p2 = augment(x, small_config(), r2);
  EXPECT_EQ(p1.first, p2.first);
  EXPECT_EQ(p1.second, p2.second);
  EXPECT_NE(p1.first, p1.second);
}

TEST(Augment, FullMaskZeroesBoth) {
  RngStream rng(4);
  const Matrix x = random_matrix(3, 5, rng);
  TclConfig c = small_config();
  c.noise = NoiseMode::Mask;
  c.mask_p = 1.0;
  const auto [a, b] = augment(x, c, rng);
  EXPECT_EQ(a, Matrix(3, 5));
  EXPECT_EQ(b, Matrix(3, 5));
}

TEST(Forward, ZeroParametersGiveZeroOutputs) {
  RngStream rng(5);
  const TclModel m = zero_model(small_config());
  const Matrix x = random_matrix(3, 5, rng);
  EXPECT_EQ(encode(m, x), Matrix(3, 4));
  EXPECT_EQ(decode(m, random_matrix(3, 4, rng)), Matrix(3, 5));
}

TEST(Forward, ShapesAndRowIndependence) {
  RngStream rng(6);
  const TclConfig c = small_config();
  const TclModel m = TclModel::initialize(c, rng);
  Matrix x = random_matrix(1, 5, rng);
  EXPECT_EQ(encode(m, x).rows(), 1u);
  EXPECT_EQ(encode(m, x).cols(), 4u);
  EXPECT_EQ(decode(m, encode(m, x)).cols(), 5u);
  Matrix two(2, 5);
  for (std::size_t j = 0; j < 5; ++j) two(0, j) = two(1, j) = x(0, j);
  const Matrix e = encode(m, two);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(e(0, j), e(1, j));
  const Matrix out = decode(m, e);
  for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(out(0, j), out(1, j));
  EXPECT_THROW(encode(m, Matrix(2, 3)), ArgumentError);
}

TEST(Embed, EqualsEncodeOnCleanInput) {
  RngStream rng(7);
  const TclModel m = TclModel::initialize(small_config(), rng);
  const Matrix x = random_matrix(6, 5, rng);
  EXPECT_EQ(embed(m, x), encode(m, x));
  EXPECT_EQ(embed(m, x), embed(m, x));
  EXPECT_EQ(embed(m, x).cols(), 4u);
}

TEST(Losses, Reconstruction) {
  RngStream rng(8);
  const Matrix x = random_matrix(3, 4, rng);
  EXPECT_EQ(loss_reconstruction(x, x, x), 0.0);
  Matrix shifted = x;
  for (auto& v : shifted.data()) v += 1.0;
  EXPECT_DOUBLE_EQ(loss_reconstruction(shifted, x, x), 0.5);
  const Matrix a = random_matrix(3, 4, rng), b = random_matrix(3, 4, rng);
  EXPECT_NEAR(loss_reconstruction(a, b, x), 0.5 * (loop_mse(a, x) + loop_mse(b, x)), 1e-12);
}

TEST(Losses, Distance) {
  EXPECT_EQ(loss_distance(Matrix(2, 2, 1.0), Matrix(2, 2, 1.0)), 0.0);
  EXPECT_DOUBLE_EQ(loss_distance(Matrix(1, 2, std::vector<double>{1, 0}),
                                 Matrix(1, 2, std::vector<double>{0, 1})),
                   1.0);
  RngStream rng(9);
  const Matrix a = random_matrix(4, 3, rng), b = random_matrix(4, 3, rng);
  EXPECT_NEAR(loss_distance(a, b), loop_mse(a, b), 1e-12);
}

TEST(Losses, Contrastive) {
  const Matrix orth1(2, 2, std::vector<double>{1, 0, 0, 3});
  const Matrix orth2(2, 2, std::vector<double>{0, 5, 2, 0});
  EXPECT_EQ(loss_contrastive(orth1, orth2, 1.0), 0.0);
  const Matrix ones(1, 2, 1.0);
  EXPECT_DOUBLE_EQ(loss_contrastive(ones, ones, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(loss_contrastive(ones, ones, 2.0), 2.0);
  EXPECT_THROW(loss_contrastive(ones, ones, 0.0), ArgumentError);
}

TEST(Losses, TotalIsSumOfComponents) {
  RngStream rng(10);
  const TclModel m = TclModel::initialize(small_config(), rng);
  const Matrix x = random_matrix(6, 5, rng);
  RngStream v1(11), v2(11);
  const LossBreakdown l = loss_total(x, m, v1);
  const Views views = draw_views(x, m.config, v2);
  const Matrix e1 = encode(m, views.first), e2 = encode(m, views.second);
  const double r = loss_reconstruction(decode(m, e1), decode(m, e2), x);
  const double c = loss_contrastive(e1, e2, m.config.temperature);
  const double d = loss_distance(e1, e2);
  EXPECT_EQ(l.reconstruction, r);
  EXPECT_EQ(l.contrastive, c);
  EXPECT_EQ(l.distance, d);
  EXPECT_EQ(l.total, r + c + d);
}

TEST(Gradient, MatchesFiniteDifferences) {
  RngStream rng(12);
  for (NoiseMode mode : {NoiseMode::Gaussian, NoiseMode::Mask}) {
    TclConfig c = small_config(5, 8, 4);
    c.noise = mode;
    const auto inst = tcl::testing::random_instance(c, 6, rng);
    const Vector a = grad_on_views(inst.model, inst.views).grad.flatten();
    EXPECT_LT(tcl::testing::max_relative_error(a, tcl::testing::numeric_gradient(inst.model, inst.views)), 1e-4);
  }
}

TEST(Gradient, EachTermSeparately) {
  RngStream rng(13);
  const auto inst = tcl::testing::random_instance(small_config(3, 6, 3), 4, rng);
  for (int t = 0; t < 3; ++t) {
    const LossTerms terms{t == 0, t == 1, t == 2};
    const Vector a = grad_on_views(inst.model, inst.views, terms).grad.flatten();
    const Vector f = tcl::testing::numeric_gradient(inst.model, inst.views, 1e-5, terms);
    EXPECT_LT(tcl::testing::max_relative_error(a, f), 1e-4) << "term " << t;
  }
}

TEST(Gradient, DecoderBiasOnLinearPath) {
  RngStream rng(14);
  TclConfig c = small_config(4, 6, 3);
  c.sigma = 0.0;
  const TclModel m = zero_model(c);
  const std::size_t n = 5, d = 4;
  const Matrix x = random_matrix(n, d, rng);
  const Gradient g = grad_on_views(m, draw_views(x, c, rng), {true, false, false});
  for (std::size_t j = 0; j < d; ++j) {
    double col = 0.0;
    for (std::size_t i = 0; i < n; ++i) col += x(i, j);
    // two identical views: -(2 / (n d views)) * (sum over both copies)
    const double expected = -(2.0 / static_cast<double>(n * d * 2)) * (2.0 * col);
    EXPECT_NEAR(g.grad.dec_out.bias[j], expected, 1e-15);
  }
}

TEST(Gradient, ContrastiveVanishesAtZeroDots) {
  RngStream rng(15);
  const TclModel m = zero_model(small_config());
  const Gradient g =
      grad_on_views(m, draw_views(random_matrix(4, 5, rng), m.config, rng), {false, true, false});
  for (double v : g.grad.flatten()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(g.loss.contrastive, 0.0);
}

TEST(Train, LossHalvesOnTwoClusters) {
  RngStream rng(16);
  const Matrix x = two_clusters(2000, rng);
  TclConfig c;
  c.seed = 16;
  const auto [m, trace] = train_tcl(x, c);
  EXPECT_LE(trace.total.back(), 0.5 * trace.total.front());
  EXPECT_EQ(trace.total.size(), trace.epochs);
  EXPECT_EQ(trace.reconstruction.size(), trace.epochs);
}

TEST(Train, DeterministicParameters) {
  RngStream rng(17);
  const Matrix x = two_clusters(600, rng);
  TclConfig c;
  c.max_epochs = 3;
  c.seed = 5;
  const TclParams a = train_tcl(x, c).first.params;
  EXPECT_EQ(train_tcl(x, c).first.params, a);
  c.seed = 6;
  EXPECT_NE(train_tcl(x, c).first.params, a);
}

TEST(Train, FixedEpochBudget) {
  RngStream rng(18);
  const Matrix x = two_clusters(300, rng);
  TclConfig c;
  c.max_epochs = 15;
  c.tolerance = 0.0;
  const auto [m, trace] = train_tcl(x, c);
  EXPECT_EQ(trace.epochs, 15u);
  EXPECT_EQ(trace.stop, StopReason::MaxEpochs);
}

TEST(Train, StabilizationStopsEarly) {
  RngStream rng(19);
  const Matrix x = two_clusters(300, rng);
  TclConfig c;
  c.max_epochs = 200;
  c.tolerance = 0.5;
  const auto [m, trace] = train_tcl(x, c);
  EXPECT_EQ(trace.stop, StopReason::Stabilized);
  EXPECT_LT(trace.epochs, 200u);
  EXPECT_GE(trace.epochs, 4u);
}

TEST(Train, DivergenceIsTrainingError) {
  RngStream rng(20);
  const Matrix x = two_clusters(512, rng);
  TclConfig c;
  c.learning_rate = 10.0;
  c.max_epochs = 20;
  c.tolerance = 0.0;
  EXPECT_THROW(train_tcl(x, c), TrainingError);
}

TEST(Train, InputWidthMismatch) {
  TclConfig c;
  c.input_dim = 3;
  EXPECT_THROW(train_tcl(Matrix(10, 4, 1.0), c), ArgumentError);
}

class ModelFile : public ::testing::Test {
 protected:
  fs::path path_ = fs::temp_directory_path() / "tcl-model-test" / "model.json";
  void TearDown() override { fs::remove_all(path_.parent_path()); }
};

TEST_F(ModelFile, RoundTripBitExact) {
  RngStream rng(21);
  TclConfig c = small_config(5, 8, 4);
  c.noise = NoiseMode::Mask;
  TclModel m = TclModel::initialize(c, rng);
  for (auto& v : m.params.norm_bias) v = rng.normal() * 1e-13;
  save_model(m, path_);
  const TclModel back = load_model(path_);
  EXPECT_EQ(back.params, m.params);
  EXPECT_EQ(to_json(back.config), to_json(m.config));
  const Matrix x = random_matrix(3, 5, rng);
  EXPECT_EQ(embed(back, x), embed(m, x));
}

TEST_F(ModelFile, CorruptFilesRejected) {
  RngStream rng(22);
  save_model(TclModel::initialize(small_config(), rng), path_);
  fs::resize_file(path_, fs::file_size(path_) / 2);
  EXPECT_THROW(load_model(path_), FormatError);
  auto j = to_json(TclModel::initialize(small_config(), rng));
  j["parameters"][0]["data"].erase(0);
  EXPECT_THROW(model_from_json(j), FormatError);
  j = to_json(TclModel::initialize(small_config(), rng));
  j["version"] = 2;
  EXPECT_THROW(model_from_json(j), FormatError);
}
