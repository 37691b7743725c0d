#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tcl/matrix.hpp"
#include "tcl/rng.hpp"

namespace tcl {

enum class NoiseMode { Gaussian, Mask };

const char* to_string(NoiseMode m);
NoiseMode parse_noise_mode(const std::string& s);

struct TclConfig {
  std::size_t input_dim = 0;
  std::size_t hidden = 0;  // 0: clamp(2 d, 16, 256)
  std::size_t latent = 0;  // 0: clamp(d, 8, 128)
  NoiseMode noise = NoiseMode::Gaussian;
  double sigma = 0.1;      // Gaussian noise std on standardized features
  double mask_p = 0.2;     // masking probability in Mask mode
  double temperature = 1.0;
  std::size_t batch_size = 256;
  std::size_t max_epochs = 100;
  // Relative improvement of the epoch-mean total loss over a 3-epoch window
  // below which training counts as stabilized. 0 disables the check.
  double tolerance = 1e-4;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;

  // Copy with input_dim set and zero widths replaced by their defaults.
  TclConfig resolved(std::size_t d) const;
  void validate() const;
};

nlohmann::json to_json(const TclConfig& c);
TclConfig tcl_config_from_json(const nlohmann::json& j);

struct Dense {
  Matrix weight;  // fan_in x fan_out
  Vector bias;
};

// Encoder: Linear(d->h), LeakyReLU(0.01), LayerNorm(h), Linear(h->k).
// Decoder: Linear(k->h), LeakyReLU(0.01), Linear(h->d).
// The same struct also carries gradients.
struct TclParams {
  Dense enc_in;
  Vector norm_gain;
  Vector norm_bias;
  Dense enc_out;
  Dense dec_in;
  Dense dec_out;

  static TclParams zeros(std::size_t d, std::size_t h, std::size_t k);

  // Visits every parameter array in declared layer order.
  template <class F>
  void for_each(F&& f) {
    f("encoder.in.weight", std::span<double>(enc_in.weight.data()));
    f("encoder.in.bias", std::span<double>(enc_in.bias));
    f("encoder.norm.gain", std::span<double>(norm_gain));
    f("encoder.norm.bias", std::span<double>(norm_bias));
    f("encoder.out.weight", std::span<double>(enc_out.weight.data()));
    f("encoder.out.bias", std::span<double>(enc_out.bias));
    f("decoder.in.weight", std::span<double>(dec_in.weight.data()));
    f("decoder.in.bias", std::span<double>(dec_in.bias));
    f("decoder.out.weight", std::span<double>(dec_out.weight.data()));
    f("decoder.out.bias", std::span<double>(dec_out.bias));
  }
  template <class F>
  void for_each(F&& f) const {
    const_cast<TclParams*>(this)->for_each([&](const char* name, std::span<double> s) {
      f(name, std::span<const double>(s));
    });
  }

  std::size_t count() const;
  Vector flatten() const;
  void assign(std::span<const double> flat);

  friend bool operator==(const TclParams& a, const TclParams& b) {
    return a.flatten() == b.flatten();
  }
};

struct TclModel {
  TclConfig config;
  TclParams params;

  // Glorot-uniform weights, zero biases, unit norm gain.
  static TclModel initialize(const TclConfig& config, RngStream& rng);
};

// Two full copies of the batch (no column slicing), each corrupted
// independently: additive N(0, sigma^2) noise or a Bernoulli(p) zero mask.
std::pair<Matrix, Matrix> augment(const Matrix& batch, const TclConfig& config, RngStream& rng);

Matrix encode(const TclModel& model, const Matrix& x);
Matrix decode(const TclModel& model, const Matrix& e);
// Encoder-only, noise-free forward pass used at inference.
Matrix embed(const TclModel& model, const Matrix& x);

// Mean over both views of MSE against the clean batch.
double loss_reconstruction(const Matrix& xhat1, const Matrix& xhat2, const Matrix& clean);
double loss_distance(const Matrix& e1, const Matrix& e2);
// Mean over rows of (e1_i . e2_i)^2, divided by the temperature.
double loss_contrastive(const Matrix& e1, const Matrix& e2, double temperature);

struct LossBreakdown {
  double reconstruction = 0.0;
  double contrastive = 0.0;
  double distance = 0.0;
  double total = 0.0;  // reconstruction + contrastive + distance
};

struct Views {
  Matrix clean;
  Matrix first;
  Matrix second;
};

Views draw_views(const Matrix& batch, const TclConfig& config, RngStream& rng);

LossBreakdown loss_on_views(const TclModel& model, const Views& views);
LossBreakdown loss_total(const Matrix& batch, const TclModel& model, RngStream& rng);

// Selects which loss terms are differentiated (diagnostics); training always
// uses all three.
struct LossTerms {
  bool reconstruction = true;
  bool contrastive = true;
  bool distance = true;
};

struct Gradient {
  LossBreakdown loss;
  TclParams grad;
};

Gradient grad_on_views(const TclModel& model, const Views& views, LossTerms terms = {});
// Draws the noise once, then differentiates the total loss on those views.
Gradient grad_loss(const TclModel& model, const Matrix& batch, RngStream& rng);

enum class StopReason { Stabilized, MaxEpochs };
const char* to_string(StopReason r);

struct TrainTrace {
  Vector total;  // per-epoch means over batches
  Vector reconstruction;
  Vector contrastive;
  Vector distance;
  double seconds = 0.0;
  std::size_t epochs = 0;
  StopReason stop = StopReason::MaxEpochs;
};

nlohmann::json to_json(const TrainTrace& t);

// Minibatch Adam training. Throws TrainingError if a batch loss becomes
// non-finite or exceeds 10x the first batch loss.
std::pair<TclModel, TrainTrace> train_tcl(const Matrix& data, const TclConfig& config);

inline constexpr int kModelFormatVersion = 1;

nlohmann::json to_json(const TclModel& m);
TclModel model_from_json(const nlohmann::json& j);
void save_model(const TclModel& model, const std::filesystem::path& path);
TclModel load_model(const std::filesystem::path& path);

}  // namespace tcl
