#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tcl/data.hpp"
#include "tcl/heads.hpp"
#include "tcl/numerics.hpp"
#include "tcl/weibull.hpp"

namespace tcl {

struct BackboneConfig {
  double learning_rate = 0.1;
  std::size_t epochs = 200;
  double l2 = 0.0;
};

// Multinomial logistic logit producer used by both detectors.
struct Backbone {
  Head head;
  double final_nll = 0.0;

  std::size_t classes() const { return head.classes; }
  Matrix logits(const Matrix& x) const { return head.raw(x); }
};

// Requires classification labels. Throws NumericError if the training NLL
// ever increases between epochs.
Backbone train_backbone(const Dataset& train, const BackboneConfig& config = {});

// Equal-frequency binning into `bins` classes. Tied values share the bin of
// their lowest-ranked member.
Vector discretize_target(std::span<const double> y, std::size_t bins);

struct OpenMaxClass {
  Vector mav;  // mean logit vector of correctly classified samples
  WeibullFit weibull;
};

struct OpenMaxModel {
  Backbone backbone;
  std::vector<OpenMaxClass> classes;
  std::size_t tail = 200;
  NormKind norm = NormKind::L2;
};

OpenMaxModel fit_openmax(const Backbone& backbone, const Dataset& train, NormKind norm,
                         std::size_t tail);
// Weibull CDF of the distance from the logit vector to the predicted class MAV.
double openmax_score(const OpenMaxModel& model, std::span<const double> x);
Vector openmax_scores(const OpenMaxModel& model, const Matrix& x);

struct TemperatureFit {
  double temperature = 1.0;
  double nll_calibrated = 0.0;
  double nll_uncalibrated = 0.0;
};

inline constexpr double kMinTemperature = 0.05;
inline constexpr double kMaxTemperature = 10.0;

double nll_at_temperature(const Matrix& logits, std::span<const double> labels,
                          double temperature);
// Golden-section search over [0.05, 10] (interval tolerance 1e-4).
TemperatureFit calibrate_temperature(const Matrix& logits, std::span<const double> labels);

struct TemperatureModel {
  Backbone backbone;
  TemperatureFit fit;
  double temperature() const { return fit.temperature; }
};

TemperatureModel fit_temperature(const Backbone& backbone, const Dataset& calibration);
// -max_j softmax(v / T)_j; larger means less confident.
double temp_score_logits(std::span<const double> logits, double temperature);
double temp_score(const TemperatureModel& model, std::span<const double> x);
Vector temp_scores(const TemperatureModel& model, const Matrix& x);

struct Histogram {
  Vector lo;
  Vector hi;
  std::vector<std::size_t> counts;

  std::string to_csv() const;  // bin_lo,bin_hi,count
};

// Equal-width bins over [min, max]; the maximum lands in the last bin.
Histogram score_histogram(std::span<const double> scores, std::size_t bins);

// Linear-interpolation quantile of the scores, q in [0, 1].
double score_quantile(std::span<const double> scores, double q);

struct SplitSettings {
  std::string detector;
  NormKind norm = NormKind::L2;
  std::uint64_t seed = 0;
};

// score <= threshold -> D_in, score > threshold -> D_ood.
SplitPair split_by_threshold(const Dataset& ds, std::span<const double> scores,
                             double threshold, const SplitSettings& settings = {});

struct SplitReport {
  TaskKind task = TaskKind::Classification;
  std::string metric;  // "accuracy" or "r2"
  double id_train = 0.0;
  double id_test = 0.0;
  double ood_train = 0.0;
  double ood_test = 0.0;
  std::size_t m = 0;
  std::size_t n = 0;
  double threshold = 0.0;

  double degradation() const { return id_test - ood_test; }
};

// D_in and D_ood are each split 80/20. A probe (logistic for classification,
// least squares for regression) is fitted on the D_in train part and scored
// on all four parts.
SplitReport validate_split(const SplitPair& pair, RngStream& rng);

nlohmann::json to_json(const SplitReport& r);

enum class DetectorKind { OpenMax, Temperature };

const char* to_string(DetectorKind k);
DetectorKind parse_detector(const std::string& s);

struct DetectorConfig {
  DetectorKind detector = DetectorKind::OpenMax;
  NormKind norm = NormKind::L2;
  std::size_t tail = 200;
  std::size_t bins = 50;
  std::optional<double> threshold;
  double quantile = 0.95;
  std::uint64_t seed = 0;
  std::size_t target_bins = 10;          // regression targets, detection only
  double calibration_fraction = 0.2;     // held out from backbone training
  BackboneConfig backbone;
};

DetectorConfig detector_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DetectorConfig& c);

struct Detection {
  Vector scores;  // one per row of the input dataset
  Histogram histogram;
  double threshold = 0.0;  // explicit, or the configured quantile of the scores
  std::string detector;
};

// Backbone on a stratified (1 - calibration_fraction) part; OpenMax tails fit
// on that part, temperature on the held-out part; every row is then scored.
Detection detect(const Dataset& ds, const DetectorConfig& config);

}  // namespace tcl
