#include "tcl/ood.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "tcl/log.hpp"
#include "tcl/metrics.hpp"
#include "tcl/persist.hpp"

namespace tcl {

using nlohmann::json;

Backbone train_backbone(const Dataset& train, const BackboneConfig& config) {
  if (train.task() != TaskKind::Classification) {
    throw ArgumentError("train_backbone: needs class labels (discretize regression targets first)");
  }
  LogisticConfig lc;
  lc.learning_rate = config.learning_rate;
  lc.epochs = config.epochs;
  lc.l2 = config.l2;
  Backbone b;
  b.head = fit_logistic(train.features, train.labels, lc, train.schema.class_count());
  const auto& trace = b.head.objective_trace;
  for (std::size_t e = 1; e < trace.size(); ++e) {
    if (trace[e] > trace[e - 1] + 1e-12 * std::abs(trace[e - 1])) {
      throw NumericError("train_backbone: NLL increased at epoch " + std::to_string(e) +
                         "; lower the learning rate");
    }
  }
  b.final_nll = mean_nll(b.logits(train.features), train.labels);
  return b;
}

Vector discretize_target(std::span<const double> y, std::size_t bins) {
  if (bins < 2) throw ArgumentError("discretize_target: bins must be >= 2");
  if (y.empty()) throw ArgumentError("discretize_target: empty target");
  const auto [mn, mx] = std::minmax_element(y.begin(), y.end());
  if (*mn == *mx) throw DegenerateError("discretize_target: constant target");
  const std::size_t n = y.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return y[a] < y[b]; });
  Vector labels(n);
  std::size_t group_label = 0;
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t rank_label = r * bins / n;
    if (r == 0 || y[order[r]] != y[order[r - 1]]) group_label = rank_label;
    labels[order[r]] = static_cast<double>(group_label);
  }
  return labels;
}

namespace {

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

Matrix one_row(std::span<const double> x) { return Matrix(1, x.size(), Vector(x.begin(), x.end())); }

double openmax_score_logits(const OpenMaxModel& model, std::span<const double> logits) {
  const OpenMaxClass& c = model.classes[argmax(logits)];
  const double dist = distance(logits, c.mav, model.norm);
  return weibull_cdf(dist, c.weibull.shape, c.weibull.scale);
}

}  // namespace

OpenMaxModel fit_openmax(const Backbone& backbone, const Dataset& train, NormKind norm,
                         std::size_t tail) {
  if (tail < 2) throw ArgumentError("fit_openmax: tail must be >= 2");
  OpenMaxModel model;
  model.backbone = backbone;
  model.norm = norm;
  model.tail = tail;
  const Matrix logits = backbone.logits(train.features);
  const std::size_t classes = backbone.classes();
  const auto& names = train.schema.target().vocabulary;

  for (std::size_t c = 0; c < classes; ++c) {
    const std::string cname = c < names.size() ? names[c] : std::to_string(c);
    std::vector<std::size_t> correct;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
      if (static_cast<std::size_t>(train.labels[i]) == c && argmax(logits.row(i)) == c) {
        correct.push_back(i);
      }
    }
    if (correct.size() < tail) {
      throw DegenerateError("fit_openmax: class '" + cname + "' has " +
                            std::to_string(correct.size()) +
                            " correctly classified samples, tail needs " + std::to_string(tail));
    }
    OpenMaxClass oc;
    oc.mav.assign(classes, 0.0);
    for (auto i : correct)
      for (std::size_t j = 0; j < classes; ++j) oc.mav[j] += logits(i, j);
    for (double& v : oc.mav) v /= static_cast<double>(correct.size());

    Vector dist;
    dist.reserve(correct.size());
    for (auto i : correct) dist.push_back(distance(logits.row(i), oc.mav, norm));
    std::sort(dist.begin(), dist.end(), std::greater<>());
    dist.resize(tail);
    try {
      oc.weibull = fit_weibull(dist);
    } catch (const DegenerateError& e) {
      throw DegenerateError("fit_openmax: class '" + cname + "': " + e.what());
    }
    model.classes.push_back(std::move(oc));
  }
  return model;
}

double openmax_score(const OpenMaxModel& model, std::span<const double> x) {
  const Matrix logits = model.backbone.logits(one_row(x));
  return openmax_score_logits(model, logits.row(0));
}

Vector openmax_scores(const OpenMaxModel& model, const Matrix& x) {
  const Matrix logits = model.backbone.logits(x);
  Vector out(x.rows());
  const long n = static_cast<long>(x.rows());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) out[i] = openmax_score_logits(model, logits.row(i));
  return out;
}

double nll_at_temperature(const Matrix& logits, std::span<const double> labels,
                          double temperature) {
  if (!(temperature > 0.0)) throw ArgumentError("temperature must be > 0");
  Matrix scaled = logits;
  for (double& v : scaled.data()) v /= temperature;
  return mean_nll(scaled, labels);
}

TemperatureFit calibrate_temperature(const Matrix& logits, std::span<const double> labels) {
  if (logits.rows() == 0 || logits.rows() != labels.size()) {
    throw ArgumentError("calibrate_temperature: need equal, non-zero logit and label counts");
  }
  auto f = [&](double t) { return nll_at_temperature(logits, labels, t); };
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = kMinTemperature, b = kMaxTemperature;
  double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > 1e-4) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  TemperatureFit fit;
  fit.temperature = 0.5 * (a + b);
  fit.nll_calibrated = f(fit.temperature);
  fit.nll_uncalibrated = f(1.0);
  // The search tolerance can leave the bracket midpoint a hair worse than T = 1.
  if (fit.nll_uncalibrated < fit.nll_calibrated) {
    fit.temperature = 1.0;
    fit.nll_calibrated = fit.nll_uncalibrated;
  }
  return fit;
}

TemperatureModel fit_temperature(const Backbone& backbone, const Dataset& calibration) {
  if (calibration.task() != TaskKind::Classification) {
    throw ArgumentError("fit_temperature: calibration set needs class labels");
  }
  TemperatureModel m;
  m.backbone = backbone;
  m.fit = calibrate_temperature(backbone.logits(calibration.features), calibration.labels);
  return m;
}

double temp_score_logits(std::span<const double> logits, double temperature) {
  if (!(temperature > 0.0)) throw ArgumentError("temperature must be > 0");
  Vector scaled(logits.begin(), logits.end());
  for (double& v : scaled) v /= temperature;
  const Vector p = softmax(scaled);
  return -*std::max_element(p.begin(), p.end());
}

double temp_score(const TemperatureModel& model, std::span<const double> x) {
  const Matrix logits = model.backbone.logits(one_row(x));
  return temp_score_logits(logits.row(0), model.temperature());
}

Vector temp_scores(const TemperatureModel& model, const Matrix& x) {
  const Matrix logits = model.backbone.logits(x);
  Vector out(x.rows());
  const long n = static_cast<long>(x.rows());
  const double t = model.temperature();
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) out[i] = temp_score_logits(logits.row(i), t);
  return out;
}

std::string Histogram::to_csv() const {
  std::string out = "bin_lo,bin_hi,count\n";
  for (std::size_t i = 0; i < counts.size(); ++i) {
    out += format_double(lo[i]) + "," + format_double(hi[i]) + "," + std::to_string(counts[i]) + "\n";
  }
  return out;
}

Histogram score_histogram(std::span<const double> scores, std::size_t bins) {
  if (scores.empty()) throw ArgumentError("score_histogram: no scores");
  if (bins == 0) throw ArgumentError("score_histogram: bins must be >= 1");
  const auto [mn_it, mx_it] = std::minmax_element(scores.begin(), scores.end());
  const double mn = *mn_it, mx = *mx_it;
  const double width = (mx - mn) / static_cast<double>(bins);
  Histogram h;
  h.counts.assign(bins, 0);
  for (std::size_t b = 0; b < bins; ++b) {
    h.lo.push_back(mn + width * static_cast<double>(b));
    h.hi.push_back(b + 1 == bins ? mx : mn + width * static_cast<double>(b + 1));
  }
  for (double s : scores) {
    std::size_t b = 0;
    if (width > 0.0) {
      b = static_cast<std::size_t>(std::floor((s - mn) / width));
      b = std::min(b, bins - 1);
    }
    ++h.counts[b];
  }
  return h;
}

double score_quantile(std::span<const double> scores, double q) {
  if (scores.empty()) throw ArgumentError("score_quantile: no scores");
  if (!(q >= 0.0 && q <= 1.0)) throw ArgumentError("score_quantile: q must lie in [0, 1]");
  Vector s(scores.begin(), scores.end());
  std::sort(s.begin(), s.end());
  const double h = q * static_cast<double>(s.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (h - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

SplitPair split_by_threshold(const Dataset& ds, std::span<const double> scores, double threshold,
                             const SplitSettings& settings) {
  if (scores.size() != ds.n()) throw ArgumentError("split_by_threshold: one score per row required");
  SplitPair p;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    (scores[i] <= threshold ? p.in_rows : p.ood_rows).push_back(i);
  }
  if (p.in_rows.empty() || p.ood_rows.empty()) {
    warn("threshold " + format_double(threshold) + " lies outside the observed score range");
    throw ArgumentError(std::string("split_by_threshold: ") +
                        (p.ood_rows.empty() ? "D_ood" : "D_in") +
                        " would be empty; choose a different threshold");
  }
  p.d_in = ds.subset(p.in_rows);
  p.d_ood = ds.subset(p.ood_rows);
  p.threshold = threshold;
  p.detector = settings.detector;
  p.norm = settings.norm;
  p.seed = settings.seed;
  if (p.anomalous()) {
    warn("split: M = " + std::to_string(p.m()) + " <= N = " + std::to_string(p.n()) +
         " (expected more in-distribution rows)");
  }
  return p;
}

SplitReport validate_split(const SplitPair& pair, RngStream& rng) {
  if (pair.n() < 10) {
    throw ArgumentError("validate_split: D_ood has " + std::to_string(pair.n()) +
                        " rows, at least 10 are needed");
  }
  if (pair.m() < 2) throw ArgumentError("validate_split: D_in needs at least 2 rows");
  RngStream in_rng = rng.fork(1);
  RngStream ood_rng = rng.fork(2);
  const auto [in_train, in_test] = split(pair.d_in, 0.8, 0.2, in_rng);
  const auto [ood_train, ood_test] = split(pair.d_ood, 0.8, 0.2, ood_rng);

  SplitReport r;
  r.task = pair.d_in.task();
  r.m = pair.m();
  r.n = pair.n();
  r.threshold = pair.threshold;
  if (r.task == TaskKind::Classification) {
    r.metric = "accuracy";
    const Head probe = fit_logistic(in_train.features, in_train.labels, {},
                                    pair.d_in.schema.class_count());
    auto acc = [&](const Dataset& d) { return metric_accuracy(d.labels, predict(probe, d.features)); };
    r.id_train = acc(in_train);
    r.id_test = acc(in_test);
    r.ood_train = acc(ood_train);
    r.ood_test = acc(ood_test);
  } else {
    r.metric = "r2";
    const Head probe = fit_linear(in_train.features, in_train.labels);
    auto r2 = [&](const Dataset& d) { return metric_r2(d.labels, predict(probe, d.features)); };
    r.id_train = r2(in_train);
    r.id_test = r2(in_test);
    r.ood_train = r2(ood_train);
    r.ood_test = r2(ood_test);
  }
  return r;
}

json to_json(const SplitReport& r) {
  return {{"task", to_string(r.task)}, {"metric", r.metric},   {"id_train", r.id_train},
          {"id_test", r.id_test},      {"ood_train", r.ood_train}, {"ood_test", r.ood_test},
          {"m", r.m},                  {"n", r.n},               {"threshold", r.threshold},
          {"degradation", r.degradation()}};
}

const char* to_string(DetectorKind k) {
  return k == DetectorKind::OpenMax ? "openmax" : "temperature";
}

DetectorKind parse_detector(const std::string& s) {
  if (s == "openmax" || s == "O") return DetectorKind::OpenMax;
  if (s == "temperature" || s == "T") return DetectorKind::Temperature;
  throw ConfigError("unknown detector '" + s + "' (expected openmax or temperature)");
}

DetectorConfig detector_config_from_json(const json& j) {
  static const std::set<std::string> known = {
      "detector", "norm", "tail", "bins", "threshold", "quantile", "seed",
      "target_bins", "calibration_fraction", "backbone_learning_rate", "backbone_epochs"};
  DetectorConfig c;
  try {
    for (const auto& [key, _] : j.items()) {
      if (!known.contains(key)) throw ConfigError("detector config: unknown key '" + key + "'");
    }
    if (j.contains("detector")) c.detector = parse_detector(j["detector"].get<std::string>());
    if (j.contains("norm")) c.norm = parse_norm(j["norm"].get<std::string>());
    c.tail = j.value("tail", c.tail);
    c.bins = j.value("bins", c.bins);
    if (j.contains("threshold") && !j["threshold"].is_null()) c.threshold = j["threshold"].get<double>();
    c.quantile = j.value("quantile", c.quantile);
    c.seed = j.value("seed", c.seed);
    c.target_bins = j.value("target_bins", c.target_bins);
    c.calibration_fraction = j.value("calibration_fraction", c.calibration_fraction);
    c.backbone.learning_rate = j.value("backbone_learning_rate", c.backbone.learning_rate);
    c.backbone.epochs = j.value("backbone_epochs", c.backbone.epochs);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("detector config: ") + e.what());
  }
  if (!(c.quantile > 0.0 && c.quantile < 1.0)) throw ConfigError("detector config: quantile must lie in (0, 1)");
  if (!(c.calibration_fraction > 0.0 && c.calibration_fraction < 1.0)) {
    throw ConfigError("detector config: calibration_fraction must lie in (0, 1)");
  }
  return c;
}

json to_json(const DetectorConfig& c) {
  json j = {{"detector", to_string(c.detector)},
            {"norm", to_string(c.norm)},
            {"tail", c.tail},
            {"bins", c.bins},
            {"quantile", c.quantile},
            {"seed", c.seed},
            {"target_bins", c.target_bins},
            {"calibration_fraction", c.calibration_fraction},
            {"backbone_learning_rate", c.backbone.learning_rate},
            {"backbone_epochs", c.backbone.epochs}};
  j["threshold"] = c.threshold ? json(*c.threshold) : json(nullptr);
  return j;
}

Detection detect(const Dataset& ds, const DetectorConfig& config) {
  Dataset det = ds;
  if (ds.task() == TaskKind::Regression) {
    det.labels = discretize_target(ds.labels, config.target_bins);
    det.schema.task = TaskKind::Classification;
    auto& vocab = det.schema.columns[det.schema.target_index()].vocabulary;
    vocab.clear();
    const std::size_t width = std::to_string(config.target_bins - 1).size();
    for (std::size_t b = 0; b < config.target_bins; ++b) {
      std::string s = std::to_string(b);
      vocab.push_back("bin" + std::string(width - s.size(), '0') + s);
    }
  }
  RngStream rng(config.seed, 0xD37EC7);
  const SplitIndices parts =
      split_indices(det, 1.0 - config.calibration_fraction, config.calibration_fraction, rng);
  const Dataset fit_part = det.subset(parts.first);
  const Backbone backbone = train_backbone(fit_part, config.backbone);

  Detection out;
  out.detector = to_string(config.detector);
  if (config.detector == DetectorKind::OpenMax) {
    const OpenMaxModel model = fit_openmax(backbone, fit_part, config.norm, config.tail);
    out.scores = openmax_scores(model, ds.features);
  } else {
    const TemperatureModel model = fit_temperature(backbone, det.subset(parts.second));
    out.scores = temp_scores(model, ds.features);
  }
  out.histogram = score_histogram(out.scores, config.bins);
  out.threshold = config.threshold ? *config.threshold : score_quantile(out.scores, config.quantile);
  return out;
}

}  // namespace tcl
