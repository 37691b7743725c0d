// One PASS/FAIL line per acceptance criterion. Exit status is the number of
// failed criteria (capped at 1 for ctest).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "synthetic.hpp"
#include "tcl/bench.hpp"
#include "tcl/engine.hpp"
#include "tcl/heads.hpp"
#include "tcl/log.hpp"
#include "tcl/metrics.hpp"
#include "tcl/numerics.hpp"
#include "tcl/ood.hpp"
#include "tcl/persist.hpp"
#include "tcl/weibull.hpp"

namespace fs = std::filesystem;
using namespace tcl;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

double run(int id, const char* title, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double s = std::chrono::duration<double>(Clock::now() - t0).count();
  const bool in_time = s < budget_s;
  const bool pass = o.pass && in_time;
  if (!pass) ++failures;
  std::printf("%s [%d] %s: %s (%.2f s, budget %.0f s%s)\n", pass ? "PASS" : "FAIL", id, title,
              o.detail.c_str(), s, budget_s, in_time ? "" : ", over budget");
  std::fflush(stdout);
  return s;
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// ---- 1 -------------------------------------------------------------------

Outcome tradeoff_cells() {
  struct Cell {
    const char* name;
    double p, t;
    TaskKind task;
    double printed, unit;
  };
  const Cell cells[] = {
      {"TCL/AD", 0.831, 15, TaskKind::Classification, 0.055, 0.001},
      {"FT-T/AD", 0.782, 1027, TaskKind::Classification, 0.00076, 0.00001},
      {"ResNet/JA", 0.574, 21, TaskKind::Classification, 0.027, 0.001},
      {"ResNet/CA", 0.892, 15, TaskKind::Regression, 0.075, 0.001},
      {"TCL/YE", 6.491, 240, TaskKind::Regression, 0.00064, 0.00001},
  };
  Outcome o{true, ""};
  for (const auto& c : cells) {
    const double t = tradeoff(c.p, c.t, c.task);
    const bool ok = std::abs(t - c.printed) <= c.unit;
    o.pass = o.pass && ok;
    o.detail += std::string(c.name) + "=" + display_sig(t, 2) + (ok ? " " : "(x) ");
  }
  return o;
}

// ---- 2 -------------------------------------------------------------------

Outcome gradient_suite() {
  RngStream rng(2024, 2);
  double worst = 0.0;
  std::size_t instances = 0;
  for (NoiseMode mode : {NoiseMode::Gaussian, NoiseMode::Mask}) {
    for (int rep = 0; rep < 10; ++rep) {
      TclConfig cfg;
      cfg.input_dim = 3 + rng.below(6);
      cfg.hidden = 4 + rng.below(13);
      cfg.latent = 2 + rng.below(7);
      cfg.noise = mode;
      cfg.temperature = 0.5 + rng.uniform();
      const std::size_t n = 2 + rng.below(7);
      const auto inst = testing::random_instance(cfg, n, rng);
      const Vector analytic = grad_on_views(inst.model, inst.views).grad.flatten();
      const Vector fd = testing::numeric_gradient(inst.model, inst.views, 1e-5);
      worst = std::max(worst, testing::max_relative_error(analytic, fd));
      ++instances;
    }
  }
  return {instances >= 20 && worst < 1e-4,
          std::to_string(instances) + " instances, max rel err " + fmt("%.2e", worst)};
}

// ---- 3 -------------------------------------------------------------------

Outcome loss_identities() {
  RngStream rng(99, 3);
  std::size_t bad_sum = 0, bad_temp = 0, negative = 0, bad_perm = 0;
  double worst_perm = 0.0;
  const std::size_t cases = 1000;
  for (std::size_t c = 0; c < cases; ++c) {
    TclConfig cfg;
    cfg.input_dim = 2 + rng.below(6);
    cfg.hidden = 3 + rng.below(8);
    cfg.latent = 2 + rng.below(5);
    cfg.noise = c % 2 ? NoiseMode::Mask : NoiseMode::Gaussian;
    cfg.temperature = 0.25 + 4.0 * rng.uniform();
    const std::size_t n = 2 + rng.below(10);
    TclModel model = TclModel::initialize(cfg, rng);
    Matrix batch(n, cfg.input_dim);
    for (auto& v : batch.data()) v = rng.normal();
    RngStream vr = rng.fork(c);
    const Views v = draw_views(batch, cfg, vr);
    const LossBreakdown l = loss_on_views(model, v);
    if (l.total != l.reconstruction + l.contrastive + l.distance) ++bad_sum;
    if (l.reconstruction < 0 || l.contrastive < 0 || l.distance < 0) ++negative;

    const Matrix e1 = encode(model, v.first), e2 = encode(model, v.second);
    const double unit = loss_contrastive(e1, e2, 1.0);
    if (loss_contrastive(e1, e2, cfg.temperature) != unit / cfg.temperature) ++bad_temp;

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    const Views pv{v.clean.select_rows(perm), v.first.select_rows(perm),
                   v.second.select_rows(perm)};
    const LossBreakdown lp = loss_on_views(model, pv);
    const double diff = std::abs(lp.total - l.total);
    worst_perm = std::max(worst_perm, diff);
    if (diff > 1e-12) ++bad_perm;
  }
  const bool ok = bad_sum == 0 && bad_temp == 0 && negative == 0 && bad_perm == 0;
  return {ok, std::to_string(cases) + " cases; sum mismatches " + std::to_string(bad_sum) +
                  ", 1/T mismatches " + std::to_string(bad_temp) + ", negative " +
                  std::to_string(negative) + ", max permutation diff " +
                  fmt("%.1e", worst_perm)};
}

// ---- 4 -------------------------------------------------------------------

Outcome ood_gate() {
  const auto s = testing::shifted_gaussian(10000, 4, 0.10, 4);
  const Dataset ds = testing::from_csv_text(s.csv);
  Outcome o{true, ""};
  for (DetectorKind kind : {DetectorKind::OpenMax, DetectorKind::Temperature}) {
    DetectorConfig cfg;
    cfg.detector = kind;
    cfg.quantile = 0.90;
    cfg.seed = 4;
    const Detection det = detect(ds, cfg);
    const double auroc = metric_auroc(det.scores, s.is_ood);
    const SplitPair pair =
        split_by_threshold(ds, det.scores, det.threshold, {det.detector, cfg.norm, cfg.seed});
    RngStream rng(4, 44);
    const SplitReport rep = validate_split(pair, rng);
    const bool ok = auroc > 0.9 && rep.degradation() >= 0.10;
    o.pass = o.pass && ok;
    o.detail += det.detector + " AUROC " + fmt("%.4f", auroc) + ", delta " +
                fmt("%.4f", rep.degradation()) + "; ";
  }
  return o;
}

// ---- 5 -------------------------------------------------------------------

Outcome weibull_oracle() {
  Outcome o{true, ""};
  RngStream rng(5, 5);
  for (auto [k, lambda] : {std::pair{2.0, 1.0}, std::pair{0.8, 3.0}}) {
    Vector xs(1000);
    for (auto& x : xs) x = lambda * std::pow(-std::log1p(-rng.uniform()), 1.0 / k);
    const WeibullFit f = fit_weibull(xs);
    const double ek = std::abs(f.shape - k) / k, el = std::abs(f.scale - lambda) / lambda;
    const bool ok = ek < 0.10 && el < 0.10;
    o.pass = o.pass && ok;
    o.detail += "k " + fmt("%.3f", f.shape) + "/" + fmt("%.1f", k) + " lambda " +
                fmt("%.3f", f.scale) + "/" + fmt("%.1f", lambda) + "; ";
  }
  return o;
}

// ---- 6 -------------------------------------------------------------------

Outcome temperature_oracle() {
  RngStream rng(6, 6);
  const std::size_t n = 5000, classes = 4;
  Matrix logits(n, classes);
  Vector labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    Vector z(classes);
    for (auto& v : z) v = 1.5 * rng.normal();
    const Vector p = softmax(z);
    double u = rng.uniform(), acc = 0.0;
    std::size_t y = classes - 1;
    for (std::size_t c = 0; c < classes; ++c) {
      acc += p[c];
      if (u < acc) {
        y = c;
        break;
      }
    }
    labels[i] = static_cast<double>(y);
    for (std::size_t c = 0; c < classes; ++c) logits(i, c) = 5.0 * std::log(p[c]);
  }
  const TemperatureFit f = calibrate_temperature(logits, labels);
  const bool ok = std::abs(f.temperature - 5.0) / 5.0 < 0.10 && f.nll_calibrated <= f.nll_uncalibrated;
  return {ok, "tau " + fmt("%.4f", f.temperature) + ", NLL " + fmt("%.4f", f.nll_uncalibrated) +
                  " -> " + fmt("%.4f", f.nll_calibrated)};
}

// ---- 7 & 8 -----------------------------------------------------------------

struct Representation {
  double raw_acc = 0.0, tcl_acc = 0.0;
  TrainTrace trace;
};

Representation representation_run() {
  const Dataset ds = testing::from_csv_text(testing::radial(4000, 2, 7));
  RngStream rng(7, 77);
  const auto [train, test] = split(ds, 0.8, 0.2, rng);
  Representation r;
  const Head raw = fit_logistic(train.features, train.labels, {}, 2);
  r.raw_acc = metric_accuracy(test.labels, predict(raw, test.features));

  TclConfig cfg;
  cfg.max_epochs = 15;
  cfg.seed = 7;
  auto [model, trace] = train_tcl(train.features, cfg);
  r.trace = std::move(trace);
  const Head head = fit_logistic(embed(model, train.features), train.labels, {}, 2);
  r.tcl_acc = metric_accuracy(test.labels, predict(head, embed(model, test.features)));
  return r;
}

// ---- 9 -------------------------------------------------------------------

Outcome determinism(const fs::path& work) {
  const auto s = testing::shifted_gaussian(2000, 4, 0.10, 9);
  const fs::path csv = work / "shifted.csv";
  write_text(s.csv, csv);
  auto plan_for = [&](const std::string& sub) {
    ExperimentPlan p = plan_from_json({{"dataset", csv.string()},
                                       {"target", "y"},
                                       {"overrides", {{"x0", "numeric"}, {"x1", "numeric"},
                                                      {"x2", "numeric"}, {"x3", "numeric"}}},
                                       {"detector", {{"quantile", 0.9}}},
                                       {"tcl", {{"max_epochs", 5}}},
                                       {"seed", 9}});
    p.out = work / sub;
    return p;
  };
  const BenchReport a = run_experiment(plan_for("a"));
  const BenchReport b = run_experiment(plan_for("b"));
  const SplitPair sa = load_split(work / "a" / "split"), sb = load_split(work / "b" / "split");
  const TclModel ma = load_model(work / "a" / "model.json"), mb = load_model(work / "b" / "model.json");
  const bool same_p = a.p == b.p && a.p_id_test == b.p_id_test;
  const bool same_split = sa.in_rows == sb.in_rows && sa.ood_rows == sb.ood_rows;
  const bool same_model = ma.params == mb.params;
  return {same_p && same_split && same_model,
          std::string("P ") + (same_p ? "identical" : "differs") + ", split " +
              (same_split ? "identical" : "differs") + ", parameters " +
              (same_model ? "bit-identical" : "differ") + " (P = " + fmt("%.4f", a.p) + ")"};
}

}  // namespace

int main() {
  set_warning_sink([](const std::string&) {});
  const fs::path work = fs::temp_directory_path() / "tcl-acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  double total = 0.0;
  total += run(1, "trade-off reference cells", 1, tradeoff_cells);
  total += run(2, "analytic vs finite-difference gradients", 30, gradient_suite);
  total += run(3, "loss identities", 10, loss_identities);
  total += run(4, "OOD gate on shifted Gaussian", 60, ood_gate);
  total += run(5, "Weibull MLE recovery", 5, weibull_oracle);
  total += run(6, "temperature calibration", 5, temperature_oracle);

  Representation rep;
  total += run(7, "TCL embeddings beat raw features", 120, [&] {
    rep = representation_run();
    return Outcome{rep.tcl_acc >= rep.raw_acc + 0.05,
                   "raw " + fmt("%.4f", rep.raw_acc) + ", TCL " + fmt("%.4f", rep.tcl_acc)};
  });
  run(8, "15-epoch loss at most half of epoch 1", 1, [&] {
    const auto& t = rep.trace.total;
    if (t.empty()) return Outcome{false, "no trace"};
    const double last = t.back();
    return Outcome{last <= 0.5 * t.front(),
                   "L_t " + fmt("%.5f", t.front()) + " -> " + fmt("%.5f", last) + " after " +
                       std::to_string(rep.trace.epochs) + " epochs (" +
                       to_string(rep.trace.stop) + ")"};
  });
  total += run(9, "pipeline determinism", 120, [&] { return determinism(work); });
  run(10, "whole suite under 5 minutes", 1, [&] {
    return Outcome{total < 300.0, fmt("%.1f s", total)};
  });

  fs::remove_all(work);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
