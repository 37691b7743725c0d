#include "tcl/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "tcl/log.hpp"
#include "tcl/metrics.hpp"
#include "tcl/persist.hpp"

namespace tcl {

using nlohmann::json;

double tradeoff(double p, double seconds, TaskKind task) {
  if (!(seconds > 0.0)) throw ArgumentError("tradeoff: t must be > 0");
  if (task == TaskKind::Regression) {
    if (!(p > 0.0)) throw ArgumentError("tradeoff: regression P (RMSE) must be > 0");
    return (1.0 / p) / seconds;
  }
  return p / seconds;
}

std::string display_sig(double x, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, x);
  return buf;
}

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <class F>
auto stage(const char* name, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.kind(), std::string("stage ") + name + ": " + e.what());
  }
}

std::string fingerprint(const std::string& dataset, const SplitPair& pair) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  };
  for (unsigned char c : dataset) mix(c);
  for (auto r : pair.in_rows) mix(r);
  mix(~0ULL);
  for (auto r : pair.ood_rows) mix(r);
  std::ostringstream ss;
  ss << std::hex << h;
  return ss.str();
}

double task_metric(TaskKind task, std::span<const double> truth, std::span<const double> pred) {
  return task == TaskKind::Classification ? metric_f1_macro(truth, pred) : metric_rmse(truth, pred);
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

ExperimentPlan plan_from_json(const json& j) {
  static const std::vector<std::string> known = {
      "dataset", "target", "delimiter", "cardinality_cutoff", "overrides", "task", "detector",
      "tcl", "head", "features", "model", "seed", "delta", "out"};
  ExperimentPlan p;
  try {
    for (const auto& [key, _] : j.items()) {
      if (std::find(known.begin(), known.end(), key) == known.end()) {
        throw ConfigError("plan: unknown key '" + key + "'");
      }
    }
    p.seed = j.value("seed", p.seed);
    p.dataset = j.value("dataset", std::string());
    p.schema.target = j.value("target", std::string());
    p.schema.cardinality_cutoff = j.value("cardinality_cutoff", p.schema.cardinality_cutoff);
    if (j.contains("overrides")) {
      for (const auto& [col, kind] : j["overrides"].items()) {
        const auto k = kind.get<std::string>();
        if (k == "numeric") p.schema.overrides[col] = ColumnKind::Numeric;
        else if (k == "categorical") p.schema.overrides[col] = ColumnKind::Categorical;
        else throw ConfigError("plan: override kind must be numeric or categorical");
      }
    }
    if (j.contains("task")) p.schema.task = parse_task(j["task"].get<std::string>());
    const std::string delim = j.value("delimiter", std::string(","));
    if (delim.size() != 1) throw ConfigError("plan: delimiter must be a single character");
    p.csv.delimiter = delim[0];

    json det = j.value("detector", json::object());
    if (!det.contains("seed")) det["seed"] = p.seed;
    p.detector = detector_config_from_json(det);
    json tc = j.value("tcl", json::object());
    if (!tc.contains("seed")) tc["seed"] = p.seed;
    p.tcl = tcl_config_from_json(tc);

    if (j.contains("head") && !j["head"].is_null()) p.head = parse_head_kind(j["head"].get<std::string>());
    const std::string features = j.value("features", std::string("tcl"));
    if (features == "tcl") p.features = FeatureSource::Tcl;
    else if (features == "raw") p.features = FeatureSource::Raw;
    else throw ConfigError("plan: features must be tcl or raw");
    p.model = j.value("model", p.features == FeatureSource::Tcl ? std::string("TCL") : std::string("raw"));
    if (j.contains("delta") && !j["delta"].is_null()) p.delta = j["delta"].get<double>();
    p.out = j.value("out", std::string());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("plan: ") + e.what());
  }
  return p;
}

json to_json(const ExperimentPlan& p) {
  json overrides = json::object();
  for (const auto& [col, kind] : p.schema.overrides) overrides[col] = to_string(kind);
  json j = {{"dataset", p.dataset.string()},
            {"target", p.schema.target},
            {"delimiter", std::string(1, p.csv.delimiter)},
            {"cardinality_cutoff", p.schema.cardinality_cutoff},
            {"overrides", overrides},
            {"detector", to_json(p.detector)},
            {"tcl", to_json(p.tcl)},
            {"features", p.features == FeatureSource::Tcl ? "tcl" : "raw"},
            {"model", p.model},
            {"seed", p.seed},
            {"delta", optional_json(p.delta)},
            {"out", p.out.string()}};
  if (p.schema.task) j["task"] = to_string(*p.schema.task);
  j["head"] = p.head ? json(to_string(*p.head)) : json(nullptr);
  return j;
}

json to_json(const BenchReport& r) {
  json stages = json::array();
  for (const auto& [name, s] : r.stage_seconds) stages.push_back({{"stage", name}, {"seconds", s}});
  const auto& c = r.constraints;
  return {{"model", r.model},
          {"dataset", r.dataset},
          {"split_id", r.split_id},
          {"task", to_string(r.task)},
          {"metric", r.metric},
          {"p", r.p},
          {"p_id_test", r.p_id_test},
          {"t", r.t},
          {"tradeoff", r.tradeoff},
          {"detector", r.detector},
          {"norm", r.norm},
          {"threshold", r.threshold},
          {"m", r.m},
          {"n", r.n},
          {"probe",
           {{"metric", r.probe_metric},
            {"id_train", r.id_train},
            {"id_test", r.id_test},
            {"ood_train", r.ood_train},
            {"ood_test", r.ood_test}}},
          {"epochs", r.epochs},
          {"stop_reason", r.stop_reason},
          {"constraints",
           {{"t_train", c.t_train},
            {"memory_bytes", c.memory_bytes},
            {"parameter_count", c.parameter_count},
            {"t_inference", c.t_inference},
            {"degradation", c.degradation},
            {"delta", optional_json(c.delta)},
            {"within_delta", c.within_delta ? json(*c.within_delta) : json(nullptr)}}},
          {"stage_seconds", stages}};
}

BenchReport report_from_json(const json& j) {
  try {
    BenchReport r;
    r.model = j.at("model").get<std::string>();
    r.dataset = j.at("dataset").get<std::string>();
    r.split_id = j.at("split_id").get<std::string>();
    r.task = parse_task(j.at("task").get<std::string>());
    r.metric = j.at("metric").get<std::string>();
    r.p = j.at("p").get<double>();
    r.p_id_test = j.at("p_id_test").get<double>();
    r.t = j.at("t").get<double>();
    r.tradeoff = j.at("tradeoff").get<double>();
    r.detector = j.at("detector").get<std::string>();
    r.norm = j.at("norm").get<std::string>();
    r.threshold = j.at("threshold").get<double>();
    r.m = j.at("m").get<std::size_t>();
    r.n = j.at("n").get<std::size_t>();
    const auto& pr = j.at("probe");
    r.probe_metric = pr.at("metric").get<std::string>();
    r.id_train = pr.at("id_train").get<double>();
    r.id_test = pr.at("id_test").get<double>();
    r.ood_train = pr.at("ood_train").get<double>();
    r.ood_test = pr.at("ood_test").get<double>();
    r.epochs = j.at("epochs").get<std::size_t>();
    r.stop_reason = j.at("stop_reason").get<std::string>();
    const auto& c = j.at("constraints");
    r.constraints.t_train = c.at("t_train").get<double>();
    r.constraints.memory_bytes = c.at("memory_bytes").get<double>();
    r.constraints.parameter_count = c.at("parameter_count").get<std::size_t>();
    r.constraints.t_inference = c.at("t_inference").get<double>();
    r.constraints.degradation = c.at("degradation").get<double>();
    if (!c.at("delta").is_null()) r.constraints.delta = c.at("delta").get<double>();
    if (!c.at("within_delta").is_null()) r.constraints.within_delta = c.at("within_delta").get<bool>();
    for (const auto& s : j.at("stage_seconds")) {
      r.stage_seconds.emplace_back(s.at("stage").get<std::string>(), s.at("seconds").get<double>());
    }
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("report: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("report: ") + e.what());
  }
}

BenchReport run_experiment(const ExperimentPlan& plan) {
  if (plan.out.empty()) throw ConfigError("plan: output directory not set");
  std::filesystem::create_directories(plan.out);
  write_json(to_json(plan), plan.out / "plan.json");

  BenchReport r;
  r.model = plan.model;
  r.dataset = plan.dataset.filename().string();
  auto timed = [&](const char* name, auto&& f) {
    const auto t0 = Clock::now();
    auto result = stage(name, f);
    r.stage_seconds.emplace_back(name, since(t0));
    return result;
  };

  const Dataset ds = timed("ingest", [&] {
    Dataset d = ingest_csv(plan.dataset, plan.schema, std::nullopt, plan.csv);
    save_dataset(d, plan.out / "dataset");
    return d;
  });
  r.task = ds.task();
  r.metric = r.task == TaskKind::Classification ? "f1_macro" : "rmse";

  const Detection det = timed("detect", [&] {
    Detection d = detect(ds, plan.detector);
    std::string scores = "row_id,score\n";
    for (std::size_t i = 0; i < d.scores.size(); ++i) {
      scores += std::to_string(i) + "," + format_double(d.scores[i]) + "\n";
    }
    write_text(scores, plan.out / "scores.csv");
    write_text(d.histogram.to_csv(), plan.out / "histogram.csv");
    return d;
  });

  const SplitPair pair = timed("split", [&] {
    SplitSettings settings{det.detector, plan.detector.norm, plan.seed};
    SplitPair p = split_by_threshold(ds, det.scores, det.threshold, settings);
    save_split(p, plan.out / "split");
    return p;
  });
  r.detector = pair.detector;
  r.norm = to_string(pair.norm);
  r.threshold = pair.threshold;
  r.m = pair.m();
  r.n = pair.n();
  r.split_id = fingerprint(r.dataset, pair);

  const RngStream root(plan.seed, 0xBE7C);
  const SplitReport probe = timed("validate", [&] {
    RngStream rng = root.fork(1);
    SplitReport v = validate_split(pair, rng);
    write_json(to_json(v), plan.out / "validation.json");
    return v;
  });
  r.probe_metric = probe.metric;
  r.id_train = probe.id_train;
  r.id_test = probe.id_test;
  r.ood_train = probe.ood_train;
  r.ood_test = probe.ood_test;

  const auto [in_train, in_test] = stage("partition", [&] {
    RngStream rng = root.fork(2);
    return split(pair.d_in, 0.8, 0.2, rng);
  });

  const HeadKind head_kind = plan.head.value_or(
      r.task == TaskKind::Classification ? HeadKind::Logistic : HeadKind::Linear);
  if (head_kind == HeadKind::Logistic && r.task != TaskKind::Classification) {
    throw ConfigError("plan: logistic head needs a classification target");
  }
  auto fit_head = [&](const Matrix& x) {
    return head_kind == HeadKind::Logistic
               ? fit_logistic(x, in_train.labels, {}, ds.schema.class_count())
               : fit_linear(x, in_train.labels);
  };

  std::size_t param_count = 0;
  double batch_bytes = 0.0;
  Head head;
  std::optional<TclModel> model;
  if (plan.features == FeatureSource::Tcl) {
    auto [m, trace] = timed("train", [&] { return train_tcl(in_train.features, plan.tcl); });
    save_model(m, plan.out / "model.json");
    write_json(to_json(trace), plan.out / "trace.json");
    r.t = trace.seconds;
    r.epochs = trace.epochs;
    r.stop_reason = to_string(trace.stop);
    param_count += m.params.count();
    const auto& c = m.config;
    const double rows = static_cast<double>(std::min(c.batch_size, in_train.n()));
    // both views: input, 5 hidden-width buffers, latent, reconstruction
    batch_bytes = 2.0 * rows * static_cast<double>(2 * c.input_dim + 5 * c.hidden + c.latent) * 8.0;
    model = std::move(m);
    const Matrix train_x = timed("embed", [&] { return embed(*model, in_train.features); });
    head = timed("head", [&] { return fit_head(train_x); });
  } else {
    const auto t0 = Clock::now();
    head = timed("head", [&] { return fit_head(in_train.features); });
    r.t = since(t0);
    r.stop_reason = "n/a";
  }
  param_count += head.weights.size() + head.bias.size();

  auto features_of = [&](const Matrix& x) { return model ? embed(*model, x) : x; };
  const auto t_inf = Clock::now();
  const Vector ood_pred = stage("evaluate", [&] { return predict(head, features_of(pair.d_ood.features)); });
  const double t_inference = since(t_inf);
  timed("evaluate", [&] {
    r.p = task_metric(r.task, pair.d_ood.labels, ood_pred);
    r.p_id_test = task_metric(r.task, in_test.labels, predict(head, features_of(in_test.features)));
    return 0;
  });
  r.tradeoff = tradeoff(r.p, r.t, r.task);

  auto& c = r.constraints;
  c.t_train = r.t;
  c.parameter_count = param_count;
  c.memory_bytes = static_cast<double>(param_count) * 8.0 + batch_bytes;
  c.t_inference = t_inference;
  c.degradation = std::abs(r.p_id_test - r.p);
  c.delta = plan.delta;
  if (plan.delta) c.within_delta = c.degradation <= *plan.delta;

  write_json(to_json(head), plan.out / "head.json");
  emit_report(r, ReportFormat::Json, plan.out / "report.json");
  emit_report(r, ReportFormat::Markdown, plan.out / "report.md");
  emit_report(r, ReportFormat::Csv, plan.out / "report.csv");
  return r;
}

ReportFormat parse_report_format(const std::string& s) {
  if (s == "json") return ReportFormat::Json;
  if (s == "markdown" || s == "md") return ReportFormat::Markdown;
  if (s == "csv") return ReportFormat::Csv;
  throw ConfigError("unknown report format '" + s + "' (expected json, markdown or csv)");
}

std::string render_report(const BenchReport& r, ReportFormat format) {
  if (format == ReportFormat::Json) return to_json(r).dump(2) + "\n";
  auto d4 = [](double x) { return display_sig(x, 4); };
  if (format == ReportFormat::Csv) {
    std::string out = "field,value,display\n";
    auto row = [&](const std::string& k, double v, const std::string& disp) {
      out += k + "," + format_double(v) + "," + disp + "\n";
    };
    row("p", r.p, d4(r.p));
    row("p_id_test", r.p_id_test, d4(r.p_id_test));
    row("t", r.t, d4(r.t));
    row("tradeoff", r.tradeoff, display_sig(r.tradeoff, 2));
    row("threshold", r.threshold, d4(r.threshold));
    row("m", static_cast<double>(r.m), std::to_string(r.m));
    row("n", static_cast<double>(r.n), std::to_string(r.n));
    row("id_train", r.id_train, d4(r.id_train));
    row("id_test", r.id_test, d4(r.id_test));
    row("ood_train", r.ood_train, d4(r.ood_train));
    row("ood_test", r.ood_test, d4(r.ood_test));
    row("memory_bytes", r.constraints.memory_bytes, d4(r.constraints.memory_bytes));
    row("parameter_count", static_cast<double>(r.constraints.parameter_count),
        std::to_string(r.constraints.parameter_count));
    row("t_inference", r.constraints.t_inference, d4(r.constraints.t_inference));
    row("degradation", r.constraints.degradation, d4(r.constraints.degradation));
    return out;
  }

  std::ostringstream md;
  md << "# " << r.model << " on " << r.dataset << "\n\n";
  md << "## OOD split (" << r.probe_metric << ")\n\n";
  md << "| Dataset | Det | Norm | Threshold | M | N | ID train | ID test | OOD train | OOD test |\n";
  md << "|---|---|---|---|---|---|---|---|---|---|\n";
  md << "| " << r.dataset << " | " << r.detector << " | " << r.norm << " | " << d4(r.threshold)
     << " | " << r.m << " | " << r.n << " | " << d4(r.id_train) << " | " << d4(r.id_test) << " | "
     << d4(r.ood_train) << " | " << d4(r.ood_test) << " |\n\n";
  md << "## Performance\n\n";
  md << "| Model | Metric | P (D_ood) | P (D_in test) | t (s) | T |\n";
  md << "|---|---|---|---|---|---|\n";
  md << "| " << r.model << " | " << r.metric << " | " << d4(r.p) << " | " << d4(r.p_id_test)
     << " | " << d4(r.t) << " | " << display_sig(r.tradeoff, 2) << " |\n\n";
  const auto& c = r.constraints;
  md << "## Constraints\n\n";
  md << "| t_train (s) | memory (bytes, est.) | parameters | t_inference (s) | degradation | delta |\n";
  md << "|---|---|---|---|---|---|\n";
  md << "| " << d4(c.t_train) << " | " << d4(c.memory_bytes) << " | " << c.parameter_count << " | "
     << d4(c.t_inference) << " | " << d4(c.degradation) << " | "
     << (c.delta ? d4(*c.delta) + (*c.within_delta ? " (met)" : " (exceeded)") : std::string("-"))
     << " |\n\n";
  md << "## Stage times\n\n";
  md << "| Stage | Seconds |\n|---|---|\n";
  for (const auto& [name, s] : r.stage_seconds) md << "| " << name << " | " << d4(s) << " |\n";
  return md.str();
}

void emit_report(const BenchReport& r, ReportFormat format, const std::filesystem::path& path) {
  write_text(render_report(r, format), path);
}

std::vector<BenchReport> compare_models(std::vector<BenchReport> reports) {
  if (reports.size() < 2) throw ArgumentError("compare_models: need at least 2 reports");
  for (const auto& r : reports) {
    if (r.dataset != reports[0].dataset || r.split_id != reports[0].split_id ||
        r.task != reports[0].task) {
      throw ArgumentError("compare_models: reports '" + r.model + "' and '" + reports[0].model +
                          "' use different datasets or splits");
    }
  }
  const bool higher_better = reports[0].task == TaskKind::Classification;
  std::stable_sort(reports.begin(), reports.end(), [&](const BenchReport& a, const BenchReport& b) {
    if (a.tradeoff != b.tradeoff) return a.tradeoff > b.tradeoff;
    if (a.p != b.p) return higher_better ? a.p > b.p : a.p < b.p;
    return a.model < b.model;
  });
  return reports;
}

std::string render_comparison(const std::vector<BenchReport>& ranked) {
  std::ostringstream md;
  md << "| Rank | Model | P | t (s) | T |\n|---|---|---|---|---|\n";
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    const auto& r = ranked[i];
    md << "| " << i + 1 << " | " << r.model << " | " << display_sig(r.p, 4) << " | "
       << display_sig(r.t, 4) << " | " << display_sig(r.tradeoff, 2) << " |\n";
  }
  return md.str();
}

}  // namespace tcl
