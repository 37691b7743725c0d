#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tcl/data.hpp"
#include "tcl/engine.hpp"
#include "tcl/heads.hpp"
#include "tcl/ood.hpp"

namespace tcl {

// Speed/accuracy trade-off: P / t for classification, (1 / P) / t for
// regression (P is an error there).
double tradeoff(double p, double seconds, TaskKind task);

// Rounds to `digits` significant figures and prints the shortest form.
std::string display_sig(double x, int digits);

enum class FeatureSource { Tcl, Raw };

struct ExperimentPlan {
  std::filesystem::path dataset;
  SchemaOptions schema;
  CsvOptions csv;
  DetectorConfig detector;
  TclConfig tcl;
  std::optional<HeadKind> head;  // default: logistic / linear by task
  FeatureSource features = FeatureSource::Tcl;
  std::string model = "TCL";
  std::uint64_t seed = 0;
  std::optional<double> delta;  // declared OOD degradation budget
  std::filesystem::path out;
};

// Stage seeds default to the plan seed unless the stage block sets its own.
ExperimentPlan plan_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentPlan& p);

struct ConstraintRecord {
  double t_train = 0.0;
  double memory_bytes = 0.0;  // estimate, not measured
  std::size_t parameter_count = 0;
  double t_inference = 0.0;
  double degradation = 0.0;  // |P(D_in test) - P(D_ood)|
  std::optional<double> delta;
  std::optional<bool> within_delta;

  friend bool operator==(const ConstraintRecord&, const ConstraintRecord&) = default;
};

struct BenchReport {
  std::string model;
  std::string dataset;
  std::string split_id;
  TaskKind task = TaskKind::Classification;
  std::string metric;  // "f1_macro" or "rmse"
  double p = 0.0;      // on D_ood
  double p_id_test = 0.0;
  double t = 0.0;  // training wall clock, seconds
  double tradeoff = 0.0;
  std::string detector;
  std::string norm;
  double threshold = 0.0;
  std::size_t m = 0;
  std::size_t n = 0;
  // ID/OOD grid from the split validation probe
  std::string probe_metric;
  double id_train = 0.0, id_test = 0.0, ood_train = 0.0, ood_test = 0.0;
  std::size_t epochs = 0;
  std::string stop_reason;
  ConstraintRecord constraints;
  std::vector<std::pair<std::string, double>> stage_seconds;

  friend bool operator==(const BenchReport&, const BenchReport&) = default;
};

nlohmann::json to_json(const BenchReport& r);
BenchReport report_from_json(const nlohmann::json& j);

// ingest -> detect -> split -> validate -> train (timed) -> embed -> head ->
// evaluate. Every intermediate artifact is written under plan.out; a failing
// stage rethrows with the stage name prefixed.
BenchReport run_experiment(const ExperimentPlan& plan);

enum class ReportFormat { Json, Markdown, Csv };
ReportFormat parse_report_format(const std::string& s);

std::string render_report(const BenchReport& r, ReportFormat format);
void emit_report(const BenchReport& r, ReportFormat format, const std::filesystem::path& path);

// Orders by trade-off descending, then by better P, then by model name.
// Requires >= 2 reports over the same dataset and split.
std::vector<BenchReport> compare_models(std::vector<BenchReport> reports);
std::string render_comparison(const std::vector<BenchReport>& ranked);

}  // namespace tcl
