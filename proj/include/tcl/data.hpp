#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tcl/matrix.hpp"
#include "tcl/numerics.hpp"
#include "tcl/rng.hpp"

namespace tcl {

enum class ColumnKind { Numeric, Categorical, Target };
enum class TaskKind { Classification, Regression };

const char* to_string(ColumnKind k);
const char* to_string(TaskKind k);
TaskKind parse_task(const std::string& s);

// Cells treated as missing: "", "?", "NA", "NaN" (case-insensitive for the last two).
bool is_missing(std::string_view cell);

// Category used for missing categorical cells.
inline constexpr std::string_view kMissingCategory = "<missing>";

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::Numeric;
  // Sorted and duplicate-free. Categorical columns: feature categories.
  // Classification target: class names, label i <-> vocabulary[i].
  std::vector<std::string> vocabulary;

  friend bool operator==(const ColumnSpec&, const ColumnSpec&) = default;
};

struct Schema {
  std::vector<ColumnSpec> columns;  // raw column order, target included
  TaskKind task = TaskKind::Classification;

  std::size_t target_index() const;
  const ColumnSpec& target() const { return columns[target_index()]; }
  std::size_t class_count() const;
  std::size_t numeric_count() const;
  std::size_t categorical_count() const;
  // numeric columns + sum over categorical columns of (vocabulary + unknown slot)
  std::size_t encoded_width() const;
  std::vector<std::string> encoded_names() const;
  // Throws ArgumentError if any invariant is broken.
  void validate() const;

  friend bool operator==(const Schema&, const Schema&) = default;
};

struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

struct CsvOptions {
  char delimiter = ',';
};

// RFC-4180 style: quoted fields, doubled quotes, CRLF or LF. Ragged rows raise
// FormatError naming the 1-based line of the offending record.
RawTable parse_csv(std::string_view text, const CsvOptions& opts = {});
RawTable read_csv(const std::filesystem::path& path, const CsvOptions& opts = {});

struct SchemaOptions {
  std::string target;  // required
  std::size_t cardinality_cutoff = 20;
  // Forces a feature column to Numeric or Categorical.
  std::map<std::string, ColumnKind> overrides;
  std::optional<TaskKind> task;
};

Schema infer_schema(const RawTable& table, const SchemaOptions& opts);

struct ColumnStats {
  double mean = 0.0;
  double std = 1.0;
  double median = 0.0;

  friend bool operator==(const ColumnStats&, const ColumnStats&) = default;
};

// One entry per raw column; only numeric entries are meaningful.
struct FeatureStats {
  std::vector<ColumnStats> columns;

  friend bool operator==(const FeatureStats&, const FeatureStats&) = default;
};

FeatureStats fit_stats(const RawTable& table, const Schema& schema);

struct Dataset {
  Matrix features;  // n x d, encoded
  Vector labels;    // class index (classification) or real target
  Schema schema;
  FeatureStats stats;

  std::size_t n() const { return features.rows(); }
  std::size_t d() const { return features.cols(); }
  TaskKind task() const { return schema.task; }
  Dataset subset(std::span<const std::size_t> rows) const;
};

// Numeric columns: median imputation then z-score with `stats`; categorical
// columns: one-hot with a trailing unknown slot. Stats are fitted on `table`
// when not supplied.
Dataset encode_features(const RawTable& table, const Schema& schema,
                        const FeatureStats* stats = nullptr);

Dataset ingest_csv(const std::filesystem::path& path, const SchemaOptions& opts,
                   const std::optional<Schema>& schema = std::nullopt,
                   const CsvOptions& csv = {});

struct SplitIndices {
  std::vector<std::size_t> first;
  std::vector<std::size_t> second;
};

// Row permutation split, stratified by class for classification. Sizes follow
// round(first_fraction * n) exactly (largest-remainder allocation per class).
SplitIndices split_indices(const Dataset& ds, double first_fraction,
                           double second_fraction, RngStream& rng);
std::pair<Dataset, Dataset> split(const Dataset& ds, double first_fraction,
                                  double second_fraction, RngStream& rng);

struct SplitPair {
  Dataset d_in;
  Dataset d_ood;
  std::vector<std::size_t> in_rows;   // source row ids
  std::vector<std::size_t> ood_rows;
  double threshold = 0.0;
  std::string detector;
  NormKind norm = NormKind::L2;
  std::uint64_t seed = 0;

  std::size_t m() const { return d_in.n(); }
  std::size_t n() const { return d_ood.n(); }
  // The expected outcome is M > N; anything else is flagged, not rejected.
  bool anomalous() const { return m() <= n(); }
};

}  // namespace tcl
