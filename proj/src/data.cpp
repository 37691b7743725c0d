#include "tcl/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <set>

#include "tcl/log.hpp"

namespace tcl {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}

std::string category_of(std::string_view cell) {
  return is_missing(cell) ? std::string(kMissingCategory) : std::string(trim(cell));
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string cell_error(const RawTable& t, std::size_t row, std::size_t col,
                       const std::string& what) {
  return "row " + std::to_string(row + 1) + ", column '" + t.header[col] + "': " + what;
}

}  // namespace

const char* to_string(ColumnKind k) {
  switch (k) {
    case ColumnKind::Numeric: return "numeric";
    case ColumnKind::Categorical: return "categorical";
    case ColumnKind::Target: return "target";
  }
  return "?";
}

const char* to_string(TaskKind k) {
  return k == TaskKind::Classification ? "classification" : "regression";
}

TaskKind parse_task(const std::string& s) {
  if (s == "classification") return TaskKind::Classification;
  if (s == "regression") return TaskKind::Regression;
  throw ConfigError("unknown task kind '" + s + "'");
}

bool is_missing(std::string_view cell) {
  cell = trim(cell);
  return cell.empty() || cell == "?" || iequals(cell, "na") || iequals(cell, "nan");
}

std::size_t Schema::target_index() const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i].kind == ColumnKind::Target) return i;
  }
  throw ConfigError("schema has no target column");
}

std::size_t Schema::class_count() const {
  return task == TaskKind::Classification ? target().vocabulary.size() : 0;
}

std::size_t Schema::numeric_count() const {
  return std::count_if(columns.begin(), columns.end(),
                       [](const ColumnSpec& c) { return c.kind == ColumnKind::Numeric; });
}

std::size_t Schema::categorical_count() const {
  return std::count_if(columns.begin(), columns.end(), [](const ColumnSpec& c) {
    return c.kind == ColumnKind::Categorical;
  });
}

std::size_t Schema::encoded_width() const {
  std::size_t w = 0;
  for (const auto& c : columns) {
    if (c.kind == ColumnKind::Numeric) w += 1;
    if (c.kind == ColumnKind::Categorical) w += c.vocabulary.size() + 1;
  }
  return w;
}

std::vector<std::string> Schema::encoded_names() const {
  std::vector<std::string> names;
  for (const auto& c : columns) {
    if (c.kind == ColumnKind::Numeric) names.push_back(c.name);
    if (c.kind == ColumnKind::Categorical) {
      for (const auto& v : c.vocabulary) names.push_back(c.name + "=" + v);
      names.push_back(c.name + "=<unknown>");
    }
  }
  return names;
}

void Schema::validate() const {
  std::size_t targets = 0;
  for (const auto& c : columns) {
    if (c.kind == ColumnKind::Target) ++targets;
    if (c.kind == ColumnKind::Numeric && !c.vocabulary.empty()) {
      throw ArgumentError("schema: numeric column '" + c.name + "' has a vocabulary");
    }
    if (!std::is_sorted(c.vocabulary.begin(), c.vocabulary.end()) ||
        std::adjacent_find(c.vocabulary.begin(), c.vocabulary.end()) != c.vocabulary.end()) {
      throw ArgumentError("schema: vocabulary of '" + c.name + "' is not sorted/unique");
    }
  }
  if (targets != 1) throw ArgumentError("schema: expected exactly one target column");
  if (task == TaskKind::Classification && target().vocabulary.size() < 1) {
    throw ArgumentError("schema: classification target without classes");
  }
}

Schema infer_schema(const RawTable& table, const SchemaOptions& opts) {
  if (opts.target.empty()) throw ConfigError("no target column designated");
  if (table.rows.empty()) throw FormatError("csv has a header but no data rows");
  const auto tgt_it = std::find(table.header.begin(), table.header.end(), opts.target);
  if (tgt_it == table.header.end()) {
    throw ConfigError("target column '" + opts.target + "' not found in header");
  }
  for (const auto& [name, kind] : opts.overrides) {
    if (std::find(table.header.begin(), table.header.end(), name) == table.header.end()) {
      throw ConfigError("override for unknown column '" + name + "'");
    }
    if (kind == ColumnKind::Target) throw ConfigError("use SchemaOptions::target for the target");
  }
  const std::size_t target_col = tgt_it - table.header.begin();

  Schema s;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    bool all_numeric = true;
    bool any_missing = false;
    std::set<std::string> distinct;
    for (const auto& row : table.rows) {
      if (is_missing(row[c])) {
        any_missing = true;
        continue;
      }
      const auto v = trim(row[c]);
      distinct.emplace(v);
      if (all_numeric && !parse_number(v)) all_numeric = false;
    }
    const bool numeric_like = all_numeric && distinct.size() > opts.cardinality_cutoff;

    ColumnSpec col;
    col.name = table.header[c];
    if (c == target_col) {
      col.kind = ColumnKind::Target;
      s.task = opts.task.value_or(numeric_like ? TaskKind::Regression
                                               : TaskKind::Classification);
      if (any_missing) throw FormatError("target column '" + col.name + "' has missing values");
      if (s.task == TaskKind::Regression) {
        if (!all_numeric) throw FormatError("regression target '" + col.name + "' is not numeric");
      } else {
        col.vocabulary.assign(distinct.begin(), distinct.end());
      }
    } else {
      auto ov = opts.overrides.find(col.name);
      col.kind = ov != opts.overrides.end()
                     ? ov->second
                     : (numeric_like ? ColumnKind::Numeric : ColumnKind::Categorical);
      if (col.kind == ColumnKind::Numeric && !all_numeric) {
        throw FormatError("column '" + col.name + "' forced numeric but has unparseable cells");
      }
      if (col.kind == ColumnKind::Categorical) {
        if (any_missing) distinct.emplace(kMissingCategory);
        col.vocabulary.assign(distinct.begin(), distinct.end());
      }
    }
    s.columns.push_back(std::move(col));
  }
  s.validate();
  return s;
}

FeatureStats fit_stats(const RawTable& table, const Schema& schema) {
  if (schema.columns.size() != table.header.size()) {
    throw ArgumentError("fit_stats: schema arity does not match table");
  }
  FeatureStats st;
  st.columns.resize(schema.columns.size());
  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    if (schema.columns[c].kind != ColumnKind::Numeric) continue;
    std::vector<double> present;
    std::size_t missing = 0;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      const auto& cell = table.rows[r][c];
      if (is_missing(cell)) {
        ++missing;
        continue;
      }
      const auto v = parse_number(cell);
      if (!v) throw FormatError(cell_error(table, r, c, "unparseable numeric '" + cell + "'"));
      present.push_back(*v);
    }
    ColumnStats& cs = st.columns[c];
    if (present.empty()) {
      warn("column '" + schema.columns[c].name + "' is entirely missing; encoded as 0");
      cs = ColumnStats{};
      continue;
    }
    cs.median = median_of(present);
    const double n = static_cast<double>(present.size() + missing);
    double sum = 0.0;
    for (double v : present) sum += v;
    sum += cs.median * static_cast<double>(missing);
    cs.mean = sum / n;
    double ss = 0.0;
    for (double v : present) ss += (v - cs.mean) * (v - cs.mean);
    ss += static_cast<double>(missing) * (cs.median - cs.mean) * (cs.median - cs.mean);
    const double sd = std::sqrt(ss / n);
    // constant column
    cs.std = sd > 1e-12 * std::max(1.0, std::abs(cs.mean)) ? sd : 1.0;
  }
  return st;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.features = features.select_rows(rows);
  out.labels.reserve(rows.size());
  for (auto r : rows) out.labels.push_back(labels[r]);
  out.schema = schema;
  out.stats = stats;
  return out;
}

Dataset encode_features(const RawTable& table, const Schema& schema,
                        const FeatureStats* stats) {
  schema.validate();
  if (schema.columns.size() != table.header.size()) {
    throw ArgumentError("encode_features: schema arity does not match table");
  }
  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    if (schema.columns[c].name != table.header[c]) {
      throw ArgumentError("encode_features: column " + std::to_string(c) + " is '" +
                          table.header[c] + "', schema expects '" + schema.columns[c].name + "'");
    }
  }
  Dataset ds;
  ds.schema = schema;
  ds.stats = stats ? *stats : fit_stats(table, schema);
  if (ds.stats.columns.size() != schema.columns.size()) {
    throw ArgumentError("encode_features: stats do not match schema");
  }
  const std::size_t n = table.rows.size();
  const std::size_t d = schema.encoded_width();
  ds.features = Matrix(n, d);
  ds.labels.assign(n, 0.0);
  const std::size_t tcol = schema.target_index();

  for (std::size_t r = 0; r < n; ++r) {
    const auto& row = table.rows[r];
    std::size_t j = 0;
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
      const ColumnSpec& spec = schema.columns[c];
      if (spec.kind == ColumnKind::Numeric) {
        const ColumnStats& cs = ds.stats.columns[c];
        double v = cs.median;
        if (!is_missing(row[c])) {
          const auto p = parse_number(row[c]);
          if (!p) throw FormatError(cell_error(table, r, c, "unparseable numeric '" + row[c] + "'"));
          v = *p;
        }
        ds.features(r, j++) = (v - cs.mean) / cs.std;
      } else if (spec.kind == ColumnKind::Categorical) {
        const std::string cat = category_of(row[c]);
        const auto it = std::lower_bound(spec.vocabulary.begin(), spec.vocabulary.end(), cat);
        const std::size_t slot = (it != spec.vocabulary.end() && *it == cat)
                                     ? static_cast<std::size_t>(it - spec.vocabulary.begin())
                                     : spec.vocabulary.size();
        ds.features(r, j + slot) = 1.0;
        j += spec.vocabulary.size() + 1;
      }
    }
    const auto& cell = row[tcol];
    if (schema.task == TaskKind::Regression) {
      const auto p = parse_number(cell);
      if (!p) throw FormatError(cell_error(table, r, tcol, "unparseable target '" + cell + "'"));
      ds.labels[r] = *p;
    } else {
      const auto& vocab = schema.columns[tcol].vocabulary;
      const std::string v(trim(cell));
      const auto it = std::lower_bound(vocab.begin(), vocab.end(), v);
      if (it == vocab.end() || *it != v) {
        throw FormatError(cell_error(table, r, tcol, "unknown class '" + v + "'"));
      }
      ds.labels[r] = static_cast<double>(it - vocab.begin());
    }
  }
  return ds;
}

Dataset ingest_csv(const std::filesystem::path& path, const SchemaOptions& opts,
                   const std::optional<Schema>& schema, const CsvOptions& csv) {
  const RawTable table = read_csv(path, csv);
  const Schema s = schema ? *schema : infer_schema(table, opts);
  return encode_features(table, s);
}

namespace {

void shuffle(std::vector<std::size_t>& v, RngStream& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace

SplitIndices split_indices(const Dataset& ds, double first_fraction, double second_fraction,
                           RngStream& rng) {
  if (!(first_fraction > 0.0) || !(second_fraction > 0.0) ||
      std::abs(first_fraction + second_fraction - 1.0) > 1e-9) {
    throw ArgumentError("split: fractions must be positive and sum to 1");
  }
  const std::size_t n = ds.n();
  if (n < 2) throw ArgumentError("split: need at least 2 rows");
  const std::size_t total = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(first_fraction * static_cast<double>(n))), 1, n - 1);

  std::vector<std::vector<std::size_t>> groups;
  if (ds.task() == TaskKind::Classification) {
    const std::size_t classes = std::max<std::size_t>(ds.schema.class_count(), 1);
    groups.resize(classes);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(ds.labels[i]);
      if (c >= groups.size()) groups.resize(c + 1);
      groups[c].push_back(i);
    }
    std::erase_if(groups, [](const auto& g) { return g.empty(); });
    const bool too_small = std::any_of(groups.begin(), groups.end(),
                                       [](const auto& g) { return g.size() < 2; });
    if (too_small) {
      warn("split: a class has fewer rows than splits; falling back to unstratified split");
      groups.clear();
    }
  }
  if (groups.empty()) {
    groups.emplace_back(n);
    std::iota(groups[0].begin(), groups[0].end(), std::size_t{0});
  }

  // Largest-remainder allocation of `total` across groups.
  std::vector<std::size_t> quota(groups.size());
  std::vector<std::pair<double, std::size_t>> remainder;
  std::size_t assigned = 0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const double exact = first_fraction * static_cast<double>(groups[g].size());
    quota[g] = static_cast<std::size_t>(std::floor(exact));
    assigned += quota[g];
    remainder.emplace_back(exact - static_cast<double>(quota[g]), g);
  }
  std::stable_sort(remainder.begin(), remainder.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < total && i < remainder.size(); ++i) {
    const std::size_t g = remainder[i].second;
    if (quota[g] < groups[g].size()) {
      ++quota[g];
      ++assigned;
    }
  }

  SplitIndices out;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    shuffle(groups[g], rng);
    out.first.insert(out.first.end(), groups[g].begin(), groups[g].begin() + quota[g]);
    out.second.insert(out.second.end(), groups[g].begin() + quota[g], groups[g].end());
  }
  std::sort(out.first.begin(), out.first.end());
  std::sort(out.second.begin(), out.second.end());
  return out;
}

std::pair<Dataset, Dataset> split(const Dataset& ds, double first_fraction,
                                  double second_fraction, RngStream& rng) {
  const SplitIndices idx = split_indices(ds, first_fraction, second_fraction, rng);
  return {ds.subset(idx.first), ds.subset(idx.second)};
}

}  // namespace tcl
