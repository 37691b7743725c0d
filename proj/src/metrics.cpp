#include "tcl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <vector>

#include "tcl/error.hpp"

namespace tcl {
namespace {

void check_pair(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.empty() || b.empty()) throw ArgumentError(std::string(what) + ": empty input");
  if (a.size() != b.size()) throw ArgumentError(std::string(what) + ": length mismatch");
}

}  // namespace

double metric_accuracy(std::span<const double> truth, std::span<const double> pred) {
  check_pair(truth, pred, "accuracy");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += truth[i] == pred[i];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

double metric_f1_macro(std::span<const double> truth, std::span<const double> pred) {
  check_pair(truth, pred, "f1_macro");
  struct Counts {
    std::size_t tp = 0, fp = 0, fn = 0;
  };
  std::map<double, Counts> per_class;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == pred[i]) {
      ++per_class[truth[i]].tp;
    } else {
      ++per_class[truth[i]].fn;
      ++per_class[pred[i]].fp;
    }
  }
  double sum = 0.0;
  for (const auto& [cls, c] : per_class) {
    const double denom = 2.0 * c.tp + c.fp + c.fn;
    sum += denom > 0 ? 2.0 * c.tp / denom : 0.0;
  }
  return sum / static_cast<double>(per_class.size());
}

double metric_rmse(std::span<const double> truth, std::span<const double> pred) {
  check_pair(truth, pred, "rmse");
  double s = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) s += (truth[i] - pred[i]) * (truth[i] - pred[i]);
  return std::sqrt(s / static_cast<double>(truth.size()));
}

double metric_r2(std::span<const double> truth, std::span<const double> pred) {
  check_pair(truth, pred, "r2");
  double mean = 0.0;
  for (double t : truth) mean += t;
  mean /= static_cast<double>(truth.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ss_res += (truth[i] - pred[i]) * (truth[i] - pred[i]);
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
  }
  if (ss_tot == 0.0) return ss_res == 0.0 ? 1.0 : 0.0;
  return 1.0 - ss_res / ss_tot;
}

double metric_auroc(std::span<const double> scores, std::span<const double> positive) {
  check_pair(scores, positive, "auroc");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Mann-Whitney U with mid-ranks for ties.
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (positive[order[k]] != 0.0) {
        rank_sum += mid_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw ArgumentError("auroc: need both positives and negatives");
  const double np = static_cast<double>(n_pos);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

}  // namespace tcl
