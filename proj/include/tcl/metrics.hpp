#pragma once

#include <span>

namespace tcl {

double metric_accuracy(std::span<const double> truth, std::span<const double> pred);
// Unweighted mean of per-class F1; classes absent from both vectors are skipped.
double metric_f1_macro(std::span<const double> truth, std::span<const double> pred);
double metric_rmse(std::span<const double> truth, std::span<const double> pred);
// 1 - SS_res / SS_tot. A constant truth vector gives 1 for a perfect fit, else 0.
double metric_r2(std::span<const double> truth, std::span<const double> pred);
// Area under the ROC curve of `scores` for separating positives (label != 0)
// from negatives; ties count one half.
double metric_auroc(std::span<const double> scores, std::span<const double> positive);

}  // namespace tcl
