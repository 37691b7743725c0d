#pragma once

#include <span>
#include <string>

#include "tcl/matrix.hpp"

namespace tcl {

enum class HeadKind { Logistic, Linear };

const char* to_string(HeadKind k);
HeadKind parse_head_kind(const std::string& s);

struct LogisticConfig {
  double learning_rate = 0.1;
  std::size_t epochs = 200;
  double l2 = 1e-4;
};

// Supervised head f(x') -> y on embeddings or raw features.
struct Head {
  HeadKind kind = HeadKind::Logistic;
  Matrix weights;  // input_dim x classes (logistic) or input_dim x 1 (linear)
  Vector bias;
  std::size_t input_dim = 0;
  std::size_t classes = 0;  // logistic only
  // Logistic: training objective before each epoch, plus the final value.
  Vector objective_trace;

  // Logits (logistic) or the single prediction column (linear).
  Matrix raw(const Matrix& x) const;
};

// Multinomial logistic regression, full-batch gradient descent, L2 penalty
// applied as a proximal shrink so any lambda >= 0 is stable. Zero
// initialisation: the result is a pure function of (x, labels, config).
// `classes` = 0 means max label + 1.
Head fit_logistic(const Matrix& x, std::span<const double> labels,
                  const LogisticConfig& config = {}, std::size_t classes = 0);

// Closed-form ridge regression with an unpenalised intercept.
Head fit_linear(const Matrix& x, std::span<const double> y, double ridge = 1e-6);

// Class index (logistic) or real prediction (linear).
Vector predict(const Head& head, const Matrix& x);

// Mean negative log-likelihood of softmax(logits) for the given labels.
double mean_nll(const Matrix& logits, std::span<const double> labels);

}  // namespace tcl
