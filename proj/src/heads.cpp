#include "tcl/heads.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "tcl/kernels.hpp"
#include "tcl/numerics.hpp"

namespace tcl {
namespace {

void check_labels(std::span<const double> labels, std::size_t classes) {
  for (double y : labels) {
    if (!(y >= 0.0) || y != std::floor(y) || static_cast<std::size_t>(y) >= classes) {
      throw ArgumentError("fit_logistic: labels must be class indices in [0, classes)");
    }
  }
}

// Cholesky solve of a symmetric positive definite system; returns false when
// a pivot collapses.
bool cholesky_solve(Matrix a, Vector& b) {
  const std::size_t n = a.rows();
  double max_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(a(i, i)));
  const double floor = 1e-12 * std::max(max_diag, 1e-300);
  for (std::size_t j = 0; j < n; ++j) {
    double s = a(j, j);
    for (std::size_t k = 0; k < j; ++k) s -= a(j, k) * a(j, k);
    if (!(s > floor)) return false;
    const double l = std::sqrt(s);
    a(j, j) = l;
    for (std::size_t i = j + 1; i < n; ++i) {
      double t = a(i, j);
      for (std::size_t k = 0; k < j; ++k) t -= a(i, k) * a(j, k);
      a(i, j) = t / l;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= a(i, k) * b[k];
    b[i] = s / a(i, i);
  }
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a(k, i) * b[k];
    b[i] = s / a(i, i);
  }
  return true;
}

}  // namespace

const char* to_string(HeadKind k) { return k == HeadKind::Logistic ? "logistic" : "linear"; }

HeadKind parse_head_kind(const std::string& s) {
  if (s == "logistic") return HeadKind::Logistic;
  if (s == "linear") return HeadKind::Linear;
  throw ConfigError("unknown head kind '" + s + "' (expected logistic or linear)");
}

Matrix Head::raw(const Matrix& x) const {
  if (x.cols() != input_dim) {
    throw ArgumentError("head expects " + std::to_string(input_dim) + " input columns, got " +
                        std::to_string(x.cols()));
  }
  return kernels::add_bias(kernels::matmul(x, weights), bias);
}

double mean_nll(const Matrix& logits, std::span<const double> labels) {
  if (logits.rows() != labels.size()) throw ArgumentError("mean_nll: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto row = logits.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    s += std::log(z) + mx - row[static_cast<std::size_t>(labels[i])];
  }
  return s / static_cast<double>(logits.rows());
}

Head fit_logistic(const Matrix& x, std::span<const double> labels, const LogisticConfig& config,
                  std::size_t classes) {
  if (x.rows() == 0 || x.rows() != labels.size()) {
    throw ArgumentError("fit_logistic: need equal, non-zero row and label counts");
  }
  if (!(config.learning_rate > 0.0) || !(config.l2 >= 0.0)) {
    throw ArgumentError("fit_logistic: learning rate must be > 0 and l2 >= 0");
  }
  if (classes == 0) {
    classes = static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end())) + 1;
  }
  check_labels(labels, classes);
  if (std::set<double>(labels.begin(), labels.end()).size() < 2) {
    throw DegenerateError("fit_logistic: fewer than 2 classes present");
  }

  const std::size_t n = x.rows(), d = x.cols();
  Head h;
  h.kind = HeadKind::Logistic;
  h.input_dim = d;
  h.classes = classes;
  h.weights = Matrix(d, classes);
  h.bias.assign(classes, 0.0);

  auto objective = [&](const Matrix& logits) {
    double pen = 0.0;
    for (double w : h.weights.data()) pen += w * w;
    return mean_nll(logits, labels) + 0.5 * config.l2 * pen;
  };

  const double inv_n = 1.0 / static_cast<double>(n);
  const double shrink = 1.0 / (1.0 + config.learning_rate * config.l2);
  for (std::size_t epoch = 0; epoch <= config.epochs; ++epoch) {
    const Matrix logits = h.raw(x);
    h.objective_trace.push_back(objective(logits));
    if (epoch == config.epochs) break;
    Matrix g = softmax_rows(logits);
    for (std::size_t i = 0; i < n; ++i) {
      g(i, static_cast<std::size_t>(labels[i])) -= 1.0;
      for (double& v : g.row(i)) v *= inv_n;
    }
    const Matrix gw = kernels::matmul_tn(x, g);
    const Vector gb = kernels::column_sums(g);
    auto& w = h.weights.data();
    for (std::size_t k = 0; k < w.size(); ++k) {
      w[k] = (w[k] - config.learning_rate * gw.data()[k]) * shrink;
    }
    for (std::size_t c = 0; c < classes; ++c) h.bias[c] -= config.learning_rate * gb[c];
    if (!all_finite(w) || !all_finite(h.bias)) {
      throw NumericError("fit_logistic: non-finite weights; reduce the learning rate");
    }
  }
  return h;
}

Head fit_linear(const Matrix& x, std::span<const double> y, double ridge) {
  if (x.rows() == 0 || x.rows() != y.size()) {
    throw ArgumentError("fit_linear: need equal, non-zero row and target counts");
  }
  if (!(ridge >= 0.0)) throw ArgumentError("fit_linear: ridge must be >= 0");
  const std::size_t n = x.rows(), d = x.cols();
  if (n <= d && ridge == 0.0) {
    throw NumericError("fit_linear: n <= d with zero ridge term is singular");
  }
  const Vector xmean = [&] {
    Vector m = kernels::column_sums(x);
    for (double& v : m) v /= static_cast<double>(n);
    return m;
  }();
  double ymean = 0.0;
  for (double v : y) ymean += v;
  ymean /= static_cast<double>(n);

  Matrix xc = x;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) xc(i, j) -= xmean[j];
  Matrix yc(n, 1);
  for (std::size_t i = 0; i < n; ++i) yc(i, 0) = y[i] - ymean;

  Matrix gram = kernels::matmul_tn(xc, xc);
  for (std::size_t j = 0; j < d; ++j) gram(j, j) += ridge;
  const Matrix rhs = kernels::matmul_tn(xc, yc);
  Vector w = rhs.data();
  if (d > 0 && !cholesky_solve(gram, w)) {
    throw NumericError("fit_linear: singular normal equations; use a positive ridge term");
  }

  Head h;
  h.kind = HeadKind::Linear;
  h.input_dim = d;
  h.weights = Matrix(d, 1, w);
  double b = ymean;
  for (std::size_t j = 0; j < d; ++j) b -= xmean[j] * w[j];
  h.bias = {b};
  return h;
}

Vector predict(const Head& head, const Matrix& x) {
  const Matrix r = head.raw(x);
  Vector out(r.rows());
  if (head.kind == HeadKind::Linear) {
    for (std::size_t i = 0; i < r.rows(); ++i) out[i] = r(i, 0);
    return out;
  }
  for (std::size_t i = 0; i < r.rows(); ++i) {
    const auto row = r.row(i);
    out[i] = static_cast<double>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

}  // namespace tcl
