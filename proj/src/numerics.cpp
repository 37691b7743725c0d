#include "tcl/numerics.hpp"

#include <algorithm>
#include <cmath>

namespace tcl {

const char* to_string(NormKind k) { return k == NormKind::L1 ? "l1" : "l2"; }

NormKind parse_norm(const std::string& s) {
  if (s == "l1" || s == "L1") return NormKind::L1;
  if (s == "l2" || s == "L2") return NormKind::L2;
  throw ConfigError("unknown norm '" + s + "' (expected l1 or l2)");
}

Vector softmax(std::span<const double> logits) {
  if (logits.empty()) throw ArgumentError("softmax: empty vector");
  if (!all_finite(logits)) throw NumericError("softmax: non-finite logit");
  const double mx = *std::max_element(logits.begin(), logits.end());
  Vector out(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    z += out[i];
  }
  for (double& p : out) p /= z;
  return out;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const Vector p = softmax(logits.row(i));
    std::copy(p.begin(), p.end(), out.row(i).begin());
  }
  return out;
}

double mse(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw ArgumentError("mse: shape mismatch");
  if (a.empty()) throw ArgumentError("mse: empty matrices");
  double s = 0.0;
  const auto& x = a.data();
  const auto& y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    s += d * d;
  }
  return s / static_cast<double>(x.size());
}

double vector_norm(std::span<const double> v, NormKind kind) {
  if (v.empty()) throw ArgumentError("vector_norm: empty vector");
  double s = 0.0;
  if (kind == NormKind::L1) {
    for (double x : v) s += std::abs(x);
    return s;
  }
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double distance(std::span<const double> a, std::span<const double> b, NormKind kind) {
  if (a.size() != b.size()) throw ArgumentError("distance: length mismatch");
  Vector d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return vector_norm(d, kind);
}

Matrix gaussian_noise(std::size_t rows, std::size_t cols, double sigma, RngStream& rng) {
  if (!(sigma >= 0.0)) throw ArgumentError("gaussian_noise: sigma must be >= 0");
  Matrix m(rows, cols);
  if (sigma == 0.0) return m;
  for (double& x : m.data()) x = sigma * rng.normal();
  return m;
}

Matrix keep_mask(std::size_t rows, std::size_t cols, double p, RngStream& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw ArgumentError("keep_mask: p must lie in [0, 1]");
  Matrix m(rows, cols);
  for (double& x : m.data()) x = rng.uniform() < p ? 0.0 : 1.0;
  return m;
}

Vector finite_diff_grad(const ScalarFn& f, std::span<const double> theta, double eps) {
  if (!(eps > 0.0)) throw ArgumentError("finite_diff_grad: eps must be > 0");
  Vector t(theta.begin(), theta.end());
  Vector g(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double orig = t[i];
    t[i] = orig + eps;
    const double fp = f(t);
    t[i] = orig - eps;
    const double fm = f(t);
    t[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("finite_diff_grad: non-finite evaluation at coordinate " +
                         std::to_string(i));
    }
    g[i] = (fp - fm) / (2.0 * eps);
  }
  return g;
}

}  // namespace tcl
