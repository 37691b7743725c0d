#pragma once

#include <functional>
#include <span>
#include <string>

#include "tcl/matrix.hpp"
#include "tcl/rng.hpp"

namespace tcl {

enum class NormKind { L1, L2 };

const char* to_string(NormKind k);
NormKind parse_norm(const std::string& s);

// Max-subtracted softmax. Throws on empty or non-finite input.
Vector softmax(std::span<const double> logits);
// Same, for every row of a matrix.
Matrix softmax_rows(const Matrix& logits);

// Mean over all entries of (a - b)^2.
double mse(const Matrix& a, const Matrix& b);

double vector_norm(std::span<const double> v, NormKind kind);
double distance(std::span<const double> a, std::span<const double> b, NormKind kind);

// i.i.d. N(0, sigma^2) draws in row-major order.
Matrix gaussian_noise(std::size_t rows, std::size_t cols, double sigma, RngStream& rng);
// 1 with probability (1 - p), 0 with probability p, row-major order.
Matrix keep_mask(std::size_t rows, std::size_t cols, double p, RngStream& rng);

using ScalarFn = std::function<double(std::span<const double>)>;

// Central differences (f(theta + eps e_i) - f(theta - eps e_i)) / (2 eps).
Vector finite_diff_grad(const ScalarFn& f, std::span<const double> theta, double eps);

}  // namespace tcl
