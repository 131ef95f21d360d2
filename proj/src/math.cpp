#include "story/math.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "story/error.hpp"

namespace story {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::dimension_mismatch: return "dimension mismatch";
    case ErrorCode::non_finite: return "non-finite value";
    case ErrorCode::empty_input: return "empty input";
    case ErrorCode::invalid_argument: return "invalid argument";
    case ErrorCode::out_of_range: return "out of range";
    case ErrorCode::io: return "i/o error";
    case ErrorCode::short_read: return "short read";
    case ErrorCode::bad_magic: return "bad magic";
    case ErrorCode::bad_version: return "bad version";
    case ErrorCode::invalid_dimension: return "invalid dimension";
    case ErrorCode::parse: return "parse error";
    case ErrorCode::config_conflict: return "config conflict";
  }
  return "unknown error";
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    std::ostringstream msg;
    msg << "matrix data of length " << data_.size() << " does not fit shape " << rows << "x" << cols;
    throw Error(ErrorCode::dimension_mismatch, msg.str());
  }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw Error(ErrorCode::dimension_mismatch, "ragged rows in Matrix::from_rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

std::string shape_string(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

Vector affine(const Matrix& W, const Vector& x, const Vector& b) {
  if (W.cols() != x.size() || W.rows() != b.size()) {
    std::ostringstream msg;
    msg << "affine: W is " << shape_string(W) << ", x has length " << x.size()
        << ", b has length " << b.size();
    throw Error(ErrorCode::dimension_mismatch, msg.str());
  }
  Vector out = b;
  add_matvec(W, x.values(), out.values());
  ensure_finite(out.values(), "affine output");
  return out;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Vector sigmoid(const Vector& x) {
  Vector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = sigmoid(x[i]);
  return out;
}

Vector tanh_act(const Vector& x) {
  Vector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::tanh(x[i]);
  return out;
}

Vector softmax(const Vector& x) {
  if (x.empty()) throw Error(ErrorCode::empty_input, "softmax of an empty vector");
  const double peak = *std::max_element(x.begin(), x.end());
  Vector out(x.size());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - peak);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

Vector log_softmax(const Vector& x) {
  if (x.empty()) throw Error(ErrorCode::empty_input, "log_softmax of an empty vector");
  const double peak = *std::max_element(x.begin(), x.end());
  double total = 0.0;
  for (double v : x) total += std::exp(v - peak);
  const double log_total = std::log(total);
  Vector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - peak - log_total;
  return out;
}

void add_matvec(const Matrix& W, std::span<const double> x, std::span<double> out) {
  const std::size_t cols = W.cols();
  const double* w = W.values().data();
  for (std::size_t i = 0; i < W.rows(); ++i, w += cols) {
    double acc = 0.0;
    for (std::size_t k = 0; k < cols; ++k) acc += w[k] * x[k];
    out[i] += acc;
  }
}

void add_matvec_transposed(const Matrix& W, std::span<const double> y, std::span<double> out) {
  const std::size_t cols = W.cols();
  const double* w = W.values().data();
  for (std::size_t i = 0; i < W.rows(); ++i, w += cols) {
    const double yi = y[i];
    if (yi == 0.0) continue;
    for (std::size_t k = 0; k < cols; ++k) out[k] += w[k] * yi;
  }
}

void add_outer(Matrix& G, std::span<const double> y, std::span<const double> x) {
  const std::size_t cols = G.cols();
  double* g = G.values().data();
  for (std::size_t i = 0; i < G.rows(); ++i, g += cols) {
    const double yi = y[i];
    if (yi == 0.0) continue;
    for (std::size_t k = 0; k < cols; ++k) g[k] += yi * x[k];
  }
}

void add_to(std::span<double> out, std::span<const double> a) {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += a[i];
}

void ensure_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::non_finite, std::string(what) + " contains NaN or Inf");
  }
}

}  // namespace story
