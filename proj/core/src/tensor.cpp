// SPDX-License-Identifier: Apache-2.0
#include "tfm/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "tfm/error.hpp"

namespace tfm {

namespace {
std::string shape_str(const Tensor2D& t) {
  return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}
}  // namespace

Tensor2D::Tensor2D(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw NumericError("Tensor2D: data length " + std::to_string(data_.size()) +
                       " does not match " + std::to_string(rows_) + "x" + std::to_string(cols_));
  }
}

Tensor2D Tensor2D::identity(std::size_t n) {
  Tensor2D t(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

void Tensor2D::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor2D::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor2D& Tensor2D::operator+=(const Tensor2D& o) {
  require_same_shape(*this, o, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

Tensor2D& Tensor2D::operator-=(const Tensor2D& o) {
  require_same_shape(*this, o, "operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
  return *this;
}

Tensor2D& Tensor2D::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Tensor2D operator+(Tensor2D a, const Tensor2D& b) { return a += b; }
Tensor2D operator-(Tensor2D a, const Tensor2D& b) { return a -= b; }
Tensor2D operator*(Tensor2D a, double s) { return a *= s; }

Tensor2D matmul(const Tensor2D& a, const Tensor2D& b) {
  if (a.cols() != b.rows()) {
    throw NumericError("matmul: " + shape_str(a) + " · " + shape_str(b));
  }
  Tensor2D out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* o = out.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* brow = b.row(k).data();
      for (std::size_t j = 0; j < b.cols(); ++j) o[j] += aik * brow[j];
    }
  }
  return out;
}

Tensor2D matmul_tn(const Tensor2D& a, const Tensor2D& b) {
  if (a.rows() != b.rows()) {
    throw NumericError("matmul_tn: " + shape_str(a) + "ᵀ · " + shape_str(b));
  }
  Tensor2D out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double* brow = b.row(k).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a(k, i);
      if (aki == 0.0) continue;
      double* o = out.row(i).data();
      for (std::size_t j = 0; j < b.cols(); ++j) o[j] += aki * brow[j];
    }
  }
  return out;
}

Tensor2D matmul_nt(const Tensor2D& a, const Tensor2D& b) {
  if (a.cols() != b.cols()) {
    throw NumericError("matmul_nt: " + shape_str(a) + " · " + shape_str(b) + "ᵀ");
  }
  Tensor2D out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* arow = a.row(i).data();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* brow = b.row(j).data();
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += arow[k] * brow[k];
      out(i, j) = s;
    }
  }
  return out;
}

Tensor2D transpose(const Tensor2D& a) {
  Tensor2D out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Tensor2D vstack(const Tensor2D& a, const Tensor2D& b) {
  if (a.cols() != b.cols()) throw NumericError("vstack: column mismatch");
  std::vector<double> data = a.data();
  data.insert(data.end(), b.data().begin(), b.data().end());
  return Tensor2D(a.rows() + b.rows(), a.cols(), std::move(data));
}

Tensor2D slice_rows(const Tensor2D& a, std::size_t begin, std::size_t end) {
  if (begin > end || end > a.rows()) throw NumericError("slice_rows: out of range");
  std::vector<double> data(a.data().begin() + static_cast<std::ptrdiff_t>(begin * a.cols()),
                           a.data().begin() + static_cast<std::ptrdiff_t>(end * a.cols()));
  return Tensor2D(end - begin, a.cols(), std::move(data));
}

double max_abs_diff(const Tensor2D& a, const Tensor2D& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

void require_same_shape(const Tensor2D& a, const Tensor2D& b, const std::string& what) {
  if (!a.same_shape(b)) {
    throw NumericError(what + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
}

void require_finite(const Tensor2D& a, const std::string& what) {
  if (!a.all_finite()) throw NumericError(what + ": non-finite value");
}

bool BoolGrid::row_any(std::size_t r) const {
  const auto* begin = bits_.data() + r * cols_;
  return std::any_of(begin, begin + cols_, [](std::uint8_t b) { return b != 0; });
}

std::size_t BoolGrid::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

BoolGrid BoolGrid::block(std::size_t r0, std::size_t c0, std::size_t nr, std::size_t nc) const {
  if (r0 + nr > rows_ || c0 + nc > cols_) throw NumericError("BoolGrid::block: out of range");
  BoolGrid out(nr, nc);
  for (std::size_t r = 0; r < nr; ++r)
    for (std::size_t c = 0; c < nc; ++c) out.set(r, c, (*this)(r0 + r, c0 + c));
  return out;
}

}  // namespace tfm
