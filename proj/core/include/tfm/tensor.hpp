// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace tfm {

/// Dense row-major matrix of doubles. One row per token.
class Tensor2D {
 public:
  Tensor2D() = default;
  Tensor2D(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor2D(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Tensor2D identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  void fill(double v);
  bool all_finite() const;
  bool same_shape(const Tensor2D& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  Tensor2D& operator+=(const Tensor2D& o);
  Tensor2D& operator-=(const Tensor2D& o);
  Tensor2D& operator*=(double s);

  bool operator==(const Tensor2D& o) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Tensor2D operator+(Tensor2D a, const Tensor2D& b);
Tensor2D operator-(Tensor2D a, const Tensor2D& b);
Tensor2D operator*(Tensor2D a, double s);

/// a (n×k) · b (k×m)
Tensor2D matmul(const Tensor2D& a, const Tensor2D& b);
/// aᵀ (k×n)ᵀ · b (k×m) = n×m
Tensor2D matmul_tn(const Tensor2D& a, const Tensor2D& b);
/// a (n×k) · bᵀ (m×k)ᵀ = n×m
Tensor2D matmul_nt(const Tensor2D& a, const Tensor2D& b);
Tensor2D transpose(const Tensor2D& a);
/// Stack rows of a on top of rows of b.
Tensor2D vstack(const Tensor2D& a, const Tensor2D& b);
Tensor2D slice_rows(const Tensor2D& a, std::size_t begin, std::size_t end);
double max_abs_diff(const Tensor2D& a, const Tensor2D& b);

/// Throws NumericError naming `what` when the shapes differ.
void require_same_shape(const Tensor2D& a, const Tensor2D& b, const std::string& what);
/// Throws NumericError naming `what` when any entry is NaN or infinite.
void require_finite(const Tensor2D& a, const std::string& what);

/// Row-major boolean grid. Masks are the source of truth; additive biases are
/// derived from them only inside attention.
class BoolGrid {
 public:
  BoolGrid() = default;
  BoolGrid(std::size_t rows, std::size_t cols, bool fill = false)
      : rows_(rows), cols_(cols), bits_(rows * cols, fill ? 1 : 0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool operator()(std::size_t r, std::size_t c) const { return bits_[r * cols_ + c] != 0; }
  void set(std::size_t r, std::size_t c, bool v) { bits_[r * cols_ + c] = v ? 1 : 0; }
  bool row_any(std::size_t r) const;
  std::size_t count() const;
  BoolGrid block(std::size_t r0, std::size_t c0, std::size_t nr, std::size_t nc) const;

  bool operator==(const BoolGrid& o) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> bits_;
};

}  // namespace tfm
