#pragma once

#include <cassert>
#include <cstdint>
#include <vector>

namespace framediff {

// Dense row-major 2-D array of doubles. Vectors are 1xN or Nx1.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::int64_t rows, std::int64_t cols)
      : rows_(rows), cols_(cols), d_(static_cast<std::size_t>(rows * cols), 0.0) {}

  static Tensor full(std::int64_t rows, std::int64_t cols, double v) {
    Tensor t(rows, cols);
    for (auto& x : t.d_) x = v;
    return t;
  }
  static Tensor identity(std::int64_t n) {
    Tensor t(n, n);
    for (std::int64_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
  }

  std::int64_t rows() const { return rows_; }
  std::int64_t cols() const { return cols_; }
  std::size_t size() const { return d_.size(); }
  bool empty() const { return d_.empty(); }

  double* data() { return d_.data(); }
  const double* data() const { return d_.data(); }
  double* row(std::int64_t i) { return d_.data() + i * cols_; }
  const double* row(std::int64_t i) const { return d_.data() + i * cols_; }

  double& operator()(std::int64_t i, std::int64_t j) {
    assert(i >= 0 && i < rows_ && j >= 0 && j < cols_);
    return d_[static_cast<std::size_t>(i * cols_ + j)];
  }
  double operator()(std::int64_t i, std::int64_t j) const {
    assert(i >= 0 && i < rows_ && j >= 0 && j < cols_);
    return d_[static_cast<std::size_t>(i * cols_ + j)];
  }

  bool same_shape(const Tensor& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  // Keeps the allocation when the total size is unchanged.
  void reshape_to(std::int64_t rows, std::int64_t cols) {
    rows_ = rows;
    cols_ = cols;
    d_.assign(static_cast<std::size_t>(rows * cols), 0.0);
  }

  void fill(double v) {
    for (auto& x : d_) x = v;
  }

 private:
  std::int64_t rows_ = 0;
  std::int64_t cols_ = 0;
  std::vector<double> d_;
};

}  // namespace framediff
