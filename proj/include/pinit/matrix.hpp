#ifndef PINIT_MATRIX_HPP
#define PINIT_MATRIX_HPP

// Dense row-major matrix and the arithmetic kernels used by the network,
// optimizer and pruning code. Samples are stored as columns, features as rows.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pinit {

/// Thrown when operand shapes do not fit the requested operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <std::floating_point T>
class BasicMatrix {
 public:
  using value_type = T;

  BasicMatrix() = default;

  BasicMatrix(std::size_t rows, std::size_t cols, T fill = T{0})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  BasicMatrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("matrix: data length " + std::to_string(data_.size()) +
                       " does not match " + std::to_string(rows_) + "x" +
                       std::to_string(cols_));
    }
  }

  /// Builds a matrix from nested row lists, e.g. {{1, 2}, {3, 4}}.
  BasicMatrix(std::initializer_list<std::initializer_list<T>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& row : rows) {
      if (row.size() != cols_) throw ShapeError("matrix: ragged initializer");
      data_.insert(data_.end(), row.begin(), row.end());
    }
  }

  static BasicMatrix zeros(std::size_t rows, std::size_t cols) {
    return BasicMatrix(rows, cols, T{0});
  }
  static BasicMatrix ones(std::size_t rows, std::size_t cols) {
    return BasicMatrix(rows, cols, T{1});
  }
  static BasicMatrix identity(std::size_t n) {
    BasicMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T{1};
    return m;
  }
  /// Column vector from a flat list.
  static BasicMatrix column(std::vector<T> values) {
    const auto n = values.size();
    return BasicMatrix(n, 1, std::move(values));
  }

  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept {
    return data_[r * cols_ + c];
  }

  [[nodiscard]] std::span<T> values() noexcept { return data_; }
  [[nodiscard]] std::span<const T> values() const noexcept { return data_; }
  [[nodiscard]] std::span<T> row(std::size_t r) noexcept {
    return std::span<T>(data_).subspan(r * cols_, cols_);
  }
  [[nodiscard]] std::span<const T> row(std::size_t r) const noexcept {
    return std::span<const T>(data_).subspan(r * cols_, cols_);
  }

  [[nodiscard]] bool same_shape(const BasicMatrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  [[nodiscard]] std::string shape_string() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
  }

  friend bool operator==(const BasicMatrix&, const BasicMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using Matrix = BasicMatrix<double>;

namespace detail {

template <typename T>
void require_same_shape(const char* op, const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                     b.shape_string());
  }
}

}  // namespace detail

template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: shape mismatch " + a.shape_string() + " x " + b.shape_string());
  }
  BasicMatrix<T> out(a.rows(), b.cols());
  const std::size_t inner = a.cols();
  const std::size_t n = b.cols();
  // i-k-j order keeps the innermost loop contiguous in both b and out.
  for (std::size_t i = 0; i < a.rows(); ++i) {
    T* out_row = out.row(i).data();
    for (std::size_t k = 0; k < inner; ++k) {
      const T aik = a(i, k);
      if (aik == T{0}) continue;
      const T* b_row = b.row(k).data();
      for (std::size_t j = 0; j < n; ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

/// a * b^T without materialising the transpose.
template <typename T>
BasicMatrix<T> matmul_transpose_b(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_transpose_b: shape mismatch " + a.shape_string() + " x (" +
                     b.shape_string() + ")^T");
  }
  BasicMatrix<T> out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto a_row = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const auto b_row = b.row(j);
      T acc{0};
      for (std::size_t k = 0; k < a_row.size(); ++k) acc += a_row[k] * b_row[k];
      out(i, j) = acc;
    }
  }
  return out;
}

/// a^T * b without materialising the transpose.
template <typename T>
BasicMatrix<T> matmul_transpose_a(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_transpose_a: shape mismatch (" + a.shape_string() + ")^T x " +
                     b.shape_string());
  }
  BasicMatrix<T> out(a.cols(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const T* b_row = b.row(k).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const T aki = a(k, i);
      if (aki == T{0}) continue;
      T* out_row = out.row(i).data();
      for (std::size_t j = 0; j < n; ++j) out_row[j] += aki * b_row[j];
    }
  }
  return out;
}

/// Adds the column vector `bias` (m.rows() x 1) to every column of m.
template <typename T>
BasicMatrix<T> add_bias(const BasicMatrix<T>& m, const BasicMatrix<T>& bias) {
  if (bias.cols() != 1 || bias.rows() != m.rows()) {
    throw ShapeError("add_bias: bias " + bias.shape_string() + " does not match " +
                     m.shape_string());
  }
  BasicMatrix<T> out = m;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    const T b = bias(i, 0);
    for (T& x : out.row(i)) x += b;
  }
  return out;
}

template <typename T>
BasicMatrix<T> hadamard(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  detail::require_same_shape("hadamard", a, b);
  BasicMatrix<T> out = a;
  auto o = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  return out;
}

/// In-place a <- a o b.
template <typename T>
void hadamard_inplace(BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  detail::require_same_shape("hadamard_inplace", a, b);
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) av[i] *= bv[i];
}

template <typename T>
BasicMatrix<T> add(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  detail::require_same_shape("add", a, b);
  BasicMatrix<T> out = a;
  auto o = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
  return out;
}

/// In-place a <- a + b.
template <typename T>
void add_inplace(BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  detail::require_same_shape("add_inplace", a, b);
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) av[i] += bv[i];
}

template <typename T>
BasicMatrix<T> sub(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  detail::require_same_shape("sub", a, b);
  BasicMatrix<T> out = a;
  auto o = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  return out;
}

template <typename T>
BasicMatrix<T> scale(const BasicMatrix<T>& a, T c) {
  BasicMatrix<T> out = a;
  for (T& x : out.values()) x *= c;
  return out;
}

template <typename T>
BasicMatrix<T> transpose(const BasicMatrix<T>& a) {
  BasicMatrix<T> out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

template <typename T, std::invocable<T> F>
BasicMatrix<T> map(const BasicMatrix<T>& a, F&& f) {
  BasicMatrix<T> out = a;
  for (T& x : out.values()) x = static_cast<T>(f(x));
  return out;
}

template <typename T>
T total_sum(const BasicMatrix<T>& a) {
  T acc{0};
  for (T x : a.values()) acc += x;
  return acc;
}

template <typename T>
T total_abs_sum(const BasicMatrix<T>& a) {
  T acc{0};
  for (T x : a.values()) acc += std::abs(x);
  return acc;
}

/// Sums each row across the batch (column) dimension, giving rows x 1.
template <typename T>
BasicMatrix<T> row_sums(const BasicMatrix<T>& a) {
  BasicMatrix<T> out(a.rows(), 1);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    T acc{0};
    for (T x : a.row(i)) acc += x;
    out(i, 0) = acc;
  }
  return out;
}

/// Copies the listed columns of `a` into a new matrix, in order.
template <typename T>
BasicMatrix<T> gather_columns(const BasicMatrix<T>& a, std::span<const std::size_t> cols) {
  BasicMatrix<T> out(a.rows(), cols.size());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto src = a.row(i);
    auto dst = out.row(i);
    for (std::size_t j = 0; j < cols.size(); ++j) dst[j] = src[cols[j]];
  }
  return out;
}

template <typename T>
bool all_finite(const BasicMatrix<T>& a) {
  return std::all_of(a.values().begin(), a.values().end(),
                     [](T x) { return std::isfinite(x); });
}

}  // namespace pinit

#endif  // PINIT_MATRIX_HPP
