#ifndef PINIT_MASK_HPP
#define PINIT_MASK_HPP

// Binary connection masks. An entry of 1 keeps the weight, 0 removes it.
// The connectivity factor p is the fraction of connections removed.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pinit/matrix.hpp"
#include "pinit/rng.hpp"

namespace pinit {

class SparseMask {
 public:
  SparseMask() = default;

  /// Wraps an existing 0/1 matrix. `p` is the target sparsity it was drawn for.
  SparseMask(Matrix bits, double p) : bits_(std::move(bits)), p_(p) {
    for (double v : bits_.values()) {
      if (v != 0.0 && v != 1.0) throw std::invalid_argument("mask entries must be 0 or 1");
    }
    check_p(p_);
  }

  static SparseMask ones(std::size_t rows, std::size_t cols) {
    return SparseMask(Matrix::ones(rows, cols), 0.0);
  }
  static SparseMask zeros(std::size_t rows, std::size_t cols) {
    return SparseMask(Matrix::zeros(rows, cols), 1.0);
  }

  [[nodiscard]] const Matrix& bits() const noexcept { return bits_; }
  [[nodiscard]] double target_p() const noexcept { return p_; }
  [[nodiscard]] std::size_t rows() const noexcept { return bits_.rows(); }
  [[nodiscard]] std::size_t cols() const noexcept { return bits_.cols(); }
  [[nodiscard]] bool keeps(std::size_t r, std::size_t c) const noexcept {
    return bits_(r, c) != 0.0;
  }

  static void check_p(double p) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw std::out_of_range("connectivity factor p must lie in [0, 1], got " + std::to_string(p));
    }
  }

  friend bool operator==(const SparseMask& a, const SparseMask& b) { return a.bits_ == b.bits_; }

 private:
  Matrix bits_;
  double p_ = 0.0;
};

/// Each entry independently kept with probability 1 - p.
inline SparseMask generate_mask(std::size_t rows, std::size_t cols, double p, Rng& rng) {
  SparseMask::check_p(p);
  Matrix bits(rows, cols);
  std::bernoulli_distribution keep(1.0 - p);
  for (double& v : bits.values()) v = keep(rng) ? 1.0 : 0.0;
  return SparseMask(std::move(bits), p);
}

/// Exactly round(p * rows * cols) zeros at uniformly shuffled positions.
inline SparseMask generate_mask_exact(std::size_t rows, std::size_t cols, double p, Rng& rng) {
  SparseMask::check_p(p);
  const std::size_t n = rows * cols;
  const auto zeros = static_cast<std::size_t>(std::llround(p * static_cast<double>(n)));
  std::vector<double> bits(n, 1.0);
  std::fill_n(bits.begin(), zeros, 0.0);
  std::shuffle(bits.begin(), bits.end(), rng);
  return SparseMask(Matrix(rows, cols, std::move(bits)), p);
}

/// Fraction of zero entries.
inline double sparsity(const SparseMask& mask) {
  if (mask.bits().empty()) return 0.0;
  std::size_t zeros = 0;
  for (double v : mask.bits().values()) zeros += v == 0.0;
  return static_cast<double>(zeros) / static_cast<double>(mask.bits().size());
}

inline std::size_t pruned_count(const SparseMask& mask) {
  std::size_t zeros = 0;
  for (double v : mask.bits().values()) zeros += v == 0.0;
  return zeros;
}

/// Element-wise AND: a connection survives only if both masks keep it.
inline SparseMask intersect(const SparseMask& a, const SparseMask& b) {
  detail::require_same_shape("intersect", a.bits(), b.bits());
  const double p = 1.0 - (1.0 - a.target_p()) * (1.0 - b.target_p());
  return SparseMask(hadamard(a.bits(), b.bits()), std::clamp(p, 0.0, 1.0));
}

/// W <- W o mask.
inline void apply_mask(Matrix& weights, const SparseMask& mask) {
  hadamard_inplace(weights, mask.bits());
}

// Text format:
//   line 1: "<rows> <cols> <p>"
//   then one line per row of '0'/'1' characters.

inline void write_mask(std::ostream& out, const SparseMask& mask) {
  out << mask.rows() << ' ' << mask.cols() << ' ' << mask.target_p() << '\n';
  std::string line(mask.cols(), '0');
  for (std::size_t r = 0; r < mask.rows(); ++r) {
    for (std::size_t c = 0; c < mask.cols(); ++c) line[c] = mask.keeps(r, c) ? '1' : '0';
    out << line << '\n';
  }
}

inline SparseMask read_mask(std::istream& in) {
  std::size_t rows = 0;
  std::size_t cols = 0;
  double p = 0.0;
  if (!(in >> rows >> cols >> p)) throw std::runtime_error("mask: malformed header");
  Matrix bits(rows, cols);
  std::string line;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!(in >> line) || line.size() != cols) {
      throw std::runtime_error("mask: row " + std::to_string(r) + " malformed");
    }
    for (std::size_t c = 0; c < cols; ++c) {
      if (line[c] != '0' && line[c] != '1') {
        throw std::runtime_error("mask: invalid character in row " + std::to_string(r));
      }
      bits(r, c) = line[c] == '1' ? 1.0 : 0.0;
    }
  }
  return SparseMask(std::move(bits), p);
}

}  // namespace pinit

#endif  // PINIT_MASK_HPP
