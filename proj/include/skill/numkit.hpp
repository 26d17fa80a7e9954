#pragma once

// Dense numeric kernels shared by every other module: a row-major Matrix,
// Cholesky factorization, log-sum-exp and a portable seeded RNG.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "skill/error.hpp"

namespace skill {

using Vector = std::vector<double>;

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    require(data_.size() == rows_ * cols_, ErrorCode::ShapeMismatch,
            "matrix data length " + std::to_string(data_.size()) + " != " +
                std::to_string(rows_) + "x" + std::to_string(cols_));
    for (double v : data_) require(std::isfinite(v), ErrorCode::InvalidArgument, "non-finite matrix entry");
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  void append_row(std::span<const double> values) {
    if (rows_ == 0 && cols_ == 0) cols_ = values.size();
    require(values.size() == cols_, ErrorCode::DimMismatch, "append_row width mismatch");
    data_.insert(data_.end(), values.begin(), values.end());
    ++rows_;
  }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline Vector matvec(const Matrix& a, std::span<const double> x) {
  require(a.cols() == x.size(), ErrorCode::DimMismatch, "matvec: cols != |x|");
  Vector y(a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r) y[r] = dot(a.row(r), x);
  return y;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), ErrorCode::DimMismatch, "matmul: inner dims");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

inline std::size_t argmax(std::span<const double> v) {
  // first maximum wins, so ties resolve to the lowest index
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

// Lower-triangular L with a = L·Lᵀ.
class Cholesky {
 public:
  explicit Cholesky(const Matrix& a) : l_(a.rows(), a.cols()) {
    require(a.rows() == a.cols(), ErrorCode::ShapeMismatch, "cholesky: matrix not square");
    const std::size_t n = a.rows();
    for (std::size_t j = 0; j < n; ++j) {
      double diag = a(j, j);
      for (std::size_t k = 0; k < j; ++k) diag -= l_(j, k) * l_(j, k);
      if (!(diag > 0.0))
        fail(ErrorCode::NotPositiveDefinite, "non-positive pivot at column " + std::to_string(j));
      const double ljj = std::sqrt(diag);
      l_(j, j) = ljj;
      for (std::size_t i = j + 1; i < n; ++i) {
        double s = a(i, j);
        for (std::size_t k = 0; k < j; ++k) s -= l_(i, k) * l_(j, k);
        l_(i, j) = s / ljj;
      }
    }
  }

  std::size_t size() const noexcept { return l_.rows(); }
  const Matrix& lower() const noexcept { return l_; }

  // y = L⁻¹ b
  Vector forward(std::span<const double> b) const {
    require(b.size() == size(), ErrorCode::DimMismatch, "cholesky forward: |b| != n");
    Vector y(b.begin(), b.end());
    for (std::size_t i = 0; i < y.size(); ++i) {
      double s = y[i];
      for (std::size_t k = 0; k < i; ++k) s -= l_(i, k) * y[k];
      y[i] = s / l_(i, i);
    }
    return y;
  }

  // x = a⁻¹ b
  Vector solve(std::span<const double> b) const {
    Vector x = forward(b);
    for (std::size_t ii = x.size(); ii-- > 0;) {
      double s = x[ii];
      for (std::size_t k = ii + 1; k < x.size(); ++k) s -= l_(k, ii) * x[k];
      x[ii] = s / l_(ii, ii);
    }
    return x;
  }

  // (x)ᵀ a⁻¹ (x)
  double quadratic_form(std::span<const double> x) const {
    const Vector y = forward(x);
    return dot(y, y);
  }

 private:
  Matrix l_;
};

inline Vector cholesky_solve(const Matrix& a, std::span<const double> b) { return Cholesky(a).solve(b); }

inline double logsumexp(std::span<const double> v) {
  require(!v.empty(), ErrorCode::EmptyInput, "logsumexp of empty vector");
  const double m = *std::max_element(v.begin(), v.end());
  if (m == -std::numeric_limits<double>::infinity()) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

// Portable pseudo-random stream: xoshiro256** state seeded by four splitmix64
// outputs. Same seed gives the same sequence on every platform because no
// std:: distribution is involved.
//
//   splitmix64:  z += 0x9E3779B97F4A7C15
//                z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//                z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//                return z ^ (z >> 31)
//   xoshiro256**: result = rotl(s1 * 5, 7) * 9
//                 t = s1 << 17; s2 ^= s0; s3 ^= s1; s1 ^= s2; s0 ^= s3;
//                 s2 ^= t; s3 = rotl(s3, 45)
//
// uniform() uses the top 53 bits; normal() is Box-Muller on two uniforms.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : seed_(seed) {
    std::uint64_t z = seed;
    for (auto& word : state_) word = splitmix64(z);
  }

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform integer in [0, n), rejection sampled to avoid modulo bias
  std::uint64_t below(std::uint64_t n) {
    require(n > 0, ErrorCode::InvalidArgument, "RngStream::below(0)");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t r;
    do {
      r = next_u64();
    } while (r >= limit);
    return r % n;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Independent child stream, e.g. one per task, derived deterministically.
  static RngStream derive(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed ^ (salt * 0xD1B54A32D192ED03ULL);
    return RngStream(splitmix64(z));
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  static std::uint64_t splitmix64(std::uint64_t& z) {
    z += 0x9E3779B97F4A7C15ULL;
    std::uint64_t r = z;
    r = (r ^ (r >> 30)) * 0xBF58476D1CE4E5B9ULL;
    r = (r ^ (r >> 27)) * 0x94D049BB133111EBULL;
    return r ^ (r >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t state_[4]{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace skill
