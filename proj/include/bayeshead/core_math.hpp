#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "bayeshead/error.hpp"

namespace bayeshead {

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    require(data_.size() == rows_ * cols_, ErrorKind::shape,
            "matrix data length " + std::to_string(data_.size()) + " != " +
                std::to_string(rows_) + "x" + std::to_string(cols_));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), ErrorKind::shape,
          "matmul inner dimensions " + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()));
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  return out;
}

inline std::vector<double> softmax(std::span<const double> logits) {
  require(!logits.empty(), ErrorKind::invalid_input, "softmax of empty vector");
  double peak = logits[0];
  for (double v : logits) {
    require(std::isfinite(v), ErrorKind::invalid_input, "softmax of non-finite logit");
    peak = std::max(peak, v);
  }
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

// log(sum(exp(v))), finite inputs assumed.
inline double log_sum_exp(std::span<const double> values) {
  double peak = values[0];
  for (double v : values) peak = std::max(peak, v);
  double total = 0.0;
  for (double v : values) total += std::exp(v - peak);
  return peak + std::log(total);
}

inline double softplus(double x) {
  require(std::isfinite(x), ErrorKind::invalid_input, "softplus of non-finite value");
  // softplus(x) = x + softplus(-x) keeps exp() from overflowing.
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus_inverse(double y) {
  require(y > 0.0 && std::isfinite(y), ErrorKind::invalid_input, "softplus_inverse needs y > 0");
  // log(exp(y) - 1) = y + log(1 - exp(-y))
  return y + std::log(-std::expm1(-y));
}

namespace detail {

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
constexpr std::uint64_t kStreamGamma = 0xd1b54a32d192ed03ULL;

}  // namespace detail

// Counter-based random stream. Output k is a pure function of
// (seed, stream_id, k), so a stream can be recreated anywhere from its three
// fields and child streams can be handed out by index.
struct RngStream {
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
  std::uint64_t counter = 0;

  RngStream() = default;
  RngStream(std::uint64_t seed_, std::uint64_t stream_id_, std::uint64_t counter_ = 0)
      : seed(seed_), stream_id(stream_id_), counter(counter_) {}

  std::uint64_t next_u64() noexcept {
    const std::uint64_t key = detail::mix64(seed + detail::kGolden);
    const std::uint64_t lane =
        detail::mix64(stream_id * detail::kStreamGamma + std::rotl(key, 32) + detail::kStreamGamma);
    return detail::mix64(detail::mix64(counter++ * detail::kGolden + key) + lane);
  }

  // Uniform on the open interval (0, 1).
  double uniform() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Uniform integer in [0, n) by rejection, n >= 1.
  std::uint64_t uniform_index(std::uint64_t n) noexcept {
    const std::uint64_t limit = (~std::uint64_t{0}) - (~std::uint64_t{0}) % n;
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % n;
  }

  // Box-Muller; each variate consumes two counter steps.
  double normal() noexcept {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Independent child stream, identified by (seed, stream_id, index).
  RngStream split(std::uint64_t index) const noexcept {
    return RngStream(seed, detail::mix64(stream_id ^ detail::mix64(index + detail::kGolden)), 0);
  }

  friend bool operator==(const RngStream&, const RngStream&) = default;
};

inline std::vector<double> rng_normal(RngStream& stream, std::size_t n) {
  require(n >= 1, ErrorKind::invalid_input, "rng_normal needs n >= 1");
  std::vector<double> out(n);
  for (double& v : out) v = stream.normal();
  return out;
}

// Fisher-Yates with the library's own index draws, so permutations do not
// depend on the standard library implementation.
inline std::vector<std::size_t> permutation(std::size_t n, RngStream& stream) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(stream.uniform_index(i));
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

inline bool all_finite(std::span<const double> v) noexcept {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace bayeshead
