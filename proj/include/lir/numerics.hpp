#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "lir/errors.hpp"

namespace lir {

/// Dense row-major matrix.
template <typename T>
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<T> data;

  Mat() = default;
  Mat(int r, int c, T fill = T{}) : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {}

  T& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  const T& operator()(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

  std::span<T> row(int r) { return {data.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)}; }
  std::span<const T> row(int r) const {
    return {data.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)};
  }
};

using MatF = Mat<float>;
using MatD = Mat<double>;

enum class Modality { text, video };

inline const char* modality_name(Modality m) noexcept {
  return m == Modality::text ? "text" : "video";
}

/// One item's token sequence: N x D feature rows plus a validity mask (1 = valid).
struct TokenMatrix {
  uint32_t id = 0;
  MatF tokens;
  std::vector<uint8_t> mask;
  Modality modality = Modality::video;

  int n() const { return tokens.rows; }
  int dim() const { return tokens.cols; }

  int valid_count() const {
    int c = 0;
    for (uint8_t m : mask) c += m ? 1 : 0;
    return c;
  }

  int first_valid() const {
    for (int i = 0; i < n(); ++i)
      if (mask[i]) return i;
    return -1;
  }

  void validate() const {
    require(tokens.rows >= 1 && tokens.cols >= 1, errc::shape_mismatch, "token matrix must be N>=1 x D>=1");
    require(mask.size() == static_cast<size_t>(tokens.rows), errc::shape_mismatch, "mask length != N");
    require(first_valid() >= 0, errc::all_masked, "token matrix has no valid rows");
  }
};

/// Deterministic random stream. All randomized operations in the library draw
/// from this wrapper only, so a seed fixes every generated byte regardless of
/// the standard library's distribution internals.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  /// Uniform in [lo, hi). 53-bit resolution.
  double uniform(double lo = 0.0, double hi = 1.0) {
    double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
  }

  /// Standard normal via Box-Muller.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  /// Uniform integer in [0, n).
  uint64_t below(uint64_t n) { return engine_() % n; }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

/// Derives an independent stream seed from a base seed and a tag (splitmix64).
inline uint64_t mix_seed(uint64_t seed, uint64_t tag) {
  uint64_t z = seed + 0x9E3779B97F4A7C15ull * (tag + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

constexpr double kZeroNormEps = 1e-12;

/// Scales every valid row to unit Euclidean norm and zeroes masked rows.
/// Throws ZeroNormRow if a valid row is (numerically) zero.
inline void l2_normalize_rows_inplace(TokenMatrix& m) {
  m.validate();
  for (int i = 0; i < m.n(); ++i) {
    auto row = m.tokens.row(i);
    if (!m.mask[i]) {
      for (float& x : row) x = 0.0f;
      continue;
    }
    double sq = 0.0;
    for (float x : row) sq += static_cast<double>(x) * x;
    double norm = std::sqrt(sq);
    require(norm > kZeroNormEps, errc::zero_norm_row,
            "valid row " + std::to_string(i) + " has near-zero norm");
    for (float& x : row) x = static_cast<float>(x / norm);
  }
}

inline TokenMatrix l2_normalize_rows(TokenMatrix m) {
  l2_normalize_rows_inplace(m);
  return m;
}

/// Softmax over the valid entries; masked entries come back as exact zeros.
inline std::vector<double> masked_softmax(std::span<const double> logits,
                                          std::span<const uint8_t> mask) {
  require(logits.size() == mask.size(), errc::shape_mismatch, "logits/mask length mismatch");
  double maxv = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < logits.size(); ++i)
    if (mask[i] && logits[i] > maxv) maxv = logits[i];
  require(maxv > -std::numeric_limits<double>::infinity(), errc::all_masked,
          "masked_softmax: no valid entries");

  std::vector<double> out(logits.size(), 0.0);
  double sum = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    if (!mask[i]) continue;
    out[i] = std::exp(logits[i] - maxv);
    sum += out[i];
  }
  for (size_t i = 0; i < logits.size(); ++i)
    if (mask[i]) out[i] /= sum;
  return out;
}

/// Shifts and scales each column to mean 0 and population standard deviation 1.
/// Population std (divide by B, not B-1): a perfectly correlated channel pair
/// then has cross-correlation exactly 1, so the decorrelation penalty can
/// actually reach zero.
inline MatD batch_standardize_columns(const MatD& m) {
  require(m.rows >= 2, errc::shape_mismatch, "standardization needs at least 2 rows");
  MatD out(m.rows, m.cols);
  for (int c = 0; c < m.cols; ++c) {
    double mean = 0.0;
    for (int r = 0; r < m.rows; ++r) mean += m(r, c);
    mean /= m.rows;
    double var = 0.0;
    for (int r = 0; r < m.rows; ++r) {
      double d = m(r, c) - mean;
      var += d * d;
    }
    var /= m.rows;
    double sd = std::sqrt(var);
    require(sd > kZeroNormEps, errc::degenerate_column,
            "column " + std::to_string(c) + " is constant");
    for (int r = 0; r < m.rows; ++r) out(r, c) = (m(r, c) - mean) / sd;
  }
  return out;
}

}  // namespace lir
