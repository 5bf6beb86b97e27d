#pragma once

// Haar wavelet transforms over dyadic key domains.
//
// Coefficient i (1-based) follows the basis indexing i = 2^j + k + 1: i = 1 is
// the scaled overall average, and for level j in [0, log u) and block
// k in [0, 2^j) the detail coefficient is
//
//   w_i = (S_right - S_left) / sqrt(u / 2^j)
//
// where S_left / S_right are the sums of the two halves of block k. Position
// i - 1 of a dense coefficient vector holds w_i; position x - 1 of a frequency
// vector holds v(x).
//
// Every routine here computes details as (block-sum difference) * level scale,
// so the dense and sparse paths produce bit-identical values on integer input.

#include <Eigen/Core>

#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace wavehist {

using CountVector = Eigen::Matrix<std::int64_t, Eigen::Dynamic, 1>;
using CountGrid = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using CoeffVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using CoeffGrid = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// One wavelet coefficient addressed by its 1-based basis index.
struct Coefficient {
  std::uint32_t index;
  double value;

  friend bool operator==(const Coefficient&, const Coefficient&) = default;
};

using SparseCoefficients = std::vector<Coefficient>;

/// A key with a positive multiplicity, input to the sparse transform.
struct KeyCount {
  std::uint32_t key;
  std::uint64_t count;

  friend bool operator==(const KeyCount&, const KeyCount&) = default;
};

/// Best k-term representation: entries sorted by |value| descending, ties on
/// magnitude resolved by smaller index.
struct TopK {
  std::size_t k = 0;
  std::vector<Coefficient> entries;
};

/// Coefficients with |w| below this are exact zeros for emission purposes.
inline constexpr double kZeroThreshold = 1e-12;

inline bool is_power_of_two(std::uint64_t u) { return u >= 2 && std::has_single_bit(u); }

inline std::uint64_t next_power_of_two(std::uint64_t u) {
  return u <= 2 ? 2 : std::bit_ceil(u);
}

inline unsigned log2_domain(std::uint64_t u) { return static_cast<unsigned>(std::countr_zero(u)); }

inline void require_dyadic(std::uint64_t u, const char* what) {
  if (!is_power_of_two(u)) {
    throw std::invalid_argument(std::string(what) + ": domain size " + std::to_string(u) +
                                " is not a power of two >= 2 (pad the domain first)");
  }
}

/// 1 / sqrt(u / 2^j): the normalization of detail level j.
inline double level_scale(std::uint64_t u, unsigned level) {
  return 1.0 / std::sqrt(static_cast<double>(u >> level));
}

/// Key range [first, last] (1-based, inclusive) covered by basis vector i, with
/// the level j of a detail coefficient. For i = 1 the level is -1 and the range
/// is the whole domain.
struct BasisSupport {
  int level;
  std::uint32_t block;
  std::uint64_t first;
  std::uint64_t last;
};

BasisSupport coefficient_support(std::uint64_t index, std::uint64_t u);

/// Dense O(u) transform. Accepts any Eigen column vector; the result scalar is
/// chosen independently of the input (integer counts in, doubles out).
template <typename Scalar = double, typename Derived>
CoeffVector<Scalar> haar_transform(const Eigen::MatrixBase<Derived>& v) {
  const auto u = static_cast<std::uint64_t>(v.size());
  require_dyadic(u, "haar_transform");
  const unsigned levels = log2_domain(u);

  CoeffVector<Scalar> out(v.size());
  CoeffVector<Scalar> sums = v.template cast<Scalar>();
  for (unsigned step = 0; step < levels; ++step) {
    const unsigned level = levels - 1 - step;
    const std::uint64_t blocks = std::uint64_t{1} << level;
    const Scalar scale = static_cast<Scalar>(level_scale(u, level));
    for (std::uint64_t k = 0; k < blocks; ++k) {
      const Scalar left = sums(2 * k);
      const Scalar right = sums(2 * k + 1);
      out(blocks + k) = (right - left) * scale;
      sums(k) = left + right;
    }
  }
  out(0) = sums(0) * static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(u)));
  return out;
}

/// Inverse of haar_transform: returns the real-valued signal sum_i w_i psi_i.
template <typename Derived>
CoeffVector<typename Derived::Scalar> inverse_haar_transform(const Eigen::MatrixBase<Derived>& w) {
  using Scalar = typename Derived::Scalar;
  const auto u = static_cast<std::uint64_t>(w.size());
  require_dyadic(u, "inverse_haar_transform");
  const unsigned levels = log2_domain(u);

  // sums(k) holds the total of block k at the current level.
  CoeffVector<Scalar> sums(w.size());
  sums(0) = w(0) * static_cast<Scalar>(std::sqrt(static_cast<double>(u)));
  for (unsigned level = 0; level < levels; ++level) {
    const std::uint64_t blocks = std::uint64_t{1} << level;
    const Scalar unscale = static_cast<Scalar>(std::sqrt(static_cast<double>(u >> level)));
    for (std::uint64_t k = blocks; k-- > 0;) {
      const Scalar total = sums(k);
      const Scalar diff = w(blocks + k) * unscale;
      sums(2 * k) = (total - diff) / Scalar(2);
      sums(2 * k + 1) = (total + diff) / Scalar(2);
    }
  }
  return sums;
}

/// Row transforms, then column transforms of the row coefficients.
template <typename Scalar = double, typename Derived>
CoeffGrid<Scalar> haar_transform_2d(const Eigen::MatrixBase<Derived>& grid) {
  if (grid.rows() != grid.cols()) {
    throw std::invalid_argument("haar_transform_2d: grid must be square");
  }
  require_dyadic(static_cast<std::uint64_t>(grid.rows()), "haar_transform_2d");

  CoeffGrid<Scalar> out(grid.rows(), grid.cols());
  for (Eigen::Index r = 0; r < grid.rows(); ++r) {
    out.row(r) = haar_transform<Scalar>(grid.row(r).transpose()).transpose();
  }
  for (Eigen::Index c = 0; c < grid.cols(); ++c) {
    out.col(c) = haar_transform<Scalar>(out.col(c));
  }
  return out;
}

/// Sparse transform in O(|entries| log u) time and O(log u) working memory
/// beyond the output. Keys must be distinct and in [1, u]; counts positive.
/// Exact zeros (|w| < kZeroThreshold) are omitted; output sorted by index.
SparseCoefficients haar_transform_sparse(std::span<const KeyCount> entries, std::uint64_t u);

/// Scatter a sparse coefficient list into a dense vector of size u.
Eigen::VectorXd densify(std::span<const Coefficient> coeffs, std::uint64_t u);

/// True when two magnitudes count as equal for top-k ordering.
bool magnitudes_tied(double a, double b);

/// k coefficients of largest magnitude from a dense vector (zeros included, so
/// k >= u returns all u).
TopK select_top_k(const Eigen::Ref<const Eigen::VectorXd>& coeffs, std::size_t k);

/// k coefficients of largest magnitude among the listed entries.
TopK select_top_k(std::span<const Coefficient> coeffs, std::size_t k);

/// Signal reconstructed from the retained coefficients (all others zero).
Eigen::VectorXd reconstruct(const TopK& top, std::uint64_t u);

/// Sum of squared differences between the true counts and a reconstruction.
template <typename DerivedV, typename DerivedR>
double compute_sse(const Eigen::MatrixBase<DerivedV>& v, const Eigen::MatrixBase<DerivedR>& r) {
  if (v.size() != r.size()) {
    throw std::invalid_argument("compute_sse: length mismatch (" + std::to_string(v.size()) +
                                " vs " + std::to_string(r.size()) + ")");
  }
  return (v.template cast<double>() - r.template cast<double>()).squaredNorm();
}

/// Zero-pad a frequency vector to the next power of two (no-op when dyadic).
CountVector pad_to_power_of_two(const CountVector& v);

}  // namespace wavehist
