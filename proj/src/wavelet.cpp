#include "wavehist/wavelet.hpp"

#include <algorithm>
#include <cmath>

namespace wavehist {

BasisSupport coefficient_support(std::uint64_t index, std::uint64_t u) {
  require_dyadic(u, "coefficient_support");
  if (index < 1 || index > u) {
    throw std::out_of_range("coefficient index " + std::to_string(index) + " outside [1, " +
                            std::to_string(u) + "]");
  }
  if (index == 1) return {-1, 0, 1, u};
  const auto level = static_cast<unsigned>(std::bit_width(index - 1) - 1);
  const std::uint64_t block = (index - 1) - (std::uint64_t{1} << level);
  const std::uint64_t width = u >> level;
  return {static_cast<int>(level), static_cast<std::uint32_t>(block), block * width + 1,
          (block + 1) * width};
}

SparseCoefficients haar_transform_sparse(std::span<const KeyCount> entries, std::uint64_t u) {
  require_dyadic(u, "haar_transform_sparse");
  const unsigned levels = log2_domain(u);

  std::vector<KeyCount> sorted(entries.begin(), entries.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const KeyCount& a, const KeyCount& b) { return a.key < b.key; });
  for (std::size_t n = 0; n < sorted.size(); ++n) {
    const auto& e = sorted[n];
    if (e.key < 1 || e.key > u) {
      throw std::out_of_range("haar_transform_sparse: key " + std::to_string(e.key) +
                              " outside [1, " + std::to_string(u) + "]");
    }
    if (e.count == 0) {
      throw std::invalid_argument("haar_transform_sparse: key " + std::to_string(e.key) +
                                  " has zero count");
    }
    if (n > 0 && sorted[n - 1].key == e.key) {
      throw std::invalid_argument("haar_transform_sparse: duplicate key " +
                                  std::to_string(e.key));
    }
  }

  SparseCoefficients out;
  if (sorted.empty()) return out;

  // One open block per level: keys arrive ascending, so a block is complete
  // as soon as a key falls outside it.
  struct OpenBlock {
    std::uint64_t block = 0;
    double diff = 0.0;
    bool active = false;
  };
  std::vector<OpenBlock> open(levels);
  double total = 0.0;

  auto flush = [&](unsigned level) {
    auto& ob = open[level];
    if (!ob.active) return;
    const double w = ob.diff * level_scale(u, level);
    if (std::abs(w) >= kZeroThreshold) {
      out.push_back({static_cast<std::uint32_t>((std::uint64_t{1} << level) + ob.block + 1), w});
    }
    ob = OpenBlock{};
  };

  for (const auto& e : sorted) {
    const std::uint64_t pos = e.key - 1;
    const auto c = static_cast<double>(e.count);
    total += c;
    for (unsigned level = 0; level < levels; ++level) {
      const std::uint64_t block = pos >> (levels - level);
      auto& ob = open[level];
      if (ob.active && ob.block != block) flush(level);
      ob.active = true;
      ob.block = block;
      const bool right = ((pos >> (levels - level - 1)) & 1U) != 0;
      ob.diff += right ? c : -c;
    }
  }
  for (unsigned level = 0; level < levels; ++level) flush(level);

  const double average = total * (1.0 / std::sqrt(static_cast<double>(u)));
  if (std::abs(average) >= kZeroThreshold) out.push_back({1, average});

  std::sort(out.begin(), out.end(),
            [](const Coefficient& a, const Coefficient& b) { return a.index < b.index; });
  return out;
}

Eigen::VectorXd densify(std::span<const Coefficient> coeffs, std::uint64_t u) {
  require_dyadic(u, "densify");
  Eigen::VectorXd dense = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(u));
  for (const auto& c : coeffs) {
    if (c.index < 1 || c.index > u) {
      throw std::out_of_range("densify: coefficient index " + std::to_string(c.index) +
                              " outside [1, " + std::to_string(u) + "]");
    }
    dense(c.index - 1) += c.value;
  }
  return dense;
}

bool magnitudes_tied(double a, double b) {
  const double ma = std::abs(a);
  const double mb = std::abs(b);
  return std::abs(ma - mb) <= 1e-9 * std::max(ma, mb) + kZeroThreshold;
}

namespace {

// Orders candidates by magnitude, then re-sorts each run of tied magnitudes by
// index. Runs are formed greedily between neighbours, which keeps the result
// deterministic even though "tied" is not transitive.
void order_by_magnitude(std::vector<Coefficient>& c) {
  std::sort(c.begin(), c.end(), [](const Coefficient& a, const Coefficient& b) {
    const double ma = std::abs(a.value);
    const double mb = std::abs(b.value);
    if (ma != mb) return ma > mb;
    return a.index < b.index;
  });
  std::size_t run = 0;
  for (std::size_t n = 1; n <= c.size(); ++n) {
    if (n == c.size() || !magnitudes_tied(c[n - 1].value, c[n].value)) {
      std::sort(c.begin() + static_cast<std::ptrdiff_t>(run),
                c.begin() + static_cast<std::ptrdiff_t>(n),
                [](const Coefficient& a, const Coefficient& b) { return a.index < b.index; });
      run = n;
    }
  }
}

TopK top_k_of(std::vector<Coefficient> candidates, std::size_t k) {
  TopK top{k, {}};
  if (k == 0 || candidates.empty()) return top;

  if (candidates.size() > k) {
    // Keep everything that could be tied with the k-th magnitude, then order
    // only those.
    std::vector<double> mags(candidates.size());
    std::transform(candidates.begin(), candidates.end(), mags.begin(),
                   [](const Coefficient& c) { return std::abs(c.value); });
    std::nth_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(k - 1), mags.end(),
                     std::greater<>());
    const double kth = mags[k - 1];
    const double floor = kth * (1.0 - 1e-6) - 1e-9;
    std::erase_if(candidates, [&](const Coefficient& c) { return std::abs(c.value) < floor; });
  }
  order_by_magnitude(candidates);
  if (candidates.size() > k) candidates.resize(k);
  top.entries = std::move(candidates);
  return top;
}

}  // namespace

TopK select_top_k(const Eigen::Ref<const Eigen::VectorXd>& coeffs, std::size_t k) {
  std::vector<Coefficient> all(static_cast<std::size_t>(coeffs.size()));
  for (Eigen::Index n = 0; n < coeffs.size(); ++n) {
    all[static_cast<std::size_t>(n)] = {static_cast<std::uint32_t>(n + 1), coeffs(n)};
  }
  return top_k_of(std::move(all), k);
}

TopK select_top_k(std::span<const Coefficient> coeffs, std::size_t k) {
  return top_k_of({coeffs.begin(), coeffs.end()}, k);
}

Eigen::VectorXd reconstruct(const TopK& top, std::uint64_t u) {
  return inverse_haar_transform(densify(top.entries, u));
}

CountVector pad_to_power_of_two(const CountVector& v) {
  const auto u = next_power_of_two(static_cast<std::uint64_t>(v.size()));
  if (u == static_cast<std::uint64_t>(v.size())) return v;
  CountVector padded = CountVector::Zero(static_cast<Eigen::Index>(u));
  padded.head(v.size()) = v;
  return padded;
}

}  // namespace wavehist
