#pragma once

// Random Zipf instances shared by the exact-algorithm tests and the
// acceptance suite.

#include "oracle.hpp"
#include "wavehist/cluster.hpp"
#include "wavehist/dataset.hpp"

#include <random>

namespace testing {

struct Instance {
  wavehist::Dataset data;
  std::vector<wavehist::SplitDescriptor> splits;
  wavehist::CountVector v;
  std::size_t k = 1;
  double alpha = 0;
};

inline Instance make_instance(std::uint64_t n, std::uint64_t u, std::size_t m, double alpha,
                              std::size_t k, std::uint64_t seed) {
  const auto keys = wavehist::zipf_keys({n, u, alpha, seed});
  auto data = wavehist::Dataset::from_keys(keys, u);
  auto splits = wavehist::partition_dataset(data.meta(), (n + m - 1) / m);
  auto v = wavehist::build_frequency_vector(keys, data.u());
  return {std::move(data), std::move(splits), std::move(v), k, alpha};
}

/// u in 2^4..2^10, n <= 1e5, m in 2..16, alpha in {0, 0.8, 1.1, 1.4}, k in 1..10.
inline Instance random_instance(std::mt19937_64& gen) {
  static constexpr double kAlphas[] = {0.0, 0.8, 1.1, 1.4};
  const std::uint64_t u = std::uint64_t{1} << std::uniform_int_distribution<int>(4, 10)(gen);
  const std::size_t m = std::uniform_int_distribution<std::size_t>(2, 16)(gen);
  const std::uint64_t n = std::uniform_int_distribution<std::uint64_t>(m, 100000)(gen);
  const double alpha = kAlphas[gen() % 4];
  const std::size_t k = std::uniform_int_distribution<std::size_t>(1, 10)(gen);
  return make_instance(n, u, m, alpha, k, gen());
}

}  // namespace testing
