#pragma once

// One-round sampling estimators of the frequency vector, followed by a
// centralized transform and top-k on the estimate.
//
// Every split takes a first-level sample at rate p = 1/(eps^2 n). Then:
//   basic-s     ships every sampled key with its sample count;
//   improved-s  ships only keys with s_j(x) >= eps * t_j (biased);
//   twolevel-s  ships s_j(x) when s_j(x) >= 1/(eps sqrt(m)), otherwise a
//               presence marker with probability eps sqrt(m) s_j(x), and the
//               reducer estimates s(x) = rho(x) + M / (eps sqrt(m)).

#include "wavehist/cluster.hpp"
#include "wavehist/dataset.hpp"
#include "wavehist/random.hpp"
#include "wavehist/wavelet.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace wavehist {

inline const std::string kBasicS = "basic-s";
inline const std::string kImprovedS = "improved-s";
inline const std::string kTwoLevelS = "twolevel-s";

struct SamplingParams {
  double epsilon = 0.02;
  std::uint64_t seed = 1;
  SampleMode mode = SampleMode::noreplace;
};

struct ApproxResult {
  TopK topk;
  Eigen::VectorXd v_hat;  // estimated frequency vector
  double p = 1.0;         // first-level sampling rate used
};

ApproxResult basic_sampling(const Dataset& data, std::span<SplitDescriptor> splits,
                            std::size_t k, const SamplingParams& params, CommLedger& ledger,
                            const JobOptions& options = {});

ApproxResult improved_sampling(const Dataset& data, std::span<SplitDescriptor> splits,
                               std::size_t k, const SamplingParams& params, CommLedger& ledger,
                               const JobOptions& options = {});

ApproxResult twolevel_sampling(const Dataset& data, std::span<SplitDescriptor> splits,
                               std::size_t k, const SamplingParams& params, CommLedger& ledger,
                               const JobOptions& options = {});

/// Keys a split sends under improved sampling: s_j(x) >= eps * t_j.
std::vector<KeyCount> improved_filter(std::span<const KeyCount> sample, std::uint64_t sampled,
                                      double epsilon);

enum class TwoLevelKind { exact, presence };

struct TwoLevelEmission {
  std::uint32_t key;
  TwoLevelKind kind;
  std::uint64_t count;  // s_j(x) for exact, 0 for presence

  friend bool operator==(const TwoLevelEmission&, const TwoLevelEmission&) = default;
};

/// 1 / (eps sqrt(m)).
double twolevel_threshold(double epsilon, std::size_t m);

/// Second-level sampling of one split's sample counts.
std::vector<TwoLevelEmission> twolevel_map(std::span<const KeyCount> sample, double epsilon,
                                           std::size_t m, Rng& rng);

/// Reducer state for one key: exact partial sum rho and presence count M.
class EstimatorState {
 public:
  EstimatorState(double epsilon, std::size_t m);

  /// A count of 0 is a presence marker. A split may contribute once per key.
  void add(std::uint32_t source, std::uint64_t count);

  double rho() const { return rho_; }
  std::uint64_t presence() const { return presence_; }
  /// rho + M / (eps sqrt(m))
  double estimate() const;

 private:
  double epsilon_;
  std::size_t m_;
  double rho_ = 0.0;
  std::uint64_t presence_ = 0;
  std::vector<std::uint32_t> sources_;
};

/// v_hat(x) = (rho(x) + M(x) / (eps sqrt(m))) / p from mapper emissions
/// (Count32 payloads); keys never emitted estimate to 0.
Eigen::VectorXd twolevel_estimate(std::span<const Emission> emissions, std::uint64_t u,
                                  double epsilon, std::size_t m, double p);

/// Bound on Var[w_hat_i] for a detail coefficient i >= 2 at level j:
/// eps 2^j n / (u sqrt(m)) * sum of s(x) over the support of psi_i.
double coeff_variance_bound(std::uint64_t index, const Eigen::Ref<const Eigen::VectorXd>& sample,
                            double epsilon, std::size_t m, std::uint64_t n);

}  // namespace wavehist
