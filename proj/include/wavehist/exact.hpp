#pragma once

// Exact best-k wavelet histograms over a simulated cluster.
//
//   send_v     mappers ship local frequency vectors; one round.
//   send_coef  mappers ship local non-zero coefficients; one round.
//   hwtopk     three-round threshold protocol on signed local coefficients,
//              pruning candidates by bounds on |w_i|.

#include "wavehist/cluster.hpp"
#include "wavehist/dataset.hpp"
#include "wavehist/wavelet.hpp"

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace wavehist {

inline const std::string kSendV = "send-v";
inline const std::string kSendCoef = "send-coef";
inline const std::string kHWTopk = "h-wtopk";

/// Raised when the coordinator detects an inconsistent protocol state.
class ProtocolError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

TopK send_v(const Dataset& data, std::span<SplitDescriptor> splits, std::size_t k,
            CommLedger& ledger, const JobOptions& options = {});

TopK send_coef(const Dataset& data, std::span<SplitDescriptor> splits, std::size_t k,
               CommLedger& ledger, const JobOptions& options = {});

/// Coordinator-side record of one coefficient index.
struct ItemState {
  std::uint32_t index = 0;
  double w_hat = 0.0;              // sum of received local scores
  std::vector<bool> missing;       // F(j): split j has not sent its score
  double tau_plus = 0.0;           // upper bound on w_i
  double tau_minus = 0.0;          // lower bound on w_i
  double tau = 0.0;                // lower bound on |w_i|
  double tau_prime = 0.0;          // upper bound on |w_i|

  ItemState() = default;
  ItemState(std::uint32_t idx, std::size_t m) : index(idx), missing(m, true) {}

  void receive(std::uint32_t split_id, double value);
  std::size_t missing_count() const;
};

/// tau = 0 when the bounds straddle zero, else min(|tau+|, |tau-|).
double magnitude_lower_bound(double tau_plus, double tau_minus);

/// tau+ = w_hat + sum over missing j of high[j], tau- likewise with low[j];
/// refreshes tau and tau'. high/low are indexed by split id - 1.
void tau_bounds(ItemState& item, std::span<const double> high, std::span<const double> low);

/// k-th largest tau among the items; 0 when there are fewer than k.
double threshold_T(std::span<const ItemState> items, std::size_t k);

/// Local coefficients a split sends in Round 2: |w| > t1 / m and not already
/// sent. `already_sent` must be sorted ascending.
std::vector<Coefficient> round2_filter(std::span<const Coefficient> local, double t1,
                                       std::size_t m,
                                       std::span<const std::uint32_t> already_sent);

/// True when the item cannot reach the top-k: tau' < t2 (with a tiny slack so
/// rounding never removes a tied item).
bool prunable(const ItemState& item, double t2);

struct PruneResult {
  std::vector<ItemState> survivors;
  std::vector<std::uint32_t> pruned;
  double t2 = 0.0;
};

/// Round-2 refinement: every split that has not sent an item's score is
/// bounded by +-t1/m, intersected with its Round-1 k-th marks when given
/// (`kth_high` / `kth_low` empty means "t1/m only"). Returns T2 and the items
/// with tau' >= T2.
PruneResult refine_and_prune(std::vector<ItemState> items, double t1, std::size_t m,
                             std::size_t k, std::span<const double> kth_high = {},
                             std::span<const double> kth_low = {});

/// What a split sends in Round 1: its k highest and k lowest local scores, the
/// k-th of each marked. When fewer than k scores are above (below) zero and the
/// split has implicit zero coefficients, the mark is absent and the bound is 0.
struct LocalExtremes {
  std::vector<Coefficient> sent;   // ascending index, distinct
  std::vector<CoefTag> tags;       // parallel to `sent`
  double kth_high = 0.0;
  double kth_low = 0.0;
};

LocalExtremes select_local_extremes(std::span<const Coefficient> local, std::size_t k,
                                    std::uint64_t u);

/// Coordinator view of an H-WTopk run, for verification.
struct HWTopkTrace {
  double t1 = 0.0;
  double t2 = 0.0;
  std::vector<ItemState> after_round1;   // bounds used for T1
  std::vector<ItemState> after_round2;   // refined bounds used for T2
  std::vector<std::uint32_t> candidates;  // R after pruning, ascending
  std::vector<std::uint32_t> pruned;
};

TopK hwtopk(const Dataset& data, std::span<SplitDescriptor> splits, std::size_t k,
            CommLedger& ledger, const JobOptions& options = {}, HWTopkTrace* trace = nullptr);

}  // namespace wavehist
