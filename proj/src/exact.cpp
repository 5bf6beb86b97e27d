#include "wavehist/exact.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace wavehist {

namespace {

void require_split_ids(std::span<const SplitDescriptor> splits) {
  for (std::size_t j = 0; j < splits.size(); ++j) {
    if (splits[j].id != j + 1) {
      throw std::invalid_argument("splits must carry ids 1..m in order (split at position " +
                                  std::to_string(j) + " has id " +
                                  std::to_string(splits[j].id) + ")");
    }
  }
}

SparseCoefficients local_coefficients(const Dataset& data, const SplitDescriptor& split) {
  const auto keys = data.read_split(split);
  return haar_transform_sparse(count_keys(keys), data.u());
}

// Split state between H-WTopk rounds: coefficients not yet sent and the indices
// already sent.
struct SplitState {
  std::vector<Coefficient> unsent;   // ascending index
  std::vector<std::uint32_t> sent;   // ascending

  std::vector<std::byte> encode() const {
    ByteWriter w;
    w.u32(static_cast<std::uint32_t>(unsent.size()));
    for (const auto& c : unsent) {
      w.u32(c.index);
      w.f64(c.value);
    }
    w.u32(static_cast<std::uint32_t>(sent.size()));
    for (auto i : sent) w.u32(i);
    return w.take();
  }

  static SplitState decode(std::span<const std::byte> blob) {
    ByteReader r(blob);
    SplitState s;
    s.unsent.resize(r.u32());
    for (auto& c : s.unsent) {
      c.index = r.u32();
      c.value = r.f64();
    }
    s.sent.resize(r.u32());
    for (auto& i : s.sent) i = r.u32();
    if (!r.done()) throw std::runtime_error("split state has trailing bytes");
    return s;
  }
};

bool has_flag(CoefTag tag, CoefTag flag) {
  return (static_cast<unsigned>(tag) & static_cast<unsigned>(flag)) != 0;
}

double prune_slack(double t) { return 1e-9 * std::abs(t) + kZeroThreshold; }

}  // namespace

TopK send_v(const Dataset& data, std::span<SplitDescriptor> splits, std::size_t k,
            CommLedger& ledger, const JobOptions& options) {
  const auto u = data.u();
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(u));

  auto map = [&](const SplitDescriptor& split, std::span<const std::byte>, MapContext& ctx) {
    for (const auto& kc : count_keys(data.read_split(split))) {
      ctx.emit(kc.key, Count32{static_cast<std::uint32_t>(kc.count)});
    }
  };
  auto reduce = [&](std::uint32_t key, std::span<const Emission> group) {
    if (key < 1 || key > u) throw std::out_of_range("send-v: key out of domain");
    for (const auto& e : group) v(key - 1) += std::get<Count32>(e.value).count;
  };
  JobRunner(options).run(splits, {kSendV, 1, {}}, map, reduce, ledger);
  return select_top_k(haar_transform(v), k);
}

TopK send_coef(const Dataset& data, std::span<SplitDescriptor> splits, std::size_t k,
               CommLedger& ledger, const JobOptions& options) {
  const auto u = data.u();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(u));

  auto map = [&](const SplitDescriptor& split, std::span<const std::byte>, MapContext& ctx) {
    for (const auto& c : local_coefficients(data, split)) ctx.emit(c.index, Coef{c.value});
  };
  auto reduce = [&](std::uint32_t index, std::span<const Emission> group) {
    if (index < 1 || index > u) throw std::out_of_range("send-coef: index out of domain");
    for (const auto& e : group) w(index - 1) += std::get<Coef>(e.value).value;
  };
  JobRunner(options).run(splits, {kSendCoef, 1, {}}, map, reduce, ledger);
  return select_top_k(w, k);
}

void ItemState::receive(std::uint32_t split_id, double value) {
  if (split_id < 1 || split_id > missing.size()) {
    throw ProtocolError("score for item " + std::to_string(index) + " from unknown split " +
                        std::to_string(split_id));
  }
  if (!missing[split_id - 1]) {
    throw ProtocolError("split " + std::to_string(split_id) + " sent item " +
                        std::to_string(index) + " twice");
  }
  missing[split_id - 1] = false;
  w_hat += value;
}

std::size_t ItemState::missing_count() const {
  return static_cast<std::size_t>(std::count(missing.begin(), missing.end(), true));
}

double magnitude_lower_bound(double tau_plus, double tau_minus) {
  if ((tau_plus > 0.0 && tau_minus < 0.0) || (tau_plus < 0.0 && tau_minus > 0.0)) return 0.0;
  return std::min(std::abs(tau_plus), std::abs(tau_minus));
}

void tau_bounds(ItemState& item, std::span<const double> high, std::span<const double> low) {
  if (high.size() != item.missing.size() || low.size() != item.missing.size()) {
    throw std::invalid_argument("tau_bounds: need one bound per split");
  }
  double plus = item.w_hat;
  double minus = item.w_hat;
  for (std::size_t j = 0; j < item.missing.size(); ++j) {
    if (!item.missing[j]) continue;
    plus += high[j];
    minus += low[j];
  }
  item.tau_plus = plus;
  item.tau_minus = minus;
  item.tau = magnitude_lower_bound(plus, minus);
  item.tau_prime = std::max(std::abs(plus), std::abs(minus));
}

double threshold_T(std::span<const ItemState> items, std::size_t k) {
  if (k == 0 || items.size() < k) return 0.0;
  std::vector<double> taus(items.size());
  std::transform(items.begin(), items.end(), taus.begin(),
                 [](const ItemState& it) { return it.tau; });
  std::nth_element(taus.begin(), taus.begin() + static_cast<std::ptrdiff_t>(k - 1), taus.end(),
                   std::greater<>());
  return taus[k - 1];
}

std::vector<Coefficient> round2_filter(std::span<const Coefficient> local, double t1,
                                       std::size_t m,
                                       std::span<const std::uint32_t> already_sent) {
  if (m == 0) throw std::invalid_argument("round2_filter: m must be >= 1");
  if (t1 < 0.0) throw std::invalid_argument("round2_filter: T1 must be >= 0");
  // Shaving a relative 1e-9 off the cut keeps rounding on the safe side.
  const double cut = t1 / static_cast<double>(m) * (1.0 - 1e-9);
  std::vector<Coefficient> out;
  for (const auto& c : local) {
    if (std::abs(c.value) < kZeroThreshold) continue;
    if (std::abs(c.value) <= cut) continue;
    if (std::binary_search(already_sent.begin(), already_sent.end(), c.index)) continue;
    out.push_back(c);
  }
  return out;
}

bool prunable(const ItemState& item, double t2) { return item.tau_prime < t2 - prune_slack(t2); }

PruneResult refine_and_prune(std::vector<ItemState> items, double t1, std::size_t m,
                             std::size_t k, std::span<const double> kth_high,
                             std::span<const double> kth_low) {
  if (m == 0) throw std::invalid_argument("refine_and_prune: m must be >= 1");
  if ((!kth_high.empty() && kth_high.size() != m) || (!kth_low.empty() && kth_low.size() != m)) {
    throw std::invalid_argument("refine_and_prune: k-th marks must cover all m splits");
  }
  const double cap = t1 / static_cast<double>(m);
  std::vector<double> high(m, cap);
  std::vector<double> low(m, -cap);
  for (std::size_t j = 0; j < m; ++j) {
    if (!kth_high.empty()) high[j] = std::min(high[j], kth_high[j]);
    if (!kth_low.empty()) low[j] = std::max(low[j], kth_low[j]);
  }
  for (auto& item : items) tau_bounds(item, high, low);

  PruneResult result;
  result.t2 = threshold_T(items, k);
  for (auto& item : items) {
    if (prunable(item, result.t2)) {
      result.pruned.push_back(item.index);
    } else {
      result.survivors.push_back(std::move(item));
    }
  }
  return result;
}

LocalExtremes select_local_extremes(std::span<const Coefficient> local, std::size_t k,
                                    std::uint64_t u) {
  std::vector<Coefficient> desc(local.begin(), local.end());
  std::sort(desc.begin(), desc.end(), [](const Coefficient& a, const Coefficient& b) {
    if (a.value != b.value) return a.value > b.value;
    return a.index < b.index;
  });
  const bool has_zeros = desc.size() < u;
  const auto positives = static_cast<std::size_t>(
      std::count_if(desc.begin(), desc.end(), [](const Coefficient& c) { return c.value > 0; }));
  const std::size_t negatives = desc.size() - positives;

  std::map<std::uint32_t, std::pair<double, CoefTag>> chosen;
  auto add = [&](const Coefficient& c, CoefTag tag) {
    auto [it, inserted] = chosen.try_emplace(c.index, c.value, CoefTag::exact);
    it->second.second =
        static_cast<CoefTag>(static_cast<unsigned>(it->second.second) | static_cast<unsigned>(tag));
  };

  LocalExtremes out;
  // Highest: stop at zero when the split has implicit zeros above its negatives.
  const std::size_t high_avail = has_zeros ? positives : desc.size();
  const std::size_t high_take = std::min(k, high_avail);
  for (std::size_t n = 0; n < high_take; ++n) {
    add(desc[n], n + 1 == k ? CoefTag::kth_high : CoefTag::exact);
  }
  if (high_take == k) out.kth_high = desc[k - 1].value;

  const std::size_t low_avail = has_zeros ? negatives : desc.size();
  const std::size_t low_take = std::min(k, low_avail);
  for (std::size_t n = 0; n < low_take; ++n) {
    add(desc[desc.size() - 1 - n], n + 1 == k ? CoefTag::kth_low : CoefTag::exact);
  }
  if (low_take == k) out.kth_low = desc[desc.size() - k].value;

  for (const auto& [index, vt] : chosen) {
    out.sent.push_back({index, vt.first});
    out.tags.push_back(vt.second);
  }
  return out;
}

TopK hwtopk(const Dataset& data, std::span<SplitDescriptor> splits, std::size_t k,
            CommLedger& ledger, const JobOptions& options, HWTopkTrace* trace) {
  if (k == 0) throw std::invalid_argument("hwtopk: k must be >= 1");
  require_split_ids(splits);
  const auto u = data.u();
  const std::size_t m = splits.size();
  const JobRunner runner(options);

  std::map<std::uint32_t, ItemState> items;
  std::vector<double> kth_high(m, 0.0);
  std::vector<double> kth_low(m, 0.0);

  auto absorb = [&](std::uint32_t index, std::span<const Emission> group) {
    auto it = items.try_emplace(index, index, m).first;
    for (const auto& e : group) {
      const auto& tc = std::get<TaggedCoef>(e.value);
      it->second.receive(tc.split, tc.value);
      if (has_flag(tc.tag, CoefTag::kth_high)) kth_high[tc.split - 1] = tc.value;
      if (has_flag(tc.tag, CoefTag::kth_low)) kth_low[tc.split - 1] = tc.value;
    }
  };
  auto snapshot = [&] {
    std::vector<ItemState> v;
    v.reserve(items.size());
    for (const auto& [index, item] : items) v.push_back(item);
    return v;
  };

  // Round 1: local top-k / bottom-k with the k-th of each marked.
  auto map1 = [&](const SplitDescriptor& split, std::span<const std::byte>, MapContext& ctx) {
    const auto local = local_coefficients(data, split);
    const auto ext = select_local_extremes(local, k, u);
    SplitState state;
    for (std::size_t n = 0; n < ext.sent.size(); ++n) {
      ctx.emit(ext.sent[n].index, TaggedCoef{split.id, ext.tags[n], ext.sent[n].value});
      state.sent.push_back(ext.sent[n].index);
    }
    for (const auto& c : local) {
      if (!std::binary_search(state.sent.begin(), state.sent.end(), c.index)) {
        state.unsent.push_back(c);
      }
    }
    ctx.save_state(state.encode());
  };
  runner.run(splits, {kHWTopk, 1, {}}, map1, absorb, ledger);

  auto round1 = snapshot();
  for (auto& item : round1) tau_bounds(item, kth_high, kth_low);
  const double t1 = threshold_T(round1, k);

  // Round 2: every unsent local score above T1/m.
  ByteWriter b2;
  b2.f64(t1);
  b2.u32(static_cast<std::uint32_t>(m));
  auto map2 = [&](const SplitDescriptor& split, std::span<const std::byte> broadcast,
                  MapContext& ctx) {
    ByteReader cfg(broadcast);
    const double t1_in = cfg.f64();
    const std::size_t m_in = cfg.u32();
    auto state = SplitState::decode(split.state);
    const auto out = round2_filter(state.unsent, t1_in, m_in, state.sent);
    SplitState next;
    for (const auto& c : out) {
      ctx.emit(c.index, TaggedCoef{split.id, CoefTag::exact, c.value});
    }
    std::vector<std::uint32_t> sent_now;
    for (const auto& c : out) sent_now.push_back(c.index);
    for (const auto& c : state.unsent) {
      if (!std::binary_search(sent_now.begin(), sent_now.end(), c.index)) next.unsent.push_back(c);
    }
    std::merge(state.sent.begin(), state.sent.end(), sent_now.begin(), sent_now.end(),
               std::back_inserter(next.sent));
    ctx.save_state(next.encode());
  };
  runner.run(splits, {kHWTopk, 2, b2.take()}, map2, absorb, ledger);

  auto pruned = refine_and_prune(snapshot(), t1, m, k, kth_high, kth_low);
  std::vector<std::uint32_t> candidates;
  for (const auto& item : pruned.survivors) candidates.push_back(item.index);
  std::sort(candidates.begin(), candidates.end());

  if (trace) {
    trace->t1 = t1;
    trace->t2 = pruned.t2;
    trace->after_round1 = round1;
    trace->after_round2 = snapshot();
    std::vector<double> high(m), low(m);
    for (std::size_t j = 0; j < m; ++j) {
      high[j] = std::min(kth_high[j], t1 / static_cast<double>(m));
      low[j] = std::max(kth_low[j], -t1 / static_cast<double>(m));
    }
    for (auto& item : trace->after_round2) tau_bounds(item, high, low);
    trace->candidates = candidates;
    trace->pruned = pruned.pruned;
  }

  // Round 3: remaining scores for every candidate.
  ByteWriter b3;
  b3.u32(static_cast<std::uint32_t>(candidates.size()));
  for (auto i : candidates) b3.u32(i);
  auto map3 = [&](const SplitDescriptor& split, std::span<const std::byte> broadcast,
                  MapContext& ctx) {
    ByteReader in(broadcast);
    std::vector<std::uint32_t> wanted(in.u32());
    for (auto& i : wanted) i = in.u32();
    const auto state = SplitState::decode(split.state);
    for (const auto& c : state.unsent) {
      if (std::binary_search(wanted.begin(), wanted.end(), c.index)) {
        ctx.emit(c.index, TaggedCoef{split.id, CoefTag::exact, c.value});
      }
    }
    ctx.save_state({});
  };
  auto finish = [&](std::uint32_t index, std::span<const Emission> group) {
    if (!std::binary_search(candidates.begin(), candidates.end(), index)) {
      throw ProtocolError("round 3 returned non-candidate item " + std::to_string(index));
    }
    absorb(index, group);
  };
  runner.run(splits, {kHWTopk, 3, b3.take()}, map3, finish, ledger);

  std::vector<Coefficient> exact;
  exact.reserve(candidates.size());
  for (auto i : candidates) exact.push_back({i, items.at(i).w_hat});

  // Selecting over the whole domain keeps zero-valued ties (global scores that
  // cancel) on the same index rule as the centralized answer. Items outside R
  // are below T2, so treating them as zero cannot change the top k.
  const TopK top = select_top_k(densify(exact, u), k);
  if (top.entries.size() == k && candidates.size() >= k) {
    const double kth = std::abs(top.entries.back().value);
    if (kth < pruned.t2 - prune_slack(pruned.t2)) {
      throw ProtocolError("k-th exact magnitude " + std::to_string(kth) + " below T2 " +
                          std::to_string(pruned.t2) + ": an item was pruned incorrectly");
    }
  }
  return top;
}

}  // namespace wavehist
