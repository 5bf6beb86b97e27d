#include "wavehist/cluster.hpp"

#include "wavehist/random.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <exception>
#include <future>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace wavehist {

std::size_t payload_bytes(const Payload& p) {
  struct Size {
    std::size_t operator()(const Count32&) const { return 4; }
    std::size_t operator()(const Coef&) const { return 8; }
    std::size_t operator()(const TaggedCoef&) const { return 4 + 1 + 8; }
  };
  return std::visit(Size{}, p);
}

void CommLedger::charge_emission(const std::string& algo, std::uint32_t round,
                                 std::size_t bytes) {
  auto& e = entries_[{algo, round}];
  e.pairs += 1;
  e.bytes += bytes;
}

void CommLedger::charge_broadcast(const std::string& algo, std::uint32_t round,
                                  std::size_t bytes) {
  entries_[{algo, round}].broadcast_bytes += bytes;
}

void CommLedger::merge(const CommLedger& other) {
  for (const auto& [key, e] : other.entries_) {
    auto& mine = entries_[key];
    mine.pairs += e.pairs;
    mine.bytes += e.bytes;
    mine.broadcast_bytes += e.broadcast_bytes;
  }
}

CommLedger::Entry CommLedger::at(const std::string& algo, std::uint32_t round) const {
  auto it = entries_.find({algo, round});
  return it == entries_.end() ? Entry{} : it->second;
}

CommLedger::Entry CommLedger::total(const std::string& algo) const {
  Entry sum;
  for (const auto& [key, e] : entries_) {
    if (key.first != algo) continue;
    sum.pairs += e.pairs;
    sum.bytes += e.bytes;
    sum.broadcast_bytes += e.broadcast_bytes;
  }
  return sum;
}

CommLedger::Entry CommLedger::total() const {
  Entry sum;
  for (const auto& [key, e] : entries_) {
    sum.pairs += e.pairs;
    sum.bytes += e.bytes;
    sum.broadcast_bytes += e.broadcast_bytes;
  }
  return sum;
}

void CommLedger::write_csv(std::ostream& os) const {
  os << "algorithm,round,pairs,bytes,broadcast_bytes\n";
  for (const auto& [key, e] : entries_) {
    os << key.first << ',' << key.second << ',' << e.pairs << ',' << e.bytes << ','
       << e.broadcast_bytes << '\n';
  }
}

std::vector<SplitDescriptor> partition_dataset(const DatasetMeta& meta, std::uint64_t beta) {
  if (beta < 1) throw std::invalid_argument("partition_dataset: split size must be >= 1");
  std::vector<SplitDescriptor> splits;
  const std::uint64_t m = meta.n == 0 ? 1 : (meta.n + beta - 1) / beta;
  splits.reserve(m);
  for (std::uint64_t j = 0; j < m; ++j) {
    SplitDescriptor s;
    s.id = static_cast<std::uint32_t>(j + 1);
    s.first_record = j * beta;
    s.n_records = std::min(beta, meta.n - s.first_record);
    s.byte_offset = kHeaderBytes + s.first_record * meta.record_size;
    s.byte_length = s.n_records * meta.record_size;
    splits.push_back(std::move(s));
  }
  return splits;
}

JobStats JobRunner::run(std::span<SplitDescriptor> splits, const JobSpec& spec,
                        const MapFn& map, const ReduceFn& reduce, CommLedger& ledger) const {
  std::vector<std::size_t> schedule(splits.size());
  std::iota(schedule.begin(), schedule.end(), std::size_t{0});
  if (options_.schedule_seed) {
    Rng rng(*options_.schedule_seed);
    for (std::size_t i = schedule.size(); i > 1; --i) {
      std::swap(schedule[i - 1], schedule[rng.below(i)]);
    }
  }

  std::vector<MapContext> contexts;
  contexts.reserve(splits.size());
  for (const auto& s : splits) contexts.emplace_back(s.id, spec.round);

  const std::span<const std::byte> broadcast(spec.broadcast);
  auto run_one = [&](std::size_t idx) { map(splits[idx], broadcast, contexts[idx]); };

  const unsigned threads = std::max(1U, options_.threads);
  if (threads == 1 || schedule.size() < 2) {
    for (auto idx : schedule) run_one(idx);
  } else {
    std::vector<std::future<void>> workers;
    for (unsigned t = 0; t < threads; ++t) {
      workers.push_back(std::async(std::launch::async, [&, t] {
        for (std::size_t n = t; n < schedule.size(); n += threads) run_one(schedule[n]);
      }));
    }
    std::exception_ptr failure;
    for (auto& w : workers) {
      try {
        w.get();
      } catch (...) {
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
  }

  // Shuffle: gather in split order, stable-sort by key.
  std::vector<Emission> shuffled;
  for (auto& ctx : contexts) {
    shuffled.insert(shuffled.end(), ctx.emissions_.begin(), ctx.emissions_.end());
  }
  std::stable_sort(shuffled.begin(), shuffled.end(),
                   [](const Emission& a, const Emission& b) { return a.key < b.key; });

  JobStats stats;
  if (!spec.broadcast.empty()) {
    ledger.charge_broadcast(spec.algorithm, spec.round, spec.broadcast.size() * splits.size());
  }
  for (const auto& e : shuffled) {
    const auto bytes = wire_bytes(e);
    ledger.charge_emission(spec.algorithm, spec.round, bytes);
    stats.pairs += 1;
    stats.bytes += bytes;
  }

  for (std::size_t idx = 0; idx < splits.size(); ++idx) {
    if (contexts[idx].state_) splits[idx].state = std::move(*contexts[idx].state_);
  }

  const std::span<const Emission> all(shuffled);
  for (std::size_t begin = 0; begin < all.size();) {
    std::size_t end = begin + 1;
    while (end < all.size() && all[end].key == all[begin].key) ++end;
    reduce(all[begin].key, all.subspan(begin, end - begin));
    ++stats.groups;
    begin = end;
  }
  return stats;
}

JobStats run_job(std::span<SplitDescriptor> splits, const MapFn& map, const ReduceFn& reduce,
                 const JobSpec& spec, CommLedger& ledger, const JobOptions& options) {
  return JobRunner(options).run(splits, spec, map, reduce, ledger);
}

void ByteWriter::u32(std::uint32_t v) {
  for (int b = 0; b < 4; ++b) bytes_.push_back(static_cast<std::byte>((v >> (8 * b)) & 0xFFU));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int b = 0; b < 8; ++b) bytes_.push_back(static_cast<std::byte>((v >> (8 * b)) & 0xFFU));
}

void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

std::span<const std::byte> ByteReader::take(std::size_t n) {
  if (bytes_.size() - at_ < n) throw std::runtime_error("state blob truncated");
  auto s = bytes_.subspan(at_, n);
  at_ += n;
  return s;
}

std::uint32_t ByteReader::u32() {
  auto s = take(4);
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= std::to_integer<std::uint32_t>(s[b]) << (8 * b);
  return v;
}

std::uint64_t ByteReader::u64() {
  auto s = take(8);
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) v |= std::to_integer<std::uint64_t>(s[b]) << (8 * b);
  return v;
}

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

}  // namespace wavehist
