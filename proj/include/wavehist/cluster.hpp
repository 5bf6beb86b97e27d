#pragma once

// Deterministic single-reducer map-reduce simulator with communication
// accounting.
//
// A job runs one mapper per split (any order, optionally in parallel), groups
// every emission by key in ascending key order, and hands each group to the
// reduce function. Within a group, values are ordered by (source split,
// emission order), so results never depend on the mapper schedule. Every
// emission is charged to the ledger once; a broadcast is charged once per
// mapper.

#include "wavehist/dataset.hpp"
#include "wavehist/split.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace wavehist {

/// u32 count; 4 bytes on the wire.
struct Count32 {
  std::uint32_t count;
};

/// f64 coefficient; 8 bytes.
struct Coef {
  double value;
};

/// Kind marker carried by H-WTopk pairs. The k-th highest / lowest local
/// scores of a split are flagged so the coordinator can recover w~j+ / w~j-.
enum class CoefTag : std::uint8_t { exact = 0, kth_high = 1, kth_low = 2, kth_both = 3 };

/// (split id u32, tag u8, f64 value); 13 bytes.
struct TaggedCoef {
  std::uint32_t split;
  CoefTag tag;
  double value;
};

using Payload = std::variant<Count32, Coef, TaggedCoef>;

struct Emission {
  std::uint32_t key = 0;
  Payload value;
  std::uint32_t round = 0;
  std::uint32_t source = 0;
};

inline constexpr std::size_t kWireKeyBytes = 4;

std::size_t payload_bytes(const Payload& p);
inline std::size_t wire_bytes(const Emission& e) { return kWireKeyBytes + payload_bytes(e.value); }

/// Pair and byte counts per (algorithm, round). Updates are additive only.
class CommLedger {
 public:
  struct Entry {
    std::uint64_t pairs = 0;
    std::uint64_t bytes = 0;
    std::uint64_t broadcast_bytes = 0;

    friend bool operator==(const Entry&, const Entry&) = default;
  };

  void charge_emission(const std::string& algo, std::uint32_t round, std::size_t bytes);
  void charge_broadcast(const std::string& algo, std::uint32_t round, std::size_t bytes);
  void merge(const CommLedger& other);

  /// Entry for one round; zero when nothing was charged.
  Entry at(const std::string& algo, std::uint32_t round) const;
  Entry total(const std::string& algo) const;
  Entry total() const;

  const std::map<std::pair<std::string, std::uint32_t>, Entry>& entries() const {
    return entries_;
  }

  /// CSV with header algorithm,round,pairs,bytes,broadcast_bytes.
  void write_csv(std::ostream& os) const;

  friend bool operator==(const CommLedger&, const CommLedger&) = default;

 private:
  std::map<std::pair<std::string, std::uint32_t>, Entry> entries_;
};

/// m = ceil(n / beta) contiguous splits of beta records (the last may be short).
std::vector<SplitDescriptor> partition_dataset(const DatasetMeta& meta, std::uint64_t beta);

/// Handed to a mapper: collects its emissions and its next-round state.
class MapContext {
 public:
  MapContext(std::uint32_t split, std::uint32_t round) : split_(split), round_(round) {}

  void emit(std::uint32_t key, Payload value) {
    emissions_.push_back({key, value, round_, split_});
  }
  void save_state(std::vector<std::byte> blob) { state_ = std::move(blob); }

  std::uint32_t split() const { return split_; }
  std::uint32_t round() const { return round_; }

 private:
  friend class JobRunner;

  std::uint32_t split_;
  std::uint32_t round_;
  std::vector<Emission> emissions_;
  std::optional<std::vector<std::byte>> state_;
};

/// Mapper: (split with its persisted state, broadcast bytes, context). Must be
/// a pure function of its arguments.
using MapFn =
    std::function<void(const SplitDescriptor&, std::span<const std::byte>, MapContext&)>;

/// Reducer: called once per distinct key, ascending, with all its emissions.
using ReduceFn = std::function<void(std::uint32_t, std::span<const Emission>)>;

struct JobOptions {
  /// When set, mappers execute in a permutation of split order drawn from
  /// this seed (results must not change).
  std::optional<std::uint64_t> schedule_seed;
  /// Worker threads for the map phase.
  unsigned threads = 1;
};

struct JobSpec {
  std::string algorithm;
  std::uint32_t round = 1;
  std::vector<std::byte> broadcast;
};

struct JobStats {
  std::uint64_t pairs = 0;
  std::uint64_t bytes = 0;
  std::uint64_t groups = 0;
};

class JobRunner {
 public:
  explicit JobRunner(JobOptions options = {}) : options_(options) {}

  /// Runs one round. Split states returned by the mappers replace the stored
  /// ones (a mapper that saves nothing leaves its state untouched). A mapper
  /// exception aborts the job before anything is charged or reduced.
  JobStats run(std::span<SplitDescriptor> splits, const JobSpec& spec, const MapFn& map,
               const ReduceFn& reduce, CommLedger& ledger) const;

 private:
  JobOptions options_;
};

/// Convenience wrapper over JobRunner::run.
JobStats run_job(std::span<SplitDescriptor> splits, const MapFn& map, const ReduceFn& reduce,
                 const JobSpec& spec, CommLedger& ledger, const JobOptions& options = {});

/// Little-endian byte serialization for split state and broadcasts.
class ByteWriter {
 public:
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  std::vector<std::byte> take() { return std::move(bytes_); }

 private:
  std::vector<std::byte> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::byte> bytes) : bytes_(bytes) {}
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  bool done() const { return at_ == bytes_.size(); }

 private:
  std::span<const std::byte> take(std::size_t n);

  std::span<const std::byte> bytes_;
  std::size_t at_ = 0;
};

}  // namespace wavehist
