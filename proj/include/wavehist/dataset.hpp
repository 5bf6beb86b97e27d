#pragma once

// Binary key datasets, Zipfian generation and split-local sampling.
//
// File layout (little-endian):
//   offset 0   char[4]  magic "WVH1"
//   offset 4   u16      format version (1)
//   offset 6   u16      record size in bytes (>= 4)
//   offset 8   u32      domain size u (power of two)
//   offset 12  u64      record count n
//   offset 20  n records; the first 4 bytes of each are the key in [1, u],
//              the rest is opaque payload.

#include "wavehist/random.hpp"
#include "wavehist/split.hpp"
#include "wavehist/wavelet.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace wavehist {

inline constexpr std::array<char, 4> kDatasetMagic{'W', 'V', 'H', '1'};
inline constexpr std::uint16_t kDatasetVersion = 1;
inline constexpr std::size_t kHeaderBytes = 20;
inline constexpr std::size_t kKeyBytes = 4;

struct DatasetMeta {
  std::uint64_t n = 0;
  std::uint32_t u = 0;
  std::uint16_t record_size = kKeyBytes;
  std::filesystem::path path;

  std::uint64_t file_bytes() const { return kHeaderBytes + n * record_size; }
};

std::array<std::byte, kHeaderBytes> encode_header(const DatasetMeta& meta);
DatasetMeta decode_header(std::span<const std::byte> bytes);

/// Read-only view of a dataset, backed either by a file or by keys held in
/// memory (same record semantics; the in-memory form has no payload bytes to
/// read). Cheap to copy.
class Dataset {
 public:
  static Dataset open(const std::filesystem::path& path);
  /// Keys must lie in [1, u]; u is padded up to a power of two.
  static Dataset from_keys(std::vector<std::uint32_t> keys, std::uint64_t u,
                           std::uint16_t record_size = kKeyBytes);

  const DatasetMeta& meta() const { return meta_; }
  std::uint64_t n() const { return meta_.n; }
  std::uint64_t u() const { return meta_.u; }

  /// Keys of records [first, first + count).
  std::vector<std::uint32_t> read_keys(std::uint64_t first, std::uint64_t count) const;
  std::vector<std::uint32_t> read_split(const SplitDescriptor& split) const;

  /// Keys at strictly ascending record positions relative to `first`, read in
  /// one forward sweep.
  std::vector<std::uint32_t> read_keys_at(std::uint64_t first,
                                          std::span<const std::uint64_t> positions) const;

 private:
  DatasetMeta meta_;
  std::shared_ptr<const std::vector<std::uint32_t>> keys_;
};

struct ZipfConfig {
  std::uint64_t n = 0;
  std::uint64_t u = 0;
  double alpha = 1.1;
  std::uint64_t seed = 1;
  std::uint16_t record_size = kKeyBytes;
  std::uint64_t max_bytes = std::uint64_t{1} << 40;
};

/// Keys following Zipf(alpha) over ranks 1..u, mapped to keys through a seeded
/// random permutation and drawn i.i.d. (hence in random file order).
std::vector<std::uint32_t> zipf_keys(const ZipfConfig& cfg);

/// Writes the generated dataset to `out`; byte-identical for equal configs.
DatasetMeta generate_zipf(const ZipfConfig& cfg, const std::filesystem::path& out);

/// Writes arbitrary keys in the dataset format (payload bytes zero).
DatasetMeta write_dataset(std::span<const std::uint32_t> keys, std::uint64_t u,
                          std::uint16_t record_size, const std::filesystem::path& out);

CountVector build_frequency_vector(std::span<const std::uint32_t> keys, std::uint64_t u);

/// Distinct keys with multiplicities, ascending by key.
std::vector<KeyCount> count_keys(std::span<const std::uint32_t> keys);

enum class SampleMode { coinflip, noreplace };

const char* to_string(SampleMode mode);
SampleMode parse_sample_mode(std::string_view name);

struct SampleConfig {
  double epsilon = 0.0;
  double p = 1.0;
  std::uint64_t seed = 0;
  SampleMode mode = SampleMode::noreplace;

  /// p = 1 / (epsilon^2 n), clamped to 1.
  static SampleConfig for_dataset(double epsilon, std::uint64_t n, std::uint64_t seed,
                                  SampleMode mode = SampleMode::noreplace);
};

/// Number of records drawn without replacement from a split of n_j records:
/// floor(p * n_j + 0.5), capped at n_j.
std::uint64_t noreplace_sample_size(std::uint64_t n_j, double p);

/// Strictly ascending record positions in [0, n_j). `noreplace` draws exactly
/// noreplace_sample_size(n_j, p) distinct positions; `coinflip` keeps each
/// position independently with probability p.
std::vector<std::uint64_t> sample_positions(std::uint64_t n_j, double p, SampleMode mode,
                                            Rng& rng);

struct SplitSample {
  std::uint64_t sampled = 0;     // t_j
  std::vector<KeyCount> counts;  // s_j, ascending by key
};

/// First-level sample of one split. The random stream depends only on
/// (cfg.seed, split.id).
SplitSample sample_split(const Dataset& data, const SplitDescriptor& split,
                         const SampleConfig& cfg);

}  // namespace wavehist
