#include "wavehist/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <queue>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace wavehist {

namespace {

template <typename T>
void put_le(std::byte* dst, T value) {
  for (std::size_t b = 0; b < sizeof(T); ++b) {
    dst[b] = static_cast<std::byte>((static_cast<std::uint64_t>(value) >> (8 * b)) & 0xFFU);
  }
}

template <typename T>
T get_le(const std::byte* src) {
  std::uint64_t v = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) {
    v |= static_cast<std::uint64_t>(std::to_integer<unsigned>(src[b])) << (8 * b);
  }
  return static_cast<T>(v);
}

std::ifstream open_for_read(const DatasetMeta& meta) {
  std::ifstream in(meta.path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset " + meta.path.string());
  return in;
}

void read_exact(std::ifstream& in, std::byte* dst, std::size_t bytes, const DatasetMeta& meta) {
  in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(bytes));
  if (static_cast<std::size_t>(in.gcount()) != bytes) {
    throw std::runtime_error("short read in dataset " + meta.path.string() + " (corrupt record)");
  }
}

class ZipfSampler {
 public:
  ZipfSampler(std::uint64_t u, double alpha, std::uint64_t seed) : cdf_(u), rank_to_key_(u) {
    double acc = 0.0;
    for (std::uint64_t r = 0; r < u; ++r) {
      acc += std::pow(static_cast<double>(r + 1), -alpha);
      cdf_[r] = acc;
    }
    for (auto& c : cdf_) c /= acc;
    cdf_.back() = 1.0;

    for (std::uint64_t r = 0; r < u; ++r) rank_to_key_[r] = static_cast<std::uint32_t>(r + 1);
    Rng perm(derive_seed({seed, 0x7065726dULL}));
    for (std::uint64_t r = u - 1; r > 0; --r) {
      std::swap(rank_to_key_[r], rank_to_key_[perm.below(r + 1)]);
    }
  }

  std::uint32_t draw(Rng& rng) const {
    const double x = rng.uniform01();
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), x);
    if (it == cdf_.end()) --it;
    return rank_to_key_[static_cast<std::size_t>(it - cdf_.begin())];
  }

 private:
  std::vector<double> cdf_;
  std::vector<std::uint32_t> rank_to_key_;
};

void validate_zipf(const ZipfConfig& cfg) {
  if (cfg.n < 1) throw std::invalid_argument("zipf: n must be >= 1");
  if (cfg.u < 2) throw std::invalid_argument("zipf: u must be >= 2");
  if (cfg.u > (std::uint64_t{1} << 31)) throw std::invalid_argument("zipf: u exceeds 2^31");
  if (!(cfg.alpha >= 0.0)) throw std::invalid_argument("zipf: alpha must be >= 0");
  if (cfg.record_size < kKeyBytes) throw std::invalid_argument("zipf: record size must be >= 4");
  if (cfg.n > (cfg.max_bytes - kHeaderBytes) / cfg.record_size) {
    throw std::invalid_argument("zipf: n * record_size exceeds the configured limit of " +
                                std::to_string(cfg.max_bytes) + " bytes");
  }
}

class RecordWriter {
 public:
  RecordWriter(const std::filesystem::path& out, const DatasetMeta& meta)
      : out_(out, std::ios::binary | std::ios::trunc), record_size_(meta.record_size) {
    if (!out_) throw std::runtime_error("cannot write dataset " + out.string());
    const auto header = encode_header(meta);
    out_.write(reinterpret_cast<const char*>(header.data()), header.size());
    buffer_.reserve(kBufferRecords * record_size_);
  }

  void put(std::uint32_t key) {
    const std::size_t at = buffer_.size();
    buffer_.resize(at + record_size_, std::byte{0});
    put_le<std::uint32_t>(buffer_.data() + at, key);
    if (buffer_.size() >= kBufferRecords * record_size_) flush();
  }

  void finish(const std::filesystem::path& out) {
    flush();
    out_.close();
    if (!out_) throw std::runtime_error("failed writing dataset " + out.string());
  }

 private:
  static constexpr std::size_t kBufferRecords = 1 << 16;

  void flush() {
    out_.write(reinterpret_cast<const char*>(buffer_.data()),
               static_cast<std::streamsize>(buffer_.size()));
    buffer_.clear();
  }

  std::ofstream out_;
  std::size_t record_size_;
  std::vector<std::byte> buffer_;
};

}  // namespace

std::array<std::byte, kHeaderBytes> encode_header(const DatasetMeta& meta) {
  std::array<std::byte, kHeaderBytes> h{};
  std::memcpy(h.data(), kDatasetMagic.data(), kDatasetMagic.size());
  put_le<std::uint16_t>(h.data() + 4, kDatasetVersion);
  put_le<std::uint16_t>(h.data() + 6, meta.record_size);
  put_le<std::uint32_t>(h.data() + 8, meta.u);
  put_le<std::uint64_t>(h.data() + 12, meta.n);
  return h;
}

DatasetMeta decode_header(std::span<const std::byte> bytes) {
  if (bytes.size() < kHeaderBytes) throw std::runtime_error("dataset header truncated");
  if (std::memcmp(bytes.data(), kDatasetMagic.data(), kDatasetMagic.size()) != 0) {
    throw std::runtime_error("dataset header: bad magic");
  }
  if (get_le<std::uint16_t>(bytes.data() + 4) != kDatasetVersion) {
    throw std::runtime_error("dataset header: unsupported version");
  }
  DatasetMeta meta;
  meta.record_size = get_le<std::uint16_t>(bytes.data() + 6);
  meta.u = get_le<std::uint32_t>(bytes.data() + 8);
  meta.n = get_le<std::uint64_t>(bytes.data() + 12);
  if (meta.record_size < kKeyBytes) throw std::runtime_error("dataset header: record size < 4");
  if (!is_power_of_two(meta.u)) throw std::runtime_error("dataset header: u not a power of two");
  return meta;
}

Dataset Dataset::open(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset " + path.string());
  std::array<std::byte, kHeaderBytes> header{};
  in.read(reinterpret_cast<char*>(header.data()), header.size());
  if (in.gcount() != static_cast<std::streamsize>(header.size())) {
    throw std::runtime_error("dataset " + path.string() + ": header truncated");
  }
  Dataset d;
  d.meta_ = decode_header(header);
  d.meta_.path = path;
  const auto size = std::filesystem::file_size(path);
  if (size != d.meta_.file_bytes()) {
    throw std::runtime_error("dataset " + path.string() + ": file is " + std::to_string(size) +
                             " bytes, header implies " + std::to_string(d.meta_.file_bytes()));
  }
  return d;
}

Dataset Dataset::from_keys(std::vector<std::uint32_t> keys, std::uint64_t u,
                           std::uint16_t record_size) {
  const std::uint64_t padded = next_power_of_two(u);
  for (auto k : keys) {
    if (k < 1 || k > u) {
      throw std::out_of_range("key " + std::to_string(k) + " outside [1, " + std::to_string(u) +
                              "]");
    }
  }
  Dataset d;
  d.meta_.n = keys.size();
  d.meta_.u = static_cast<std::uint32_t>(padded);
  d.meta_.record_size = record_size;
  d.keys_ = std::make_shared<const std::vector<std::uint32_t>>(std::move(keys));
  return d;
}

std::vector<std::uint32_t> Dataset::read_keys(std::uint64_t first, std::uint64_t count) const {
  if (first + count > meta_.n) throw std::out_of_range("read_keys: range past end of dataset");
  if (keys_) {
    return {keys_->begin() + static_cast<std::ptrdiff_t>(first),
            keys_->begin() + static_cast<std::ptrdiff_t>(first + count)};
  }
  auto in = open_for_read(meta_);
  in.seekg(static_cast<std::streamoff>(kHeaderBytes + first * meta_.record_size));
  std::vector<std::uint32_t> keys;
  keys.reserve(count);
  std::vector<std::byte> buffer;
  constexpr std::uint64_t kChunk = 1 << 16;
  for (std::uint64_t done = 0; done < count;) {
    const std::uint64_t take = std::min(kChunk, count - done);
    buffer.resize(take * meta_.record_size);
    read_exact(in, buffer.data(), buffer.size(), meta_);
    for (std::uint64_t r = 0; r < take; ++r) {
      keys.push_back(get_le<std::uint32_t>(buffer.data() + r * meta_.record_size));
    }
    done += take;
  }
  return keys;
}

std::vector<std::uint32_t> Dataset::read_split(const SplitDescriptor& split) const {
  return read_keys(split.first_record, split.n_records);
}

std::vector<std::uint32_t> Dataset::read_keys_at(std::uint64_t first,
                                                 std::span<const std::uint64_t> positions) const {
  for (std::size_t i = 1; i < positions.size(); ++i) {
    if (positions[i] <= positions[i - 1]) {
      throw std::invalid_argument("read_keys_at: positions must be strictly ascending");
    }
  }
  if (!positions.empty() && first + positions.back() >= meta_.n) {
    throw std::out_of_range("read_keys_at: position past end of dataset");
  }
  std::vector<std::uint32_t> keys;
  keys.reserve(positions.size());
  if (keys_) {
    for (auto p : positions) keys.push_back((*keys_)[first + p]);
    return keys;
  }
  auto in = open_for_read(meta_);
  std::array<std::byte, kKeyBytes> key{};
  for (auto p : positions) {
    in.seekg(static_cast<std::streamoff>(kHeaderBytes + (first + p) * meta_.record_size));
    read_exact(in, key.data(), key.size(), meta_);
    keys.push_back(get_le<std::uint32_t>(key.data()));
  }
  return keys;
}

std::vector<std::uint32_t> zipf_keys(const ZipfConfig& cfg) {
  validate_zipf(cfg);
  const ZipfSampler sampler(cfg.u, cfg.alpha, cfg.seed);
  Rng rng(derive_seed({cfg.seed, 0x64726177ULL}));
  std::vector<std::uint32_t> keys(cfg.n);
  for (auto& k : keys) k = sampler.draw(rng);
  return keys;
}

DatasetMeta generate_zipf(const ZipfConfig& cfg, const std::filesystem::path& out) {
  validate_zipf(cfg);
  DatasetMeta meta{cfg.n, static_cast<std::uint32_t>(next_power_of_two(cfg.u)), cfg.record_size,
                   out};
  const ZipfSampler sampler(cfg.u, cfg.alpha, cfg.seed);
  Rng rng(derive_seed({cfg.seed, 0x64726177ULL}));
  RecordWriter writer(out, meta);
  for (std::uint64_t r = 0; r < cfg.n; ++r) writer.put(sampler.draw(rng));
  writer.finish(out);
  return meta;
}

DatasetMeta write_dataset(std::span<const std::uint32_t> keys, std::uint64_t u,
                          std::uint16_t record_size, const std::filesystem::path& out) {
  if (record_size < kKeyBytes) throw std::invalid_argument("record size must be >= 4");
  for (auto k : keys) {
    if (k < 1 || k > u) {
      throw std::out_of_range("key " + std::to_string(k) + " outside [1, " + std::to_string(u) +
                              "]");
    }
  }
  DatasetMeta meta{keys.size(), static_cast<std::uint32_t>(next_power_of_two(u)), record_size,
                   out};
  RecordWriter writer(out, meta);
  for (auto k : keys) writer.put(k);
  writer.finish(out);
  return meta;
}

CountVector build_frequency_vector(std::span<const std::uint32_t> keys, std::uint64_t u) {
  CountVector v = CountVector::Zero(static_cast<Eigen::Index>(u));
  for (auto k : keys) {
    if (k < 1 || k > u) {
      throw std::out_of_range("build_frequency_vector: key " + std::to_string(k) +
                              " outside [1, " + std::to_string(u) + "]");
    }
    ++v(k - 1);
  }
  return v;
}

std::vector<KeyCount> count_keys(std::span<const std::uint32_t> keys) {
  std::vector<std::uint32_t> sorted(keys.begin(), keys.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<KeyCount> out;
  for (auto k : sorted) {
    if (!out.empty() && out.back().key == k) {
      ++out.back().count;
    } else {
      out.push_back({k, 1});
    }
  }
  return out;
}

const char* to_string(SampleMode mode) {
  return mode == SampleMode::coinflip ? "coinflip" : "noreplace";
}

SampleMode parse_sample_mode(std::string_view name) {
  if (name == "coinflip") return SampleMode::coinflip;
  if (name == "noreplace") return SampleMode::noreplace;
  throw std::invalid_argument("unknown samples mode '" + std::string(name) +
                              "' (expected coinflip or noreplace)");
}

SampleConfig SampleConfig::for_dataset(double epsilon, std::uint64_t n, std::uint64_t seed,
                                       SampleMode mode) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be > 0");
  if (n == 0) throw std::invalid_argument("sampling an empty dataset");
  double p = 1.0 / (epsilon * epsilon * static_cast<double>(n));
  // n = 1/eps^2 must mean a full sample even when the product rounds up.
  if (p > 1.0 - 1e-12) p = 1.0;
  return {epsilon, p, seed, mode};
}

std::uint64_t noreplace_sample_size(std::uint64_t n_j, double p) {
  const auto t = static_cast<std::uint64_t>(std::floor(p * static_cast<double>(n_j) + 0.5));
  return std::min(t, n_j);
}

std::vector<std::uint64_t> sample_positions(std::uint64_t n_j, double p, SampleMode mode,
                                            Rng& rng) {
  if (!(p > 0.0) || p > 1.0) throw std::invalid_argument("sampling rate must be in (0, 1]");
  std::vector<std::uint64_t> positions;
  if (p >= 1.0) {
    positions.resize(n_j);
    for (std::uint64_t i = 0; i < n_j; ++i) positions[i] = i;
    return positions;
  }

  if (mode == SampleMode::coinflip) {
    // Gaps between kept positions are geometric.
    const double log_q = std::log1p(-p);
    std::uint64_t next = 0;
    while (true) {
      const double gap = std::floor(std::log(1.0 - rng.uniform01()) / log_q);
      if (gap >= static_cast<double>(n_j - next)) break;
      next += static_cast<std::uint64_t>(gap);
      positions.push_back(next);
      if (++next >= n_j) break;
    }
    return positions;
  }

  // Floyd's algorithm picks t distinct offsets; a min-queue hands them back in
  // ascending order so the reader only ever seeks forward.
  const std::uint64_t t = noreplace_sample_size(n_j, p);
  std::unordered_set<std::uint64_t> chosen;
  chosen.reserve(t * 2);
  std::priority_queue<std::uint64_t, std::vector<std::uint64_t>, std::greater<>> queue;
  for (std::uint64_t j = n_j - t; j < n_j; ++j) {
    const std::uint64_t candidate = rng.below(j + 1);
    const std::uint64_t pick = chosen.insert(candidate).second ? candidate : j;
    if (pick == j) chosen.insert(j);
    queue.push(pick);
  }
  positions.reserve(t);
  while (!queue.empty()) {
    positions.push_back(queue.top());
    queue.pop();
  }
  return positions;
}

SplitSample sample_split(const Dataset& data, const SplitDescriptor& split,
                         const SampleConfig& cfg) {
  Rng rng(derive_seed({cfg.seed, split.id, 0x73616d70ULL}));
  const auto positions = sample_positions(split.n_records, cfg.p, cfg.mode, rng);
  const auto keys = data.read_keys_at(split.first_record, positions);
  for (auto k : keys) {
    if (k < 1 || k > data.u()) {
      throw std::runtime_error("corrupt record: key " + std::to_string(k) + " outside [1, " +
                               std::to_string(data.u()) + "]");
    }
  }
  return {keys.size(), count_keys(keys)};
}

}  // namespace wavehist
