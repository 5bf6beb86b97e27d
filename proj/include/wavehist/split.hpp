#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace wavehist {

/// One logical split of a dataset file. Ids are 1-based and unique; splits of
/// a file are contiguous, disjoint and cover every record. `state` is the
/// opaque blob a mapper persists for the same split in the next round.
struct SplitDescriptor {
  std::uint32_t id = 0;
  std::uint64_t first_record = 0;
  std::uint64_t n_records = 0;
  std::uint64_t byte_offset = 0;
  std::uint64_t byte_length = 0;
  std::vector<std::byte> state;
};

}  // namespace wavehist
