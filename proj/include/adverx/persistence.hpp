#pragma once

#include <cstdint>
#include <string>

#include "adverx/model.hpp"

namespace adverx {

enum class ArchiveSubset { Full, DiscriminatorOnly };

struct ArchiveInfo {
  ArchiveSubset subset = ArchiveSubset::Full;
  uint64_t file_bytes = 0;
  int64_t tensor_count = 0;
};

// AXR1 layout, all integers little-endian:
//   bytes 0..3   magic "AXR1"
//   u32          config JSON length, then that many bytes of canonical JSON
//   u32          tensor count
//   per tensor:  u16 name length, name bytes, u8 dtype (0 = f32), u8 ndim,
//                u32 dims[ndim], u64 byte offset into the payload
//   u64          payload byte size
//   payload      contiguous little-endian f32 data, tensors in table order
// Offsets are dense and strictly increasing; an archive reloads bit-exactly.
ArchiveInfo save_model(const AdverxModel& model, const std::string& path,
                       ArchiveSubset subset);

// expected_subset is the minimum content required: a Full archive satisfies
// a DiscriminatorOnly request, the reverse fails with SchemaError.
AdverxModel load_model(const std::string& path, ArchiveSubset expected_subset);

}  // namespace adverx
