#pragma once

#include <string>

#include "redirtrans/optim.hpp"

namespace rdt {

// Parameter checkpoint, binary, little-endian:
//
//   magic   "RDTC" (4 bytes)
//   version u32    (currently 1)
//   count   u32    number of parameters
//   then per parameter, in lexicographic name order:
//     name_len u32, name bytes (UTF-8, no terminator),
//     rank u32, dims u32 x rank,
//     data f32 x numel (row-major)
//
// save_checkpoint always produces the same bytes for the same parameter set.
// load_checkpoint validates magic/version and throws std::runtime_error with
// a descriptive message on truncation or malformed headers.

void save_checkpoint(const std::string& path, const ParamStore& params);
ParamStore load_checkpoint(const std::string& path);

}  // namespace rdt
