#pragma once

#include <string>

#include "redirtrans/tensor.hpp"

namespace rdt {

// Latent file, binary, little-endian:
//
//   magic   "RDTL" (4 bytes)
//   version u32    (currently 1)
//   K       u32    rows
//   D       u32    columns
//   data    f32 x K*D, row-major
//
// write/read round-trip bitwise. read_latent throws std::runtime_error with
// a descriptive message on bad magic, unsupported version, or truncation
// (naming expected vs actual byte counts).
void write_latent(const std::string& path, const Tensor& latent);  // requires rank 2
Tensor read_latent(const std::string& path);

// Binary PGM (P5) export of a rendered image: values in [-1, 1] map linearly
// to [0, 255], clamped outside.
void write_pgm(const std::string& path, const Tensor& image, int side);

// Raw row-major f32 dump, little-endian, no header.
void write_raw_f32(const std::string& path, const Tensor& t);

}  // namespace rdt
