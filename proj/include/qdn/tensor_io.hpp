#pragma once

#include <filesystem>
#include <variant>

#include "qdn/quant.hpp"
#include "qdn/tensor.hpp"

namespace qdn {

// QTNS binary tensor file, little-endian throughout:
//   magic "QTNS" (4 bytes)
//   format version  u32 (= 1)
//   dtype           u8  (0 = float32, 1 = uint8)
//   rank            u8
//   dims            rank x u32
//   [uint8 only]    scale f64, zero_point i32
//   payload         raw element data
//
// Writers always emit rank 4 (batch, height, width, channels). Readers
// accept rank 1..4 and promote: (L) -> 1x1xLx1, (H,W) -> 1xHxWx1,
// (H,W,C) -> 1xHxWxC.
void write_qtns(const std::filesystem::path& path, const TensorF& t);
void write_qtns(const std::filesystem::path& path, const QuantTensor& t);

std::variant<TensorF, QuantTensor> read_qtns(const std::filesystem::path& path);

// Convenience readers that insist on one dtype.
TensorF read_qtns_f32(const std::filesystem::path& path);
QuantTensor read_qtns_u8(const std::filesystem::path& path);

// Binary PGM (P5) import/export for eyeballing images. Import accepts
// 8- and 16-bit and normalizes to [0,1]; export writes 16-bit from a
// single-channel tensor clamped to [0,1].
TensorF read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const TensorF& image);

}  // namespace qdn
