#pragma once

#include <cstdint>

namespace qdn {

// IEEE-754 binary16 conversion, round-to-nearest-even, with subnormal,
// infinity, and NaN handling. Bit-level so results do not depend on
// compiler _Float16 support.
std::uint16_t float_to_half_bits(float f);
float half_bits_to_float(std::uint16_t h);

// float32 -> binary16 -> float32 round trip.
inline float round_to_half(float f) {
  return half_bits_to_float(float_to_half_bits(f));
}

}  // namespace qdn
