#include "qdn/half.hpp"

#include <bit>

namespace qdn {

std::uint16_t float_to_half_bits(float f) {
  const std::uint32_t x = std::bit_cast<std::uint32_t>(f);
  const std::uint16_t sign = static_cast<std::uint16_t>((x >> 16) & 0x8000u);
  const std::uint32_t exp = (x >> 23) & 0xFFu;
  std::uint32_t mant = x & 0x7FFFFFu;

  if (exp == 255u) {  // inf / nan
    if (mant == 0) return sign | 0x7C00u;
    return sign | 0x7C00u | 0x200u | static_cast<std::uint16_t>(mant >> 13);
  }

  const int e = static_cast<int>(exp) - 127 + 15;
  if (e >= 31) return sign | 0x7C00u;  // overflow -> inf

  if (e <= 0) {
    if (e < -10) return sign;  // underflows to zero even after rounding
    // Subnormal half: shift out (14 - e) mantissa bits with the implicit 1.
    mant |= 0x800000u;
    const unsigned shift = static_cast<unsigned>(14 - e);
    std::uint16_t h = static_cast<std::uint16_t>(mant >> shift);
    const std::uint32_t rem = mant & ((1u << shift) - 1u);
    const std::uint32_t halfway = 1u << (shift - 1);
    if (rem > halfway || (rem == halfway && (h & 1u))) ++h;
    return sign | h;
  }

  std::uint16_t h =
      static_cast<std::uint16_t>((e << 10) | static_cast<int>(mant >> 13));
  const std::uint32_t rem = mant & 0x1FFFu;
  // Mantissa carry from rounding propagates into the exponent, which is
  // exactly the right behavior (including rounding up to infinity).
  if (rem > 0x1000u || (rem == 0x1000u && (h & 1u))) ++h;
  return sign | h;
}

float half_bits_to_float(std::uint16_t h) {
  const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
  const std::uint32_t exp = (h >> 10) & 0x1Fu;
  const std::uint32_t mant = h & 0x3FFu;
  std::uint32_t out;

  if (exp == 0) {
    if (mant == 0) {
      out = sign;
    } else {
      // Normalize the subnormal: mant = m >> e with the implicit bit at
      // position 10, so the value is (1.f) * 2^(-14 - e).
      int e = 0;
      std::uint32_t m = mant;
      while (!(m & 0x400u)) {
        m <<= 1;
        ++e;
      }
      out = sign | ((113u - static_cast<std::uint32_t>(e)) << 23) |
            ((m & 0x3FFu) << 13);
    }
  } else if (exp == 31u) {
    out = sign | 0x7F800000u | (mant << 13);
  } else {
    out = sign | ((exp - 15u + 127u) << 23) | (mant << 13);
  }
  return std::bit_cast<float>(out);
}

}  // namespace qdn
