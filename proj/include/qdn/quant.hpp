#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

#include "qdn/tensor.hpp"

namespace qdn {

// Affine uint8 quantization: real = (q - zero_point) * scale.
struct QuantParams {
  double scale = 1.0;
  int zero_point = 0;

  bool operator==(const QuantParams&) const = default;
};

inline bool params_valid(const QuantParams& p) {
  return p.scale > 0.0 && std::isfinite(p.scale) && p.zero_point >= 0 &&
         p.zero_point <= 255;
}

struct QuantTensor {
  TensorU8 values;
  QuantParams params;

  const Shape& shape() const { return values.shape(); }
};

// Running min/max over observed activations. merge() is associative so
// sweeps can be split across workers.
struct CalibrationStats {
  double observed_min = std::numeric_limits<double>::infinity();
  double observed_max = -std::numeric_limits<double>::infinity();
  std::uint64_t sample_count = 0;

  void observe(double x) {
    if (x < observed_min) observed_min = x;
    if (x > observed_max) observed_max = x;
    ++sample_count;
  }

  void observe(const TensorF& t) {
    for (std::size_t i = 0; i < t.size(); ++i) observe(t.data()[i]);
  }

  static CalibrationStats merge(const CalibrationStats& a,
                                const CalibrationStats& b) {
    CalibrationStats m;
    m.observed_min = a.observed_min < b.observed_min ? a.observed_min : b.observed_min;
    m.observed_max = a.observed_max > b.observed_max ? a.observed_max : b.observed_max;
    m.sample_count = a.sample_count + b.sample_count;
    return m;
  }
};

// Rounding is half-away-from-zero everywhere (std::round semantics).
inline double round_half_away(double x) { return std::round(x); }

// Derives scale/zero_point from observed range. The range is widened to
// contain 0.0 so that real zero is exactly representable; a degenerate
// (min == max) range falls back to scale 1/255.
QuantParams calibrate(const CalibrationStats& stats);

std::uint8_t quantize_value(double x, const QuantParams& p);
inline double dequantize_value(std::uint8_t q, const QuantParams& p) {
  return (static_cast<double>(q) - p.zero_point) * p.scale;
}

QuantTensor quantize(const TensorF& t, const QuantParams& p);
TensorF dequantize(const QuantTensor& q);

// dequantize(quantize(t)): float32 output snapped to the <=256-value grid.
TensorF fake_quantize(const TensorF& t, const QuantParams& p);

// Maps an int32 conv accumulator (at scale in_scale*w_scale, zero point 0)
// onto the output activation grid. The multiplier is evaluated in float64
// so every platform requantizes identically.
std::uint8_t requantize(std::int32_t acc, double in_scale, double w_scale,
                        const QuantParams& out);

}  // namespace qdn
