#include "qdn/quant.hpp"

#include <algorithm>

#include "qdn/errors.hpp"

namespace qdn {

namespace {

int clamp_u8(double v) {
  if (v < 0.0) return 0;
  if (v > 255.0) return 255;
  return static_cast<int>(v);
}

}  // namespace

QuantParams calibrate(const CalibrationStats& stats) {
  if (stats.sample_count == 0) {
    throw DataError("calibrate: no samples observed");
  }
  if (!(stats.observed_min <= stats.observed_max)) {
    throw DataError("calibrate: inconsistent min/max");
  }
  const double lo = std::min(stats.observed_min, 0.0);
  const double hi = std::max(stats.observed_max, 0.0);

  QuantParams p;
  if (stats.observed_min == stats.observed_max) {
    // Degenerate range: span 1.0 of real values so scale stays finite.
    p.scale = 1.0 / 255.0;
  } else {
    p.scale = (hi - lo) / 255.0;
  }
  p.zero_point = clamp_u8(round_half_away(-lo / p.scale));
  return p;
}

std::uint8_t quantize_value(double x, const QuantParams& p) {
  const double q = round_half_away(x / p.scale) + p.zero_point;
  return static_cast<std::uint8_t>(clamp_u8(q));
}

QuantTensor quantize(const TensorF& t, const QuantParams& p) {
  if (!params_valid(p)) throw DataError("quantize: invalid QuantParams");
  QuantTensor out;
  out.params = p;
  out.values = TensorU8(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) {
    out.values.data()[i] = quantize_value(t.data()[i], p);
  }
  return out;
}

TensorF dequantize(const QuantTensor& q) {
  TensorF out(q.shape());
  for (std::size_t i = 0; i < q.values.size(); ++i) {
    out.data()[i] =
        static_cast<float>(dequantize_value(q.values.data()[i], q.params));
  }
  return out;
}

TensorF fake_quantize(const TensorF& t, const QuantParams& p) {
  return dequantize(quantize(t, p));
}

std::uint8_t requantize(std::int32_t acc, double in_scale, double w_scale,
                        const QuantParams& out) {
  const double multiplier = in_scale * w_scale / out.scale;
  const double q = round_half_away(acc * multiplier) + out.zero_point;
  return static_cast<std::uint8_t>(clamp_u8(q));
}

}  // namespace qdn
