#pragma once

#include "qdn/graph.hpp"
#include "qdn/quant.hpp"

namespace qdn {

// Integer-only forward pass over a quantized graph. Convolutions
// accumulate (q_x - zp_x)(q_w - zp_w) in int32 (exact for kernels <= 7x7
// and <= 1024 input channels) with the pre-quantized int32 bias, then
// requantize onto the layer's output grid. Nonlinearities and grid
// changes go through 256-entry lookup tables, so the data path between
// layers never touches floating point.
QuantTensor forward_q8(const ModelGraphF& g, const QuantTensor& x);

// quantize(f(dequantize(q))) tabulated over the whole uint8 domain.
// With in == out and the identity function this is exactly the identity
// table.
std::vector<std::uint8_t> make_requant_lut(const QuantParams& in,
                                           const QuantParams& out,
                                           double (*f)(double));

}  // namespace qdn
