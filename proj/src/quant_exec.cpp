#include "qdn/quant_exec.hpp"

#include <cmath>
#include <functional>

#include "qdn/errors.hpp"

namespace qdn {

std::vector<std::uint8_t> make_requant_lut(const QuantParams& in,
                                           const QuantParams& out,
                                           double (*f)(double)) {
  std::vector<std::uint8_t> lut(256);
  for (int q = 0; q < 256; ++q) {
    const double x = dequantize_value(static_cast<std::uint8_t>(q), in);
    lut[q] = quantize_value(f ? f(x) : x, out);
  }
  return lut;
}

namespace {

double relu_fn(double x) { return x > 0.0 ? x : 0.0; }
double sigmoid_fn(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct LeakyFn {
  double slope;
  double operator()(double x) const { return x >= 0.0 ? x : slope * x; }
};

TensorU8 map_lut(const TensorU8& x, const std::vector<std::uint8_t>& lut) {
  TensorU8 out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = lut[x.data()[i]];
  return out;
}

std::vector<std::uint8_t> make_lut_generic(
    const QuantParams& in, const QuantParams& out,
    const std::function<double(double)>& f) {
  std::vector<std::uint8_t> lut(256);
  for (int q = 0; q < 256; ++q) {
    const double x = dequantize_value(static_cast<std::uint8_t>(q), in);
    lut[q] = quantize_value(f(x), out);
  }
  return lut;
}

QuantTensor conv2d_q8(const QuantTensor& x, const QuantConvWeights& w,
                      const QuantParams& out_params) {
  const Shape xs = x.shape();
  const Shape ws = w.weights.shape();  // (kh, kw, cin, cout)
  const int kh = ws.n, kw = ws.h, cin = ws.w, cout = ws.c;
  if (xs.c != cin) {
    throw ModelError("conv2d_q8: input channels " + std::to_string(xs.c) +
                     " != kernel cin " + std::to_string(cin));
  }
  const int pad_h = (kh - 1) / 2;
  const int pad_w = (kw - 1) / 2;
  const int zp_x = x.params.zero_point;
  const int zp_w = w.weight_params.zero_point;

  QuantTensor out;
  out.params = out_params;
  out.values = TensorU8(Shape{xs.n, xs.h, xs.w, cout});

  std::vector<std::int32_t> acc(static_cast<std::size_t>(cout));
  const std::uint8_t* wd = w.weights.data();
  const std::uint8_t* xd = x.values.data();
  std::uint8_t* od = out.values.data();
  const double in_scale = x.params.scale;
  const double w_scale = w.weight_params.scale;

  for (int n = 0; n < xs.n; ++n) {
    for (int oh = 0; oh < xs.h; ++oh) {
      for (int ow = 0; ow < xs.w; ++ow) {
        for (int c = 0; c < cout; ++c) acc[c] = w.bias[c];
        for (int r = 0; r < kh; ++r) {
          const int ih = oh + r - pad_h;
          // Zero padding contributes (zp_x - zp_x) = 0 exactly; skip it.
          if (ih < 0 || ih >= xs.h) continue;
          for (int s = 0; s < kw; ++s) {
            const int iw = ow + s - pad_w;
            if (iw < 0 || iw >= xs.w) continue;
            const std::uint8_t* xp = xd + x.values.index(n, ih, iw, 0);
            const std::uint8_t* wp = wd + w.weights.index(r, s, 0, 0);
            for (int ci = 0; ci < cin; ++ci) {
              const std::int32_t xv = static_cast<std::int32_t>(xp[ci]) - zp_x;
              const std::uint8_t* wrow = wp + static_cast<std::size_t>(ci) * cout;
              for (int c = 0; c < cout; ++c) {
                acc[c] += xv * (static_cast<std::int32_t>(wrow[c]) - zp_w);
              }
            }
          }
        }
        std::uint8_t* op = od + out.values.index(n, oh, ow, 0);
        for (int c = 0; c < cout; ++c) {
          op[c] = requantize(acc[c], in_scale, w_scale, out_params);
        }
      }
    }
  }
  return out;
}

TensorU8 maxpool2_u8(const TensorU8& x) {
  const Shape s = x.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) {
    throw ModelError("maxpool2: odd spatial dims " + s.str());
  }
  TensorU8 out(Shape{s.n, s.h / 2, s.w / 2, s.c});
  for (int n = 0; n < s.n; ++n)
    for (int oh = 0; oh < s.h / 2; ++oh)
      for (int ow = 0; ow < s.w / 2; ++ow)
        for (int c = 0; c < s.c; ++c) {
          std::uint8_t m = x(n, 2 * oh, 2 * ow, c);
          m = std::max(m, x(n, 2 * oh, 2 * ow + 1, c));
          m = std::max(m, x(n, 2 * oh + 1, 2 * ow, c));
          m = std::max(m, x(n, 2 * oh + 1, 2 * ow + 1, c));
          out(n, oh, ow, c) = m;
        }
  return out;
}

TensorU8 upsample2_u8(const TensorU8& x) {
  const Shape s = x.shape();
  TensorU8 out(Shape{s.n, s.h * 2, s.w * 2, s.c});
  for (int n = 0; n < s.n; ++n)
    for (int h = 0; h < s.h * 2; ++h)
      for (int w = 0; w < s.w * 2; ++w)
        for (int c = 0; c < s.c; ++c) out(n, h, w, c) = x(n, h / 2, w / 2, c);
  return out;
}

// Rescale q onto `out` params unless it is already there. quantize is
// monotone, so rescaling after maxpool equals pooling after rescale.
TensorU8 to_grid(const TensorU8& v, const QuantParams& from,
                 const QuantParams& to) {
  if (from == to) return v;
  return map_lut(v, make_requant_lut(from, to, nullptr));
}

}  // namespace

QuantTensor forward_q8(const ModelGraphF& g, const QuantTensor& x) {
  if (!g.quantized) {
    throw ModelError(g.name + ": forward_q8 on a non-quantized graph");
  }
  if (!g.input_params) {
    throw ModelError(g.name + ": quantized graph missing input params");
  }
  if (!(x.params == *g.input_params)) {
    throw ModelError(g.name + ": input quantization grid does not match model");
  }
  if (x.shape().c != g.input_shape.c) {
    throw ModelError(g.name + ": input " + x.shape().str() +
                     " incompatible with " + g.input_shape.str());
  }

  std::vector<QuantTensor> outs;
  outs.reserve(g.layers.size());
  auto get = [&](int id) -> const QuantTensor& {
    return id == kGraphInput ? x : outs[id];
  };

  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const LayerSpec<float>& l = g.layers[i];
    if (!l.out_params) {
      throw ModelError(g.name + ": layer " + std::to_string(i) +
                       " missing output params");
    }
    const QuantParams& op = *l.out_params;
    const QuantTensor& in = get(l.inputs[0]);
    QuantTensor out;
    out.params = op;

    switch (l.kind) {
      case LayerKind::kConv2d:
        if (!l.qweights) {
          throw ModelError(g.name + ": layer " + std::to_string(i) +
                           " missing quantized weights");
        }
        out = conv2d_q8(in, *l.qweights, op);
        break;
      case LayerKind::kRelu:
        out.values = map_lut(in.values,
                             make_requant_lut(in.params, op, relu_fn));
        break;
      case LayerKind::kLeakyRelu: {
        LeakyFn f{static_cast<double>(l.slope)};
        out.values = map_lut(
            in.values,
            make_lut_generic(in.params, op, [&](double v) { return f(v); }));
        break;
      }
      case LayerKind::kSigmoid:
        out.values = map_lut(in.values,
                             make_requant_lut(in.params, op, sigmoid_fn));
        break;
      case LayerKind::kMaxPool2:
        out.values = to_grid(maxpool2_u8(in.values), in.params, op);
        break;
      case LayerKind::kUpsampleNearest2:
        out.values = to_grid(upsample2_u8(in.values), in.params, op);
        break;
      case LayerKind::kConcat: {
        const QuantTensor& b = get(l.inputs[1]);
        TensorU8 ua = to_grid(in.values, in.params, op);
        TensorU8 ub = to_grid(b.values, b.params, op);
        out.values = stack_channels<std::uint8_t>({ua, ub});
        break;
      }
      case LayerKind::kAdd:
        // The residual cleanup net runs in float; nothing in the
        // quantized pipeline emits add.
        throw ModelError(g.name + ": add is not supported in quantized graphs");
    }
    outs.push_back(std::move(out));
  }
  return std::move(outs.back());
}

}  // namespace qdn
