// Shared test oracles and fixtures. Everything here is reference-path
// code kept independent of the library kernels it checks.
#pragma once

#include <cmath>
#include <vector>

#include "qdn/forward.hpp"
#include "qdn/graph.hpp"
#include "qdn/quant.hpp"
#include "qdn/rng.hpp"
#include "qdn/ssim.hpp"

namespace testsupport {

using namespace qdn;

inline TensorF random_tensor(Shape s, Rng& rng, double lo = -1.0,
                             double hi = 1.0) {
  TensorF t(s);
  for (std::size_t i = 0; i < t.size(); ++i) {
    t.data()[i] = static_cast<float>(rng.uniform(lo, hi));
  }
  return t;
}

inline QuantParams params_for(const TensorF& t) {
  CalibrationStats s;
  s.observe(t);
  return calibrate(s);
}

struct QuantConvCase {
  ModelGraphF graph;
  QuantTensor input;
  TensorF float_input;
  TensorF float_weights;
  std::vector<float> float_bias;
};

// Random single-conv quantized graph with parameters calibrated the way
// the converter would: input/weight grids from observed ranges, output
// grid from the float conv output.
inline QuantConvCase random_quant_conv(Rng& rng) {
  const int h = 1 + static_cast<int>(rng.bounded(8));
  const int w = 1 + static_cast<int>(rng.bounded(8));
  const int cin = 1 + static_cast<int>(rng.bounded(4));
  const int cout = 1 + static_cast<int>(rng.bounded(4));
  const int kh = 1 + 2 * static_cast<int>(rng.bounded(3));
  const int kw = 1 + 2 * static_cast<int>(rng.bounded(3));

  QuantConvCase c;
  const double in_lo = rng.uniform(-1.0, 0.0);
  const double in_hi = rng.uniform(0.1, 2.0);
  c.float_input = random_tensor(Shape{1, h, w, cin}, rng, in_lo, in_hi);
  c.float_weights = random_tensor(Shape{kh, kw, cin, cout}, rng, -0.8, 0.8);
  c.float_bias.resize(cout);
  for (auto& b : c.float_bias) b = static_cast<float>(rng.uniform(-0.5, 0.5));

  const QuantParams in_params = params_for(c.float_input);
  const QuantParams w_params = params_for(c.float_weights);

  ModelGraphF fg;
  fg.name = "float-conv";
  fg.input_shape = Shape{1, h, w, cin};
  LayerSpec<float> fl;
  fl.kind = LayerKind::kConv2d;
  fl.inputs = {kGraphInput};
  fl.kernel_h = kh;
  fl.kernel_w = kw;
  fl.in_channels = cin;
  fl.out_channels = cout;
  fl.weights = ConvWeights<float>{c.float_weights, c.float_bias};
  fg.layers.push_back(std::move(fl));
  const QuantParams out_params = params_for(forward_f32(fg, c.float_input));

  ModelGraphF qg;
  qg.name = "quant-conv";
  qg.input_shape = Shape{1, h, w, cin};
  qg.quantized = true;
  qg.input_params = in_params;
  LayerSpec<float> ql;
  ql.kind = LayerKind::kConv2d;
  ql.inputs = {kGraphInput};
  ql.kernel_h = kh;
  ql.kernel_w = kw;
  ql.in_channels = cin;
  ql.out_channels = cout;
  QuantConvWeights qw;
  qw.weight_params = w_params;
  qw.weights = quantize(c.float_weights, w_params).values;
  qw.bias.resize(cout);
  for (int i = 0; i < cout; ++i) {
    qw.bias[i] = static_cast<std::int32_t>(
        round_half_away(c.float_bias[i] / (in_params.scale * w_params.scale)));
  }
  ql.qweights = std::move(qw);
  ql.out_params = out_params;
  qg.layers.push_back(std::move(ql));

  c.graph = std::move(qg);
  c.input = quantize(c.float_input, in_params);
  return c;
}

// Fake-quantized float reference for a single conv: dequantized input and
// weights, bias snapped to the accumulator grid, float64 accumulation,
// then quantization onto the output grid.
inline TensorU8 fake_quant_conv_ref(const QuantConvCase& c) {
  const LayerSpec<float>& l = c.graph.layers[0];
  const QuantConvWeights& qw = *l.qweights;
  const QuantParams in = *c.graph.input_params;
  const QuantParams out = *l.out_params;

  const TensorF x = dequantize(c.input);
  QuantTensor wq;
  wq.values = qw.weights;
  wq.params = qw.weight_params;
  const TensorF wf = dequantize(wq);
  const double bias_scale = in.scale * qw.weight_params.scale;

  const Shape xs = x.shape();
  TensorU8 ref(Shape{xs.n, xs.h, xs.w, l.out_channels});
  for (int n = 0; n < xs.n; ++n)
    for (int oh = 0; oh < xs.h; ++oh)
      for (int ow = 0; ow < xs.w; ++ow)
        for (int co = 0; co < l.out_channels; ++co) {
          double acc = static_cast<double>(qw.bias[co]) * bias_scale;
          for (int r = 0; r < l.kernel_h; ++r)
            for (int s = 0; s < l.kernel_w; ++s)
              for (int ci = 0; ci < l.in_channels; ++ci) {
                const int ih = oh + r - (l.kernel_h - 1) / 2;
                const int iw = ow + s - (l.kernel_w - 1) / 2;
                if (ih < 0 || ih >= xs.h || iw < 0 || iw >= xs.w) continue;
                acc += static_cast<double>(x(n, ih, iw, ci)) *
                       static_cast<double>(wf(r, s, ci, co));
              }
          ref(n, oh, ow, co) = quantize_value(acc, out);
        }
  return ref;
}

inline int max_int_diff(const TensorU8& a, const TensorU8& b) {
  int worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(static_cast<int>(a.data()[i]) -
                                     static_cast<int>(b.data()[i])));
  }
  return worst;
}

// Direct-summation SSIM reference: per valid window position, weighted
// means and (co)variances computed from scratch.
inline double ssim_ref(const TensorF& a, const TensorF& b,
                       const SsimParams& p) {
  const int k = p.window;
  std::vector<double> g1(k);
  double gsum = 0.0;
  for (int i = 0; i < k; ++i) {
    const double d = i - (k - 1) / 2.0;
    g1[i] = std::exp(-d * d / (2.0 * p.sigma * p.sigma));
    gsum += g1[i];
  }
  for (double& v : g1) v /= gsum;

  const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
  const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);
  const int h = a.shape().h, w = a.shape().w;

  double total = 0.0;
  int count = 0;
  for (int y = 0; y + k <= h; ++y) {
    for (int x = 0; x + k <= w; ++x) {
      double mu_a = 0.0, mu_b = 0.0;
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
          const double wgt = g1[i] * g1[j];
          mu_a += wgt * a(0, y + i, x + j, 0);
          mu_b += wgt * b(0, y + i, x + j, 0);
        }
      double va = 0.0, vb = 0.0, cov = 0.0;
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
          const double wgt = g1[i] * g1[j];
          const double da = a(0, y + i, x + j, 0) - mu_a;
          const double db = b(0, y + i, x + j, 0) - mu_b;
          va += wgt * da * da;
          vb += wgt * db * db;
          cov += wgt * da * db;
        }
      total += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
               ((mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2));
      ++count;
    }
  }
  return total / count;
}

}  // namespace testsupport
