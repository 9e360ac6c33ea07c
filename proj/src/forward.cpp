#include "qdn/forward.hpp"

#include <cmath>

#include "qdn/errors.hpp"
#include "qdn/half.hpp"

namespace qdn {

template <typename T>
Tensor<T> conv2d_same(const Tensor<T>& x, const Tensor<T>& weights,
                      const std::vector<T>& bias) {
  const Shape xs = x.shape();
  const Shape ws = weights.shape();  // (kh, kw, cin, cout)
  const int kh = ws.n, kw = ws.h, cin = ws.w, cout = ws.c;
  if (xs.c != cin) {
    throw ModelError("conv2d: input channels " + std::to_string(xs.c) +
                     " != kernel cin " + std::to_string(cin));
  }
  const int pad_h = (kh - 1) / 2;
  const int pad_w = (kw - 1) / 2;

  Tensor<T> out(Shape{xs.n, xs.h, xs.w, cout});
  std::vector<T> acc(static_cast<std::size_t>(cout));
  const T* wd = weights.data();
  const T* xd = x.data();
  T* od = out.data();

  for (int n = 0; n < xs.n; ++n) {
    for (int oh = 0; oh < xs.h; ++oh) {
      for (int ow = 0; ow < xs.w; ++ow) {
        for (int c = 0; c < cout; ++c) acc[c] = bias[c];
        for (int r = 0; r < kh; ++r) {
          const int ih = oh + r - pad_h;
          if (ih < 0 || ih >= xs.h) continue;
          for (int s = 0; s < kw; ++s) {
            const int iw = ow + s - pad_w;
            if (iw < 0 || iw >= xs.w) continue;
            const T* xp = xd + x.index(n, ih, iw, 0);
            const T* wp = wd + weights.index(r, s, 0, 0);
            for (int ci = 0; ci < cin; ++ci) {
              const T xv = xp[ci];
              const T* wrow = wp + static_cast<std::size_t>(ci) * cout;
              for (int c = 0; c < cout; ++c) acc[c] += xv * wrow[c];
            }
          }
        }
        T* op = od + out.index(n, oh, ow, 0);
        for (int c = 0; c < cout; ++c) op[c] = acc[c];
      }
    }
  }
  return out;
}

namespace {

template <typename T>
Tensor<T> maxpool2(const Tensor<T>& x) {
  const Shape s = x.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) {
    throw ModelError("maxpool2: odd spatial dims " + s.str());
  }
  Tensor<T> out(Shape{s.n, s.h / 2, s.w / 2, s.c});
  for (int n = 0; n < s.n; ++n)
    for (int oh = 0; oh < s.h / 2; ++oh)
      for (int ow = 0; ow < s.w / 2; ++ow)
        for (int c = 0; c < s.c; ++c) {
          T m = x(n, 2 * oh, 2 * ow, c);
          m = std::max(m, x(n, 2 * oh, 2 * ow + 1, c));
          m = std::max(m, x(n, 2 * oh + 1, 2 * ow, c));
          m = std::max(m, x(n, 2 * oh + 1, 2 * ow + 1, c));
          out(n, oh, ow, c) = m;
        }
  return out;
}

template <typename T>
Tensor<T> upsample_nearest2(const Tensor<T>& x) {
  const Shape s = x.shape();
  Tensor<T> out(Shape{s.n, s.h * 2, s.w * 2, s.c});
  for (int n = 0; n < s.n; ++n)
    for (int h = 0; h < s.h * 2; ++h)
      for (int w = 0; w < s.w * 2; ++w)
        for (int c = 0; c < s.c; ++c) out(n, h, w, c) = x(n, h / 2, w / 2, c);
  return out;
}

// b is the second operand for concat/add, null otherwise.
template <typename T>
Tensor<T> apply_layer(const LayerSpec<T>& l, const Tensor<T>& a,
                      const Tensor<T>* b) {
  switch (l.kind) {
    case LayerKind::kConv2d:
      return conv2d_same(a, l.weights->weights, l.weights->bias);
    case LayerKind::kRelu: {
      Tensor<T> out = a;
      for (std::size_t i = 0; i < out.size(); ++i) {
        if (out.data()[i] < T{}) out.data()[i] = T{};
      }
      return out;
    }
    case LayerKind::kLeakyRelu: {
      Tensor<T> out = a;
      const T slope = static_cast<T>(l.slope);
      for (std::size_t i = 0; i < out.size(); ++i) {
        const T v = out.data()[i];
        if (v < T{}) out.data()[i] = slope * v;
      }
      return out;
    }
    case LayerKind::kSigmoid: {
      Tensor<T> out = a;
      for (std::size_t i = 0; i < out.size(); ++i) {
        out.data()[i] = static_cast<T>(
            1.0 / (1.0 + std::exp(-static_cast<double>(out.data()[i]))));
      }
      return out;
    }
    case LayerKind::kMaxPool2:
      return maxpool2(a);
    case LayerKind::kUpsampleNearest2:
      return upsample_nearest2(a);
    case LayerKind::kConcat:
      return stack_channels<T>({a, *b});
    case LayerKind::kAdd: {
      if (!(b->shape() == a.shape())) throw ModelError("add shape mismatch");
      Tensor<T> out = a;
      for (std::size_t i = 0; i < out.size(); ++i) {
        out.data()[i] += b->data()[i];
      }
      return out;
    }
  }
  throw ModelError("unreachable layer kind");
}

}  // namespace

template <typename T>
ForwardCache<T> forward_cached(const ModelGraph<T>& g, const Tensor<T>& x) {
  if (g.quantized) {
    throw ModelError(g.name + ": float forward on a quantized graph");
  }
  if (g.layers.empty()) throw ModelError(g.name + ": empty graph");
  if (x.shape().c != g.input_shape.c) {
    throw ModelError(g.name + ": input " + x.shape().str() +
                     " incompatible with " + g.input_shape.str());
  }

  ForwardCache<T> cache;
  cache.input = x;
  cache.outputs.reserve(g.layers.size());
  auto get = [&](int id) -> const Tensor<T>& {
    return id == kGraphInput ? cache.input : cache.outputs[id];
  };
  for (const LayerSpec<T>& l : g.layers) {
    const Tensor<T>* b = l.inputs.size() > 1 ? &get(l.inputs[1]) : nullptr;
    cache.outputs.push_back(apply_layer(l, get(l.inputs[0]), b));
  }
  return cache;
}

template <typename T>
Tensor<T> forward(const ModelGraph<T>& g, const Tensor<T>& x) {
  ForwardCache<T> cache = forward_cached(g, x);
  return std::move(cache.outputs.back());
}

TensorF forward_f16sim(const ModelGraphF& g, const TensorF& x) {
  if (g.quantized) {
    throw ModelError(g.name + ": float forward on a quantized graph");
  }
  if (g.layers.empty()) throw ModelError(g.name + ": empty graph");
  auto round_tensor = [](TensorF& t) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      t.data()[i] = round_to_half(t.data()[i]);
    }
  };

  TensorF input = x;
  round_tensor(input);

  std::vector<TensorF> outputs;
  outputs.reserve(g.layers.size());
  auto get = [&](int id) -> const TensorF& {
    return id == kGraphInput ? input : outputs[id];
  };
  for (const LayerSpec<float>& l : g.layers) {
    const TensorF* b = l.inputs.size() > 1 ? &get(l.inputs[1]) : nullptr;
    TensorF out = apply_layer(l, get(l.inputs[0]), b);
    round_tensor(out);
    outputs.push_back(std::move(out));
  }
  return std::move(outputs.back());
}

template struct ForwardCache<float>;
template struct ForwardCache<double>;
template TensorF conv2d_same(const TensorF&, const TensorF&,
                             const std::vector<float>&);
template Tensor<double> conv2d_same(const Tensor<double>&,
                                    const Tensor<double>&,
                                    const std::vector<double>&);
template ForwardCache<float> forward_cached(const ModelGraphF&, const TensorF&);
template ForwardCache<double> forward_cached(const ModelGraphD&,
                                             const Tensor<double>&);
template TensorF forward(const ModelGraphF&, const TensorF&);
template Tensor<double> forward(const ModelGraphD&, const Tensor<double>&);

}  // namespace qdn
