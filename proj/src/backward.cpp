#include "qdn/backward.hpp"

#include "qdn/errors.hpp"

namespace qdn {

template <typename T>
void GradientSet<T>::accumulate(const GradientSet<T>& other) {
  for (std::size_t i = 0; i < weight_grads.size(); ++i) {
    for (std::size_t j = 0; j < weight_grads[i].size(); ++j) {
      weight_grads[i].data()[j] += other.weight_grads[i].data()[j];
    }
    for (std::size_t j = 0; j < bias_grads[i].size(); ++j) {
      bias_grads[i][j] += other.bias_grads[i][j];
    }
  }
}

template <typename T>
void GradientSet<T>::scale(T factor) {
  for (auto& wg : weight_grads) {
    for (std::size_t j = 0; j < wg.size(); ++j) wg.data()[j] *= factor;
  }
  for (auto& bg : bias_grads) {
    for (auto& v : bg) v *= factor;
  }
}

template <typename T>
GradientSet<T> zero_gradients(const ModelGraph<T>& g) {
  GradientSet<T> gs;
  gs.weight_grads.resize(g.layers.size());
  gs.bias_grads.resize(g.layers.size());
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    if (g.layers[i].is_conv()) {
      gs.weight_grads[i] = Tensor<T>(g.layers[i].weights->weights.shape());
      gs.bias_grads[i].assign(g.layers[i].weights->bias.size(), T{});
    }
  }
  return gs;
}

namespace {

// dW[r,s,ci,c] += x[n,ih,iw,ci] * gy[n,oh,ow,c];
// dX[n,ih,iw,ci] += w[r,s,ci,c] * gy[n,oh,ow,c].
template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& weights,
                     const Tensor<T>& gy, Tensor<T>& dweights,
                     std::vector<T>& dbias, Tensor<T>& dx) {
  const Shape xs = x.shape();
  const Shape ws = weights.shape();
  const int kh = ws.n, kw = ws.h, cin = ws.w, cout = ws.c;
  const int pad_h = (kh - 1) / 2;
  const int pad_w = (kw - 1) / 2;

  const T* xd = x.data();
  const T* wd = weights.data();
  const T* gd = gy.data();
  T* dwd = dweights.data();
  T* dxd = dx.data();

  for (int n = 0; n < xs.n; ++n) {
    for (int oh = 0; oh < xs.h; ++oh) {
      for (int ow = 0; ow < xs.w; ++ow) {
        const T* gp = gd + gy.index(n, oh, ow, 0);
        for (int c = 0; c < cout; ++c) dbias[c] += gp[c];
        for (int r = 0; r < kh; ++r) {
          const int ih = oh + r - pad_h;
          if (ih < 0 || ih >= xs.h) continue;
          for (int s = 0; s < kw; ++s) {
            const int iw = ow + s - pad_w;
            if (iw < 0 || iw >= xs.w) continue;
            const T* xp = xd + x.index(n, ih, iw, 0);
            T* dxp = dxd + dx.index(n, ih, iw, 0);
            for (int ci = 0; ci < cin; ++ci) {
              const std::size_t wbase = weights.index(r, s, ci, 0);
              const T xv = xp[ci];
              T s_dx = T{};
              T* dwrow = dwd + wbase;
              const T* wrow = wd + wbase;
              for (int c = 0; c < cout; ++c) {
                dwrow[c] += xv * gp[c];
                s_dx += wrow[c] * gp[c];
              }
              dxp[ci] += s_dx;
            }
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
BackwardResult<T> backward(const ModelGraph<T>& g, const ForwardCache<T>& cache,
                           const Tensor<T>& upstream) {
  if (cache.outputs.size() != g.layers.size()) {
    throw ModelError(g.name + ": forward cache does not match graph");
  }
  if (!(upstream.shape() == cache.outputs.back().shape())) {
    throw ModelError(g.name + ": upstream gradient shape mismatch");
  }

  auto activation = [&](int id) -> const Tensor<T>& {
    return id == kGraphInput ? cache.input : cache.outputs[id];
  };

  // One gradient buffer per layer output plus one for the graph input.
  std::vector<Tensor<T>> grads(g.layers.size());
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    grads[i] = Tensor<T>(cache.outputs[i].shape());
  }
  Tensor<T> input_grad(cache.input.shape());
  auto grad_of = [&](int id) -> Tensor<T>& {
    return id == kGraphInput ? input_grad : grads[id];
  };

  grads.back() = upstream;

  BackwardResult<T> result;
  result.grads = zero_gradients(g);

  for (int i = static_cast<int>(g.layers.size()) - 1; i >= 0; --i) {
    const LayerSpec<T>& l = g.layers[i];
    const Tensor<T>& gy = grads[i];
    const Tensor<T>& in = activation(l.inputs[0]);
    Tensor<T>& gin = grad_of(l.inputs[0]);

    switch (l.kind) {
      case LayerKind::kConv2d: {
        Tensor<T> dx(in.shape());
        conv2d_backward(in, l.weights->weights, gy, result.grads.weight_grads[i],
                        result.grads.bias_grads[i], dx);
        for (std::size_t j = 0; j < dx.size(); ++j) {
          gin.data()[j] += dx.data()[j];
        }
        break;
      }
      case LayerKind::kRelu: {
        const Tensor<T>& out = cache.outputs[i];
        for (std::size_t j = 0; j < gy.size(); ++j) {
          if (out.data()[j] > T{}) gin.data()[j] += gy.data()[j];
        }
        break;
      }
      case LayerKind::kLeakyRelu: {
        const Tensor<T>& out = cache.outputs[i];
        const T slope = static_cast<T>(l.slope);
        for (std::size_t j = 0; j < gy.size(); ++j) {
          gin.data()[j] +=
              out.data()[j] > T{} ? gy.data()[j] : slope * gy.data()[j];
        }
        break;
      }
      case LayerKind::kSigmoid: {
        const Tensor<T>& out = cache.outputs[i];
        for (std::size_t j = 0; j < gy.size(); ++j) {
          const T y = out.data()[j];
          gin.data()[j] += gy.data()[j] * y * (T{1} - y);
        }
        break;
      }
      case LayerKind::kMaxPool2: {
        // Route to the first maximum in window scan order; ties are
        // resolved the same way every run.
        const Shape s = in.shape();
        for (int n = 0; n < s.n; ++n)
          for (int oh = 0; oh < s.h / 2; ++oh)
            for (int ow = 0; ow < s.w / 2; ++ow)
              for (int c = 0; c < s.c; ++c) {
                int bh = 2 * oh, bw = 2 * ow;
                T best = in(n, bh, bw, c);
                for (int dh = 0; dh < 2; ++dh)
                  for (int dw = 0; dw < 2; ++dw) {
                    const T v = in(n, 2 * oh + dh, 2 * ow + dw, c);
                    if (v > best) {
                      best = v;
                      bh = 2 * oh + dh;
                      bw = 2 * ow + dw;
                    }
                  }
                gin(n, bh, bw, c) += gy(n, oh, ow, c);
              }
        break;
      }
      case LayerKind::kUpsampleNearest2: {
        const Shape s = in.shape();
        for (int n = 0; n < s.n; ++n)
          for (int h = 0; h < 2 * s.h; ++h)
            for (int w = 0; w < 2 * s.w; ++w)
              for (int c = 0; c < s.c; ++c) {
                gin(n, h / 2, w / 2, c) += gy(n, h, w, c);
              }
        break;
      }
      case LayerKind::kConcat: {
        const Tensor<T>& b = activation(l.inputs[1]);
        Tensor<T>& ginb = grad_of(l.inputs[1]);
        const Shape s = in.shape();
        const int ca = s.c;
        const int cb = b.shape().c;
        for (int n = 0; n < s.n; ++n)
          for (int h = 0; h < s.h; ++h)
            for (int w = 0; w < s.w; ++w) {
              for (int c = 0; c < ca; ++c) gin(n, h, w, c) += gy(n, h, w, c);
              for (int c = 0; c < cb; ++c) {
                ginb(n, h, w, c) += gy(n, h, w, ca + c);
              }
            }
        break;
      }
      case LayerKind::kAdd: {
        Tensor<T>& ginb = grad_of(l.inputs[1]);
        for (std::size_t j = 0; j < gy.size(); ++j) {
          gin.data()[j] += gy.data()[j];
          ginb.data()[j] += gy.data()[j];
        }
        break;
      }
    }
  }

  result.input_grad = std::move(input_grad);
  return result;
}

template <typename T>
BackwardResult<T> backward(const ModelGraph<T>& g, const Tensor<T>& x,
                           const Tensor<T>& upstream) {
  const ForwardCache<T> cache = forward_cached(g, x);
  return backward(g, cache, upstream);
}

template struct GradientSet<float>;
template struct GradientSet<double>;
template GradientSet<float> zero_gradients(const ModelGraphF&);
template GradientSet<double> zero_gradients(const ModelGraphD&);
template BackwardResult<float> backward(const ModelGraphF&,
                                        const ForwardCache<float>&,
                                        const TensorF&);
template BackwardResult<double> backward(const ModelGraphD&,
                                         const ForwardCache<double>&,
                                         const Tensor<double>&);
template BackwardResult<float> backward(const ModelGraphF&, const TensorF&,
                                        const TensorF&);
template BackwardResult<double> backward(const ModelGraphD&,
                                         const Tensor<double>&,
                                         const Tensor<double>&);

}  // namespace qdn
