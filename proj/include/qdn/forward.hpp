#pragma once

#include "qdn/graph.hpp"

namespace qdn {

// All layer outputs in layer order, plus the input; kept around so the
// backward pass can reuse them.
template <typename T>
struct ForwardCache {
  Tensor<T> input;
  std::vector<Tensor<T>> outputs;
};

// Zero-padded "same" convolution, stride 1. The reduction for each output
// element runs in fixed (kernel row, kernel col, input channel) order, so
// results are bit-identical from run to run.
template <typename T>
Tensor<T> conv2d_same(const Tensor<T>& x, const Tensor<T>& weights,
                      const std::vector<T>& bias);

template <typename T>
ForwardCache<T> forward_cached(const ModelGraph<T>& g, const Tensor<T>& x);

template <typename T>
Tensor<T> forward(const ModelGraph<T>& g, const Tensor<T>& x);

inline TensorF forward_f32(const ModelGraphF& g, const TensorF& x) {
  return forward(g, x);
}

// Same algorithm with every layer output (and the input) rounded to IEEE
// binary16, emulating a half-precision inference path.
TensorF forward_f16sim(const ModelGraphF& g, const TensorF& x);

extern template struct ForwardCache<float>;
extern template struct ForwardCache<double>;
extern template TensorF conv2d_same(const TensorF&, const TensorF&,
                                    const std::vector<float>&);
extern template Tensor<double> conv2d_same(const Tensor<double>&,
                                           const Tensor<double>&,
                                           const std::vector<double>&);
extern template ForwardCache<float> forward_cached(const ModelGraphF&,
                                                   const TensorF&);
extern template ForwardCache<double> forward_cached(const ModelGraphD&,
                                                    const Tensor<double>&);
extern template TensorF forward(const ModelGraphF&, const TensorF&);
extern template Tensor<double> forward(const ModelGraphD&,
                                       const Tensor<double>&);

}  // namespace qdn
