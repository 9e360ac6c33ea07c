#pragma once

#include "qdn/forward.hpp"
#include "qdn/graph.hpp"

namespace qdn {

// Per-parameter gradients, index-aligned with the graph's layers. Non-conv
// layers keep empty slots.
template <typename T>
struct GradientSet {
  std::vector<Tensor<T>> weight_grads;
  std::vector<std::vector<T>> bias_grads;

  void accumulate(const GradientSet& other);
  void scale(T factor);
};

template <typename T>
GradientSet<T> zero_gradients(const ModelGraph<T>& g);

template <typename T>
struct BackwardResult {
  GradientSet<T> grads;
  Tensor<T> input_grad;
};

// Reverse-mode gradients for every layer kind. `cache` must come from
// forward_cached on the same graph; maxpool routes gradient to the first
// maximum in window scan order, upsample sum-pools it, concat splits it.
template <typename T>
BackwardResult<T> backward(const ModelGraph<T>& g, const ForwardCache<T>& cache,
                           const Tensor<T>& upstream);

// Convenience: runs the forward pass first.
template <typename T>
BackwardResult<T> backward(const ModelGraph<T>& g, const Tensor<T>& x,
                           const Tensor<T>& upstream);

extern template struct GradientSet<float>;
extern template struct GradientSet<double>;
extern template GradientSet<float> zero_gradients(const ModelGraphF&);
extern template GradientSet<double> zero_gradients(const ModelGraphD&);
extern template BackwardResult<float> backward(const ModelGraphF&,
                                               const ForwardCache<float>&,
                                               const TensorF&);
extern template BackwardResult<double> backward(const ModelGraphD&,
                                                const ForwardCache<double>&,
                                                const Tensor<double>&);
extern template BackwardResult<float> backward(const ModelGraphF&,
                                               const TensorF&, const TensorF&);
extern template BackwardResult<double> backward(const ModelGraphD&,
                                                const Tensor<double>&,
                                                const Tensor<double>&);

}  // namespace qdn
