#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>

#include "qdn/backward.hpp"
#include "qdn/graph.hpp"

namespace qdn {

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 1;
  int iterations = 0;
  std::uint64_t seed = 0;
  // Worker threads for per-sample gradients; 0 = one per batch sample up
  // to hardware concurrency. Results are identical for any value.
  int jobs = 0;
};

// First/second moments in float64, index-aligned with conv layers.
struct AdamState {
  std::int64_t step = 0;
  std::vector<std::vector<double>> m_w, v_w, m_b, v_b;
};

template <typename T>
AdamState init_adam(const ModelGraph<T>& g);

// Standard Adam with bias correction, applied to every conv weight/bias.
template <typename T>
void adam_step(ModelGraph<T>& g, const GradientSet<T>& grads, AdamState& state,
               const TrainConfig& cfg);

// Returns (mean squared error, dL/dpred). The loss is accumulated in
// float64; the gradient is 2*(pred-target)/N.
template <typename T>
std::pair<double, Tensor<T>> mse_loss(const Tensor<T>& pred,
                                      const Tensor<T>& target);

struct TrainHistory {
  std::vector<std::pair<int, double>> entries;  // (iteration, mse)
  void write_csv(const std::filesystem::path& path) const;
};

using SamplePair = std::pair<TensorF, TensorF>;  // (input, target)

// Minibatch MSE training: per-epoch shuffle from the seeded generator,
// per-sample gradients reduced in sample order (so worker count never
// changes the result), Adam updates. iterations == 0 returns the model
// untouched.
ModelGraphF train_supervised(ModelGraphF g, const std::vector<SamplePair>& data,
                             const TrainConfig& cfg,
                             TrainHistory* history = nullptr);

// Denoiser training on (noisy tile, clean tile) pairs shaped like the
// model input.
ModelGraphF train_generator(ModelGraphF g, const std::vector<SamplePair>& tiles,
                            const TrainConfig& cfg,
                            TrainHistory* history = nullptr);

// Residual cleanup training on (pipeline output, ground truth) images.
ModelGraphF train_finetune(ModelGraphF ft, const std::vector<SamplePair>& pairs,
                           const TrainConfig& cfg,
                           TrainHistory* history = nullptr);

extern template AdamState init_adam(const ModelGraphF&);
extern template AdamState init_adam(const ModelGraphD&);
extern template void adam_step(ModelGraphF&, const GradientSet<float>&,
                               AdamState&, const TrainConfig&);
extern template void adam_step(ModelGraphD&, const GradientSet<double>&,
                               AdamState&, const TrainConfig&);
extern template std::pair<double, TensorF> mse_loss(const TensorF&,
                                                    const TensorF&);
extern template std::pair<double, Tensor<double>> mse_loss(
    const Tensor<double>&, const Tensor<double>&);

}  // namespace qdn
