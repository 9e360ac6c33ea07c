#include "qdn/train.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <thread>

#include "qdn/errors.hpp"
#include "qdn/rng.hpp"

namespace qdn {

template <typename T>
AdamState init_adam(const ModelGraph<T>& g) {
  AdamState s;
  const std::size_t n = g.layers.size();
  s.m_w.resize(n);
  s.v_w.resize(n);
  s.m_b.resize(n);
  s.v_b.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (g.layers[i].is_conv()) {
      s.m_w[i].assign(g.layers[i].weights->weights.size(), 0.0);
      s.v_w[i].assign(g.layers[i].weights->weights.size(), 0.0);
      s.m_b[i].assign(g.layers[i].weights->bias.size(), 0.0);
      s.v_b[i].assign(g.layers[i].weights->bias.size(), 0.0);
    }
  }
  return s;
}

namespace {

void adam_update(double* m, double* v, double g, double& out, double lr_t,
                 double beta1, double beta2, double eps) {
  *m = beta1 * *m + (1.0 - beta1) * g;
  *v = beta2 * *v + (1.0 - beta2) * g * g;
  out -= lr_t * *m / (std::sqrt(*v) + eps);
}

}  // namespace

template <typename T>
void adam_step(ModelGraph<T>& g, const GradientSet<T>& grads, AdamState& state,
               const TrainConfig& cfg) {
  state.step += 1;
  const double t = static_cast<double>(state.step);
  // Fold bias correction into the step size; epsilon stays uncorrected,
  // matching the common framework formulation.
  const double lr_t = cfg.learning_rate *
                      std::sqrt(1.0 - std::pow(cfg.beta2, t)) /
                      (1.0 - std::pow(cfg.beta1, t));

  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    if (!g.layers[i].is_conv()) continue;
    auto& w = g.layers[i].weights->weights;
    auto& b = g.layers[i].weights->bias;
    for (std::size_t j = 0; j < w.size(); ++j) {
      double p = static_cast<double>(w.data()[j]);
      adam_update(&state.m_w[i][j], &state.v_w[i][j],
                  static_cast<double>(grads.weight_grads[i].data()[j]), p,
                  lr_t, cfg.beta1, cfg.beta2, cfg.epsilon);
      w.data()[j] = static_cast<T>(p);
    }
    for (std::size_t j = 0; j < b.size(); ++j) {
      double p = static_cast<double>(b[j]);
      adam_update(&state.m_b[i][j], &state.v_b[i][j],
                  static_cast<double>(grads.bias_grads[i][j]), p, lr_t,
                  cfg.beta1, cfg.beta2, cfg.epsilon);
      b[j] = static_cast<T>(p);
    }
  }
}

template <typename T>
std::pair<double, Tensor<T>> mse_loss(const Tensor<T>& pred,
                                      const Tensor<T>& target) {
  if (!(pred.shape() == target.shape())) {
    throw ShapeError("mse_loss: shape mismatch " + pred.shape().str() + " vs " +
                     target.shape().str());
  }
  const std::size_t n = pred.size();
  double sum = 0.0;
  Tensor<T> grad(pred.shape());
  const T inv = static_cast<T>(2.0 / static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double d =
        static_cast<double>(pred.data()[i]) - static_cast<double>(target.data()[i]);
    sum += d * d;
    grad.data()[i] = static_cast<T>(d) * inv;
  }
  return {sum / static_cast<double>(n), std::move(grad)};
}

void TrainHistory::write_csv(const std::filesystem::path& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot open for writing: " + path.string());
  f << "iteration,mse\n";
  char buf[64];
  for (const auto& [iter, mse] : entries) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g\n", iter, mse);
    f << buf;
  }
}

namespace {

struct SampleResult {
  double loss = 0.0;
  GradientSet<float> grads;
};

SampleResult sample_gradient(const ModelGraphF& g, const SamplePair& sample) {
  SampleResult r;
  ForwardCache<float> cache = forward_cached(g, sample.first);
  auto [loss, dpred] = mse_loss(cache.outputs.back(), sample.second);
  r.loss = loss;
  r.grads = std::move(backward(g, cache, dpred).grads);
  return r;
}

}  // namespace

ModelGraphF train_supervised(ModelGraphF g, const std::vector<SamplePair>& data,
                             const TrainConfig& cfg, TrainHistory* history) {
  if (data.empty()) throw DataError("train: empty dataset");
  if (cfg.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (cfg.iterations == 0) return g;

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::size_t cursor = 0;

  AdamState adam = init_adam(g);
  const int batch = cfg.batch_size;
  int jobs = cfg.jobs > 0 ? cfg.jobs
                          : static_cast<int>(std::thread::hardware_concurrency());
  if (jobs < 1) jobs = 1;
  jobs = std::min(jobs, batch);

  for (int iter = 1; iter <= cfg.iterations; ++iter) {
    std::vector<std::size_t> batch_idx(batch);
    for (int b = 0; b < batch; ++b) {
      if (cursor == order.size()) {
        rng.shuffle(order);
        cursor = 0;
      }
      batch_idx[b] = order[cursor++];
    }

    std::vector<SampleResult> results(batch);
    if (jobs == 1) {
      for (int b = 0; b < batch; ++b) {
        results[b] = sample_gradient(g, data[batch_idx[b]]);
      }
    } else {
      std::vector<std::thread> workers;
      workers.reserve(jobs);
      for (int t = 0; t < jobs; ++t) {
        workers.emplace_back([&, t]() {
          for (int b = t; b < batch; b += jobs) {
            results[b] = sample_gradient(g, data[batch_idx[b]]);
          }
        });
      }
      for (auto& w : workers) w.join();
    }

    // Reduce in sample order so the worker count cannot change the sum.
    GradientSet<float> total = std::move(results[0].grads);
    double loss_sum = results[0].loss;
    for (int b = 1; b < batch; ++b) {
      total.accumulate(results[b].grads);
      loss_sum += results[b].loss;
    }
    total.scale(1.0f / static_cast<float>(batch));

    adam_step(g, total, adam, cfg);
    if (history) {
      history->entries.emplace_back(iter, loss_sum / batch);
    }
  }
  return g;
}

ModelGraphF train_generator(ModelGraphF g, const std::vector<SamplePair>& tiles,
                            const TrainConfig& cfg, TrainHistory* history) {
  if (tiles.empty()) throw DataError("train_generator: empty dataset");
  for (const auto& [noisy, clean] : tiles) {
    const Shape& in = noisy.shape();
    if (in.h != g.input_shape.h || in.w != g.input_shape.w ||
        in.c != g.input_shape.c) {
      throw ShapeError("train_generator: tile " + in.str() +
                       " does not match model input " + g.input_shape.str());
    }
    if (clean.shape().h != in.h || clean.shape().w != in.w ||
        clean.shape().c != 1) {
      throw ShapeError("train_generator: bad target shape " +
                       clean.shape().str());
    }
  }
  return train_supervised(std::move(g), tiles, cfg, history);
}

ModelGraphF train_finetune(ModelGraphF ft, const std::vector<SamplePair>& pairs,
                           const TrainConfig& cfg, TrainHistory* history) {
  if (pairs.empty()) throw DataError("train_finetune: empty dataset");
  for (const auto& [in, target] : pairs) {
    if (in.shape().c != 1 || !(in.shape() == target.shape())) {
      throw ShapeError("train_finetune: pairs must be congruent single-channel "
                       "images, got " + in.shape().str() + " vs " +
                       target.shape().str());
    }
  }
  return train_supervised(std::move(ft), pairs, cfg, history);
}

template AdamState init_adam(const ModelGraphF&);
template AdamState init_adam(const ModelGraphD&);
template void adam_step(ModelGraphF&, const GradientSet<float>&, AdamState&,
                        const TrainConfig&);
template void adam_step(ModelGraphD&, const GradientSet<double>&, AdamState&,
                        const TrainConfig&);
template std::pair<double, TensorF> mse_loss(const TensorF&, const TensorF&);
template std::pair<double, Tensor<double>> mse_loss(const Tensor<double>&,
                                                    const Tensor<double>&);

}  // namespace qdn
