#include "qdn/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <thread>

#include "qdn/errors.hpp"
#include "qdn/forward.hpp"
#include "qdn/quant_exec.hpp"
#include "qdn/rng.hpp"
#include "qdn/tensor_io.hpp"
#include "qdn/tile.hpp"

namespace qdn {

namespace {

constexpr double kBaseDose = 1024.0;

TensorF make_phantom(int h, int w, Rng& rng) {
  TensorF img(Shape{1, h, w, 1});
  const double base = rng.uniform(0.15, 0.35);
  const double gx = rng.uniform(-0.12, 0.12) / w;
  const double gy = rng.uniform(-0.12, 0.12) / h;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      img(0, y, x, 0) = static_cast<float>(base + gx * x + gy * y);
    }

  const int shapes = 6 + static_cast<int>(rng.bounded(7));
  for (int s = 0; s < shapes; ++s) {
    const double amp = rng.uniform(-0.35, 0.45);
    if (rng.uniform() < 0.7) {
      // Ellipse with a paraboloid intensity ramp falling off to the rim.
      const double cx = rng.uniform(0.1, 0.9) * w;
      const double cy = rng.uniform(0.1, 0.9) * h;
      const double rx = rng.uniform(0.06, 0.3) * w;
      const double ry = rng.uniform(0.06, 0.3) * h;
      const int y0 = std::max(0, static_cast<int>(cy - ry));
      const int y1 = std::min(h - 1, static_cast<int>(cy + ry) + 1);
      const int x0 = std::max(0, static_cast<int>(cx - rx));
      const int x1 = std::min(w - 1, static_cast<int>(cx + rx) + 1);
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          const double dx = (x - cx) / rx;
          const double dy = (y - cy) / ry;
          const double rho2 = dx * dx + dy * dy;
          if (rho2 < 1.0) {
            img(0, y, x, 0) += static_cast<float>(amp * (1.0 - rho2));
          }
        }
    } else {
      // Rectangle with a linear ramp along one axis.
      int x0 = static_cast<int>(rng.uniform(0.0, 0.8) * w);
      int y0 = static_cast<int>(rng.uniform(0.0, 0.8) * h);
      int x1 = std::min(w - 1, x0 + 2 + static_cast<int>(rng.uniform(0.05, 0.35) * w));
      int y1 = std::min(h - 1, y0 + 2 + static_cast<int>(rng.uniform(0.05, 0.35) * h));
      const bool along_x = rng.uniform() < 0.5;
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          const double t = along_x
                               ? static_cast<double>(x - x0) / std::max(1, x1 - x0)
                               : static_cast<double>(y - y0) / std::max(1, y1 - y0);
          img(0, y, x, 0) += static_cast<float>(amp * (0.3 + 0.7 * t));
        }
    }
  }

  for (std::size_t i = 0; i < img.size(); ++i) {
    img.data()[i] = std::clamp(img.data()[i], 0.0f, 1.0f);
  }
  return img;
}

TensorF degrade(const TensorF& clean, double noise_level, Rng& rng) {
  if (noise_level <= 0.0) return clean;
  const double dose = kBaseDose / noise_level;
  const double sigma = 0.05 * noise_level;
  TensorF out(clean.shape());
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const double lambda = static_cast<double>(clean.data()[i]) * dose;
    const double photon = static_cast<double>(rng.poisson(lambda)) / dose;
    const double v = photon + sigma * rng.normal();
    out.data()[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return out;
}

std::filesystem::path numbered(const std::filesystem::path& dir,
                               const char* stem, int i) {
  char name[64];
  std::snprintf(name, sizeof(name), "%s_%05d.qtns", stem, i);
  return dir / name;
}

void check_stack(const std::vector<TensorF>& stack) {
  if (stack.empty()) throw DataError("empty image stack");
  for (const auto& img : stack) {
    if (img.shape().c != 1 || !(img.shape() == stack[0].shape())) {
      throw ShapeError("image stack must be congruent single-channel images");
    }
  }
}

std::pair<int, int> resolve_range(int stack_size, int first, int count) {
  if (first < 0 || first >= stack_size) {
    throw IndexError("image range start " + std::to_string(first) +
                     " out of range");
  }
  if (count < 0) count = stack_size - first;
  if (first + count > stack_size) {
    throw IndexError("image range end " + std::to_string(first + count) +
                     " out of range");
  }
  return {first, count};
}

}  // namespace

DatasetPair synth_dataset(int n_images, int h, int w, double noise_level,
                          std::uint64_t seed) {
  if (n_images < 1) throw DataError("synth_dataset: need at least one image");
  if (noise_level < 0.0) throw DataError("synth_dataset: negative noise level");
  check_shape(Shape{1, h, w, 1});

  Rng rng(seed);
  DatasetPair data;
  data.clean.reserve(n_images);
  data.noisy.reserve(n_images);
  for (int i = 0; i < n_images; ++i) {
    TensorF clean = make_phantom(h, w, rng);
    data.noisy.push_back(degrade(clean, noise_level, rng));
    data.clean.push_back(std::move(clean));
  }
  return data;
}

void save_dataset(const DatasetPair& data, const std::filesystem::path& dir) {
  if (data.noisy.size() != data.clean.size()) {
    throw DataError("save_dataset: stack size mismatch");
  }
  std::filesystem::create_directories(dir);
  for (int i = 0; i < data.count(); ++i) {
    write_qtns(numbered(dir, "clean", i), data.clean[i]);
    write_qtns(numbered(dir, "noisy", i), data.noisy[i]);
  }
}

DatasetPair load_dataset(const std::filesystem::path& dir) {
  DatasetPair data;
  for (int i = 0;; ++i) {
    const auto cpath = numbered(dir, "clean", i);
    const auto npath = numbered(dir, "noisy", i);
    const bool has_c = std::filesystem::exists(cpath);
    const bool has_n = std::filesystem::exists(npath);
    if (has_c != has_n) {
      throw DataError(dir.string() + ": clean/noisy pair " + std::to_string(i) +
                      " incomplete");
    }
    if (!has_c) break;
    data.clean.push_back(read_qtns_f32(cpath));
    data.noisy.push_back(read_qtns_f32(npath));
  }
  if (data.count() == 0) {
    throw DataError(dir.string() + ": no dataset pairs found");
  }
  check_stack(data.clean);
  check_stack(data.noisy);
  return data;
}

std::vector<SamplePair> make_training_tiles(const DatasetPair& data, int first,
                                            int count, int tile) {
  check_stack(data.noisy);
  auto [f, c] = resolve_range(data.count(), first, count);
  const Shape s = data.noisy[0].shape();
  const TilePlan plan = plan_tiles(s.h, s.w, tile, 0);

  std::vector<SamplePair> pairs;
  pairs.reserve(static_cast<std::size_t>(c) * plan.entries.size());
  for (int i = f; i < f + c; ++i) {
    const TensorF triplet = make_triplet(data.noisy, i);
    std::vector<TensorF> in_tiles = extract_tiles(triplet, plan);
    std::vector<TensorF> target_tiles = extract_tiles(data.clean[i], plan);
    for (std::size_t t = 0; t < in_tiles.size(); ++t) {
      pairs.emplace_back(std::move(in_tiles[t]), std::move(target_tiles[t]));
    }
  }
  return pairs;
}

ModelGraphF convert_model(const ModelGraphF& float_model,
                          const DatasetPair& representative) {
  if (float_model.quantized) {
    throw ModelError(float_model.name + ": model is already quantized");
  }
  validate(float_model);
  if (representative.count() == 0) {
    throw DataError("convert_model: empty representative dataset");
  }

  // One calibration sweep: min/max of the input and of every layer output
  // over all representative tiles.
  const Shape s = representative.noisy[0].shape();
  const int tile = float_model.input_shape.h;
  const TilePlan plan = plan_tiles(s.h, s.w, tile, 0);

  CalibrationStats input_stats;
  std::vector<CalibrationStats> layer_stats(float_model.layers.size());
  for (int i = 0; i < representative.count(); ++i) {
    const TensorF triplet = make_triplet(representative.noisy, i);
    for (TensorF& t : extract_tiles(triplet, plan)) {
      input_stats.observe(t);
      const ForwardCache<float> cache = forward_cached(float_model, t);
      for (std::size_t l = 0; l < cache.outputs.size(); ++l) {
        layer_stats[l].observe(cache.outputs[l]);
      }
    }
  }

  ModelGraphF q;
  q.name = float_model.name;
  q.input_shape = float_model.input_shape;
  q.quantized = true;
  q.input_params = calibrate(input_stats);

  std::vector<QuantParams> assigned(float_model.layers.size());
  auto params_of = [&](int id) -> const QuantParams& {
    return id == kGraphInput ? *q.input_params : assigned[id];
  };

  for (std::size_t i = 0; i < float_model.layers.size(); ++i) {
    const LayerSpec<float>& fl = float_model.layers[i];
    LayerSpec<float> ql;
    ql.kind = fl.kind;
    ql.inputs = fl.inputs;
    ql.slope = fl.slope;
    ql.kernel_h = fl.kernel_h;
    ql.kernel_w = fl.kernel_w;
    ql.in_channels = fl.in_channels;
    ql.out_channels = fl.out_channels;

    if (fl.kind == LayerKind::kMaxPool2 ||
        fl.kind == LayerKind::kUpsampleNearest2) {
      assigned[i] = params_of(fl.inputs[0]);
    } else {
      assigned[i] = calibrate(layer_stats[i]);
    }
    ql.out_params = assigned[i];

    if (fl.is_conv()) {
      const ConvWeights<float>& w = *fl.weights;
      CalibrationStats wstats;
      wstats.observe(w.weights);
      QuantConvWeights qw;
      qw.weight_params = calibrate(wstats);
      qw.weights = quantize(w.weights, qw.weight_params).values;

      // Bias on the accumulator grid: scale in_scale*w_scale, zero point 0.
      const double bias_scale =
          params_of(fl.inputs[0]).scale * qw.weight_params.scale;
      qw.bias.resize(w.bias.size());
      for (std::size_t b = 0; b < w.bias.size(); ++b) {
        const double v = round_half_away(w.bias[b] / bias_scale);
        const double clamped =
            std::clamp(v, -2147483648.0, 2147483647.0);
        qw.bias[b] = static_cast<std::int32_t>(clamped);
      }
      ql.qweights = std::move(qw);
    }
    q.layers.push_back(std::move(ql));
  }

  validate(q);
  return q;
}

std::vector<TensorF> infer_float(const ModelGraphF& model,
                                 const std::vector<TensorF>& stack, int first,
                                 int count) {
  if (model.quantized) {
    throw ModelError(model.name + ": float inference needs a float model");
  }
  check_stack(stack);
  auto [f, c] = resolve_range(static_cast<int>(stack.size()), first, count);
  std::vector<TensorF> out;
  out.reserve(c);
  for (int i = f; i < f + c; ++i) {
    out.push_back(forward_f32(model, make_triplet(stack, i)));
  }
  return out;
}

std::vector<TensorF> infer_f16sim(const ModelGraphF& model,
                                  const std::vector<TensorF>& stack, int first,
                                  int count) {
  if (model.quantized) {
    throw ModelError(model.name + ": f16 inference needs a float model");
  }
  check_stack(stack);
  auto [f, c] = resolve_range(static_cast<int>(stack.size()), first, count);
  std::vector<TensorF> out;
  out.reserve(c);
  for (int i = f; i < f + c; ++i) {
    out.push_back(forward_f16sim(model, make_triplet(stack, i)));
  }
  return out;
}

std::vector<TensorF> infer_quantized(const ModelGraphF& qmodel,
                                     const std::vector<TensorF>& stack,
                                     int first, int count,
                                     const QuantInferOptions& opts) {
  if (!qmodel.quantized) {
    throw ModelError(qmodel.name + ": quantized inference needs a quantized model");
  }
  if (opts.with_finetune && opts.finetune == nullptr) {
    throw ModelError("fine-tune pass requested but no fine-tune model given");
  }
  if (opts.finetune && opts.finetune->quantized) {
    throw ModelError("fine-tune model must be a float model");
  }
  check_stack(stack);
  auto [f, c] = resolve_range(static_cast<int>(stack.size()), first, count);

  const Shape s = stack[0].shape();
  const int tile = qmodel.input_shape.h;
  const Blend blend = opts.overlap > 0 ? Blend::kAverage : Blend::kNone;
  const TilePlan plan = plan_tiles(s.h, s.w, tile, opts.overlap, blend);
  const QuantParams in_params = *qmodel.input_params;

  std::vector<TensorF> out;
  out.reserve(c);
  for (int i = f; i < f + c; ++i) {
    const TensorF triplet = make_triplet(stack, i);
    const QuantTensor qimage = quantize(triplet, in_params);
    const std::vector<TensorU8> tiles = extract_tiles(qimage.values, plan);

    std::vector<TensorF> done(tiles.size());
    auto run_tile = [&](std::size_t t) {
      QuantTensor qt;
      qt.values = tiles[t];
      qt.params = in_params;
      done[t] = dequantize(forward_q8(qmodel, qt));
    };
    const int jobs = std::max(1, opts.jobs);
    if (jobs == 1) {
      for (std::size_t t = 0; t < tiles.size(); ++t) run_tile(t);
    } else {
      std::vector<std::thread> workers;
      workers.reserve(jobs);
      for (int wkr = 0; wkr < jobs; ++wkr) {
        workers.emplace_back([&, wkr]() {
          for (std::size_t t = wkr; t < tiles.size(); t += jobs) run_tile(t);
        });
      }
      for (auto& wt : workers) wt.join();
    }

    TensorF image = stitch(done, plan);
    if (opts.with_finetune) {
      image = forward_f32(*opts.finetune, image);
    }
    out.push_back(std::move(image));
  }
  return out;
}

}  // namespace qdn
