#include "qdn/bench.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <thread>

#include "json.hpp"
#include "qdn/errors.hpp"
#include "qdn/forward.hpp"
#include "qdn/pipeline.hpp"
#include "qdn/quant_exec.hpp"
#include "qdn/tile.hpp"

namespace qdn {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

StageTiming summarize(const std::string& name, const std::vector<double>& xs) {
  StageTiming t;
  t.stage = name;
  t.samples = static_cast<int>(xs.size());
  double sum = 0.0;
  for (double x : xs) sum += x;
  t.mean_s = sum / xs.size();
  if (xs.size() > 1) {
    double var = 0.0;
    for (double x : xs) var += (x - t.mean_s) * (x - t.mean_s);
    t.std_s = std::sqrt(var / (xs.size() - 1));
  }
  return t;
}

std::string detect_platform() {
  std::string model = "unknown-cpu";
  std::ifstream f("/proc/cpuinfo");
  std::string line;
  while (std::getline(f, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto pos = line.find(':');
      if (pos != std::string::npos) {
        model = line.substr(pos + 1);
        while (!model.empty() && model.front() == ' ') model.erase(0, 1);
      }
      break;
    }
  }
  return model + ", " + std::to_string(std::thread::hardware_concurrency()) +
         " threads";
}

}  // namespace

StageTiming time_stage(const std::string& name,
                       const std::function<void()>& work, int repetitions,
                       int warmup) {
  if (repetitions < 1) throw ConfigError("time_stage: repetitions must be >= 1");
  for (int i = 0; i < warmup; ++i) work();
  std::vector<double> xs;
  xs.reserve(repetitions);
  for (int i = 0; i < repetitions; ++i) {
    const auto t0 = Clock::now();
    work();
    xs.push_back(seconds_since(t0));
  }
  return summarize(name, xs);
}

const char* bench_mode_name(BenchMode m) {
  switch (m) {
    case BenchMode::kFloat: return "float";
    case BenchMode::kQuantized: return "quantized";
    case BenchMode::kQuantizedFinetune: return "quantized+finetune";
  }
  return "?";
}

BenchReport run_pipeline_bench(const ModelGraphF* float_model,
                               const ModelGraphF* quant_model,
                               const ModelGraphF* finetune_model,
                               const std::vector<TensorF>& stack,
                               BenchMode mode, const BenchOptions& opts,
                               std::vector<TensorF>* outputs) {
  if (stack.empty()) throw DataError("bench: empty image set");
  if (opts.repetitions < 1) throw ConfigError("bench: repetitions must be >= 1");

  const bool quant = mode != BenchMode::kFloat;
  const bool with_ft = mode == BenchMode::kQuantizedFinetune;
  if (!quant && float_model == nullptr) {
    throw ModelError("bench: float mode needs the float model");
  }
  if (quant && quant_model == nullptr) {
    throw ModelError("bench: quantized mode needs the quantized model");
  }
  if (with_ft && finetune_model == nullptr) {
    throw ModelError("bench: quantized+finetune mode needs the fine-tune model");
  }

  // Input triplets are prepared once, untimed, like the file loading
  // around them.
  const int n_images = static_cast<int>(stack.size());
  std::vector<TensorF> triplets;
  triplets.reserve(n_images);
  for (int i = 0; i < n_images; ++i) triplets.push_back(make_triplet(stack, i));
  const Shape img_shape = stack[0].shape();

  BenchReport report;
  report.mode = mode;
  report.images = n_images;
  report.image_shape = img_shape;
  report.platform = opts.platform.empty() ? detect_platform() : opts.platform;

  const int reps = opts.repetitions;
  const int total_runs = reps + opts.warmup;

  if (!quant) {
    std::vector<double> model_s(reps, 0.0);
    std::vector<TensorF> outs;
    for (int r = 0; r < total_runs; ++r) {
      outs.clear();
      const auto t0 = Clock::now();
      for (const TensorF& t : triplets) outs.push_back(forward_f32(*float_model, t));
      const double dt = seconds_since(t0);
      if (r >= opts.warmup) model_s[r - opts.warmup] = dt / n_images;
    }
    std::vector<double> xs(model_s.begin(), model_s.end());
    report.stages.push_back(summarize("float-model", xs));
    report.total_s = report.stages[0].mean_s;
    report.ops_per_image =
        count_ops(*float_model, Shape{1, img_shape.h, img_shape.w,
                                      float_model->input_shape.c})
            .total_ops();
    if (outputs) *outputs = std::move(outs);
    return report;
  }

  const int tile = quant_model->input_shape.h;
  const Blend blend = opts.overlap > 0 ? Blend::kAverage : Blend::kNone;
  const TilePlan plan =
      plan_tiles(img_shape.h, img_shape.w, tile, opts.overlap, blend);
  const QuantParams in_params = *quant_model->input_params;

  std::vector<double> tiling_s(reps, 0.0), model_s(reps, 0.0),
      stitch_s(reps, 0.0), ft_s(reps, 0.0);
  std::vector<TensorF> outs;

  for (int r = 0; r < total_runs; ++r) {
    outs.clear();
    double d_tiling = 0.0, d_model = 0.0, d_stitch = 0.0, d_ft = 0.0;
    for (const TensorF& triplet : triplets) {
      auto t0 = Clock::now();
      const QuantTensor qimage = quantize(triplet, in_params);
      const std::vector<TensorU8> tiles = extract_tiles(qimage.values, plan);
      d_tiling += seconds_since(t0);

      t0 = Clock::now();
      std::vector<QuantTensor> qouts(tiles.size());
      for (std::size_t t = 0; t < tiles.size(); ++t) {
        QuantTensor qt;
        qt.values = tiles[t];
        qt.params = in_params;
        qouts[t] = forward_q8(*quant_model, qt);
      }
      d_model += seconds_since(t0);

      t0 = Clock::now();
      std::vector<TensorF> ftiles(qouts.size());
      for (std::size_t t = 0; t < qouts.size(); ++t) {
        ftiles[t] = dequantize(qouts[t]);
      }
      TensorF image = stitch(ftiles, plan);
      d_stitch += seconds_since(t0);

      if (with_ft) {
        t0 = Clock::now();
        image = forward_f32(*finetune_model, image);
        d_ft += seconds_since(t0);
      }
      outs.push_back(std::move(image));
    }
    if (r >= opts.warmup) {
      const int k = r - opts.warmup;
      tiling_s[k] = d_tiling / n_images;
      model_s[k] = d_model / n_images;
      stitch_s[k] = d_stitch / n_images;
      ft_s[k] = d_ft / n_images;
    }
  }

  report.stages.push_back(summarize("tiling", tiling_s));
  report.stages.push_back(summarize("quantized-model", model_s));
  report.stages.push_back(summarize("stitching", stitch_s));
  if (with_ft) report.stages.push_back(summarize("fine-tune", ft_s));
  for (const auto& s : report.stages) report.total_s += s.mean_s;

  const std::uint64_t gen_ops =
      count_ops(*quant_model,
                Shape{1, tile, tile, quant_model->input_shape.c})
          .total_ops() *
      plan.entries.size();
  const std::uint64_t ft_ops =
      with_ft ? count_ops(*finetune_model, Shape{1, img_shape.h, img_shape.w, 1})
                    .total_ops()
              : 0;
  report.ops_per_image = gen_ops + ft_ops;

  // Optional: the same tile inference fanned out over a worker pool,
  // reported next to the single-threaded stage.
  if (opts.jobs > 1) {
    QuantInferOptions qopts;
    qopts.overlap = opts.overlap;
    qopts.jobs = opts.jobs;
    std::vector<double> par_s(reps, 0.0);
    for (int r = 0; r < total_runs; ++r) {
      const auto t0 = Clock::now();
      infer_quantized(*quant_model, stack, 0, -1, qopts);
      const double dt = seconds_since(t0);
      if (r >= opts.warmup) par_s[r - opts.warmup] = dt / n_images;
    }
    report.extra.push_back(summarize(
        "quantized-pipeline-parallel-x" + std::to_string(opts.jobs), par_s));
  }

  if (outputs) *outputs = std::move(outs);
  return report;
}

void write_bench_json(const std::filesystem::path& path, const BenchReport& r) {
  nlohmann::json j;
  j["mode"] = bench_mode_name(r.mode);
  j["platform"] = r.platform;
  j["images"] = r.images;
  j["image_shape"] = {r.image_shape.n, r.image_shape.h, r.image_shape.w,
                      r.image_shape.c};
  j["ops_per_image"] = r.ops_per_image;
  auto stage_json = [](const StageTiming& s) {
    return nlohmann::json{{"stage", s.stage},
                          {"mean_s", s.mean_s},
                          {"std_s", s.std_s},
                          {"samples", s.samples}};
  };
  j["stages"] = nlohmann::json::array();
  for (const auto& s : r.stages) j["stages"].push_back(stage_json(s));
  j["extra"] = nlohmann::json::array();
  for (const auto& s : r.extra) j["extra"].push_back(stage_json(s));
  j["total_s"] = r.total_s;

  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot open for writing: " + path.string());
  f << j.dump(2) << "\n";
}

std::string format_bench_table(const BenchReport& r) {
  char buf[160];
  std::string out;
  std::snprintf(buf, sizeof(buf), "Mode: %s\nPlatform: %s\nImages: %d (%s)\n",
                bench_mode_name(r.mode), r.platform.c_str(), r.images,
                r.image_shape.str().c_str());
  out += buf;
  std::snprintf(buf, sizeof(buf), "Ops per image: %llu\n\n",
                static_cast<unsigned long long>(r.ops_per_image));
  out += buf;
  std::snprintf(buf, sizeof(buf), "%-36s %12s %12s %9s\n", "Stage", "Mean (s)",
                "Std (s)", "Samples");
  out += buf;
  for (const auto& s : r.stages) {
    std::snprintf(buf, sizeof(buf), "%-36s %12.6f %12.6f %9d\n",
                  s.stage.c_str(), s.mean_s, s.std_s, s.samples);
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), "%-36s %12.6f\n", "total", r.total_s);
  out += buf;
  for (const auto& s : r.extra) {
    std::snprintf(buf, sizeof(buf), "%-36s %12.6f %12.6f %9d\n",
                  s.stage.c_str(), s.mean_s, s.std_s, s.samples);
    out += buf;
  }
  return out;
}

}  // namespace qdn
