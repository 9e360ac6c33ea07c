#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "qdn/graph.hpp"
#include "qdn/tensor.hpp"

namespace qdn {

struct StageTiming {
  std::string stage;
  double mean_s = 0.0;
  double std_s = 0.0;
  int samples = 0;
};

// Runs `work` warmup times untimed, then `repetitions` timed runs on the
// monotonic clock; reports mean and sample standard deviation.
StageTiming time_stage(const std::string& name,
                       const std::function<void()>& work, int repetitions,
                       int warmup);

enum class BenchMode { kFloat, kQuantized, kQuantizedFinetune };

const char* bench_mode_name(BenchMode m);

struct BenchOptions {
  int repetitions = 10;
  int warmup = 3;
  int overlap = 0;
  // > 1 adds a separately-reported parallel tile-inference measurement;
  // the canonical stages stay single-threaded for stability.
  int jobs = 1;
  std::string platform;  // free text; default probes /proc/cpuinfo
};

// Per-stage latency breakdown, per image. Stage set depends on mode:
// float -> {float-model}; quantized -> {tiling, quantized-model,
// stitching}; quantized+finetune adds {fine-tune}. total_s is the sum of
// the stage means; `extra` holds opt-in measurements (parallel tiles)
// that are not part of the pipeline sum.
struct BenchReport {
  BenchMode mode = BenchMode::kFloat;
  std::string platform;
  int images = 0;
  Shape image_shape{};
  std::vector<StageTiming> stages;
  std::vector<StageTiming> extra;
  double total_s = 0.0;
  std::uint64_t ops_per_image = 0;
};

// Timed sections cover compute only (no file I/O, no report writing), and
// benchmarking never changes results: `outputs`, when requested, is
// bit-identical to the plain inference path.
BenchReport run_pipeline_bench(const ModelGraphF* float_model,
                               const ModelGraphF* quant_model,
                               const ModelGraphF* finetune_model,
                               const std::vector<TensorF>& stack,
                               BenchMode mode, const BenchOptions& opts = {},
                               std::vector<TensorF>* outputs = nullptr);

void write_bench_json(const std::filesystem::path& path, const BenchReport& r);
// Plain-text breakdown table, one row per stage plus the total.
std::string format_bench_table(const BenchReport& r);

}  // namespace qdn
