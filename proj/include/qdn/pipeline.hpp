#pragma once

#include <filesystem>

#include "qdn/graph.hpp"
#include "qdn/train.hpp"

namespace qdn {

// Congruent stacks of single-channel images in [0,1]; noisy[i] pairs with
// clean[i].
struct DatasetPair {
  std::vector<TensorF> noisy;
  std::vector<TensorF> clean;

  int count() const { return static_cast<int>(noisy.size()); }
};

// Synthetic low-dose/normal-dose pairs: clean slices are overlapping
// ellipses and rectangles with smooth intensity ramps on a gradient
// background; noisy slices add dose-scaled Poisson noise (dose =
// 1024/noise_level) plus Gaussian noise (sigma = 0.05*noise_level),
// clamped to [0,1]. noise_level 0 copies clean. Fully reproducible from
// the seed.
DatasetPair synth_dataset(int n_images, int h, int w, double noise_level,
                          std::uint64_t seed);

// Directory of QTNS tensors: clean_%05d.qtns / noisy_%05d.qtns.
void save_dataset(const DatasetPair& data, const std::filesystem::path& dir);
DatasetPair load_dataset(const std::filesystem::path& dir);

// (triplet tile, clean middle tile) training pairs from images
// [first, first+count), tiled at stride `tile`.
std::vector<SamplePair> make_training_tiles(const DatasetPair& data, int first,
                                            int count, int tile);

// Post-training quantization: sweeps the representative images through the
// float model once to calibrate input and per-layer activation ranges,
// quantizes weights per-tensor and biases to int32, and drops the float
// weights. Pool/upsample layers inherit their predecessor's grid (their
// value range is a subset, and inheriting keeps them exact); everything
// else gets its calibrated range.
ModelGraphF convert_model(const ModelGraphF& float_model,
                          const DatasetPair& representative);

// Whole-image float path: triplet construction then one forward pass per
// image. count < 0 means "through the end of
// the stack".
std::vector<TensorF> infer_float(const ModelGraphF& model,
                                 const std::vector<TensorF>& stack,
                                 int first = 0, int count = -1);

// As infer_float but every layer output is rounded to binary16.
std::vector<TensorF> infer_f16sim(const ModelGraphF& model,
                                  const std::vector<TensorF>& stack,
                                  int first = 0, int count = -1);

struct QuantInferOptions {
  int overlap = 0;  // even, < tile; 0 reproduces the plain grid partition
  int jobs = 1;     // worker threads over tiles; result is jobs-independent
  bool with_finetune = false;
  const ModelGraphF* finetune = nullptr;
};

// Quantized path per image: triplet -> quantize on the model's input grid
// -> tile -> integer forward per tile -> dequantize -> stitch -> optional
// float fine-tune pass.
std::vector<TensorF> infer_quantized(const ModelGraphF& qmodel,
                                     const std::vector<TensorF>& stack,
                                     int first, int count,
                                     const QuantInferOptions& opts = {});

}  // namespace qdn
