#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qdn/quant.hpp"
#include "qdn/tensor.hpp"

namespace qdn {

// Predecessor id meaning "the graph input" in LayerSpec::inputs.
inline constexpr int kGraphInput = -1;

enum class LayerKind {
  kConv2d,
  kRelu,
  kLeakyRelu,
  kMaxPool2,
  kUpsampleNearest2,
  kConcat,
  kSigmoid,
  kAdd,
};

const char* layer_kind_name(LayerKind kind);
LayerKind layer_kind_from_name(const std::string& name);

template <typename T>
struct ConvWeights {
  Tensor<T> weights;       // (kh, kw, cin, cout)
  std::vector<T> bias;     // (cout)
};

// Quantized conv payload: uint8 weights plus int32 bias pre-quantized at
// scale in_scale*w_scale with zero point 0, so the accumulator adds it
// exactly.
struct QuantConvWeights {
  TensorU8 weights;  // (kh, kw, cin, cout)
  QuantParams weight_params;
  std::vector<std::int32_t> bias;
};

template <typename T>
struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  std::vector<int> inputs;  // predecessor layer ids; kGraphInput for the input

  // conv2d only (stride 1, zero-padded "same").
  int kernel_h = 0;
  int kernel_w = 0;
  int in_channels = 0;
  int out_channels = 0;
  std::optional<ConvWeights<T>> weights;
  std::optional<QuantConvWeights> qweights;

  float slope = 0.0f;  // leaky_relu only

  // Quantized graphs carry the output grid of every layer.
  std::optional<QuantParams> out_params;

  bool is_conv() const { return kind == LayerKind::kConv2d; }
};

// Topologically ordered layer list; layer i may only consume outputs of
// layers < i or the graph input. The last layer is the single output.
template <typename T>
struct ModelGraph {
  std::string name;
  Shape input_shape{};
  bool quantized = false;
  std::optional<QuantParams> input_params;
  std::vector<LayerSpec<T>> layers;
};

using ModelGraphF = ModelGraph<float>;
using ModelGraphD = ModelGraph<double>;

// Structural checks: ordering, channel consistency, weight presence
// matching the quantized flag. Throws ModelError.
template <typename T>
void validate(const ModelGraph<T>& g);

// Output shape of each layer for a given input shape (shape algebra only,
// no execution). Throws ModelError on inconsistent shapes.
template <typename T>
std::vector<Shape> layer_shapes(const ModelGraph<T>& g, const Shape& input);

struct OpCountReport {
  struct Entry {
    int layer_id = 0;
    std::string kind;
    std::uint64_t macs = 0;         // conv multiply-accumulates
    std::uint64_t elementwise = 0;  // 1 op per output element elsewhere
  };
  std::vector<Entry> per_layer;
  std::uint64_t total_macs = 0;
  std::uint64_t total_elementwise = 0;

  std::uint64_t total_ops() const { return total_macs + total_elementwise; }
};

template <typename T>
OpCountReport count_ops(const ModelGraph<T>& g, const Shape& input);

// U-Net style denoiser: 64x64x3 input, 3 encoder stages at widths
// w/2w/4w (two 3x3 convs + leaky_relu(0.2), maxpool2), bottleneck at 8w,
// 3 mirrored decoder stages (upsample, skip concat, two 3x3 convs), and a
// final 1x1 conv + sigmoid to one channel. Fully convolutional, so any
// spatial size divisible by 8 works. Conv weights are He-uniform from
// init_seed, biases zero.
template <typename T>
ModelGraph<T> build_reference_generator(int base_width,
                                        std::uint64_t init_seed = 0);

// Shallow residual cleanup net: conv3x3 1->16 + relu, conv3x3 16->16 +
// relu, conv3x3 16->1, plus the input (so zeroed final weights make it the
// identity, which is how it is initialized).
template <typename T>
ModelGraph<T> build_finetune_net(std::uint64_t init_seed = 0);

// Number of trainable parameters (conv weights + biases).
template <typename T>
std::size_t parameter_count(const ModelGraph<T>& g);

extern template void validate(const ModelGraphF&);
extern template void validate(const ModelGraphD&);
extern template std::vector<Shape> layer_shapes(const ModelGraphF&, const Shape&);
extern template std::vector<Shape> layer_shapes(const ModelGraphD&, const Shape&);
extern template OpCountReport count_ops(const ModelGraphF&, const Shape&);
extern template OpCountReport count_ops(const ModelGraphD&, const Shape&);
extern template ModelGraphF build_reference_generator(int, std::uint64_t);
extern template ModelGraphD build_reference_generator(int, std::uint64_t);
extern template ModelGraphF build_finetune_net(std::uint64_t);
extern template ModelGraphD build_finetune_net(std::uint64_t);
extern template std::size_t parameter_count(const ModelGraphF&);
extern template std::size_t parameter_count(const ModelGraphD&);

}  // namespace qdn
