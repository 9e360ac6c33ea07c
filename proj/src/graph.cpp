#include "qdn/graph.hpp"

#include <cmath>

#include "qdn/errors.hpp"
#include "qdn/rng.hpp"

namespace qdn {

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv2d: return "conv2d";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kLeakyRelu: return "leaky_relu";
    case LayerKind::kMaxPool2: return "maxpool2";
    case LayerKind::kUpsampleNearest2: return "upsample_nearest2";
    case LayerKind::kConcat: return "concat";
    case LayerKind::kSigmoid: return "sigmoid";
    case LayerKind::kAdd: return "add";
  }
  return "?";
}

LayerKind layer_kind_from_name(const std::string& name) {
  if (name == "conv2d") return LayerKind::kConv2d;
  if (name == "relu") return LayerKind::kRelu;
  if (name == "leaky_relu") return LayerKind::kLeakyRelu;
  if (name == "maxpool2") return LayerKind::kMaxPool2;
  if (name == "upsample_nearest2") return LayerKind::kUpsampleNearest2;
  if (name == "concat") return LayerKind::kConcat;
  if (name == "sigmoid") return LayerKind::kSigmoid;
  if (name == "add") return LayerKind::kAdd;
  throw ModelError("unknown layer kind: " + name);
}

namespace {

int expected_inputs(LayerKind kind) {
  return (kind == LayerKind::kConcat || kind == LayerKind::kAdd) ? 2 : 1;
}

}  // namespace

template <typename T>
void validate(const ModelGraph<T>& g) {
  check_shape(g.input_shape);
  if (g.layers.empty()) throw ModelError(g.name + ": graph has no layers");
  if (g.quantized && !g.input_params) {
    throw ModelError(g.name + ": quantized graph missing input params");
  }

  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const LayerSpec<T>& l = g.layers[i];
    const std::string where = g.name + " layer " + std::to_string(i);

    if (static_cast<int>(l.inputs.size()) != expected_inputs(l.kind)) {
      throw ModelError(where + ": " + layer_kind_name(l.kind) + " expects " +
                       std::to_string(expected_inputs(l.kind)) + " inputs");
    }
    for (int pred : l.inputs) {
      if (pred != kGraphInput && (pred < 0 || pred >= static_cast<int>(i))) {
        throw ModelError(where + ": predecessor " + std::to_string(pred) +
                         " does not precede it");
      }
    }

    if (l.is_conv()) {
      if (l.kernel_h < 1 || l.kernel_w < 1 || l.in_channels < 1 ||
          l.out_channels < 1) {
        throw ModelError(where + ": bad conv geometry");
      }
      if (g.quantized) {
        if (!l.qweights) throw ModelError(where + ": missing quantized weights");
        const Shape ws = l.qweights->weights.shape();
        if (ws.n != l.kernel_h || ws.h != l.kernel_w || ws.w != l.in_channels ||
            ws.c != l.out_channels) {
          throw ModelError(where + ": quantized weight shape " + ws.str() +
                           " inconsistent with declared conv geometry");
        }
        if (static_cast<int>(l.qweights->bias.size()) != l.out_channels) {
          throw ModelError(where + ": bias length mismatch");
        }
        if (!params_valid(l.qweights->weight_params)) {
          throw ModelError(where + ": invalid weight params");
        }
      } else {
        if (!l.weights) throw ModelError(where + ": missing float weights");
        const Shape ws = l.weights->weights.shape();
        if (ws.n != l.kernel_h || ws.h != l.kernel_w || ws.w != l.in_channels ||
            ws.c != l.out_channels) {
          throw ModelError(where + ": weight shape " + ws.str() +
                           " inconsistent with declared conv geometry");
        }
        if (static_cast<int>(l.weights->bias.size()) != l.out_channels) {
          throw ModelError(where + ": bias length mismatch");
        }
      }
    }
    if (g.quantized && !l.out_params) {
      throw ModelError(where + ": quantized graph missing output params");
    }
    if (g.quantized && l.out_params && !params_valid(*l.out_params)) {
      throw ModelError(where + ": invalid output params");
    }
  }
  // Shape algebra doubles as the channel-consistency check.
  layer_shapes(g, g.input_shape);
}

template <typename T>
std::vector<Shape> layer_shapes(const ModelGraph<T>& g, const Shape& input) {
  check_shape(input);
  std::vector<Shape> shapes(g.layers.size());
  auto shape_of = [&](int id) -> const Shape& {
    return id == kGraphInput ? input : shapes[id];
  };

  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const LayerSpec<T>& l = g.layers[i];
    const std::string where = g.name + " layer " + std::to_string(i);
    const Shape& in = shape_of(l.inputs[0]);

    switch (l.kind) {
      case LayerKind::kConv2d:
        if (in.c != l.in_channels) {
          throw ModelError(where + ": conv expects " +
                           std::to_string(l.in_channels) + " channels, got " +
                           in.str());
        }
        shapes[i] = Shape{in.n, in.h, in.w, l.out_channels};
        break;
      case LayerKind::kMaxPool2:
        if (in.h % 2 != 0 || in.w % 2 != 0) {
          throw ModelError(where + ": maxpool2 needs even spatial dims, got " +
                           in.str());
        }
        shapes[i] = Shape{in.n, in.h / 2, in.w / 2, in.c};
        break;
      case LayerKind::kUpsampleNearest2:
        shapes[i] = Shape{in.n, in.h * 2, in.w * 2, in.c};
        break;
      case LayerKind::kConcat: {
        const Shape& b = shape_of(l.inputs[1]);
        if (b.n != in.n || b.h != in.h || b.w != in.w) {
          throw ModelError(where + ": concat operands disagree: " + in.str() +
                           " vs " + b.str());
        }
        shapes[i] = Shape{in.n, in.h, in.w, in.c + b.c};
        break;
      }
      case LayerKind::kAdd: {
        const Shape& b = shape_of(l.inputs[1]);
        if (!(b == in)) {
          throw ModelError(where + ": add operands disagree: " + in.str() +
                           " vs " + b.str());
        }
        shapes[i] = in;
        break;
      }
      case LayerKind::kRelu:
      case LayerKind::kLeakyRelu:
      case LayerKind::kSigmoid:
        shapes[i] = in;
        break;
    }
  }
  return shapes;
}

template <typename T>
OpCountReport count_ops(const ModelGraph<T>& g, const Shape& input) {
  OpCountReport report;
  if (g.layers.empty()) return report;
  const std::vector<Shape> shapes = layer_shapes(g, input);

  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const LayerSpec<T>& l = g.layers[i];
    OpCountReport::Entry e;
    e.layer_id = static_cast<int>(i);
    e.kind = layer_kind_name(l.kind);
    const Shape& out = shapes[i];
    if (l.is_conv()) {
      e.macs = static_cast<std::uint64_t>(out.n) * out.h * out.w * l.kernel_h *
               l.kernel_w * l.in_channels * l.out_channels;
    } else {
      e.elementwise = out.volume();
    }
    report.total_macs += e.macs;
    report.total_elementwise += e.elementwise;
    report.per_layer.push_back(std::move(e));
  }
  return report;
}

namespace {

template <typename T>
LayerSpec<T> make_conv(int pred, int kh, int kw, int cin, int cout, Rng& rng,
                       bool zero_init) {
  LayerSpec<T> l;
  l.kind = LayerKind::kConv2d;
  l.inputs = {pred};
  l.kernel_h = kh;
  l.kernel_w = kw;
  l.in_channels = cin;
  l.out_channels = cout;
  ConvWeights<T> w;
  w.weights = Tensor<T>(Shape{kh, kw, cin, cout});
  w.bias.assign(static_cast<std::size_t>(cout), T{});
  if (!zero_init) {
    // He-uniform: limit = sqrt(6 / fan_in).
    const double limit = std::sqrt(6.0 / (static_cast<double>(kh) * kw * cin));
    for (std::size_t i = 0; i < w.weights.size(); ++i) {
      w.weights.data()[i] = static_cast<T>(rng.uniform(-limit, limit));
    }
  }
  l.weights = std::move(w);
  return l;
}

template <typename T>
LayerSpec<T> make_unary(LayerKind kind, int pred, float slope = 0.0f) {
  LayerSpec<T> l;
  l.kind = kind;
  l.inputs = {pred};
  l.slope = slope;
  return l;
}

}  // namespace

template <typename T>
ModelGraph<T> build_reference_generator(int base_width,
                                        std::uint64_t init_seed) {
  if (base_width < 1) throw ModelError("base_width must be >= 1");
  const float kSlope = 0.2f;
  Rng rng(init_seed ^ 0x67656E6572ull);  // distinct stream per model family

  ModelGraph<T> g;
  g.name = "generator-w" + std::to_string(base_width);
  g.input_shape = Shape{1, 64, 64, 3};

  auto& L = g.layers;
  int last = kGraphInput;
  auto add = [&](LayerSpec<T> l) {
    L.push_back(std::move(l));
    last = static_cast<int>(L.size()) - 1;
    return last;
  };
  auto conv_lrelu = [&](int cin, int cout) {
    add(make_conv<T>(last, 3, 3, cin, cout, rng, false));
    add(make_unary<T>(LayerKind::kLeakyRelu, last, kSlope));
  };

  const int w1 = base_width, w2 = 2 * base_width, w4 = 4 * base_width,
            w8 = 8 * base_width;

  conv_lrelu(3, w1);
  conv_lrelu(w1, w1);
  const int skip1 = last;
  add(make_unary<T>(LayerKind::kMaxPool2, last));

  conv_lrelu(w1, w2);
  conv_lrelu(w2, w2);
  const int skip2 = last;
  add(make_unary<T>(LayerKind::kMaxPool2, last));

  conv_lrelu(w2, w4);
  conv_lrelu(w4, w4);
  const int skip3 = last;
  add(make_unary<T>(LayerKind::kMaxPool2, last));

  conv_lrelu(w4, w8);
  conv_lrelu(w8, w8);

  auto decoder_stage = [&](int skip, int cin, int skip_c, int cout) {
    add(make_unary<T>(LayerKind::kUpsampleNearest2, last));
    LayerSpec<T> cat;
    cat.kind = LayerKind::kConcat;
    cat.inputs = {last, skip};
    add(std::move(cat));
    conv_lrelu(cin + skip_c, cout);
    conv_lrelu(cout, cout);
  };
  decoder_stage(skip3, w8, w4, w4);
  decoder_stage(skip2, w4, w2, w2);
  decoder_stage(skip1, w2, w1, w1);

  add(make_conv<T>(last, 1, 1, w1, 1, rng, false));
  add(make_unary<T>(LayerKind::kSigmoid, last));

  validate(g);
  return g;
}

template <typename T>
ModelGraph<T> build_finetune_net(std::uint64_t init_seed) {
  Rng rng(init_seed ^ 0x66696E65ull);

  ModelGraph<T> g;
  g.name = "finetune";
  g.input_shape = Shape{1, 64, 64, 1};  // fully convolutional; any H, W

  g.layers.push_back(make_conv<T>(kGraphInput, 3, 3, 1, 16, rng, false));
  g.layers.push_back(make_unary<T>(LayerKind::kRelu, 0));
  g.layers.push_back(make_conv<T>(1, 3, 3, 16, 16, rng, false));
  g.layers.push_back(make_unary<T>(LayerKind::kRelu, 2));
  // Final conv zero-initialized so the residual add starts as the identity.
  g.layers.push_back(make_conv<T>(3, 3, 3, 16, 1, rng, true));
  LayerSpec<T> res;
  res.kind = LayerKind::kAdd;
  res.inputs = {4, kGraphInput};
  g.layers.push_back(std::move(res));

  validate(g);
  return g;
}

template <typename T>
std::size_t parameter_count(const ModelGraph<T>& g) {
  std::size_t count = 0;
  for (const auto& l : g.layers) {
    if (l.is_conv() && l.weights) {
      count += l.weights->weights.size() + l.weights->bias.size();
    }
  }
  return count;
}

template void validate(const ModelGraphF&);
template void validate(const ModelGraphD&);
template std::vector<Shape> layer_shapes(const ModelGraphF&, const Shape&);
template std::vector<Shape> layer_shapes(const ModelGraphD&, const Shape&);
template OpCountReport count_ops(const ModelGraphF&, const Shape&);
template OpCountReport count_ops(const ModelGraphD&, const Shape&);
template ModelGraphF build_reference_generator(int, std::uint64_t);
template ModelGraphD build_reference_generator(int, std::uint64_t);
template ModelGraphF build_finetune_net(std::uint64_t);
template ModelGraphD build_finetune_net(std::uint64_t);
template std::size_t parameter_count(const ModelGraphF&);
template std::size_t parameter_count(const ModelGraphD&);

}  // namespace qdn
