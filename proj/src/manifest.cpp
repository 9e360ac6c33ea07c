#include "qdn/manifest.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "qdn/errors.hpp"

namespace qdn {

namespace {

using nlohmann::json;

constexpr int kFormatVersion = 1;

std::filesystem::path weights_path_for(const std::filesystem::path& manifest) {
  std::string s = manifest.filename().string();
  const std::string suffix = ".manifest.json";
  if (s.size() < suffix.size() ||
      s.compare(s.size() - suffix.size(), suffix.size(), suffix) != 0) {
    throw DataError("model manifest path must end with .manifest.json: " +
                    manifest.string());
  }
  s.replace(s.size() - suffix.size(), suffix.size(), ".weights.bin");
  return manifest.parent_path() / s;
}

json qparams_json(const QuantParams& p) {
  return json{{"scale", p.scale}, {"zero_point", p.zero_point}};
}

QuantParams qparams_from(const json& j) {
  QuantParams p;
  p.scale = j.at("scale").get<double>();
  p.zero_point = j.at("zero_point").get<int>();
  if (!params_valid(p)) throw DataError("manifest: invalid QuantParams");
  return p;
}

struct BlobWriter {
  std::string bytes;

  json append(const void* data, std::size_t len) {
    const std::size_t offset = bytes.size();
    bytes.append(static_cast<const char*>(data), len);
    return json{{"offset", offset}, {"length", len}};
  }
};

json blob_f32(BlobWriter& blobs, const float* data, std::size_t count) {
  static_assert(std::endian::native == std::endian::little ||
                    std::endian::native == std::endian::big,
                "mixed endian unsupported");
  if constexpr (std::endian::native == std::endian::little) {
    return blobs.append(data, count * sizeof(float));
  } else {
    std::string tmp;
    tmp.reserve(count * 4);
    for (std::size_t i = 0; i < count; ++i) {
      const std::uint32_t v = std::bit_cast<std::uint32_t>(data[i]);
      for (int b = 0; b < 4; ++b) tmp.push_back(static_cast<char>(v >> (8 * b)));
    }
    return blobs.append(tmp.data(), tmp.size());
  }
}

json blob_i32(BlobWriter& blobs, const std::int32_t* data, std::size_t count) {
  if constexpr (std::endian::native == std::endian::little) {
    return blobs.append(data, count * sizeof(std::int32_t));
  } else {
    std::string tmp;
    tmp.reserve(count * 4);
    for (std::size_t i = 0; i < count; ++i) {
      const auto v = static_cast<std::uint32_t>(data[i]);
      for (int b = 0; b < 4; ++b) tmp.push_back(static_cast<char>(v >> (8 * b)));
    }
    return blobs.append(tmp.data(), tmp.size());
  }
}

struct BlobReader {
  std::string bytes;
  std::string name;

  const char* slice(const json& ref, std::size_t expect_len) const {
    const auto offset = ref.at("offset").get<std::size_t>();
    const auto length = ref.at("length").get<std::size_t>();
    if (length != expect_len || offset + length > bytes.size()) {
      throw DataError(name + ": weight blob reference out of range");
    }
    return bytes.data() + offset;
  }
};

std::vector<float> read_f32(const BlobReader& blobs, const json& ref,
                            std::size_t count) {
  const char* p = blobs.slice(ref, count * sizeof(float));
  std::vector<float> out(count);
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(out.data(), p, count * sizeof(float));
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      std::uint32_t v = 0;
      for (int b = 3; b >= 0; --b) {
        v = (v << 8) | static_cast<unsigned char>(p[4 * i + b]);
      }
      out[i] = std::bit_cast<float>(v);
    }
  }
  return out;
}

std::vector<std::int32_t> read_i32(const BlobReader& blobs, const json& ref,
                                   std::size_t count) {
  const char* p = blobs.slice(ref, count * sizeof(std::int32_t));
  std::vector<std::int32_t> out(count);
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(out.data(), p, count * sizeof(std::int32_t));
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      std::uint32_t v = 0;
      for (int b = 3; b >= 0; --b) {
        v = (v << 8) | static_cast<unsigned char>(p[4 * i + b]);
      }
      out[i] = static_cast<std::int32_t>(v);
    }
  }
  return out;
}

}  // namespace

void save_model(const ModelGraphF& g, const std::filesystem::path& manifest) {
  validate(g);
  const std::filesystem::path wpath = weights_path_for(manifest);

  BlobWriter blobs;
  json layers = json::array();
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const LayerSpec<float>& l = g.layers[i];
    json jl;
    jl["id"] = i;
    jl["kind"] = layer_kind_name(l.kind);
    jl["inputs"] = l.inputs;
    if (l.kind == LayerKind::kLeakyRelu) jl["slope"] = l.slope;
    if (l.is_conv()) {
      jl["kernel_h"] = l.kernel_h;
      jl["kernel_w"] = l.kernel_w;
      jl["in_channels"] = l.in_channels;
      jl["out_channels"] = l.out_channels;
      if (g.quantized) {
        const QuantConvWeights& qw = *l.qweights;
        jl["weights"] = blobs.append(qw.weights.data(), qw.weights.size());
        jl["bias"] = blob_i32(blobs, qw.bias.data(), qw.bias.size());
        jl["weight_qparams"] = qparams_json(qw.weight_params);
      } else {
        const ConvWeights<float>& w = *l.weights;
        jl["weights"] = blob_f32(blobs, w.weights.data(), w.weights.size());
        jl["bias"] = blob_f32(blobs, w.bias.data(), w.bias.size());
      }
    }
    if (g.quantized) jl["out_qparams"] = qparams_json(*l.out_params);
    layers.push_back(std::move(jl));
  }

  json root;
  root["format_version"] = kFormatVersion;
  root["name"] = g.name;
  root["quantized"] = g.quantized;
  root["input_shape"] = {g.input_shape.n, g.input_shape.h, g.input_shape.w,
                         g.input_shape.c};
  if (g.quantized) root["input_qparams"] = qparams_json(*g.input_params);
  root["weights_file"] = wpath.filename().string();
  root["layers"] = std::move(layers);

  {
    std::ofstream f(wpath, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open for writing: " + wpath.string());
    f.write(blobs.bytes.data(), static_cast<std::streamsize>(blobs.bytes.size()));
  }
  std::ofstream f(manifest, std::ios::trunc);
  if (!f) throw DataError("cannot open for writing: " + manifest.string());
  f << root.dump(2) << "\n";
}

ModelGraphF load_model(const std::filesystem::path& manifest) {
  std::ifstream mf(manifest);
  if (!mf) throw DataError("cannot open: " + manifest.string());
  json root;
  try {
    root = json::parse(mf);
  } catch (const json::exception& e) {
    throw DataError(manifest.string() + ": bad manifest: " + e.what());
  }

  try {
    if (root.at("format_version").get<int>() != kFormatVersion) {
      throw DataError(manifest.string() + ": unsupported manifest version");
    }

    BlobReader blobs;
    blobs.name = manifest.string();
    {
      const std::filesystem::path wpath =
          manifest.parent_path() / root.at("weights_file").get<std::string>();
      std::ifstream wf(wpath, std::ios::binary);
      if (!wf) throw DataError("cannot open: " + wpath.string());
      blobs.bytes.assign((std::istreambuf_iterator<char>(wf)),
                         std::istreambuf_iterator<char>());
    }

    ModelGraphF g;
    g.name = root.at("name").get<std::string>();
    g.quantized = root.at("quantized").get<bool>();
    const auto& shape = root.at("input_shape");
    g.input_shape = Shape{shape.at(0).get<int>(), shape.at(1).get<int>(),
                          shape.at(2).get<int>(), shape.at(3).get<int>()};
    if (g.quantized) g.input_params = qparams_from(root.at("input_qparams"));

    for (const auto& jl : root.at("layers")) {
      LayerSpec<float> l;
      l.kind = layer_kind_from_name(jl.at("kind").get<std::string>());
      l.inputs = jl.at("inputs").get<std::vector<int>>();
      if (l.kind == LayerKind::kLeakyRelu) l.slope = jl.at("slope").get<float>();
      if (l.is_conv()) {
        l.kernel_h = jl.at("kernel_h").get<int>();
        l.kernel_w = jl.at("kernel_w").get<int>();
        l.in_channels = jl.at("in_channels").get<int>();
        l.out_channels = jl.at("out_channels").get<int>();
        const Shape wshape{l.kernel_h, l.kernel_w, l.in_channels,
                           l.out_channels};
        check_shape(wshape);
        const std::size_t wcount = wshape.volume();
        const std::size_t bcount = static_cast<std::size_t>(l.out_channels);
        if (g.quantized) {
          QuantConvWeights qw;
          const char* p = blobs.slice(jl.at("weights"), wcount);
          qw.weights = TensorU8::from_data(
              wshape, std::vector<std::uint8_t>(
                          reinterpret_cast<const unsigned char*>(p),
                          reinterpret_cast<const unsigned char*>(p) + wcount));
          qw.bias = read_i32(blobs, jl.at("bias"), bcount);
          qw.weight_params = qparams_from(jl.at("weight_qparams"));
          l.qweights = std::move(qw);
        } else {
          ConvWeights<float> w;
          w.weights =
              TensorF::from_data(wshape, read_f32(blobs, jl.at("weights"), wcount));
          w.bias = read_f32(blobs, jl.at("bias"), bcount);
          l.weights = std::move(w);
        }
      }
      if (g.quantized) l.out_params = qparams_from(jl.at("out_qparams"));
      g.layers.push_back(std::move(l));
    }

    validate(g);
    return g;
  } catch (const json::exception& e) {
    throw DataError(manifest.string() + ": bad manifest: " + e.what());
  }
}

std::filesystem::path manifest_path(const std::filesystem::path& dir,
                                    const std::string& name) {
  return dir / (name + ".manifest.json");
}

}  // namespace qdn
