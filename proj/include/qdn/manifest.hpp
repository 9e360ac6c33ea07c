#pragma once

#include <filesystem>

#include "qdn/graph.hpp"

namespace qdn {

// Model files come in pairs: <name>.manifest.json describes the graph
// (layer list, shapes, predecessor ids, quantization parameters, blob
// offsets) and <name>.weights.bin holds the raw little-endian weight
// blobs - float32 for float models, uint8 weights + int32 biases for
// quantized ones.
void save_model(const ModelGraphF& g, const std::filesystem::path& manifest_path);
ModelGraphF load_model(const std::filesystem::path& manifest_path);

// dir/name.manifest.json
std::filesystem::path manifest_path(const std::filesystem::path& dir,
                                    const std::string& name);

}  // namespace qdn
