#pragma once

#include <utility>
#include <vector>

#include "qdn/tensor.hpp"

namespace qdn {

enum class Blend { kNone, kAverage };

// Deterministic mapping between a full image and its grid of fixed-size
// subimages. Offsets stride (tile - overlap) in row-major order; the last
// row/column is clamped so the final tile ends exactly at the image edge.
struct TilePlan {
  int image_h = 0;
  int image_w = 0;
  int tile = 64;
  int overlap = 0;
  Blend blend = Blend::kNone;
  std::vector<std::pair<int, int>> entries;  // (row offset, col offset)
};

TilePlan plan_tiles(int h, int w, int tile = 64, int overlap = 0,
                    Blend blend = Blend::kNone);

template <typename T>
std::vector<Tensor<T>> extract_tiles(const Tensor<T>& image,
                                     const TilePlan& plan);

// Inverse of extract_tiles. At overlap 0 this is a bit-exact copy; with
// overlap and Blend::kAverage each pixel is the mean of all covering
// tiles; with Blend::kNone the highest plan index wins.
template <typename T>
Tensor<T> stitch(const std::vector<Tensor<T>>& tiles, const TilePlan& plan);

// Collects tiles completed in any order (workers finish when they finish)
// and stitches once all have arrived. The result only depends on the plan
// indices, never on arrival order.
template <typename T>
class StitchAccumulator {
 public:
  explicit StitchAccumulator(const TilePlan& plan)
      : plan_(plan), tiles_(plan.entries.size()), seen_(plan.entries.size(), false) {}

  void add(std::size_t plan_index, Tensor<T> tile);
  bool complete() const;
  Tensor<T> finalize() const;

 private:
  TilePlan plan_;
  std::vector<Tensor<T>> tiles_;
  std::vector<bool> seen_;
};

// 3-channel input for slice i of a single-channel stack: channels are
// (i-1, i, i+1) with replicate clamping at the stack boundaries.
TensorF make_triplet(const std::vector<TensorF>& stack, int i);

extern template std::vector<TensorF> extract_tiles(const TensorF&,
                                                   const TilePlan&);
extern template std::vector<TensorU8> extract_tiles(const TensorU8&,
                                                    const TilePlan&);
extern template TensorF stitch(const std::vector<TensorF>&, const TilePlan&);
extern template TensorU8 stitch(const std::vector<TensorU8>&, const TilePlan&);
extern template class StitchAccumulator<float>;
extern template class StitchAccumulator<std::uint8_t>;

}  // namespace qdn
