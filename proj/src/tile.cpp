#include "qdn/tile.hpp"

#include <cmath>
#include <type_traits>

#include "qdn/errors.hpp"

namespace qdn {

namespace {

std::vector<int> axis_offsets(int dim, int tile, int overlap) {
  std::vector<int> offs;
  const int stride = tile - overlap;
  int r = 0;
  while (true) {
    if (r + tile >= dim) {
      offs.push_back(dim - tile);
      break;
    }
    offs.push_back(r);
    r += stride;
  }
  return offs;
}

}  // namespace

TilePlan plan_tiles(int h, int w, int tile, int overlap, Blend blend) {
  if (tile < 1) throw ShapeError("plan_tiles: tile must be >= 1");
  if (overlap < 0 || overlap >= tile) {
    throw ShapeError("plan_tiles: overlap must be in [0, tile)");
  }
  if (overlap % 2 != 0) throw ShapeError("plan_tiles: overlap must be even");
  if (h < tile || w < tile) {
    throw ShapeError("plan_tiles: image " + std::to_string(h) + "x" +
                     std::to_string(w) + " smaller than tile " +
                     std::to_string(tile));
  }

  TilePlan plan;
  plan.image_h = h;
  plan.image_w = w;
  plan.tile = tile;
  plan.overlap = overlap;
  plan.blend = blend;
  const std::vector<int> rows = axis_offsets(h, tile, overlap);
  const std::vector<int> cols = axis_offsets(w, tile, overlap);
  for (int r : rows)
    for (int c : cols) plan.entries.emplace_back(r, c);
  return plan;
}

template <typename T>
std::vector<Tensor<T>> extract_tiles(const Tensor<T>& image,
                                     const TilePlan& plan) {
  const Shape s = image.shape();
  if (s.h != plan.image_h || s.w != plan.image_w) {
    throw ShapeError("extract_tiles: image " + s.str() +
                     " does not match plan " + std::to_string(plan.image_h) +
                     "x" + std::to_string(plan.image_w));
  }
  std::vector<Tensor<T>> tiles;
  tiles.reserve(plan.entries.size());
  for (const auto& [r0, c0] : plan.entries) {
    Tensor<T> t(Shape{s.n, plan.tile, plan.tile, s.c});
    for (int n = 0; n < s.n; ++n)
      for (int h = 0; h < plan.tile; ++h)
        for (int w = 0; w < plan.tile; ++w)
          for (int c = 0; c < s.c; ++c) {
            t(n, h, w, c) = image(n, r0 + h, c0 + w, c);
          }
    tiles.push_back(std::move(t));
  }
  return tiles;
}

namespace {

template <typename T>
void check_tiles(const std::vector<Tensor<T>>& tiles, const TilePlan& plan) {
  if (tiles.size() != plan.entries.size()) {
    throw ShapeError("stitch: got " + std::to_string(tiles.size()) +
                     " tiles, plan has " + std::to_string(plan.entries.size()));
  }
  for (const auto& t : tiles) {
    const Shape s = t.shape();
    if (s.h != plan.tile || s.w != plan.tile || s.n != tiles[0].shape().n ||
        s.c != tiles[0].shape().c) {
      throw ShapeError("stitch: tile shape " + s.str() +
                       " inconsistent with plan");
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> stitch(const std::vector<Tensor<T>>& tiles, const TilePlan& plan) {
  check_tiles(tiles, plan);
  const Shape ts = tiles[0].shape();
  const Shape out_shape{ts.n, plan.image_h, plan.image_w, ts.c};

  if (plan.blend == Blend::kNone) {
    Tensor<T> out(out_shape);
    for (std::size_t i = 0; i < tiles.size(); ++i) {
      const auto& [r0, c0] = plan.entries[i];
      const Tensor<T>& t = tiles[i];
      for (int n = 0; n < ts.n; ++n)
        for (int h = 0; h < plan.tile; ++h)
          for (int w = 0; w < plan.tile; ++w)
            for (int c = 0; c < ts.c; ++c) {
              out(n, r0 + h, c0 + w, c) = t(n, h, w, c);
            }
    }
    return out;
  }

  // Average blend: accumulate in float64 with per-pixel coverage counts.
  Tensor<double> sum(out_shape);
  Tensor<double> count(out_shape);
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    const auto& [r0, c0] = plan.entries[i];
    const Tensor<T>& t = tiles[i];
    for (int n = 0; n < ts.n; ++n)
      for (int h = 0; h < plan.tile; ++h)
        for (int w = 0; w < plan.tile; ++w)
          for (int c = 0; c < ts.c; ++c) {
            sum(n, r0 + h, c0 + w, c) += static_cast<double>(t(n, h, w, c));
            count(n, r0 + h, c0 + w, c) += 1.0;
          }
  }
  Tensor<T> out(out_shape);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = sum.data()[i] / count.data()[i];
    if constexpr (std::is_integral_v<T>) {
      out.data()[i] = static_cast<T>(std::lround(v));
    } else {
      out.data()[i] = static_cast<T>(v);
    }
  }
  return out;
}

template <typename T>
void StitchAccumulator<T>::add(std::size_t plan_index, Tensor<T> tile) {
  if (plan_index >= tiles_.size()) {
    throw IndexError("StitchAccumulator: plan index out of range");
  }
  if (tile.shape().h != plan_.tile || tile.shape().w != plan_.tile) {
    throw ShapeError("StitchAccumulator: tile shape " + tile.shape().str() +
                     " inconsistent with plan");
  }
  tiles_[plan_index] = std::move(tile);
  seen_[plan_index] = true;
}

template <typename T>
bool StitchAccumulator<T>::complete() const {
  for (bool s : seen_) {
    if (!s) return false;
  }
  return true;
}

template <typename T>
Tensor<T> StitchAccumulator<T>::finalize() const {
  if (!complete()) throw DataError("StitchAccumulator: missing tiles");
  return stitch(tiles_, plan_);
}

TensorF make_triplet(const std::vector<TensorF>& stack, int i) {
  if (stack.empty()) throw DataError("make_triplet: empty stack");
  if (i < 0 || i >= static_cast<int>(stack.size())) {
    throw IndexError("make_triplet: index " + std::to_string(i) +
                     " out of range");
  }
  for (const auto& img : stack) {
    if (img.shape().c != 1 || !(img.shape() == stack[0].shape())) {
      throw ShapeError("make_triplet: stack must be congruent single-channel "
                       "images");
    }
  }
  const int last = static_cast<int>(stack.size()) - 1;
  const int prev = i > 0 ? i - 1 : i;
  const int next = i < last ? i + 1 : i;
  return stack_channels<float>({stack[prev], stack[i], stack[next]});
}

template std::vector<TensorF> extract_tiles(const TensorF&, const TilePlan&);
template std::vector<TensorU8> extract_tiles(const TensorU8&, const TilePlan&);
template TensorF stitch(const std::vector<TensorF>&, const TilePlan&);
template TensorU8 stitch(const std::vector<TensorU8>&, const TilePlan&);
template class StitchAccumulator<float>;
template class StitchAccumulator<std::uint8_t>;

}  // namespace qdn
