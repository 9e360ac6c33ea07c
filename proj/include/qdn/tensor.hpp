#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "qdn/errors.hpp"

namespace qdn {

// Dimension order is fixed: batch, height, width, channels. Storage is
// row-major in that order, so element (n,h,w,c) lives at flat index
// ((n*H + h)*W + w)*C + c.
struct Shape {
  int n = 0;
  int h = 0;
  int w = 0;
  int c = 0;

  bool operator==(const Shape&) const = default;

  std::size_t volume() const {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(h) *
           static_cast<std::size_t>(w) * static_cast<std::size_t>(c);
  }

  std::string str() const {
    return std::to_string(n) + "x" + std::to_string(h) + "x" +
           std::to_string(w) + "x" + std::to_string(c);
  }
};

inline void check_shape(const Shape& s) {
  if (s.n < 1 || s.h < 1 || s.w < 1 || s.c < 1) {
    throw ShapeError("invalid tensor shape " + s.str() +
                     ": all dims must be >= 1");
  }
}

template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape s, T fill = T{}) : shape_(s) {
    check_shape(s);
    data_.assign(s.volume(), fill);
  }

  static Tensor from_data(Shape s, std::vector<T> values) {
    check_shape(s);
    if (values.size() != s.volume()) {
      throw ShapeError("data length " + std::to_string(values.size()) +
                       " does not match shape " + s.str());
    }
    Tensor t;
    t.shape_ = s;
    t.data_ = std::move(values);
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t index(int n, int h, int w, int c) const {
    return ((static_cast<std::size_t>(n) * shape_.h + h) * shape_.w + w) *
               shape_.c +
           c;
  }

  T operator()(int n, int h, int w, int c) const {
    return data_[index(n, h, w, c)];
  }
  T& operator()(int n, int h, int w, int c) { return data_[index(n, h, w, c)]; }

  const T* data() const { return data_.data(); }
  T* data() { return data_.data(); }

  const std::vector<T>& storage() const { return data_; }
  std::vector<T>& storage() { return data_; }

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_{};
  std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorU8 = Tensor<std::uint8_t>;

// Copies channel c of t into a new single-channel tensor.
template <typename T>
Tensor<T> slice_channel(const Tensor<T>& t, int c) {
  const Shape& s = t.shape();
  if (c < 0 || c >= s.c) {
    throw IndexError("channel " + std::to_string(c) + " out of range for " +
                     s.str());
  }
  Tensor<T> out(Shape{s.n, s.h, s.w, 1});
  for (int n = 0; n < s.n; ++n)
    for (int h = 0; h < s.h; ++h)
      for (int w = 0; w < s.w; ++w) out(n, h, w, 0) = t(n, h, w, c);
  return out;
}

// Concatenates tensors along the channel axis; batch/height/width must agree.
template <typename T>
Tensor<T> stack_channels(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("stack_channels: no inputs");
  const Shape& s0 = parts.front().shape();
  int total_c = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.n != s0.n || s.h != s0.h || s.w != s0.w) {
      throw ShapeError("stack_channels: mismatched spatial dims " + s.str() +
                       " vs " + s0.str());
    }
    total_c += s.c;
  }
  Tensor<T> out(Shape{s0.n, s0.h, s0.w, total_c});
  for (int n = 0; n < s0.n; ++n)
    for (int h = 0; h < s0.h; ++h)
      for (int w = 0; w < s0.w; ++w) {
        int oc = 0;
        for (const auto& p : parts)
          for (int c = 0; c < p.shape().c; ++c) out(n, h, w, oc++) = p(n, h, w, c);
      }
  return out;
}

// Spatial window [r0, r0+h) x [c0, c0+w), all batches/channels.
template <typename T>
Tensor<T> crop_spatial(const Tensor<T>& t, int r0, int c0, int h, int w) {
  const Shape& s = t.shape();
  if (r0 < 0 || c0 < 0 || h < 1 || w < 1 || r0 + h > s.h || c0 + w > s.w) {
    throw IndexError("crop_spatial: window out of range for " + s.str());
  }
  Tensor<T> out(Shape{s.n, h, w, s.c});
  for (int n = 0; n < s.n; ++n)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < s.c; ++c) out(n, y, x, c) = t(n, r0 + y, c0 + x, c);
  return out;
}

// True iff shapes match and max |a-b| <= atol. Shape mismatch is false,
// not an error.
bool equal_approx(const TensorF& a, const TensorF& b, float atol);

// Largest |a-b| over all elements; shapes must match.
float max_abs_diff(const TensorF& a, const TensorF& b);

}  // namespace qdn
