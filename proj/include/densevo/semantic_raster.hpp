#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "densevo/raster.hpp"

namespace densevo {

// C x H x W class probabilities stored as C concatenated row-major planes.
class SemanticRaster {
 public:
  SemanticRaster() = default;
  SemanticRaster(int n_classes, int width, int height, float fill = 0.0f)
      : n_classes_(n_classes), width_(width), height_(height),
        data_(static_cast<std::size_t>(n_classes) * width * height, fill) {}
  SemanticRaster(int n_classes, int width, int height, std::vector<float> data)
      : n_classes_(n_classes), width_(width), height_(height), data_(std::move(data)) {
    if (data_.size() != static_cast<std::size_t>(n_classes) * width * height)
      throw std::invalid_argument("SemanticRaster: data size does not match dimensions");
  }

  int n_classes() const { return n_classes_; }
  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }
  std::size_t plane_size() const { return static_cast<std::size_t>(width_) * height_; }

  float& operator()(int c, int u, int v) { return data_[offset(c, u, v)]; }
  float operator()(int c, int u, int v) const { return data_[offset(c, u, v)]; }

  std::vector<float> pixel(int u, int v) const {
    std::vector<float> out(n_classes_);
    for (int c = 0; c < n_classes_; ++c) out[c] = (*this)(c, u, v);
    return out;
  }
  void set_pixel(int u, int v, std::span<const float> probs) {
    for (int c = 0; c < n_classes_; ++c) (*this)(c, u, v) = probs[c];
  }

  // Per-pixel argmax; ties resolve to the lowest class index.
  LabelImage argmax() const {
    LabelImage out(width_, height_);
    for (int v = 0; v < height_; ++v)
      for (int u = 0; u < width_; ++u) {
        int best = 0;
        for (int c = 1; c < n_classes_; ++c)
          if ((*this)(c, u, v) > (*this)(best, u, v)) best = c;
        out(u, v) = static_cast<std::uint8_t>(best);
      }
    return out;
  }

  std::span<const float> data() const { return data_; }
  std::vector<float>& storage() { return data_; }
  const std::vector<float>& storage() const { return data_; }

 private:
  std::size_t offset(int c, int u, int v) const {
    return static_cast<std::size_t>(c) * plane_size() + static_cast<std::size_t>(v) * width_ + u;
  }

  int n_classes_ = 0;
  int width_ = 0;
  int height_ = 0;
  std::vector<float> data_;
};

}  // namespace densevo
