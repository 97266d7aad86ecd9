#pragma once

#include <vector>

#include "densevo/geometry.hpp"
#include "densevo/raster.hpp"

namespace densevo {

struct PyramidLevel {
  GrayImage image;
  Intrinsics K;
};

// Level 0 is full resolution; each further level halves both dimensions (floor).
struct Pyramid {
  std::vector<PyramidLevel> levels;

  int size() const { return static_cast<int>(levels.size()); }
  const PyramidLevel& operator[](int l) const { return levels.at(l); }
};

// (0.299 R + 0.587 G + 0.114 B) / 255.
GrayImage to_gray(const RgbImage& rgb);

// 2x2 box average; an odd trailing row/column is dropped.
Raster<float> downsample(const Raster<float>& img);

// Intrinsics of the next-coarser level under the pixel-centre convention.
Intrinsics downscale(const Intrinsics& K);

// Throws std::invalid_argument when the coarsest level would be below 8x8.
Pyramid build_pyramid(const GrayImage& img, const Intrinsics& K, int n_levels);

struct ImageGradient {
  Raster<float> gx, gy;
};

// Central differences in the interior, one-sided at the borders.
ImageGradient image_gradient(const GrayImage& img);

}  // namespace densevo
