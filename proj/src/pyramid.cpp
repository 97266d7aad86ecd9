#include "densevo/pyramid.hpp"

#include <stdexcept>
#include <string>

namespace densevo {

GrayImage to_gray(const RgbImage& rgb) {
  GrayImage out(rgb.width(), rgb.height());
  for (std::size_t i = 0; i < rgb.size(); ++i) {
    const Rgb8 c = rgb[i];
    out[i] = static_cast<float>((0.299 * c.r + 0.587 * c.g + 0.114 * c.b) / 255.0);
  }
  return out;
}

Raster<float> downsample(const Raster<float>& img) {
  const int w = img.width() / 2, h = img.height() / 2;
  Raster<float> out(w, h);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const double s = static_cast<double>(img(2 * u, 2 * v)) + img(2 * u + 1, 2 * v) +
                       img(2 * u, 2 * v + 1) + img(2 * u + 1, 2 * v + 1);
      out(u, v) = static_cast<float>(0.25 * s);
    }
  }
  return out;
}

Intrinsics downscale(const Intrinsics& K) {
  Intrinsics out = K;
  out.fx = K.fx * 0.5;
  out.fy = K.fy * 0.5;
  out.cx = (K.cx + 0.5) * 0.5 - 0.5;
  out.cy = (K.cy + 0.5) * 0.5 - 0.5;
  out.width = K.width / 2;
  out.height = K.height / 2;
  return out;
}

Pyramid build_pyramid(const GrayImage& img, const Intrinsics& K, int n_levels) {
  if (n_levels < 1) throw std::invalid_argument("build_pyramid: n_levels must be >= 1");
  if (img.width() != K.width || img.height() != K.height)
    throw std::invalid_argument("build_pyramid: image size does not match intrinsics");
  const int coarse_w = img.width() >> (n_levels - 1);
  const int coarse_h = img.height() >> (n_levels - 1);
  if (coarse_w < 8 || coarse_h < 8)
    throw std::invalid_argument("build_pyramid: " + std::to_string(n_levels) +
                                " levels too many for a " + std::to_string(img.width()) +
                                "x" + std::to_string(img.height()) + " image");
  Pyramid pyr;
  pyr.levels.reserve(n_levels);
  pyr.levels.push_back({img, K});
  for (int l = 1; l < n_levels; ++l) {
    const auto& prev = pyr.levels.back();
    pyr.levels.push_back({downsample(prev.image), downscale(prev.K)});
  }
  return pyr;
}

ImageGradient image_gradient(const GrayImage& img) {
  const int w = img.width(), h = img.height();
  ImageGradient g{Raster<float>(w, h), Raster<float>(w, h)};
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      if (w > 1) {
        if (u == 0)
          g.gx(u, v) = img(1, v) - img(0, v);
        else if (u == w - 1)
          g.gx(u, v) = img(w - 1, v) - img(w - 2, v);
        else
          g.gx(u, v) = 0.5f * (img(u + 1, v) - img(u - 1, v));
      }
      if (h > 1) {
        if (v == 0)
          g.gy(u, v) = img(u, 1) - img(u, 0);
        else if (v == h - 1)
          g.gy(u, v) = img(u, h - 1) - img(u, h - 2);
        else
          g.gy(u, v) = 0.5f * (img(u, v + 1) - img(u, v - 1));
      }
    }
  }
  return g;
}

}  // namespace densevo
