// Video clips as [frames, channels, height, width] tensors with values in
// [0,1], plus the bilinear resize used by spatial augmentation.
#pragma once

#include <cmath>
#include <cstdint>

#include "tricl/common.hpp"
#include "tricl/tensor.hpp"

namespace tricl::video {

struct VideoClip {
  Tensor data;  // [T, C, H, W], values in [0, 1]
  double fps = 5.0;

  std::int64_t frames() const { return data.defined() ? data.extent(0) : 0; }
  std::int64_t channels() const { return data.defined() ? data.extent(1) : 0; }
  std::int64_t height() const { return data.defined() ? data.extent(2) : 0; }
  std::int64_t width() const { return data.defined() ? data.extent(3) : 0; }

  void validate() const {
    require(data.defined() && data.rank() == 4, ErrorKind::InvalidShape,
            "video: data must be [T,C,H,W]");
  }
};

// Align-corners bilinear sampling of a crop region, resized to out x out.
// Equal sizes with a full-frame crop reproduce the input exactly.
inline Tensor resize_crop_bilinear(const Tensor& clip, std::int64_t top, std::int64_t left,
                                   std::int64_t crop_h, std::int64_t crop_w, std::int64_t out) {
  require(clip.rank() == 4, ErrorKind::InvalidShape, "resize: expects [T,C,H,W]");
  const auto T = clip.extent(0), C = clip.extent(1), H = clip.extent(2), W = clip.extent(3);
  require(top >= 0 && left >= 0 && crop_h >= 1 && crop_w >= 1 && top + crop_h <= H &&
              left + crop_w <= W,
          ErrorKind::InvalidShape, "resize: crop outside frame");
  require(out >= 1, ErrorKind::InvalidShape, "resize: output size must be >= 1");

  const double sy = out > 1 ? static_cast<double>(crop_h - 1) / static_cast<double>(out - 1) : 0.0;
  const double sx = out > 1 ? static_cast<double>(crop_w - 1) / static_cast<double>(out - 1) : 0.0;
  const auto& src = clip.values();
  std::vector<Real> dst(static_cast<size_t>(T * C * out * out));
  for (std::int64_t t = 0; t < T; ++t)
    for (std::int64_t c = 0; c < C; ++c) {
      const Real* plane = src.data() + (t * C + c) * H * W;
      Real* op = dst.data() + (t * C + c) * out * out;
      for (std::int64_t i = 0; i < out; ++i) {
        const double fy = static_cast<double>(top) + sy * static_cast<double>(i);
        const auto y0 = static_cast<std::int64_t>(fy);
        const auto y1 = std::min(y0 + 1, H - 1);
        const double wy = fy - static_cast<double>(y0);
        for (std::int64_t j = 0; j < out; ++j) {
          const double fx = static_cast<double>(left) + sx * static_cast<double>(j);
          const auto x0 = static_cast<std::int64_t>(fx);
          const auto x1 = std::min(x0 + 1, W - 1);
          const double wx = fx - static_cast<double>(x0);
          const double v00 = plane[y0 * W + x0], v01 = plane[y0 * W + x1];
          const double v10 = plane[y1 * W + x0], v11 = plane[y1 * W + x1];
          op[i * out + j] = static_cast<Real>((1 - wy) * ((1 - wx) * v00 + wx * v01) +
                                              wy * ((1 - wx) * v10 + wx * v11));
        }
      }
    }
  return Tensor::from({T, C, out, out}, std::move(dst));
}

}  // namespace tricl::video
