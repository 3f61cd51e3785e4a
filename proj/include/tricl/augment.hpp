// Stochastic view construction: paired audio crops with a synchronized video
// window, spectrogram frequency shift, example mixing, video jitter.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tricl/common.hpp"
#include "tricl/dsp.hpp"
#include "tricl/rng.hpp"
#include "tricl/tensor.hpp"
#include "tricl/video.hpp"

namespace tricl::augment {

struct CropPlan {
  double crop1_start = 0.0;  // seconds; also the video window start
  double crop2_start = 0.0;
  double crop_len = 3.0;
  double video_fps = 5.0;
  std::int64_t video_frames = 15;
  std::int64_t video_size = 50;

  double video_start() const { return crop1_start; }
  double video_span() const { return static_cast<double>(video_frames) / video_fps; }
};

struct ShiftConfig {
  int max_shift = 10;  // F; draws come from the integers [-F, F]

  void validate() const {
    require(max_shift >= 0, ErrorKind::InvalidConfig, "shift: max_shift must be >= 0");
  }
};

struct MixupConfig {
  double beta_a = 5.0;
  double beta_b = 2.0;
  bool enable_spectrogram = true;
  bool enable_waveform = true;
  bool enable_video = true;
  // When set, one alpha per sample is reused across modalities instead of
  // drawing independently per modality.
  bool shared_alpha = false;

  void validate() const {
    require(beta_a > 0 && beta_b > 0, ErrorKind::InvalidConfig,
            "mixup: beta shape parameters must be > 0");
  }
};

struct JitterConfig {
  bool enabled = true;
  double area_min = 0.6;
  double area_max = 1.0;
  double brightness = 0.2;   // offset drawn from [-brightness, brightness]
  double contrast_min = 0.8;
  double contrast_max = 1.25;

  void validate() const {
    require(area_min > 0 && area_min <= area_max && area_max <= 1.0, ErrorKind::InvalidConfig,
            "jitter: need 0 < area_min <= area_max <= 1");
    require(brightness >= 0 && contrast_min > 0 && contrast_min <= contrast_max,
            ErrorKind::InvalidConfig, "jitter: bad brightness/contrast range");
  }
};

// Two independent uniform crop starts; the video window rides on crop 1.
inline CropPlan sample_crop_plan(double clip_len, rng::Engine& eng, double crop_len = 3.0,
                                 double video_fps = 5.0, std::int64_t video_frames = 15,
                                 std::int64_t video_size = 50) {
  require(crop_len > 0, ErrorKind::InvalidConfig, "crop: crop_len must be positive");
  require(clip_len >= crop_len, ErrorKind::InvalidLength,
          "crop: clip shorter than the crop window");
  CropPlan plan;
  plan.crop_len = crop_len;
  plan.video_fps = video_fps;
  plan.video_frames = video_frames;
  plan.video_size = video_size;
  const double slack = clip_len - crop_len;
  plan.crop1_start = slack > 0 ? eng.uniform(0.0, slack) : 0.0;
  plan.crop2_start = slack > 0 ? eng.uniform(0.0, slack) : 0.0;
  return plan;
}

inline dsp::Waveform crop_waveform(const dsp::Waveform& w, double start_s, double len_s) {
  const auto sr = w.sample_rate;
  const auto begin = static_cast<std::int64_t>(std::llround(start_s * sr));
  const auto count = static_cast<std::int64_t>(std::llround(len_s * sr));
  require(begin >= 0 && count >= 1 &&
              begin + count <= static_cast<std::int64_t>(w.samples.size()),
          ErrorKind::InvalidLength, "crop_waveform: window outside the clip");
  dsp::Waveform out;
  out.sample_rate = sr;
  out.samples.assign(w.samples.begin() + begin, w.samples.begin() + begin + count);
  return out;
}

// Picks the plan's video_frames consecutive frames nearest the window start.
inline video::VideoClip crop_video(const video::VideoClip& clip, const CropPlan& plan) {
  clip.validate();
  const auto total = clip.frames();
  require(total >= plan.video_frames, ErrorKind::InvalidLength,
          "crop_video: clip has too few frames");
  auto first = static_cast<std::int64_t>(std::llround(plan.video_start() * clip.fps));
  first = std::clamp<std::int64_t>(first, 0, total - plan.video_frames);
  const auto C = clip.channels(), H = clip.height(), W = clip.width();
  const auto frame_sz = C * H * W;
  const auto& src = clip.data.values();
  std::vector<Real> out(src.begin() + first * frame_sz,
                        src.begin() + (first + plan.video_frames) * frame_sz);
  video::VideoClip v;
  v.fps = clip.fps;
  v.data = Tensor::from({plan.video_frames, C, H, W}, std::move(out));
  return v;
}

// Moves mel bin b to b+k; vacated bins are filled with 0.
inline dsp::Spectrogram freq_shift(const dsp::Spectrogram& s, int k) {
  const auto F = s.frames(), M = s.n_mels();
  require(std::abs(k) <= M, ErrorKind::InvalidShift,
          "freq_shift: |k| exceeds the mel bin count");
  if (k == 0) return s;
  const auto& src = s.data.values();
  std::vector<Real> out(static_cast<size_t>(F * M), Real(0));
  for (std::int64_t f = 0; f < F; ++f) {
    const Real* in_row = src.data() + f * M;
    Real* out_row = out.data() + f * M;
    for (std::int64_t b = 0; b < M; ++b) {
      const std::int64_t dst = b + k;
      if (dst >= 0 && dst < M) out_row[dst] = in_row[b];
    }
  }
  dsp::Spectrogram res;
  res.hop_seconds = s.hop_seconds;
  res.data = Tensor::from({F, M}, std::move(out));
  return res;
}

inline int sample_shift(const ShiftConfig& cfg, rng::Engine& eng) {
  cfg.validate();
  return static_cast<int>(eng.uniform_int(-cfg.max_shift, cfg.max_shift));
}

inline double sample_mixing_ratio(const MixupConfig& cfg, rng::Engine& eng) {
  cfg.validate();
  return eng.beta(cfg.beta_a, cfg.beta_b);
}

// alpha * x1 + (1 - alpha) * x2. The alpha endpoints and the self-mix fixed
// point are short-circuited so they hold bit-exactly.
inline Tensor mixup(const Tensor& x1, const Tensor& x2, double alpha) {
  require(x1.shape() == x2.shape(), ErrorKind::InvalidShape,
          "mixup: inputs must share a shape");
  require(alpha >= 0.0 && alpha <= 1.0, ErrorKind::InvalidConfig,
          "mixup: alpha must lie in [0,1]");
  if (alpha == 1.0 || x1.storage() == x2.storage()) return Tensor::from(x1.shape(), x1.values());
  if (alpha == 0.0) return Tensor::from(x2.shape(), x2.values());
  const auto& a = x1.values();
  const auto& b = x2.values();
  std::vector<Real> out(a.size());
  const Real al = static_cast<Real>(alpha);
  for (size_t i = 0; i < a.size(); ++i) out[i] = al * a[i] + (Real(1) - al) * b[i];
  return Tensor::from(x1.shape(), std::move(out));
}

// Mixes sample i with sample perm[i]; fixed points are allowed.
inline Tensor mixup_batch(const Tensor& batch, const std::vector<std::int64_t>& perm,
                          const std::vector<double>& alphas) {
  require(batch.rank() >= 2, ErrorKind::InvalidShape, "mixup_batch: expects [N,...]");
  const auto N = batch.extent(0);
  require(static_cast<std::int64_t>(perm.size()) == N &&
              static_cast<std::int64_t>(alphas.size()) == N,
          ErrorKind::InvalidBatch, "mixup_batch: perm/alpha length mismatch");
  std::vector<bool> seen(static_cast<size_t>(N), false);
  for (auto p : perm) {
    require(p >= 0 && p < N && !seen[static_cast<size_t>(p)], ErrorKind::InvalidBatch,
            "mixup_batch: perm is not a permutation");
    seen[static_cast<size_t>(p)] = true;
  }
  const auto stride = batch.numel() / N;
  const auto& src = batch.values();
  std::vector<Real> out(src.size());
  for (std::int64_t i = 0; i < N; ++i) {
    const double alpha = alphas[static_cast<size_t>(i)];
    require(alpha >= 0.0 && alpha <= 1.0, ErrorKind::InvalidConfig,
            "mixup_batch: alpha must lie in [0,1]");
    const std::int64_t j = perm[static_cast<size_t>(i)];
    const Real* xi = src.data() + i * stride;
    const Real* xj = src.data() + j * stride;
    Real* dst = out.data() + i * stride;
    if (alpha == 1.0 || j == i) {
      std::copy(xi, xi + stride, dst);
    } else if (alpha == 0.0) {
      std::copy(xj, xj + stride, dst);
    } else {
      const Real al = static_cast<Real>(alpha);
      for (std::int64_t t = 0; t < stride; ++t) dst[t] = al * xi[t] + (Real(1) - al) * xj[t];
    }
  }
  return Tensor::from(batch.shape(), std::move(out));
}

inline std::vector<std::int64_t> sample_permutation(std::int64_t n, rng::Engine& eng) {
  std::vector<std::int64_t> p(static_cast<size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) p[static_cast<size_t>(i)] = i;
  for (std::int64_t i = n - 1; i > 0; --i)
    std::swap(p[static_cast<size_t>(i)], p[static_cast<size_t>(eng.uniform_int(0, i))]);
  return p;
}

// Contrast scales about mid-gray, then the brightness offset; clamped to [0,1].
inline video::VideoClip apply_photometric(const video::VideoClip& v, double brightness,
                                          double contrast) {
  v.validate();
  std::vector<Real> px(v.data.values());
  const Real c = static_cast<Real>(contrast), b = static_cast<Real>(brightness);
  for (auto& p : px)
    p = std::clamp<Real>((p - Real(0.5)) * c + Real(0.5) + b, Real(0), Real(1));
  video::VideoClip out;
  out.fps = v.fps;
  out.data = Tensor::from(v.data.shape(), std::move(px));
  return out;
}

// One scaled square crop shared by all frames, then a per-clip brightness
// offset and a contrast factor about mid-gray; output clamped to [0,1].
// Disabled jitter on frames already at out_size is the identity.
inline video::VideoClip video_jitter(const video::VideoClip& v, rng::Engine& eng,
                                     const JitterConfig& cfg = {},
                                     std::int64_t out_size = 50) {
  cfg.validate();
  v.validate();
  const auto H = v.height(), W = v.width();
  require(H >= 1 && W >= 1, ErrorKind::InvalidShape, "video_jitter: empty frames");

  std::int64_t crop_h = H, crop_w = W, top = 0, left = 0;
  video::VideoClip out;
  out.fps = v.fps;
  if (!cfg.enabled) {
    out.data = video::resize_crop_bilinear(v.data, 0, 0, H, W, out_size);
    return out;
  }

  const double area = eng.uniform(cfg.area_min, cfg.area_max);
  const double side = std::sqrt(area);
  crop_h = std::clamp<std::int64_t>(
      static_cast<std::int64_t>(std::llround(side * static_cast<double>(H))), 1, H);
  crop_w = std::clamp<std::int64_t>(
      static_cast<std::int64_t>(std::llround(side * static_cast<double>(W))), 1, W);
  top = eng.uniform_int(0, H - crop_h);
  left = eng.uniform_int(0, W - crop_w);
  const double brightness = eng.uniform(-cfg.brightness, cfg.brightness);
  const double contrast = eng.uniform(cfg.contrast_min, cfg.contrast_max);

  out.data = video::resize_crop_bilinear(v.data, top, left, crop_h, crop_w, out_size);
  return apply_photometric(out, brightness, contrast);
}

}  // namespace tricl::augment
