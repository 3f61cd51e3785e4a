// Waveform to log-mel spectrogram pipeline: framing, windowing, FFT power
// spectra, triangular mel filters, log compression.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tricl/common.hpp"
#include "tricl/tensor.hpp"

namespace tricl::dsp {

struct Waveform {
  std::vector<Real> samples;
  int sample_rate = 16000;

  double seconds() const {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
  }
};

enum class WindowKind { Hann, Rect };

struct DspConfig {
  int n_mels = 80;
  double window_ms = 20.0;
  double hop_ms = 10.0;
  int n_fft = 512;
  double fmin = 60.0;
  double fmax = 7800.0;
  double log_floor = 1e-10;
  WindowKind window = WindowKind::Hann;

  // 80 mel bands over 20 ms windows with 10 ms hop.
  static DspConfig preset_a() { return DspConfig{}; }
  // 64 mel bands over 25 ms windows with 10 ms hop.
  static DspConfig preset_b() {
    DspConfig c;
    c.n_mels = 64;
    c.window_ms = 25.0;
    return c;
  }

  std::int64_t win_samples(int sample_rate) const {
    return static_cast<std::int64_t>(std::llround(window_ms * sample_rate / 1000.0));
  }
  std::int64_t hop_samples(int sample_rate) const {
    return static_cast<std::int64_t>(std::llround(hop_ms * sample_rate / 1000.0));
  }

  void validate(int sample_rate) const {
    require(sample_rate > 0, ErrorKind::InvalidConfig, "dsp: sample_rate must be positive");
    require(n_mels > 0, ErrorKind::InvalidConfig, "dsp: n_mels must be positive");
    require(window_ms > 0 && hop_ms > 0, ErrorKind::InvalidConfig,
            "dsp: window/hop must be positive");
    require(log_floor > 0, ErrorKind::InvalidConfig, "dsp: log_floor must be positive");
    const auto win = win_samples(sample_rate);
    require(win >= 2, ErrorKind::InvalidConfig, "dsp: window shorter than 2 samples");
    require(n_fft >= win, ErrorKind::InvalidConfig, "dsp: n_fft must cover the window");
    require((n_fft & (n_fft - 1)) == 0, ErrorKind::InvalidConfig,
            "dsp: n_fft must be a power of two");
    require(fmin >= 0 && fmin < fmax, ErrorKind::InvalidConfig, "dsp: need 0 <= fmin < fmax");
    require(fmax <= sample_rate / 2.0, ErrorKind::InvalidConfig,
            "dsp: fmax exceeds the Nyquist frequency");
  }
};

struct Spectrogram {
  Tensor data;            // [frames, n_mels], natural-log energies
  double hop_seconds = 0.01;

  std::int64_t frames() const { return data.defined() ? data.extent(0) : 0; }
  std::int64_t n_mels() const { return data.defined() ? data.extent(1) : 0; }
};

inline std::int64_t frame_count(std::int64_t len, std::int64_t win, std::int64_t hop) {
  return (len - win) / hop + 1;
}

inline Tensor frame_signal(const Waveform& w, const DspConfig& cfg) {
  cfg.validate(w.sample_rate);
  const auto win = cfg.win_samples(w.sample_rate);
  const auto hop = cfg.hop_samples(w.sample_rate);
  const auto len = static_cast<std::int64_t>(w.samples.size());
  require(len >= win, ErrorKind::InvalidLength,
          "frame_signal: input shorter than one window (" + std::to_string(len) + " < " +
              std::to_string(win) + ")");
  const auto F = frame_count(len, win, hop);

  std::vector<Real> window(static_cast<size_t>(win), Real(1));
  if (cfg.window == WindowKind::Hann) {
    // Periodic Hann.
    for (std::int64_t n = 0; n < win; ++n)
      window[static_cast<size_t>(n)] = static_cast<Real>(
          0.5 * (1.0 - std::cos(2.0 * M_PI * static_cast<double>(n) / static_cast<double>(win))));
  }

  std::vector<Real> out(static_cast<size_t>(F * win));
  for (std::int64_t f = 0; f < F; ++f) {
    const Real* src = w.samples.data() + f * hop;
    Real* dst = out.data() + f * win;
    for (std::int64_t n = 0; n < win; ++n) dst[n] = src[n] * window[static_cast<size_t>(n)];
  }
  return Tensor::from({F, win}, std::move(out));
}

namespace detail {

// Iterative radix-2 complex FFT; n must be a power of two.
struct Fft {
  explicit Fft(std::int64_t n) : n_(n) {
    rev_.resize(static_cast<size_t>(n));
    std::int64_t log2n = 0;
    while ((std::int64_t(1) << log2n) < n) ++log2n;
    for (std::int64_t i = 0; i < n; ++i) {
      std::int64_t r = 0;
      for (std::int64_t b = 0; b < log2n; ++b)
        if (i & (std::int64_t(1) << b)) r |= std::int64_t(1) << (log2n - 1 - b);
      rev_[static_cast<size_t>(i)] = r;
    }
    cs_.resize(static_cast<size_t>(n / 2));
    sn_.resize(static_cast<size_t>(n / 2));
    for (std::int64_t k = 0; k < n / 2; ++k) {
      const double ang = -2.0 * M_PI * static_cast<double>(k) / static_cast<double>(n);
      cs_[static_cast<size_t>(k)] = std::cos(ang);
      sn_[static_cast<size_t>(k)] = std::sin(ang);
    }
  }

  void run(std::vector<double>& re, std::vector<double>& im) const {
    for (std::int64_t i = 0; i < n_; ++i) {
      const auto j = rev_[static_cast<size_t>(i)];
      if (i < j) {
        std::swap(re[static_cast<size_t>(i)], re[static_cast<size_t>(j)]);
        std::swap(im[static_cast<size_t>(i)], im[static_cast<size_t>(j)]);
      }
    }
    for (std::int64_t len = 2; len <= n_; len <<= 1) {
      const std::int64_t half = len >> 1;
      const std::int64_t step = n_ / len;
      for (std::int64_t base = 0; base < n_; base += len) {
        for (std::int64_t k = 0; k < half; ++k) {
          const double wr = cs_[static_cast<size_t>(k * step)];
          const double wi = sn_[static_cast<size_t>(k * step)];
          const auto a = static_cast<size_t>(base + k);
          const auto b = static_cast<size_t>(base + k + half);
          const double tr = re[b] * wr - im[b] * wi;
          const double ti = re[b] * wi + im[b] * wr;
          re[b] = re[a] - tr;
          im[b] = im[a] - ti;
          re[a] += tr;
          im[a] += ti;
        }
      }
    }
  }

  std::int64_t n_;
  std::vector<std::int64_t> rev_;
  std::vector<double> cs_, sn_;
};

}  // namespace detail

// Squared magnitude of the real DFT per frame; frames are zero-padded to n_fft.
inline Tensor power_spectrum(const Tensor& frames, std::int64_t n_fft) {
  require(frames.rank() == 2, ErrorKind::InvalidShape, "power_spectrum: expects [F, win]");
  const auto F = frames.extent(0), win = frames.extent(1);
  require(n_fft >= win, ErrorKind::InvalidConfig, "power_spectrum: n_fft < window length");
  require((n_fft & (n_fft - 1)) == 0, ErrorKind::InvalidConfig,
          "power_spectrum: n_fft must be a power of two");
  const auto bins = n_fft / 2 + 1;
  const detail::Fft fft(n_fft);
  std::vector<Real> out(static_cast<size_t>(F * bins));
  const auto& fv = frames.values();
  parallel_for(F, [&](std::int64_t f0, std::int64_t f1) {
    std::vector<double> re(static_cast<size_t>(n_fft)), im(static_cast<size_t>(n_fft));
    for (std::int64_t f = f0; f < f1; ++f) {
      std::fill(re.begin(), re.end(), 0.0);
      std::fill(im.begin(), im.end(), 0.0);
      for (std::int64_t n = 0; n < win; ++n)
        re[static_cast<size_t>(n)] = static_cast<double>(fv[static_cast<size_t>(f * win + n)]);
      fft.run(re, im);
      for (std::int64_t k = 0; k < bins; ++k)
        out[static_cast<size_t>(f * bins + k)] = static_cast<Real>(
            re[static_cast<size_t>(k)] * re[static_cast<size_t>(k)] +
            im[static_cast<size_t>(k)] * im[static_cast<size_t>(k)]);
    }
  });
  return Tensor::from({F, bins}, std::move(out));
}

inline double mel_from_hz(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline double hz_from_mel(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

// Triangle center frequencies in Hz (peak positions of each filter).
inline std::vector<double> mel_center_frequencies(const DspConfig& cfg, int sample_rate) {
  cfg.validate(sample_rate);
  const double mlo = mel_from_hz(cfg.fmin), mhi = mel_from_hz(cfg.fmax);
  std::vector<double> centers(static_cast<size_t>(cfg.n_mels));
  for (int i = 0; i < cfg.n_mels; ++i)
    centers[static_cast<size_t>(i)] =
        hz_from_mel(mlo + (mhi - mlo) * static_cast<double>(i + 1) / static_cast<double>(cfg.n_mels + 1));
  return centers;
}

// Triangular filters, peak 1, on the 2595*log10(1 + f/700) mel scale.
inline Tensor mel_filterbank(const DspConfig& cfg, int sample_rate) {
  cfg.validate(sample_rate);
  const std::int64_t bins = cfg.n_fft / 2 + 1;
  const double mlo = mel_from_hz(cfg.fmin), mhi = mel_from_hz(cfg.fmax);
  std::vector<double> edges(static_cast<size_t>(cfg.n_mels) + 2);
  for (int i = 0; i < cfg.n_mels + 2; ++i)
    edges[static_cast<size_t>(i)] =
        hz_from_mel(mlo + (mhi - mlo) * static_cast<double>(i) / static_cast<double>(cfg.n_mels + 1));

  std::vector<Real> fb(static_cast<size_t>(cfg.n_mels) * static_cast<size_t>(bins), Real(0));
  const double bin_hz = static_cast<double>(sample_rate) / static_cast<double>(cfg.n_fft);
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double fl = edges[static_cast<size_t>(m)];
    const double fc = edges[static_cast<size_t>(m) + 1];
    const double fr = edges[static_cast<size_t>(m) + 2];
    for (std::int64_t k = 0; k < bins; ++k) {
      const double f = bin_hz * static_cast<double>(k);
      double wgt = 0.0;
      if (f > fl && f <= fc)
        wgt = (f - fl) / (fc - fl);
      else if (f > fc && f < fr)
        wgt = (fr - f) / (fr - fc);
      if (wgt > 0.0) fb[static_cast<size_t>(m) * static_cast<size_t>(bins) + static_cast<size_t>(k)] =
          static_cast<Real>(wgt);
    }
  }
  return Tensor::from({cfg.n_mels, bins}, std::move(fb));
}

// log(max(fb * power, floor)) given a precomputed filterbank.
inline Tensor apply_filterbank(const Tensor& power, const Tensor& fb, double log_floor) {
  require(power.rank() == 2 && fb.rank() == 2 && power.extent(1) == fb.extent(1),
          ErrorKind::InvalidShape, "apply_filterbank: bin count mismatch");
  const auto F = power.extent(0), bins = power.extent(1), M = fb.extent(0);

  // Triangles have contiguous support; precompute [start,end) per filter.
  std::vector<std::pair<std::int64_t, std::int64_t>> span(static_cast<size_t>(M));
  const auto& fbv = fb.values();
  for (std::int64_t m = 0; m < M; ++m) {
    std::int64_t s = bins, e = 0;
    for (std::int64_t k = 0; k < bins; ++k)
      if (fbv[static_cast<size_t>(m * bins + k)] != Real(0)) {
        s = std::min(s, k);
        e = std::max(e, k + 1);
      }
    span[static_cast<size_t>(m)] = {s, std::max(s, e)};
  }

  const auto& pv = power.values();
  std::vector<Real> out(static_cast<size_t>(F * M));
  const Real floor_v = static_cast<Real>(log_floor);
  for (std::int64_t f = 0; f < F; ++f)
    for (std::int64_t m = 0; m < M; ++m) {
      Real acc = 0;
      const auto [s, e] = span[static_cast<size_t>(m)];
      for (std::int64_t k = s; k < e; ++k)
        acc += fbv[static_cast<size_t>(m * bins + k)] * pv[static_cast<size_t>(f * bins + k)];
      out[static_cast<size_t>(f * M + m)] = std::log(std::max(acc, floor_v));
    }
  return Tensor::from({F, M}, std::move(out));
}

inline Spectrogram log_mel(const Waveform& w, const DspConfig& cfg) {
  auto frames = frame_signal(w, cfg);
  auto power = power_spectrum(frames, cfg.n_fft);
  auto fb = mel_filterbank(cfg, w.sample_rate);
  Spectrogram s;
  s.data = apply_filterbank(power, fb, cfg.log_floor);
  s.hop_seconds = cfg.hop_ms / 1000.0;
  return s;
}

}  // namespace tricl::dsp
