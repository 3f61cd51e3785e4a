// Deterministic trimodal clip generator. Audio carries a class-keyed tone
// stack plus a per-clip distractor tone; video carries a drifting blob whose
// horizontal position encodes the class and whose vertical center encodes the
// same clip's distractor frequency, so the modalities share both a class
// latent and a per-clip latent. Cue strengths dial how much class information
// each modality holds.
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "tricl/common.hpp"
#include "tricl/dsp.hpp"
#include "tricl/io.hpp"
#include "tricl/rng.hpp"
#include "tricl/video.hpp"

namespace tricl::synthdata {

// How the latent class marks the audio. Tone gives each class its own
// fundamental (trivially visible to any energy readout); Rate modulates a
// shared carrier at a class-keyed envelope rate, which no single pooled
// energy statistic exposes, so representations must earn it.
enum class AudioCueKind { Tone, Rate };

struct LatentSpec {
  int num_classes = 4;
  AudioCueKind audio_cue_kind = AudioCueKind::Tone;
  double audio_cue_strength = 1.0;
  double video_cue_strength = 1.0;
  double shared_cue_strength = 1.0;
  double noise_level = 0.0;
  double clip_len = 4.0;
  int sample_rate = 16000;
  double video_fps = 5.0;
  std::int64_t video_size = 50;

  void validate() const {
    require(num_classes >= 2, ErrorKind::InvalidConfig, "synth: need at least two classes");
    for (double s : {audio_cue_strength, video_cue_strength, shared_cue_strength})
      require(s >= 0.0 && s <= 1.0, ErrorKind::InvalidConfig,
              "synth: cue strengths must lie in [0,1]");
    require(noise_level >= 0.0, ErrorKind::InvalidConfig, "synth: noise_level must be >= 0");
    require(clip_len > 0.0 && sample_rate > 0 && video_fps > 0 && video_size >= 8,
            ErrorKind::InvalidConfig, "synth: bad clip geometry");
  }

  double class_frequency(int c) const { return 200.0 * (c + 1); }
  double class_rate(int c) const { return 2.0 * (c + 1); }  // envelope Hz
  std::int64_t video_frames() const {
    return static_cast<std::int64_t>(std::floor(clip_len * video_fps));
  }
};

struct TrimodalSample {
  dsp::Waveform waveform;
  video::VideoClip clip;
  int label = 0;
};

inline TrimodalSample gen_sample(const LatentSpec& spec, std::uint64_t seed, std::int64_t index) {
  spec.validate();
  rng::Engine eng(rng::derive(seed, "synth-sample", static_cast<std::uint64_t>(index)));
  TrimodalSample s;
  s.label = static_cast<int>(index % spec.num_classes);

  // Video may follow the audio's latents or an independent draw of them.
  int video_class = s.label;
  bool video_shares_clip_latents = true;
  if (spec.shared_cue_strength < 1.0 && eng.uniform() >= spec.shared_cue_strength) {
    video_class = static_cast<int>(eng.uniform_int(0, spec.num_classes - 1));
    video_shares_clip_latents = false;
  }

  // ---- audio: class cue vs class-free hum, plus distractor + noise ----
  const auto n = static_cast<std::int64_t>(std::llround(spec.clip_len * spec.sample_rate));
  s.waveform.sample_rate = spec.sample_rate;
  s.waveform.samples.resize(static_cast<size_t>(n));
  const bool rate_cue = spec.audio_cue_kind == AudioCueKind::Rate;
  const double f0 = rate_cue ? 500.0 : spec.class_frequency(s.label);
  const double rate = spec.class_rate(s.label);
  const double harmonics[3] = {1.0, 0.2, 0.1};
  double phase[3];
  for (auto& p : phase) p = eng.uniform(0.0, 2.0 * M_PI);
  const double env_phase = eng.uniform(0.0, 2.0 * M_PI);
  const double hum_phase = eng.uniform(0.0, 2.0 * M_PI);
  const double hum_freq = 1000.0;
  const double distract_freq = eng.uniform(2600.0, 3600.0);  // per-clip identity cue
  const double distract_phase = eng.uniform(0.0, 2.0 * M_PI);
  const double cue = spec.audio_cue_strength;
  const double dt = 1.0 / spec.sample_rate;
  for (std::int64_t t = 0; t < n; ++t) {
    const double tt = static_cast<double>(t) * dt;
    double tone = 0.0;
    for (int h = 0; h < 3; ++h)
      tone += harmonics[h] * std::sin(2.0 * M_PI * f0 * (h + 1) * tt + phase[h]);
    tone /= 1.3;
    const double hum = std::sin(2.0 * M_PI * hum_freq * tt + hum_phase);
    const double distract = std::sin(2.0 * M_PI * distract_freq * tt + distract_phase);
    double x;
    if (rate_cue) {
      // The class lives in the envelope rate of a carrier shared by all
      // classes; cue strength is the modulation depth.
      const double env =
          1.0 - cue * 0.5 * (1.0 + std::sin(2.0 * M_PI * rate * tt + env_phase));
      x = 0.6 * env * tone +
          spec.noise_level * (0.5 * distract + 0.2 * eng.gauss());
    } else {
      x = 0.6 * (cue * tone + (1.0 - cue) * hum) +
          spec.noise_level * (0.5 * distract + 0.2 * eng.gauss());
    }
    s.waveform.samples[static_cast<size_t>(t)] =
        static_cast<Real>(std::clamp(x, -1.0, 1.0));
  }

  // ---- video: gaussian blob; x keyed by class, y center keyed by the same
  // clip's distractor frequency, plus a slow drift ----
  const auto T = spec.video_frames();
  const auto hw = spec.video_size;
  const double x_class = (video_class + 0.5) / spec.num_classes * static_cast<double>(hw);
  const double x_rand = eng.uniform(0.1, 0.9) * static_cast<double>(hw);
  const double x_pos = spec.video_cue_strength * x_class +
                       (1.0 - spec.video_cue_strength) * x_rand;
  // The vertical cue is a coarse 4-level quantization of the distractor, so
  // video matching rewards class and clip cues together without either one
  // fully identifying the clip.
  const double y_key = video_shares_clip_latents ? distract_freq : eng.uniform(2600.0, 3600.0);
  const int y_bucket = std::min(3, static_cast<int>((y_key - 2600.0) / 250.0));
  const double y_base = (0.2 + 0.2 * y_bucket) * static_cast<double>(hw);
  const double drift_phase = eng.uniform(0.0, 2.0 * M_PI);
  std::vector<Real> px(static_cast<size_t>(T * hw * hw));
  const double sigma = static_cast<double>(hw) / 12.0;
  for (std::int64_t t = 0; t < T; ++t) {
    const double y_pos = y_base + 0.06 * hw *
        std::sin(2.0 * M_PI * 0.5 * static_cast<double>(t) / spec.video_fps + drift_phase);
    for (std::int64_t i = 0; i < hw; ++i)
      for (std::int64_t j = 0; j < hw; ++j) {
        const double dy = (static_cast<double>(i) - y_pos) / sigma;
        const double dx = (static_cast<double>(j) - x_pos) / sigma;
        double v = 0.1 + 0.8 * std::exp(-0.5 * (dx * dx + dy * dy)) +
                   0.05 * eng.uniform(-1.0, 1.0);
        px[static_cast<size_t>((t * hw + i) * hw + j)] =
            static_cast<Real>(std::clamp(v, 0.0, 1.0));
      }
  }
  s.clip.fps = spec.video_fps;
  s.clip.data = Tensor::from({T, 1, hw, hw}, std::move(px));
  return s;
}

inline std::vector<TrimodalSample> gen_dataset(const LatentSpec& spec, std::uint64_t seed,
                                               std::int64_t n) {
  spec.validate();
  require(n >= spec.num_classes, ErrorKind::InvalidConfig,
          "synth: need at least one sample per class");
  std::vector<TrimodalSample> out;
  out.reserve(static_cast<size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) out.push_back(gen_sample(spec, seed, i));
  return out;
}

// On-disk layout: WAV + video blob per clip, labels.csv manifest, dataset.json.
inline void write_dataset(const std::string& dir, const LatentSpec& spec, std::uint64_t seed,
                          std::int64_t n) {
  spec.validate();
  require(n >= spec.num_classes, ErrorKind::InvalidConfig,
          "synth: need at least one sample per class");
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  std::ofstream manifest(fs::path(dir) / "labels.csv");
  require(manifest.good(), ErrorKind::DataIntegrity, "synth: cannot write manifest in " + dir);
  manifest << "index,label,wav,video,clip_len,sample_rate\n";
  char name[64];
  for (std::int64_t i = 0; i < n; ++i) {
    auto s = gen_sample(spec, seed, i);
    std::snprintf(name, sizeof(name), "clip_%05lld", static_cast<long long>(i));
    const std::string wav = std::string(name) + ".wav";
    const std::string vid = std::string(name) + ".vid";
    io::write_wav((fs::path(dir) / wav).string(), s.waveform);
    io::write_video_blob((fs::path(dir) / vid).string(), s.clip);
    manifest << i << ',' << s.label << ',' << wav << ',' << vid << ',' << spec.clip_len << ','
             << spec.sample_rate << '\n';
  }
  manifest.close();

  io::json meta{{"num_classes", spec.num_classes},
                {"audio_cue_kind", spec.audio_cue_kind == AudioCueKind::Rate ? "rate" : "tone"},
                {"audio_cue_strength", spec.audio_cue_strength},
                {"video_cue_strength", spec.video_cue_strength},
                {"shared_cue_strength", spec.shared_cue_strength},
                {"noise_level", spec.noise_level},
                {"clip_len", spec.clip_len},
                {"sample_rate", spec.sample_rate},
                {"video_fps", spec.video_fps},
                {"video_size", spec.video_size},
                {"seed", seed},
                {"count", n}};
  std::ofstream mf(fs::path(dir) / "dataset.json");
  mf << meta.dump(2) << '\n';
  require(mf.good(), ErrorKind::DataIntegrity, "synth: cannot write dataset.json in " + dir);
}

}  // namespace tricl::synthdata
