// Experiment configuration: one JSON document covering every knob of the
// pipeline. Parsing is strict; unknown keys are rejected up front.
#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "tricl/augment.hpp"
#include "tricl/common.hpp"
#include "tricl/dsp.hpp"
#include "tricl/model.hpp"

namespace tricl::config {

using json = nlohmann::json;

struct ScheduleConfig {
  std::int64_t warmup_steps = 5000;
  std::int64_t total_steps = 400000;
  double peak_lr = 1e-4;
};

struct OptimizerConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct LossConfig {
  double temperature = 0.1;
  // The objective sums 2N directional terms per modality pair, so raw
  // gradient magnitude grows with the batch; Adam's per-parameter scaling
  // absorbs most of that coupling, and setting mean_reduction divides each
  // pairwise term by N for an explicitly batch-size-free loss.
  bool mean_reduction = false;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::set<Modality> modalities{Modality::Spectrogram, Modality::Waveform, Modality::Video};

  dsp::DspConfig dsp = dsp::DspConfig::preset_b();
  model::ModelConfig model;

  double crop_len = 3.0;
  double video_fps = 5.0;
  std::int64_t video_frames = 15;
  std::int64_t video_size = 50;
  augment::ShiftConfig shift;
  augment::MixupConfig mixup;
  augment::JitterConfig jitter;

  ScheduleConfig schedule;
  OptimizerConfig optimizer;
  LossConfig loss;

  std::int64_t batch_size = 64;
  double train_fraction = 0.8;
  std::int64_t log_every = 20;
  std::int64_t checkpoint_every = 500;
  int threads = 1;

  // Desk-scale run: small encoders, 2k steps, batch 64.
  static ExperimentConfig desk() {
    ExperimentConfig c;
    c.schedule = {250, 2000, 1e-4};
    c.model.spectrogram = model::EncoderConfig::desk_spectrogram(c.dsp.n_mels);
    c.model.waveform = model::EncoderConfig::desk_waveform();
    c.model.video = model::EncoderConfig::desk_video(c.video_size);
    return c;
  }

  // The published training recipe (batch 4096, 400k steps, wide features).
  // Recorded as a named preset; far beyond a desktop run.
  static ExperimentConfig published() {
    ExperimentConfig c = desk();
    c.schedule = {5000, 400000, 1e-4};
    c.batch_size = 4096;
    c.dsp = dsp::DspConfig::preset_a();
    c.model.spectrogram = model::EncoderConfig::desk_spectrogram(c.dsp.n_mels);
    c.model.spectrogram.hidden_dim = 2048;
    c.model.waveform.hidden_dim = 2048;
    c.model.video.hidden_dim = 2048;
    return c;
  }

  void validate() const {
    require(modalities.size() >= 2, ErrorKind::InvalidConfig,
            "config: need at least two modalities");
    // total_steps == 0 is the init-only run: a checkpoint and no steps.
    require(schedule.warmup_steps >= 0 &&
                (schedule.warmup_steps < schedule.total_steps || schedule.total_steps == 0),
            ErrorKind::InvalidConfig, "config: need 0 <= warmup_steps < total_steps");
    require(schedule.peak_lr > 0, ErrorKind::InvalidConfig, "config: peak_lr must be positive");
    require(optimizer.beta1 >= 0 && optimizer.beta1 < 1 && optimizer.beta2 >= 0 &&
                optimizer.beta2 < 1 && optimizer.eps > 0,
            ErrorKind::InvalidConfig, "config: bad Adam constants");
    require(loss.temperature > 0, ErrorKind::InvalidConfig,
            "config: temperature must be positive");
    require(batch_size >= 2, ErrorKind::InvalidConfig, "config: batch_size must be >= 2");
    require(train_fraction > 0 && train_fraction <= 1, ErrorKind::InvalidConfig,
            "config: train_fraction must lie in (0,1]");
    require(crop_len > 0 && video_fps > 0 && video_frames > 0 && video_size > 0,
            ErrorKind::InvalidConfig, "config: bad crop geometry");
    require(log_every > 0 && checkpoint_every > 0 && threads >= 1, ErrorKind::InvalidConfig,
            "config: bad run housekeeping values");
    shift.validate();
    mixup.validate();
    jitter.validate();
    model::ModelConfig mc = model;
    mc.modalities = modalities;
    mc.validate();
  }

  model::ModelConfig model_config() const {
    model::ModelConfig mc = model;
    mc.modalities = modalities;
    return mc;
  }

  json to_json() const;
  static ExperimentConfig from_json(const json& j);
  static ExperimentConfig from_file(const std::string& path);
};

namespace detail {

inline void reject_unknown(const json& j, const std::set<std::string>& allowed,
                           const std::string& where) {
  require(j.is_object(), ErrorKind::InvalidConfig, "config: " + where + " must be an object");
  for (const auto& [key, value] : j.items())
    require(allowed.count(key) != 0, ErrorKind::InvalidConfig,
            "config: unknown key '" + key + "' in " + where);
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline json stages_to_json(const std::vector<model::ConvStage>& stages) {
  json a = json::array();
  for (const auto& s : stages) a.push_back({s.out_channels, s.kernel, s.stride});
  return a;
}

inline std::vector<model::ConvStage> stages_from_json(const json& a, const std::string& where) {
  require(a.is_array() && !a.empty(), ErrorKind::InvalidConfig,
          "config: " + where + " must be a non-empty array");
  std::vector<model::ConvStage> st;
  for (const auto& e : a) {
    require(e.is_array() && e.size() == 3, ErrorKind::InvalidConfig,
            "config: " + where + " entries must be [channels, kernel, stride]");
    st.push_back({e.at(0).get<std::int64_t>(), e.at(1).get<std::int64_t>(),
                  e.at(2).get<std::int64_t>()});
  }
  return st;
}

}  // namespace detail

inline json ExperimentConfig::to_json() const {
  json j;
  j["seed"] = seed;
  std::string mods;
  for (auto m : modalities) mods.push_back(modality_tag(m));
  j["modalities"] = mods;
  j["dsp"] = {{"n_mels", dsp.n_mels},
              {"window_ms", dsp.window_ms},
              {"hop_ms", dsp.hop_ms},
              {"n_fft", dsp.n_fft},
              {"fmin", dsp.fmin},
              {"fmax", dsp.fmax},
              {"log_floor", dsp.log_floor}};
  j["model"] = {{"hidden_dim", model.spectrogram.hidden_dim},
                {"spectrogram_stages", detail::stages_to_json(model.spectrogram.stages)},
                {"waveform_stages", detail::stages_to_json(model.waveform.stages)},
                {"video_stages", detail::stages_to_json(model.video.stages)},
                {"projector", {{"hidden", model.projector.hidden}, {"out", model.projector.out}}}};
  j["augment"] = {{"crop_len", crop_len},
                  {"video_fps", video_fps},
                  {"video_frames", video_frames},
                  {"video_size", video_size},
                  {"freq_shift_max", shift.max_shift},
                  {"mixup",
                   {{"beta_a", mixup.beta_a},
                    {"beta_b", mixup.beta_b},
                    {"spectrogram", mixup.enable_spectrogram},
                    {"waveform", mixup.enable_waveform},
                    {"video", mixup.enable_video},
                    {"shared_alpha", mixup.shared_alpha}}},
                  {"jitter",
                   {{"enabled", jitter.enabled},
                    {"area_min", jitter.area_min},
                    {"area_max", jitter.area_max},
                    {"brightness", jitter.brightness},
                    {"contrast_min", jitter.contrast_min},
                    {"contrast_max", jitter.contrast_max}}}};
  j["schedule"] = {{"warmup_steps", schedule.warmup_steps},
                   {"total_steps", schedule.total_steps},
                   {"peak_lr", schedule.peak_lr}};
  j["optimizer"] = {{"beta1", optimizer.beta1}, {"beta2", optimizer.beta2},
                    {"eps", optimizer.eps}};
  j["loss"] = {{"temperature", loss.temperature}, {"mean_reduction", loss.mean_reduction}};
  j["batch_size"] = batch_size;
  j["train_fraction"] = train_fraction;
  j["log_every"] = log_every;
  j["checkpoint_every"] = checkpoint_every;
  j["threads"] = threads;
  return j;
}

inline ExperimentConfig ExperimentConfig::from_json(const json& j) {
  detail::reject_unknown(j, {"seed", "modalities", "dsp", "model", "augment", "schedule",
                             "optimizer", "loss", "batch_size", "train_fraction", "log_every",
                             "checkpoint_every", "threads"},
                         "config");
  ExperimentConfig c = ExperimentConfig::desk();
  detail::maybe(j, "seed", c.seed);
  if (j.contains("modalities")) {
    c.modalities.clear();
    for (char t : j.at("modalities").get<std::string>()) {
      switch (t) {
        case 's': c.modalities.insert(Modality::Spectrogram); break;
        case 'w': c.modalities.insert(Modality::Waveform); break;
        case 'v': c.modalities.insert(Modality::Video); break;
        default:
          fail(ErrorKind::InvalidConfig, std::string("config: unknown modality tag '") + t + "'");
      }
    }
  }
  if (j.contains("dsp")) {
    const auto& d = j.at("dsp");
    detail::reject_unknown(d, {"preset", "n_mels", "window_ms", "hop_ms", "n_fft", "fmin",
                               "fmax", "log_floor"},
                           "config.dsp");
    if (d.contains("preset")) {
      const std::string p = d.at("preset");
      if (p == "a")
        c.dsp = dsp::DspConfig::preset_a();
      else if (p == "b")
        c.dsp = dsp::DspConfig::preset_b();
      else
        fail(ErrorKind::InvalidConfig, "config: unknown dsp preset '" + p + "'");
    }
    detail::maybe(d, "n_mels", c.dsp.n_mels);
    detail::maybe(d, "window_ms", c.dsp.window_ms);
    detail::maybe(d, "hop_ms", c.dsp.hop_ms);
    detail::maybe(d, "n_fft", c.dsp.n_fft);
    detail::maybe(d, "fmin", c.dsp.fmin);
    detail::maybe(d, "fmax", c.dsp.fmax);
    detail::maybe(d, "log_floor", c.dsp.log_floor);
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    detail::reject_unknown(
        m, {"hidden_dim", "spectrogram_stages", "waveform_stages", "video_stages", "projector"},
        "config.model");
    if (m.contains("hidden_dim")) {
      const std::int64_t h = m.at("hidden_dim");
      c.model.spectrogram.hidden_dim = h;
      c.model.waveform.hidden_dim = h;
      c.model.video.hidden_dim = h;
    }
    if (m.contains("spectrogram_stages"))
      c.model.spectrogram.stages = detail::stages_from_json(m.at("spectrogram_stages"),
                                                            "config.model.spectrogram_stages");
    if (m.contains("waveform_stages"))
      c.model.waveform.stages =
          detail::stages_from_json(m.at("waveform_stages"), "config.model.waveform_stages");
    if (m.contains("video_stages"))
      c.model.video.stages =
          detail::stages_from_json(m.at("video_stages"), "config.model.video_stages");
    if (m.contains("projector")) {
      const auto& p = m.at("projector");
      detail::reject_unknown(p, {"hidden", "out"}, "config.model.projector");
      detail::maybe(p, "hidden", c.model.projector.hidden);
      detail::maybe(p, "out", c.model.projector.out);
    }
  }
  if (j.contains("augment")) {
    const auto& a = j.at("augment");
    detail::reject_unknown(a, {"crop_len", "video_fps", "video_frames", "video_size",
                               "freq_shift_max", "mixup", "jitter"},
                           "config.augment");
    detail::maybe(a, "crop_len", c.crop_len);
    detail::maybe(a, "video_fps", c.video_fps);
    detail::maybe(a, "video_frames", c.video_frames);
    detail::maybe(a, "video_size", c.video_size);
    detail::maybe(a, "freq_shift_max", c.shift.max_shift);
    if (a.contains("mixup")) {
      const auto& mx = a.at("mixup");
      detail::reject_unknown(
          mx, {"beta_a", "beta_b", "spectrogram", "waveform", "video", "shared_alpha"},
          "config.augment.mixup");
      detail::maybe(mx, "beta_a", c.mixup.beta_a);
      detail::maybe(mx, "beta_b", c.mixup.beta_b);
      detail::maybe(mx, "spectrogram", c.mixup.enable_spectrogram);
      detail::maybe(mx, "waveform", c.mixup.enable_waveform);
      detail::maybe(mx, "video", c.mixup.enable_video);
      detail::maybe(mx, "shared_alpha", c.mixup.shared_alpha);
    }
    if (a.contains("jitter")) {
      const auto& jt = a.at("jitter");
      detail::reject_unknown(jt, {"enabled", "area_min", "area_max", "brightness",
                                  "contrast_min", "contrast_max"},
                             "config.augment.jitter");
      detail::maybe(jt, "enabled", c.jitter.enabled);
      detail::maybe(jt, "area_min", c.jitter.area_min);
      detail::maybe(jt, "area_max", c.jitter.area_max);
      detail::maybe(jt, "brightness", c.jitter.brightness);
      detail::maybe(jt, "contrast_min", c.jitter.contrast_min);
      detail::maybe(jt, "contrast_max", c.jitter.contrast_max);
    }
  }
  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    detail::reject_unknown(s, {"warmup_steps", "total_steps", "peak_lr"}, "config.schedule");
    detail::maybe(s, "warmup_steps", c.schedule.warmup_steps);
    detail::maybe(s, "total_steps", c.schedule.total_steps);
    detail::maybe(s, "peak_lr", c.schedule.peak_lr);
  }
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    detail::reject_unknown(o, {"beta1", "beta2", "eps"}, "config.optimizer");
    detail::maybe(o, "beta1", c.optimizer.beta1);
    detail::maybe(o, "beta2", c.optimizer.beta2);
    detail::maybe(o, "eps", c.optimizer.eps);
  }
  if (j.contains("loss")) {
    const auto& l = j.at("loss");
    detail::reject_unknown(l, {"temperature", "mean_reduction"}, "config.loss");
    detail::maybe(l, "temperature", c.loss.temperature);
    detail::maybe(l, "mean_reduction", c.loss.mean_reduction);
  }
  detail::maybe(j, "batch_size", c.batch_size);
  detail::maybe(j, "train_fraction", c.train_fraction);
  detail::maybe(j, "log_every", c.log_every);
  detail::maybe(j, "checkpoint_every", c.checkpoint_every);
  detail::maybe(j, "threads", c.threads);

  // Keep derived encoder expectations in sync with the dsp/video settings.
  c.model.spectrogram.input_width = c.dsp.n_mels;
  c.model.video.input_width = c.video_size;
  c.validate();
  return c;
}

inline ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), ErrorKind::InvalidConfig, "config: cannot open " + path);
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    fail(ErrorKind::InvalidConfig, "config: parse error in " + path + ": " + e.what());
  }
  return from_json(j);
}

}  // namespace tricl::config
