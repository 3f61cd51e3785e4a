// Pretraining loop: deterministic batch assembly (crop, extract, shift,
// jitter, mix), warmup+cosine schedule, Adam, checkpointing with bitwise
// resume. All per-step randomness derives statelessly from (seed, step), so
// resuming from a checkpoint replays the exact run.
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "tricl/augment.hpp"
#include "tricl/common.hpp"
#include "tricl/config.hpp"
#include "tricl/data.hpp"
#include "tricl/dsp.hpp"
#include "tricl/io.hpp"
#include "tricl/model.hpp"
#include "tricl/objective.hpp"
#include "tricl/rng.hpp"
#include "tricl/tensor.hpp"

namespace tricl::trainer {

struct Schedule {
  std::int64_t warmup_steps = 5000;
  std::int64_t total_steps = 400000;
  double peak_lr = 1e-4;

  // total_steps == 0 is the degenerate "emit the initial state only" run.
  void validate() const {
    require(peak_lr > 0, ErrorKind::InvalidConfig, "schedule: peak_lr must be positive");
    require(warmup_steps >= 0 && (warmup_steps < total_steps || total_steps == 0),
            ErrorKind::InvalidConfig, "schedule: need 0 <= warmup_steps < total_steps");
  }
};

// Linear warmup to peak_lr, then half-cosine decay to zero.
inline double lr_at_step(const Schedule& s, std::int64_t t) {
  s.validate();
  require(t >= 0 && t <= s.total_steps, ErrorKind::InvalidStep,
          "lr_at_step: step outside [0, total_steps]");
  if (t < s.warmup_steps)
    return s.peak_lr * static_cast<double>(t) / static_cast<double>(s.warmup_steps);
  const double num = static_cast<double>(t - s.warmup_steps);
  const double den = static_cast<double>(s.total_steps - s.warmup_steps);
  return s.peak_lr * 0.5 * (1.0 + std::cos(M_PI * num / den));
}

struct OptimState {
  std::map<std::string, Tensor> m, v;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam. A non-finite gradient aborts before any mutation.
inline void adam_step(model::ModelParams& params, const GradMap& grads, OptimState& st,
                      double lr) {
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    require(it != params.end(), ErrorKind::InvalidConfig,
            "adam: gradient for unknown parameter " + name);
    require(g.shape() == it->second.shape(), ErrorKind::InvalidShape,
            "adam: gradient shape mismatch for " + name);
    require(g.finite(), ErrorKind::PoisonedStep,
            "adam: non-finite gradient for " + name + "; step aborted");
  }

  st.step += 1;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (const auto& [name, g] : grads) {
    const Tensor& p = params.at(name);
    const auto n = static_cast<size_t>(p.numel());
    std::vector<Real> mv = st.m.count(name) ? st.m.at(name).values()
                                            : std::vector<Real>(n, Real(0));
    std::vector<Real> vv = st.v.count(name) ? st.v.at(name).values()
                                            : std::vector<Real>(n, Real(0));
    std::vector<Real> pv(p.values());
    const auto& gv = g.values();
    const Real b1 = static_cast<Real>(st.beta1), b2 = static_cast<Real>(st.beta2);
    for (size_t i = 0; i < n; ++i) {
      mv[i] = b1 * mv[i] + (Real(1) - b1) * gv[i];
      vv[i] = b2 * vv[i] + (Real(1) - b2) * gv[i] * gv[i];
      const double mhat = mv[i] / bc1;
      const double vhat = vv[i] / bc2;
      pv[i] -= static_cast<Real>(lr * mhat / (std::sqrt(vhat) + st.eps));
    }
    st.m[name] = Tensor::from(p.shape(), std::move(mv));
    st.v[name] = Tensor::from(p.shape(), std::move(vv));
    params[name] = Tensor::from(p.shape(), std::move(pv));
  }
}

struct StepStats {
  std::int64_t step = 0;
  double lr = 0.0;
  double l_vs = std::numeric_limits<double>::quiet_NaN();
  double l_vw = std::numeric_limits<double>::quiet_NaN();
  double l_sw = std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
};

// Owns the per-run state: dataset caches, parameters, optimizer.
class Trainer {
 public:
  Trainer(const config::ExperimentConfig& cfg, const data::Dataset& ds)
      : cfg_(cfg), ds_(ds) {
    cfg_.validate();
    const auto sr = ds_.sample_rate();
    cfg_.dsp.validate(sr);
    hop_ = cfg_.dsp.hop_samples(sr);
    win_ = cfg_.dsp.win_samples(sr);
    crop_samples_ = (static_cast<std::int64_t>(std::llround(cfg_.crop_len * sr)) / hop_) * hop_;
    require(crop_samples_ >= win_, ErrorKind::InvalidConfig,
            "trainer: crop shorter than one analysis window");
    crop_frames_ = (crop_samples_ - win_) / hop_ + 1;

    auto [train_idx, test_idx] = data::split_indices(ds_.size(), cfg_.train_fraction);
    train_indices_ = std::move(train_idx);
    test_indices_ = std::move(test_idx);
    require(train_indices_.size() >= 2, ErrorKind::InvalidConfig,
            "trainer: train split too small");

    for (auto i : train_indices_) {
      const auto clip_samples =
          static_cast<std::int64_t>(std::llround(ds_.clip_seconds(i) * sr));
      require(clip_samples >= crop_samples_, ErrorKind::InvalidLength,
              "trainer: clip " + std::to_string(i) + " is shorter than the crop window");
    }
    if (use(Modality::Spectrogram)) build_spectrogram_cache();
    if (use(Modality::Video)) {
      require(ds_.has_video(), ErrorKind::InvalidConfig,
              "trainer: video modality configured but dataset has no video");
      for (auto i : train_indices_)
        require(ds_.video_frames(i) >= cfg_.video_frames, ErrorKind::InvalidLength,
                "trainer: clip " + std::to_string(i) + " has too few video frames");
    }
  }

  bool use(Modality m) const { return cfg_.modalities.count(m) != 0; }
  const std::vector<std::int64_t>& train_indices() const { return train_indices_; }
  const std::vector<std::int64_t>& test_indices() const { return test_indices_; }
  const model::ModelParams& params() const { return params_; }
  const OptimState& opt() const { return opt_; }
  const config::ExperimentConfig& cfg() const { return cfg_; }

  void init_params() {
    params_ = model::init_params(cfg_.model_config(), cfg_.seed);
    opt_ = OptimState{};
    opt_.beta1 = cfg_.optimizer.beta1;
    opt_.beta2 = cfg_.optimizer.beta2;
    opt_.eps = cfg_.optimizer.eps;
  }

  void restore(model::ModelParams params, OptimState opt) {
    params_ = std::move(params);
    opt_ = std::move(opt);
  }

  // One optimizer step at schedule position t. Assembly order per sample:
  // crop -> extract -> frequency shift / jitter -> mixing -> encode.
  StepStats step(std::int64_t t) {
    const Schedule sched{cfg_.schedule.warmup_steps, cfg_.schedule.total_steps,
                         cfg_.schedule.peak_lr};
    const double lr = lr_at_step(sched, t);
    const auto N = cfg_.batch_size;

    rng::Engine batch_eng(rng::derive(cfg_.seed, "batch", static_cast<std::uint64_t>(t)));
    std::vector<std::int64_t> idx(static_cast<size_t>(N));
    for (auto& i : idx)
      i = train_indices_[static_cast<size_t>(
          batch_eng.uniform_int(0, static_cast<std::int64_t>(train_indices_.size()) - 1))];

    auto inputs = assemble(idx, t);

    StepStats stats;
    stats.step = t;
    stats.lr = lr;
    {
      Tape tape;
      model::ModelParams bound;
      for (const auto& [name, p] : params_) bound.emplace(name, tape.watch(name, p));
      const auto mcfg = cfg_.model_config();

      std::optional<Tensor> zs, zw, zv;
      if (inputs.spec.defined()) {
        auto h = model::encode_spectrogram_batch(inputs.spec, mcfg, bound);
        zs = model::project_and_normalize_batch(h, mcfg, bound);
      }
      if (inputs.wave.defined()) {
        auto h = model::encode_waveform_batch(inputs.wave, mcfg, bound);
        zw = model::project_and_normalize_batch(h, mcfg, bound);
      }
      if (inputs.video.defined()) {
        auto h = model::encode_video_batch(inputs.video, mcfg, bound);
        zv = model::project_and_normalize_batch(h, mcfg, bound);
      }

      auto breakdown = objective::total_loss(zv, zs, zw, cfg_.loss.temperature,
                                             cfg_.loss.mean_reduction);
      if (breakdown.has_vs()) stats.l_vs = breakdown.l_vs.value();
      if (breakdown.has_vw()) stats.l_vw = breakdown.l_vw.value();
      if (breakdown.has_sw()) stats.l_sw = breakdown.l_sw.value();
      stats.total = breakdown.total.value();

      auto grads = tape.gradients(breakdown.total);
      adam_step(params_, grads, opt_, lr);  // a poisoned step throws first
    }
    model::check_finite(params_);
    return stats;
  }

  struct EmbeddingSet {
    std::optional<Tensor> v, s, w;  // each [N, E], unit rows
  };

  // The embeddings step t would train on, without recording or updating.
  EmbeddingSet embed_batch(std::int64_t t) {
    rng::Engine batch_eng(rng::derive(cfg_.seed, "batch", static_cast<std::uint64_t>(t)));
    std::vector<std::int64_t> idx(static_cast<size_t>(cfg_.batch_size));
    for (auto& i : idx)
      i = train_indices_[static_cast<size_t>(
          batch_eng.uniform_int(0, static_cast<std::int64_t>(train_indices_.size()) - 1))];
    auto inputs = assemble(idx, t);
    const auto mcfg = cfg_.model_config();
    EmbeddingSet out;
    if (inputs.spec.defined())
      out.s = model::project_and_normalize_batch(
          model::encode_spectrogram_batch(inputs.spec, mcfg, params_), mcfg, params_);
    if (inputs.wave.defined())
      out.w = model::project_and_normalize_batch(
          model::encode_waveform_batch(inputs.wave, mcfg, params_), mcfg, params_);
    if (inputs.video.defined())
      out.v = model::project_and_normalize_batch(
          model::encode_video_batch(inputs.video, mcfg, params_), mcfg, params_);
    return out;
  }

 private:
  struct BatchInputs {
    Tensor spec;   // [N,1,F,M]
    Tensor wave;   // [N,1,L]
    Tensor video;  // [N,T,C,H,W]
  };

  void build_spectrogram_cache() {
    spec_cache_.resize(static_cast<size_t>(ds_.size()));
    const auto& idxs = train_indices_;
    parallel_for(static_cast<std::int64_t>(idxs.size()), [&](std::int64_t a, std::int64_t b) {
      for (std::int64_t k = a; k < b; ++k) {
        const auto i = idxs[static_cast<size_t>(k)];
        auto s = dsp::log_mel(ds_.waveform_full(i), cfg_.dsp);
        auto& slot = spec_cache_[static_cast<size_t>(i)];
        slot.frames = s.frames();
        slot.v.assign(s.data.values().begin(), s.data.values().end());
      }
    });
  }

  BatchInputs assemble(const std::vector<std::int64_t>& idx, std::int64_t t) {
    const auto N = static_cast<std::int64_t>(idx.size());
    const auto M = static_cast<std::int64_t>(cfg_.dsp.n_mels);
    const auto T = cfg_.video_frames;
    const auto S = cfg_.video_size;
    const bool use_s = use(Modality::Spectrogram);
    const bool use_w = use(Modality::Waveform);
    const bool use_v = use(Modality::Video);

    std::vector<Real> spec_raw(use_s ? static_cast<size_t>(N * crop_frames_ * M) : 0);
    std::vector<Real> wave_raw(use_w ? static_cast<size_t>(N * crop_samples_) : 0);
    std::vector<Real> video_raw(use_v ? static_cast<size_t>(N * T * S * S) : 0);

    parallel_for(N, [&](std::int64_t a, std::int64_t b) {
      for (std::int64_t i = a; i < b; ++i) {
        const auto clip = idx[static_cast<size_t>(i)];
        rng::Engine eng(rng::derive(cfg_.seed, "aug", static_cast<std::uint64_t>(t),
                                    static_cast<std::uint64_t>(i)));
        const auto clip_samples = static_cast<std::int64_t>(
            std::llround(ds_.clip_seconds(clip) * ds_.sample_rate()));
        const auto max_k = (clip_samples - crop_samples_) / hop_;
        // Crop starts land on the analysis hop grid so cached full-clip
        // spectrograms slice exactly; the draw stays uniform over the grid.
        const auto k1 = eng.uniform_int(0, max_k);
        const auto k2 = eng.uniform_int(0, max_k);
        const int shift_k = augment::sample_shift(cfg_.shift, eng);

        if (use_s) {
          const auto& cache = spec_cache_[static_cast<size_t>(clip)];
          require(!cache.v.empty(), ErrorKind::InvalidConfig, "trainer: missing spec cache");
          Real* dst = spec_raw.data() + i * crop_frames_ * M;
          std::fill(dst, dst + crop_frames_ * M, Real(0));
          for (std::int64_t f = 0; f < crop_frames_; ++f) {
            const float* src = cache.v.data() + (k1 + f) * M;
            for (std::int64_t bme = 0; bme < M; ++bme) {
              const std::int64_t to = bme + shift_k;
              if (to >= 0 && to < M)
                dst[f * M + to] = static_cast<Real>(src[bme]);
            }
          }
        }
        if (use_w) {
          auto w = ds_.waveform_crop(clip, k2 * hop_, crop_samples_);
          std::copy(w.samples.begin(), w.samples.end(), wave_raw.data() + i * crop_samples_);
        }
        if (use_v) {
          const double start_s =
              static_cast<double>(k1 * hop_) / static_cast<double>(ds_.sample_rate());
          auto first = static_cast<std::int64_t>(std::llround(start_s * ds_.video_fps()));
          first = std::clamp<std::int64_t>(first, 0, ds_.video_frames(clip) - T);
          auto v = ds_.video_crop(clip, first, T);
          auto jittered = augment::video_jitter(v, eng, cfg_.jitter, S);
          std::copy(jittered.data.values().begin(), jittered.data.values().end(),
                    video_raw.data() + i * T * S * S);
        }
      }
    });

    // Example mixing happens last, in the input space of each modality.
    rng::Engine perm_eng(rng::derive(cfg_.seed, "perm", static_cast<std::uint64_t>(t)));
    const auto perm = augment::sample_permutation(N, perm_eng);
    auto alphas_for = [&](const char* tag) {
      rng::Engine eng(rng::derive(cfg_.seed, tag, static_cast<std::uint64_t>(t)));
      std::vector<double> a(static_cast<size_t>(N));
      for (auto& x : a) x = augment::sample_mixing_ratio(cfg_.mixup, eng);
      return a;
    };
    const auto shared = cfg_.mixup.shared_alpha ? alphas_for("alpha") : std::vector<double>{};

    BatchInputs out;
    if (use_s) {
      Tensor s = Tensor::from({N, crop_frames_, M}, std::move(spec_raw));
      if (cfg_.mixup.enable_spectrogram)
        s = augment::mixup_batch(s, perm,
                                 cfg_.mixup.shared_alpha ? shared : alphas_for("alpha-s"));
      out.spec = reshape(s, {N, 1, crop_frames_, M});
    }
    if (use_w) {
      Tensor w = Tensor::from({N, crop_samples_}, std::move(wave_raw));
      if (cfg_.mixup.enable_waveform)
        w = augment::mixup_batch(w, perm,
                                 cfg_.mixup.shared_alpha ? shared : alphas_for("alpha-w"));
      out.wave = reshape(w, {N, 1, crop_samples_});
    }
    if (use_v) {
      Tensor v = Tensor::from({N, T * S * S}, std::move(video_raw));
      if (cfg_.mixup.enable_video)
        v = augment::mixup_batch(v, perm,
                                 cfg_.mixup.shared_alpha ? shared : alphas_for("alpha-v"));
      out.video = reshape(v, {N, T, 1, S, S});
    }
    return out;
  }

  struct SpecCacheEntry {
    std::vector<float> v;
    std::int64_t frames = 0;
  };

  config::ExperimentConfig cfg_;
  const data::Dataset& ds_;
  model::ModelParams params_;
  OptimState opt_;
  std::vector<std::int64_t> train_indices_, test_indices_;
  std::vector<SpecCacheEntry> spec_cache_;
  std::int64_t hop_ = 0, win_ = 0, crop_samples_ = 0, crop_frames_ = 0;
};

// ---------------------------------------------------------------------------
// orchestration: checkpoints, loss log, resume
// ---------------------------------------------------------------------------

inline std::string checkpoint_name(std::int64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ckpt_%06lld.tricl", static_cast<long long>(step));
  return buf;
}

inline void write_training_checkpoint(const std::string& path, const model::ModelParams& params,
                                      const OptimState& opt, std::int64_t step,
                                      const config::ExperimentConfig& cfg) {
  std::map<std::string, Tensor> tensors = params;
  for (const auto& [name, t] : opt.m) tensors.emplace("adam.m/" + name, t);
  for (const auto& [name, t] : opt.v) tensors.emplace("adam.v/" + name, t);
  io::json extra{{"step", step},
                 {"adam_step", opt.step},
                 {"config", cfg.to_json()},
                 {"kind", "pretrain"}};
  io::write_checkpoint(path, tensors, extra);
}

struct LoadedCheckpoint {
  model::ModelParams params;
  OptimState opt;
  std::int64_t step = 0;
  config::ExperimentConfig cfg;
};

inline LoadedCheckpoint read_training_checkpoint(const std::string& path) {
  io::json extra;
  auto tensors = io::read_checkpoint(path, &extra);
  LoadedCheckpoint out;
  out.step = extra.at("step");
  out.cfg = config::ExperimentConfig::from_json(extra.at("config"));
  out.opt.step = extra.at("adam_step");
  out.opt.beta1 = out.cfg.optimizer.beta1;
  out.opt.beta2 = out.cfg.optimizer.beta2;
  out.opt.eps = out.cfg.optimizer.eps;
  for (auto& [name, t] : tensors) {
    if (name.rfind("adam.m/", 0) == 0)
      out.opt.m.emplace(name.substr(7), std::move(t));
    else if (name.rfind("adam.v/", 0) == 0)
      out.opt.v.emplace(name.substr(7), std::move(t));
    else
      out.params.emplace(name, std::move(t));
  }
  require(!out.params.empty(), ErrorKind::DataIntegrity,
          "checkpoint: no parameters in " + path);
  return out;
}

struct RunResult {
  model::ModelParams params;
  OptimState opt;
  std::vector<StepStats> history;
  std::string final_checkpoint;
};

inline void append_log_line(std::ofstream& log, const StepStats& s) {
  io::json line{{"step", s.step}, {"lr", s.lr}, {"total", s.total}};
  if (std::isfinite(s.l_vs)) line["l_vs"] = s.l_vs;
  if (std::isfinite(s.l_vw)) line["l_vw"] = s.l_vw;
  if (std::isfinite(s.l_sw)) line["l_sw"] = s.l_sw;
  log << line.dump() << '\n';
}

// Full pretraining run. When resume_from names a checkpoint, its embedded
// config must match and the run continues bitwise from that step.
inline RunResult run_pretraining(const config::ExperimentConfig& cfg, const data::Dataset& ds,
                                 const std::string& out_dir,
                                 const std::string& resume_from = "") {
  namespace fs = std::filesystem;
  cfg.validate();
  runtime::set_threads(cfg.threads);
  fs::create_directories(out_dir);
  {
    std::ofstream cf(fs::path(out_dir) / "config.json");
    cf << cfg.to_json().dump(2) << '\n';
  }

  Trainer tr(cfg, ds);
  std::int64_t start_step = 0;
  if (resume_from.empty()) {
    tr.init_params();
    write_training_checkpoint((fs::path(out_dir) / checkpoint_name(0)).string(), tr.params(),
                              tr.opt(), 0, cfg);
  } else {
    auto loaded = read_training_checkpoint(resume_from);
    require(loaded.cfg.to_json() == cfg.to_json(), ErrorKind::InvalidConfig,
            "resume: checkpoint config does not match the requested config");
    start_step = loaded.step;
    tr.restore(std::move(loaded.params), std::move(loaded.opt));
  }

  std::ofstream log(fs::path(out_dir) / "loss_log.jsonl", std::ios::app);
  require(log.good(), ErrorKind::DataIntegrity, "pretrain: cannot open loss log");

  RunResult res;
  res.final_checkpoint = (fs::path(out_dir) / checkpoint_name(start_step)).string();
  for (std::int64_t t = start_step; t < cfg.schedule.total_steps; ++t) {
    auto stats = tr.step(t);
    res.history.push_back(stats);
    if ((t + 1) % cfg.log_every == 0 || t + 1 == cfg.schedule.total_steps)
      append_log_line(log, stats);
    if ((t + 1) % cfg.checkpoint_every == 0 || t + 1 == cfg.schedule.total_steps) {
      res.final_checkpoint = (fs::path(out_dir) / checkpoint_name(t + 1)).string();
      write_training_checkpoint(res.final_checkpoint, tr.params(), tr.opt(), t + 1, cfg);
    }
  }
  res.params = tr.params();
  res.opt = tr.opt();
  return res;
}

}  // namespace tricl::trainer
