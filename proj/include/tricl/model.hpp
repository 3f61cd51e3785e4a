// Three conv encoders (spectrogram 2-D, waveform 1-D, per-frame video 2-D
// with temporal mean pooling) and the one projector they all share.
#pragma once

#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "tricl/augment.hpp"
#include "tricl/common.hpp"
#include "tricl/dsp.hpp"
#include "tricl/rng.hpp"
#include "tricl/tensor.hpp"
#include "tricl/video.hpp"

namespace tricl::model {

struct ConvStage {
  std::int64_t out_channels;
  std::int64_t kernel;
  std::int64_t stride;
};

struct EncoderConfig {
  std::vector<ConvStage> stages;
  std::int64_t in_channels = 1;
  // Expected trailing width (mel bins / frame size); 0 disables the check.
  std::int64_t input_width = 0;
  std::int64_t hidden_dim = 128;

  static EncoderConfig desk_spectrogram(std::int64_t n_mels) {
    EncoderConfig c;
    c.stages = {{8, 5, 4}, {16, 3, 2}, {32, 3, 2}};
    c.input_width = n_mels;
    return c;
  }
  static EncoderConfig desk_waveform() {
    EncoderConfig c;
    c.stages = {{8, 64, 64}, {16, 8, 4}, {32, 4, 2}};
    return c;
  }
  static EncoderConfig desk_video(std::int64_t frame_size = 50) {
    EncoderConfig c;
    c.stages = {{6, 5, 5}, {12, 3, 2}, {24, 3, 1}};
    c.input_width = frame_size;
    return c;
  }

  void validate() const {
    require(!stages.empty(), ErrorKind::InvalidConfig, "encoder: needs at least one stage");
    for (const auto& s : stages)
      require(s.out_channels > 0 && s.kernel > 0 && s.stride > 0, ErrorKind::InvalidConfig,
              "encoder: stage extents must be positive");
    require(hidden_dim > 0, ErrorKind::InvalidConfig, "encoder: hidden_dim must be positive");
  }
};

struct ProjectorConfig {
  std::int64_t hidden = 512;  // exactly one hidden layer
  std::int64_t out = 64;

  void validate() const {
    require(hidden > 0 && out > 0, ErrorKind::InvalidConfig,
            "projector: dims must be positive");
  }
};

// Every learnable weight, addressable by a unique name.
using ModelParams = std::map<std::string, Tensor>;

struct ModelConfig {
  EncoderConfig spectrogram = EncoderConfig::desk_spectrogram(64);
  EncoderConfig waveform = EncoderConfig::desk_waveform();
  EncoderConfig video = EncoderConfig::desk_video();
  ProjectorConfig projector;
  std::set<Modality> modalities{Modality::Spectrogram, Modality::Waveform, Modality::Video};

  void validate() const {
    require(modalities.size() >= 2, ErrorKind::InvalidConfig,
            "model: need at least two modalities");
    if (modalities.count(Modality::Spectrogram)) spectrogram.validate();
    if (modalities.count(Modality::Waveform)) waveform.validate();
    if (modalities.count(Modality::Video)) video.validate();
    projector.validate();
    const auto h = hidden_dim();
    for (auto m : modalities)
      require(encoder(m).hidden_dim == h, ErrorKind::InvalidConfig,
              "model: all encoders must emit the same hidden_dim");
  }

  const EncoderConfig& encoder(Modality m) const {
    switch (m) {
      case Modality::Spectrogram: return spectrogram;
      case Modality::Waveform: return waveform;
      case Modality::Video: return video;
    }
    fail(ErrorKind::InvalidConfig, "model: unknown modality");
  }

  std::int64_t hidden_dim() const { return encoder(*modalities.begin()).hidden_dim; }
};

namespace detail {

inline Tensor kaiming_uniform(Shape shape, std::int64_t fan_in, rng::Engine& eng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<Real> v(static_cast<size_t>(shape_numel(shape)));
  for (auto& x : v) x = static_cast<Real>(eng.uniform(-bound, bound));
  return Tensor::from(std::move(shape), std::move(v));
}

inline std::string stage_name(Modality m, size_t i, const char* leaf) {
  return std::string(1, modality_tag(m)) + ".conv" + std::to_string(i) + "." + leaf;
}

}  // namespace detail

// Fresh parameters for the configured modalities; bitwise reproducible per seed.
inline ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelParams p;
  for (Modality m : {Modality::Spectrogram, Modality::Waveform, Modality::Video}) {
    if (!cfg.modalities.count(m)) continue;
    const auto& enc = cfg.encoder(m);
    rng::Engine eng(rng::derive(seed, "init", static_cast<std::uint64_t>(modality_tag(m))));
    std::int64_t cin = enc.in_channels;
    for (size_t i = 0; i < enc.stages.size(); ++i) {
      const auto& st = enc.stages[i];
      Shape wshape = (m == Modality::Waveform)
                         ? Shape{st.out_channels, cin, st.kernel}
                         : Shape{st.out_channels, cin, st.kernel, st.kernel};
      const std::int64_t fan_in =
          cin * (m == Modality::Waveform ? st.kernel : st.kernel * st.kernel);
      p.emplace(detail::stage_name(m, i, "w"), detail::kaiming_uniform(wshape, fan_in, eng));
      p.emplace(detail::stage_name(m, i, "b"), Tensor::zeros({st.out_channels}));
      cin = st.out_channels;
    }
    p.emplace(std::string(1, modality_tag(m)) + ".head.w",
              detail::kaiming_uniform({enc.hidden_dim, cin}, cin, eng));
    p.emplace(std::string(1, modality_tag(m)) + ".head.b", Tensor::zeros({enc.hidden_dim}));
  }
  {
    rng::Engine eng(rng::derive(seed, "init", static_cast<std::uint64_t>('g')));
    const auto h = cfg.hidden_dim();
    p.emplace("proj.fc1.w", detail::kaiming_uniform({cfg.projector.hidden, h}, h, eng));
    p.emplace("proj.fc1.b", Tensor::zeros({cfg.projector.hidden}));
    p.emplace("proj.fc2.w",
              detail::kaiming_uniform({cfg.projector.out, cfg.projector.hidden},
                                      cfg.projector.hidden, eng));
    p.emplace("proj.fc2.b", Tensor::zeros({cfg.projector.out}));
  }
  return p;
}

inline void check_finite(const ModelParams& p) {
  for (const auto& [name, t] : p)
    require(t.finite(), ErrorKind::ContractViolation, "parameter " + name + " is not finite");
}

namespace detail {

inline const Tensor& param(const ModelParams& p, const std::string& name) {
  auto it = p.find(name);
  require(it != p.end(), ErrorKind::InvalidConfig, "missing parameter " + name);
  return it->second;
}

// Conv stack -> global pool -> linear head, shared by 1-D and 2-D encoders.
// Input is [N, Cin, ...spatial]; output [N, hidden_dim].
inline Tensor conv_tower(const Tensor& x, Modality m, const EncoderConfig& enc,
                         const ModelParams& p) {
  Tensor h = x;
  const bool one_d = (m == Modality::Waveform);
  for (size_t i = 0; i < enc.stages.size(); ++i) {
    const auto& w = param(p, stage_name(m, i, "w"));
    const auto& b = param(p, stage_name(m, i, "b"));
    h = one_d ? conv1d(h, w, enc.stages[i].stride) : conv2d(h, w, enc.stages[i].stride);
    h = add_bias(h, b, 1);  // channel axis of the batched layout
    h = relu(h);
  }
  h = one_d ? spatial_mean_1d(h) : spatial_mean_2d(h);  // [N, C_last]
  const auto& hw = param(p, std::string(1, modality_tag(m)) + ".head.w");
  const auto& hb = param(p, std::string(1, modality_tag(m)) + ".head.b");
  return add_bias(matmul(h, transpose(hw)), hb, 1);  // [N, hidden]
}

}  // namespace detail

// ---- batched encode paths (trainer hot path) ----

// x: [N, 1, frames, n_mels]
inline Tensor encode_spectrogram_batch(const Tensor& x, const ModelConfig& cfg,
                                       const ModelParams& p) {
  require(x.rank() == 4, ErrorKind::InvalidShape, "encode_spectrogram: expects [N,1,F,M]");
  const auto& enc = cfg.spectrogram;
  require(enc.input_width == 0 || x.extent(3) == enc.input_width, ErrorKind::InvalidShape,
          "encode_spectrogram: mel bin count does not match the configured encoder");
  return detail::conv_tower(x, Modality::Spectrogram, enc, p);
}

// x: [N, 1, samples]
inline Tensor encode_waveform_batch(const Tensor& x, const ModelConfig& cfg,
                                    const ModelParams& p) {
  require(x.rank() == 3, ErrorKind::InvalidShape, "encode_waveform: expects [N,1,L]");
  return detail::conv_tower(x, Modality::Waveform, cfg.waveform, p);
}

// x: [N, T, C, H, W]; per-frame conv features then temporal mean.
inline Tensor encode_video_batch(const Tensor& x, const ModelConfig& cfg,
                                 const ModelParams& p) {
  require(x.rank() == 5, ErrorKind::InvalidShape, "encode_video: expects [N,T,C,H,W]");
  const auto& enc = cfg.video;
  const auto N = x.extent(0), T = x.extent(1), C = x.extent(2), H = x.extent(3), W = x.extent(4);
  require(C == enc.in_channels, ErrorKind::InvalidShape, "encode_video: channel mismatch");
  require(enc.input_width == 0 || (H == enc.input_width && W == enc.input_width),
          ErrorKind::InvalidShape, "encode_video: resolution does not match the encoder");
  Tensor frames = reshape(x, {N * T, C, H, W});
  Tensor h = frames;
  for (size_t i = 0; i < enc.stages.size(); ++i) {
    const auto& w = detail::param(p, detail::stage_name(Modality::Video, i, "w"));
    const auto& b = detail::param(p, detail::stage_name(Modality::Video, i, "b"));
    h = relu(add_bias(conv2d(h, w, enc.stages[i].stride), b, 1));
  }
  h = spatial_mean_2d(h);                       // [N*T, C_last]
  h = mean_axis(reshape(h, {N, T, h.extent(1)}), 1);  // temporal mean -> [N, C_last]
  const auto& hw = detail::param(p, "v.head.w");
  const auto& hb = detail::param(p, "v.head.b");
  return add_bias(matmul(h, transpose(hw)), hb, 1);
}

// h: [N, hidden] -> unit rows [N, out] through the shared projector.
inline Tensor project_and_normalize_batch(const Tensor& h, const ModelConfig& cfg,
                                          const ModelParams& p) {
  require(h.rank() == 2 && h.extent(1) == cfg.hidden_dim(), ErrorKind::InvalidShape,
          "project: expects [N, hidden_dim]");
  auto z = add_bias(matmul(h, transpose(detail::param(p, "proj.fc1.w"))),
                    detail::param(p, "proj.fc1.b"), 1);
  z = relu(z);
  z = add_bias(matmul(z, transpose(detail::param(p, "proj.fc2.w"))),
               detail::param(p, "proj.fc2.b"), 1);
  return l2_normalize_rows(z);
}

// ---- per-clip paths (spec surface; evaluation uses these) ----

inline Tensor encode_spectrogram(const dsp::Spectrogram& s, const ModelConfig& cfg,
                                 const ModelParams& p) {
  require(s.data.defined() && s.data.rank() == 2, ErrorKind::InvalidShape,
          "encode_spectrogram: empty spectrogram");
  auto x = reshape(s.data, {1, 1, s.frames(), s.n_mels()});
  auto h = encode_spectrogram_batch(x, cfg, p);
  return reshape(h, {h.extent(1)});
}

inline Tensor encode_waveform(const dsp::Waveform& w, const ModelConfig& cfg,
                              const ModelParams& p) {
  require(!w.samples.empty(), ErrorKind::InvalidShape, "encode_waveform: empty waveform");
  auto x = Tensor::from({1, 1, static_cast<std::int64_t>(w.samples.size())}, w.samples);
  auto h = encode_waveform_batch(x, cfg, p);
  return reshape(h, {h.extent(1)});
}

inline Tensor encode_video(const video::VideoClip& v, const ModelConfig& cfg,
                           const ModelParams& p) {
  v.validate();
  auto x = reshape(v.data, {1, v.frames(), v.channels(), v.height(), v.width()});
  auto h = encode_video_batch(x, cfg, p);
  return reshape(h, {h.extent(1)});
}

inline Tensor project_and_normalize(const Tensor& h, const ModelConfig& cfg,
                                    const ModelParams& p) {
  require(h.rank() == 1, ErrorKind::InvalidShape, "project_and_normalize: expects [hidden]");
  auto z = project_and_normalize_batch(reshape(h, {1, h.extent(0)}), cfg, p);
  return reshape(z, {z.extent(1)});
}

}  // namespace tricl::model
