// Downstream evaluation on frozen features: sub-clip splitting, shallow
// classifiers (linear, or MLP with two batch-norm layers), logit averaging,
// and the ranking metrics (AP, AUC, d-prime).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "tricl/common.hpp"
#include "tricl/data.hpp"
#include "tricl/dsp.hpp"
#include "tricl/model.hpp"
#include "tricl/rng.hpp"
#include "tricl/tensor.hpp"
#include "tricl/trainer.hpp"

namespace tricl::evaluate {

enum class Protocol {
  TensecBy3s,    // equal 10-way split of each clip
  Nonoverlap1s,  // floor(clip_len) one-second windows
};

struct ClassifierConfig {
  enum class Kind { Linear, Mlp } kind = Kind::Linear;
  std::int64_t hidden = 512;
  std::int64_t num_classes = 0;
  bool multi_label = false;
  double lr = 2e-4;
  std::int64_t epochs = 30;
  std::int64_t batch_size = 64;
  bool augment_at_train = false;  // audio mixing + frequency shift, on-the-fly path only
  bool class_balanced = false;
  double bn_eps = 1e-5;

  void validate() const {
    require(num_classes >= 2, ErrorKind::InvalidConfig, "classifier: need >= 2 classes");
    require(kind == Kind::Linear || hidden > 0, ErrorKind::InvalidConfig,
            "classifier: mlp kind requires hidden > 0");
    require(lr > 0 && epochs > 0 && batch_size >= 2, ErrorKind::InvalidConfig,
            "classifier: bad training constants");
  }
};

struct MetricsReport {
  double mAP = 0.0;
  std::vector<double> per_class_ap;
  double auc = 0.0;
  double d_prime = 0.0;
  double accuracy = 0.0;
  std::int64_t num_eval_clips = 0;
  std::string augmentation_mode = "disabled (cached features)";
  std::vector<std::string> warnings;
};

// ---------------------------------------------------------------------------
// sub-clip protocol
// ---------------------------------------------------------------------------

struct Window {
  double start;
  double len;
};

inline std::vector<Window> subclip_split(double clip_len, Protocol protocol) {
  std::vector<Window> out;
  if (protocol == Protocol::TensecBy3s) {
    require(clip_len > 0, ErrorKind::InvalidLength, "subclip_split: empty clip");
    const double w = clip_len / 10.0;
    for (int i = 0; i < 10; ++i) out.push_back({i * w, w});
  } else {
    const auto n = static_cast<std::int64_t>(std::floor(clip_len));
    require(n >= 1, ErrorKind::InvalidLength, "subclip_split: clip shorter than one second");
    for (std::int64_t i = 0; i < n; ++i)
      out.push_back({static_cast<double>(i), 1.0});
  }
  return out;
}

// ---------------------------------------------------------------------------
// frozen feature extraction (encoder outputs h, before the projector)
// ---------------------------------------------------------------------------

inline std::vector<std::vector<Real>> extract_frozen_features(
    const dsp::Waveform& clip, const model::ModelConfig& mcfg, const model::ModelParams& params,
    Modality modality, Protocol protocol, const dsp::DspConfig& dcfg) {
  require(modality != Modality::Video, ErrorKind::UnsupportedModality,
          "the video network is only used during training; evaluate h_s or h_w");
  const double clip_len = clip.seconds();
  auto windows = subclip_split(clip_len, protocol);
  std::vector<std::vector<Real>> feats(windows.size());
  parallel_for(static_cast<std::int64_t>(windows.size()), [&](std::int64_t a, std::int64_t b) {
    for (std::int64_t i = a; i < b; ++i) {
      const auto& w = windows[static_cast<size_t>(i)];
      auto crop = augment::crop_waveform(clip, w.start, w.len);
      Tensor h = (modality == Modality::Spectrogram)
                     ? model::encode_spectrogram(dsp::log_mel(crop, dcfg), mcfg, params)
                     : model::encode_waveform(crop, mcfg, params);
      feats[static_cast<size_t>(i)] = h.values();
    }
  });
  return feats;
}

// Arithmetic mean of per-subclip logits, class by class.
inline std::vector<Real> average_logits(const std::vector<std::vector<Real>>& logits) {
  require(!logits.empty(), ErrorKind::InvalidLength, "average_logits: no sub-clips");
  std::vector<Real> out(logits[0].size(), Real(0));
  for (const auto& row : logits) {
    require(row.size() == out.size(), ErrorKind::InvalidShape, "average_logits: ragged rows");
    for (size_t c = 0; c < out.size(); ++c) out[c] += row[c];
  }
  for (auto& v : out) v /= static_cast<Real>(logits.size());
  return out;
}

// ---------------------------------------------------------------------------
// shallow classifier
// ---------------------------------------------------------------------------

struct Classifier {
  ClassifierConfig cfg;
  std::map<std::string, Tensor> params;
  BatchNormState bn_in, bn_hidden;  // mlp kind only

  // Logits for a feature batch [N, D]; training mode uses batch statistics.
  Tensor forward(const Tensor& x, bool training, BatchNormState* bn1 = nullptr,
                 BatchNormState* bn2 = nullptr) const {
    if (cfg.kind == ClassifierConfig::Kind::Linear) {
      return add_bias(matmul(x, transpose(params.at("fc.w"))), params.at("fc.b"), 1);
    }
    Tensor h = training ? batch_norm_train(x, params.at("bn1.g"), params.at("bn1.b"),
                                           static_cast<Real>(cfg.bn_eps), bn1)
                        : batch_norm_infer(x, params.at("bn1.g"), params.at("bn1.b"),
                                           static_cast<Real>(cfg.bn_eps), bn_in);
    h = add_bias(matmul(h, transpose(params.at("fc1.w"))), params.at("fc1.b"), 1);
    h = training ? batch_norm_train(h, params.at("bn2.g"), params.at("bn2.b"),
                                    static_cast<Real>(cfg.bn_eps), bn2)
                 : batch_norm_infer(h, params.at("bn2.g"), params.at("bn2.b"),
                                    static_cast<Real>(cfg.bn_eps), bn_hidden);
    h = relu(h);
    return add_bias(matmul(h, transpose(params.at("fc2.w"))), params.at("fc2.b"), 1);
  }
};

namespace detail {

inline Classifier init_classifier(const ClassifierConfig& cfg, std::int64_t feat_dim,
                                  std::uint64_t seed) {
  Classifier c;
  c.cfg = cfg;
  rng::Engine eng(rng::derive(seed, "classifier"));
  auto uniform_init = [&](Shape shape, std::int64_t fan_in) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::vector<Real> v(static_cast<size_t>(shape_numel(shape)));
    for (auto& x : v) x = static_cast<Real>(eng.uniform(-bound, bound));
    return Tensor::from(std::move(shape), std::move(v));
  };
  if (cfg.kind == ClassifierConfig::Kind::Linear) {
    c.params.emplace("fc.w", uniform_init({cfg.num_classes, feat_dim}, feat_dim));
    c.params.emplace("fc.b", Tensor::zeros({cfg.num_classes}));
  } else {
    c.params.emplace("bn1.g", Tensor::full({feat_dim}, 1));
    c.params.emplace("bn1.b", Tensor::zeros({feat_dim}));
    c.params.emplace("fc1.w", uniform_init({cfg.hidden, feat_dim}, feat_dim));
    c.params.emplace("fc1.b", Tensor::zeros({cfg.hidden}));
    c.params.emplace("bn2.g", Tensor::full({cfg.hidden}, 1));
    c.params.emplace("bn2.b", Tensor::zeros({cfg.hidden}));
    c.params.emplace("fc2.w", uniform_init({cfg.num_classes, cfg.hidden}, cfg.hidden));
    c.params.emplace("fc2.b", Tensor::zeros({cfg.num_classes}));
  }
  return c;
}

// Softmax cross entropy (single label) or per-class sigmoid BCE (multi label),
// both summed over the batch.
inline Tensor classifier_loss(const Tensor& logits, const std::vector<std::vector<int>>& labels,
                              const std::vector<std::int64_t>& rows, bool multi_label) {
  const auto C = logits.extent(1);
  if (!multi_label) {
    Tensor acc;
    for (std::int64_t i = 0; i < logits.extent(0); ++i) {
      const auto& lab = labels[static_cast<size_t>(rows[static_cast<size_t>(i)])];
      std::int64_t y = -1;
      for (std::int64_t c = 0; c < C; ++c)
        if (lab[static_cast<size_t>(c)]) y = c;
      require(y >= 0, ErrorKind::InvalidConfig, "classifier: single-label row without a label");
      auto r = row(logits, i);
      auto ce = sub(logsumexp(r), at_index(r, y));
      acc = acc.defined() ? add(acc, ce) : ce;
    }
    return acc;
  }
  std::vector<Real> target(static_cast<size_t>(logits.extent(0) * C));
  for (std::int64_t i = 0; i < logits.extent(0); ++i) {
    const auto& lab = labels[static_cast<size_t>(rows[static_cast<size_t>(i)])];
    for (std::int64_t c = 0; c < C; ++c)
      target[static_cast<size_t>(i * C + c)] = static_cast<Real>(lab[static_cast<size_t>(c)]);
  }
  auto y = Tensor::from(logits.shape(), std::move(target));
  // sum(softplus(x) - y*x) == -sum(y*log sigmoid(x) + (1-y)*log(1-sigmoid(x)))
  return sub(sum(softplus(logits)), sum(mul(logits, y)));
}

}  // namespace detail

// class -> rows that carry a positive label for it.
inline std::vector<std::vector<std::int64_t>> build_positive_index(
    const std::vector<std::vector<int>>& labels, std::int64_t num_classes) {
  std::vector<std::vector<std::int64_t>> positives(static_cast<size_t>(num_classes));
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(labels.size()); ++i)
    for (std::int64_t c = 0; c < num_classes; ++c)
      if (labels[static_cast<size_t>(i)][static_cast<size_t>(c)])
        positives[static_cast<size_t>(c)].push_back(i);
  return positives;
}

// Class-balanced draw: a class uniformly at random, then one of its positive
// rows uniformly. Classes without positives are re-drawn.
inline std::vector<std::int64_t> balanced_sample_rows(
    const std::vector<std::vector<std::int64_t>>& positives, std::int64_t count,
    rng::Engine& eng) {
  bool any = false;
  for (const auto& pool : positives) any = any || !pool.empty();
  require(any, ErrorKind::InvalidConfig, "balanced sampler: no positives at all");
  std::vector<std::int64_t> rows(static_cast<size_t>(count));
  const auto C = static_cast<std::int64_t>(positives.size());
  for (auto& r : rows) {
    for (;;) {
      const auto c = eng.uniform_int(0, C - 1);
      const auto& pool = positives[static_cast<size_t>(c)];
      if (pool.empty()) continue;
      r = pool[static_cast<size_t>(
          eng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1))];
      break;
    }
  }
  return rows;
}

namespace detail {

// One epoch of Adam over given features; optimizer and batch-norm state live
// across epochs in the caller.
inline void classifier_epoch(Classifier& clf, trainer::OptimState& opt,
                             const std::vector<std::vector<Real>>& features,
                             const std::vector<std::vector<int>>& labels,
                             const trainer::Schedule& sched, std::int64_t epoch,
                             std::int64_t steps_per_epoch, rng::Engine& eng) {
  const auto& cfg = clf.cfg;
  const auto n = static_cast<std::int64_t>(features.size());
  const auto feat_dim = static_cast<std::int64_t>(features[0].size());
  const auto batch = std::min<std::int64_t>(cfg.batch_size, n);

  std::vector<std::vector<std::int64_t>> positives;
  if (cfg.class_balanced) positives = build_positive_index(labels, cfg.num_classes);

  std::vector<std::int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  for (std::int64_t i = n - 1; i > 0; --i)
    std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(eng.uniform_int(0, i))]);

  for (std::int64_t s = 0; s < steps_per_epoch; ++s) {
    std::vector<std::int64_t> rows;
    if (cfg.class_balanced) {
      rows = balanced_sample_rows(positives, batch, eng);
    } else {
      rows.resize(static_cast<size_t>(batch));
      for (std::int64_t i = 0; i < batch; ++i)
        rows[static_cast<size_t>(i)] = order[static_cast<size_t>((s * batch + i) % n)];
    }

    std::vector<Real> x(static_cast<size_t>(batch * feat_dim));
    for (std::int64_t i = 0; i < batch; ++i)
      std::copy(features[static_cast<size_t>(rows[static_cast<size_t>(i)])].begin(),
                features[static_cast<size_t>(rows[static_cast<size_t>(i)])].end(),
                x.begin() + i * feat_dim);

    const double lr = trainer::lr_at_step(sched, epoch * steps_per_epoch + s);
    Tape tape;
    std::map<std::string, Tensor> bound;
    for (const auto& [name, p] : clf.params) bound.emplace(name, tape.watch(name, p));
    Classifier view = clf;
    view.params = bound;
    auto logits = view.forward(Tensor::from({batch, feat_dim}, std::move(x)), true,
                               &clf.bn_in, &clf.bn_hidden);
    auto loss = classifier_loss(logits, labels, rows, cfg.multi_label);
    auto grads = tape.gradients(loss);
    trainer::adam_step(clf.params, grads, opt, lr);
  }
}

inline void check_feature_table(const std::vector<std::vector<Real>>& features,
                                const std::vector<std::vector<int>>& labels,
                                const ClassifierConfig& cfg) {
  require(features.size() == labels.size() && !features.empty(), ErrorKind::InvalidConfig,
          "train_downstream: feature/label count mismatch");
  const auto feat_dim = features[0].size();
  for (const auto& f : features)
    require(f.size() == feat_dim, ErrorKind::InvalidShape,
            "train_downstream: inconsistent feature dims");
  for (const auto& l : labels)
    require(static_cast<std::int64_t>(l.size()) == cfg.num_classes, ErrorKind::InvalidConfig,
            "train_downstream: label width != num_classes");
}

}  // namespace detail

// Adam-trained shallow head on cached frozen features. Labels are given as
// binary indicator rows (single-label rows have exactly one 1).
inline Classifier train_downstream(const std::vector<std::vector<Real>>& features,
                                   const std::vector<std::vector<int>>& labels,
                                   const ClassifierConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  detail::check_feature_table(features, labels, cfg);
  const auto n = static_cast<std::int64_t>(features.size());
  const auto feat_dim = static_cast<std::int64_t>(features[0].size());

  Classifier clf = detail::init_classifier(cfg, feat_dim, seed);
  trainer::OptimState opt;
  const auto batch = std::min<std::int64_t>(cfg.batch_size, n);
  const auto steps_per_epoch = std::max<std::int64_t>(1, n / batch);
  const trainer::Schedule sched{0, cfg.epochs * steps_per_epoch, cfg.lr};
  rng::Engine eng(rng::derive(seed, "downstream"));
  for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch)
    detail::classifier_epoch(clf, opt, features, labels, sched, epoch, steps_per_epoch, eng);
  return clf;
}

// On-the-fly variant: every epoch re-extracts training features with audio
// mixing (and frequency shift for spectrogram inputs) applied in the input
// space before encoding. Upstream weights stay frozen throughout.
inline Classifier train_downstream_onfly(
    const data::Dataset& ds, const std::vector<std::int64_t>& train_idx,
    const model::ModelConfig& mcfg, const model::ModelParams& params, Modality modality,
    Protocol protocol, ClassifierConfig cfg, const dsp::DspConfig& dcfg,
    const augment::ShiftConfig& shift_cfg, const augment::MixupConfig& mix_cfg,
    std::uint64_t seed) {
  require(modality != Modality::Video, ErrorKind::UnsupportedModality,
          "the video network is only used during training");
  cfg.num_classes = ds.num_classes();
  cfg.augment_at_train = true;
  cfg.validate();

  // Sub-clip geometry is fixed; collect (clip, window) pairs once.
  struct Item {
    std::int64_t clip;
    Window w;
  };
  std::vector<Item> items;
  std::vector<std::vector<int>> labels;
  for (auto i : train_idx)
    for (const auto& w : subclip_split(ds.clip_seconds(i), protocol)) {
      items.push_back({i, w});
      std::vector<int> row(static_cast<size_t>(ds.num_classes()), 0);
      row[static_cast<size_t>(ds.label(i))] = 1;
      labels.push_back(std::move(row));
    }
  const auto n = static_cast<std::int64_t>(items.size());
  require(n >= 2, ErrorKind::InvalidConfig, "train_downstream_onfly: not enough sub-clips");

  Classifier clf = detail::init_classifier(cfg, mcfg.hidden_dim(), seed);
  trainer::OptimState opt;
  const auto batch = std::min<std::int64_t>(cfg.batch_size, n);
  const auto steps_per_epoch = std::max<std::int64_t>(1, n / batch);
  const trainer::Schedule sched{0, cfg.epochs * steps_per_epoch, cfg.lr};
  rng::Engine eng(rng::derive(seed, "downstream"));

  for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng::Engine aug_eng(rng::derive(seed, "downstream-aug", static_cast<std::uint64_t>(epoch)));
    std::vector<std::vector<Real>> feats(static_cast<size_t>(n));
    if (modality == Modality::Spectrogram) {
      std::vector<dsp::Spectrogram> specs(static_cast<size_t>(n));
      for (std::int64_t i = 0; i < n; ++i) {
        const auto& it = items[static_cast<size_t>(i)];
        auto crop = augment::crop_waveform(ds.waveform_full(it.clip), it.w.start, it.w.len);
        specs[static_cast<size_t>(i)] =
            augment::freq_shift(dsp::log_mel(crop, dcfg), augment::sample_shift(shift_cfg, aug_eng));
      }
      auto perm = augment::sample_permutation(n, aug_eng);
      for (std::int64_t i = 0; i < n; ++i) {
        const double alpha = augment::sample_mixing_ratio(mix_cfg, aug_eng);
        dsp::Spectrogram mixed;
        mixed.hop_seconds = specs[static_cast<size_t>(i)].hop_seconds;
        mixed.data = augment::mixup(specs[static_cast<size_t>(i)].data,
                                    specs[static_cast<size_t>(perm[static_cast<size_t>(i)])].data,
                                    alpha);
        feats[static_cast<size_t>(i)] =
            model::encode_spectrogram(mixed, mcfg, params).values();
      }
    } else {
      std::vector<dsp::Waveform> crops(static_cast<size_t>(n));
      for (std::int64_t i = 0; i < n; ++i) {
        const auto& it = items[static_cast<size_t>(i)];
        crops[static_cast<size_t>(i)] =
            augment::crop_waveform(ds.waveform_full(it.clip), it.w.start, it.w.len);
      }
      auto perm = augment::sample_permutation(n, aug_eng);
      for (std::int64_t i = 0; i < n; ++i) {
        const double alpha = augment::sample_mixing_ratio(mix_cfg, aug_eng);
        auto x1 = Tensor::from({static_cast<std::int64_t>(crops[static_cast<size_t>(i)].samples.size())},
                               crops[static_cast<size_t>(i)].samples);
        auto x2 = Tensor::from(
            {static_cast<std::int64_t>(crops[static_cast<size_t>(perm[static_cast<size_t>(i)])].samples.size())},
            crops[static_cast<size_t>(perm[static_cast<size_t>(i)])].samples);
        dsp::Waveform mixed;
        mixed.sample_rate = ds.sample_rate();
        mixed.samples = augment::mixup(x1, x2, alpha).values();
        feats[static_cast<size_t>(i)] = model::encode_waveform(mixed, mcfg, params).values();
      }
    }
    detail::classifier_epoch(clf, opt, feats, labels, sched, epoch, steps_per_epoch, eng);
  }
  return clf;
}

inline std::vector<Real> classifier_logits(const Classifier& clf, const std::vector<Real>& feat) {
  auto x = Tensor::from({1, static_cast<std::int64_t>(feat.size())}, feat);
  // Inference falls back to batch statistics only if training never ran.
  const bool has_stats =
      clf.cfg.kind == ClassifierConfig::Kind::Linear || clf.bn_in.batches_seen > 0;
  require(has_stats, ErrorKind::InvalidConfig, "classifier: no batch-norm statistics yet");
  auto logits = clf.forward(x, false);
  return logits.values();
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

// Un-interpolated AP: mean over positives of precision at their rank, scores
// descending, ties broken by stable input order.
inline double average_precision(const std::vector<double>& scores,
                                const std::vector<int>& labels) {
  require(scores.size() == labels.size() && !scores.empty(), ErrorKind::InvalidShape,
          "average_precision: input mismatch");
  std::int64_t positives = 0;
  for (int l : labels) positives += (l == 1);
  require(positives >= 1, ErrorKind::UndefinedMetric,
          "average_precision: no positive labels");

  std::vector<std::int64_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
    return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
  });
  double ap = 0.0;
  std::int64_t hits = 0;
  for (size_t rank = 0; rank < order.size(); ++rank) {
    if (labels[static_cast<size_t>(order[rank])] == 1) {
      hits++;
      ap += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
  }
  return ap / static_cast<double>(positives);
}

// Mann-Whitney AUC via midranks: ties between a positive and a negative
// contribute exactly 1/2.
inline double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  require(scores.size() == labels.size() && !scores.empty(), ErrorKind::InvalidShape,
          "auc: input mismatch");
  std::int64_t P = 0, Ng = 0;
  for (int l : labels) (l == 1 ? P : Ng)++;
  require(P >= 1 && Ng >= 1, ErrorKind::UndefinedMetric, "auc: both classes must be present");

  std::vector<std::int64_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
    return scores[static_cast<size_t>(a)] < scores[static_cast<size_t>(b)];
  });
  double rank_sum_pos = 0.0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j + 1 < order.size() &&
           scores[static_cast<size_t>(order[j + 1])] == scores[static_cast<size_t>(order[i])])
      ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (size_t k = i; k <= j; ++k)
      if (labels[static_cast<size_t>(order[k])] == 1) rank_sum_pos += midrank;
    i = j + 1;
  }
  const double u = rank_sum_pos - static_cast<double>(P) * (static_cast<double>(P) + 1.0) / 2.0;
  return u / (static_cast<double>(P) * static_cast<double>(Ng));
}

namespace detail {

// Acklam's rational approximation for the standard normal quantile, then one
// Halley refinement against erfc; well under 1e-9 absolute error.
inline double norm_quantile(double p) {
  require(p > 0.0 && p < 1.0, ErrorKind::UndefinedMetric, "norm_quantile: p outside (0,1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425, phigh = 1 - plow;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else if (p <= phigh) {
    const double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  } else {
    const double q = std::sqrt(-2 * std::log(1 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  // Halley step: e = Phi(x) - p.
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
  return x - u / (1.0 + x * u / 2.0);
}

}  // namespace detail

// d' = sqrt(2) * Phi^{-1}(auc).
inline double d_prime(double auc_value) {
  require(auc_value > 0.0 && auc_value < 1.0, ErrorKind::UndefinedMetric,
          "d_prime: infinite at AUC of exactly 0 or 1");
  return std::sqrt(2.0) * detail::norm_quantile(auc_value);
}

// Per-class AP/AUC over clip scores [n, C] and indicator labels. Classes with
// no positives (or a single class present, for AUC) are skipped with a note.
inline MetricsReport compute_metrics(const std::vector<std::vector<Real>>& clip_scores,
                                     const std::vector<std::vector<int>>& clip_labels) {
  require(clip_scores.size() == clip_labels.size() && !clip_scores.empty(),
          ErrorKind::InvalidShape, "compute_metrics: input mismatch");
  const auto n = clip_scores.size();
  const auto C = clip_scores[0].size();
  MetricsReport rep;
  rep.num_eval_clips = static_cast<std::int64_t>(n);
  rep.per_class_ap.assign(C, std::numeric_limits<double>::quiet_NaN());

  double ap_sum = 0.0, auc_sum = 0.0;
  std::int64_t ap_classes = 0, auc_classes = 0, correct = 0;
  for (size_t c = 0; c < C; ++c) {
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    std::int64_t pos = 0;
    for (size_t i = 0; i < n; ++i) {
      scores[i] = clip_scores[i][c];
      labels[i] = clip_labels[i][c];
      pos += labels[i];
    }
    if (pos == 0) {
      rep.warnings.push_back("class " + std::to_string(c) +
                             " has no positives; skipped in mAP");
      continue;
    }
    rep.per_class_ap[c] = average_precision(scores, labels);
    ap_sum += rep.per_class_ap[c];
    ap_classes++;
    if (pos < static_cast<std::int64_t>(n)) {
      auc_sum += auc(scores, labels);
      auc_classes++;
    }
  }
  require(ap_classes > 0, ErrorKind::UndefinedMetric, "compute_metrics: no class has positives");
  rep.mAP = ap_sum / static_cast<double>(ap_classes);
  rep.auc = auc_classes > 0 ? auc_sum / static_cast<double>(auc_classes) : 0.5;
  rep.d_prime = (rep.auc > 0.0 && rep.auc < 1.0) ? d_prime(rep.auc)
                                                 : std::numeric_limits<double>::infinity();

  for (size_t i = 0; i < n; ++i) {
    size_t best = 0;
    for (size_t c = 1; c < C; ++c)
      if (clip_scores[i][c] > clip_scores[i][best]) best = c;
    correct += clip_labels[i][best] ? 1 : 0;
  }
  rep.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  return rep;
}

// ---------------------------------------------------------------------------
// end-to-end protocol on a labeled clip dataset
// ---------------------------------------------------------------------------

struct ProtocolResult {
  MetricsReport report;
  Classifier classifier;
};

inline std::vector<std::vector<int>> one_hot_labels(const data::Dataset& ds,
                                                    const std::vector<std::int64_t>& idx) {
  std::vector<std::vector<int>> labels;
  labels.reserve(idx.size());
  for (auto i : idx) {
    std::vector<int> row(static_cast<size_t>(ds.num_classes()), 0);
    row[static_cast<size_t>(ds.label(i))] = 1;
    labels.push_back(std::move(row));
  }
  return labels;
}

// Train a shallow head on frozen sub-clip features from train_idx, then score
// test_idx clips by averaging sub-clip logits. Upstream weights stay frozen.
// With ccfg.augment_at_train set, training features are re-extracted every
// epoch with mixing and frequency shift in the input space.
inline ProtocolResult run_protocol(const data::Dataset& ds,
                                   const std::vector<std::int64_t>& train_idx,
                                   const std::vector<std::int64_t>& test_idx,
                                   const model::ModelConfig& mcfg,
                                   const model::ModelParams& params, Modality modality,
                                   Protocol protocol, ClassifierConfig ccfg,
                                   const dsp::DspConfig& dcfg, std::uint64_t seed,
                                   const augment::ShiftConfig& shift_cfg = {},
                                   const augment::MixupConfig& mix_cfg = {}) {
  ccfg.num_classes = ds.num_classes();
  ccfg.validate();

  ProtocolResult out;
  if (ccfg.augment_at_train) {
    out.classifier = train_downstream_onfly(ds, train_idx, mcfg, params, modality, protocol,
                                            ccfg, dcfg, shift_cfg, mix_cfg, seed);
    out.report.augmentation_mode = "on-the-fly (audio mixing + frequency shift)";
  } else {
    std::vector<std::vector<Real>> train_feats;
    std::vector<std::vector<int>> train_labels;
    for (auto i : train_idx) {
      auto feats = extract_frozen_features(ds.waveform_full(i), mcfg, params, modality,
                                           protocol, dcfg);
      for (auto& f : feats) {
        train_feats.push_back(std::move(f));
        std::vector<int> row(static_cast<size_t>(ds.num_classes()), 0);
        row[static_cast<size_t>(ds.label(i))] = 1;
        train_labels.push_back(std::move(row));
      }
    }
    out.classifier = train_downstream(train_feats, train_labels, ccfg, seed);
  }
  const std::string mode = out.report.augmentation_mode;

  std::vector<std::vector<Real>> clip_scores;
  for (auto i : test_idx) {
    auto feats = extract_frozen_features(ds.waveform_full(i), mcfg, params, modality, protocol,
                                         dcfg);
    std::vector<std::vector<Real>> logit_rows;
    logit_rows.reserve(feats.size());
    for (const auto& f : feats) logit_rows.push_back(classifier_logits(out.classifier, f));
    clip_scores.push_back(average_logits(logit_rows));
  }
  out.report = compute_metrics(clip_scores, one_hot_labels(ds, test_idx));
  out.report.augmentation_mode = mode;
  return out;
}

}  // namespace tricl::evaluate
