// Acceptance suite: one test case per criterion, each printing a PASS/FAIL
// line. Criteria 5 and 6 run real pretraining and dominate the wall time.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "tricl/evaluate.hpp"
#include "tricl/synthdata.hpp"
#include "tricl/trainer.hpp"

using tricl::Modality;
using tricl::Real;
using tricl::Tensor;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void report(int num, const char* what, bool pass) {
  std::printf("[criterion %2d] %-62s %s\n", num, what, pass ? "PASS" : "FAIL");
  std::fflush(stdout);
}

std::string file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

int threads_for_heavy_runs() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw >= 2 ? 2 : 1;
}

}  // namespace

TEST_CASE("criterion 1: end-to-end gradient integrity") {
  const auto t0 = Clock::now();
  tricl::model::ModelConfig cfg;
  cfg.spectrogram.stages = {{3, 3, 2}, {4, 3, 2}};
  cfg.spectrogram.input_width = 16;
  cfg.spectrogram.hidden_dim = 8;
  cfg.waveform.stages = {{3, 16, 8}, {4, 4, 2}};
  cfg.waveform.hidden_dim = 8;
  cfg.video.stages = {{3, 3, 2}, {4, 3, 1}};
  cfg.video.input_width = 12;
  cfg.video.hidden_dim = 8;
  cfg.projector.hidden = 12;
  cfg.projector.out = 6;
  auto params = tricl::model::init_params(cfg, 1001);

  // A two-sample batch for every modality, fixed across evaluations.
  tricl::rng::Engine eng(1002);
  auto rnd = [&](tricl::Shape s) {
    std::vector<Real> v(static_cast<size_t>(tricl::shape_numel(s)));
    for (auto& x : v) x = static_cast<Real>(eng.uniform(-1, 1));
    return Tensor::from(std::move(s), std::move(v));
  };
  auto spec_in = rnd({2, 1, 18, 16});
  auto wave_in = rnd({2, 1, 200});
  auto video_in = rnd({2, 3, 1, 12, 12});

  oracles::ParamMap pm(params.begin(), params.end());
  auto res = oracles::fd_check(
      pm,
      [&](const oracles::ParamMap& p) {
        tricl::model::ModelParams mp(p.begin(), p.end());
        auto zs = tricl::model::project_and_normalize_batch(
            tricl::model::encode_spectrogram_batch(spec_in, cfg, mp), cfg, mp);
        auto zw = tricl::model::project_and_normalize_batch(
            tricl::model::encode_waveform_batch(wave_in, cfg, mp), cfg, mp);
        auto zv = tricl::model::project_and_normalize_batch(
            tricl::model::encode_video_batch(video_in, cfg, mp), cfg, mp);
        return tricl::objective::total_loss(zv, zs, zw, 0.1).total;
      },
      1e-5, 24, 1003);

  const double elapsed = seconds_since(t0);
  const bool pass = res.checked >= 20 && res.max_rel_err < 1e-4 && elapsed < 60.0;
  std::printf("    checked %lld params, max rel err %.3e, %.1f s\n",
              static_cast<long long>(res.checked), res.max_rel_err, elapsed);
  report(1, "gradient of total_loss vs central finite differences", pass);
  CHECK(res.checked >= 20);
  CHECK(res.max_rel_err < 1e-4);
  CHECK(elapsed < 60.0);
}

TEST_CASE("criterion 2: loss analytics") {
  bool pass = true;
  for (std::int64_t n : {2, 4, 8}) {
    std::vector<Real> rows;
    for (std::int64_t i = 0; i < n; ++i) {
      rows.push_back(1);
      rows.push_back(0);
      rows.push_back(0);
    }
    auto z = Tensor::from({n, 3}, rows);
    const double got = tricl::objective::pairwise_loss(z, z, 0.1).value();
    const double expect = 2.0 * static_cast<double>(n) * std::log(2.0 * n - 1.0);
    pass = pass && std::fabs(got - expect) < 1e-9;
  }
  auto za = Tensor::from({2, 2}, {1, 0, 0, 1});
  const double got = tricl::objective::pairwise_loss(za, za, 1.0).value();
  const double expect = 4.0 * std::log(1.0 + 2.0 / M_E);
  pass = pass && std::fabs(got - expect) < 1e-9 && std::fabs(expect - 2.205779) < 1e-6;
  report(2, "identical-batch and orthogonal pairwise loss values", pass);
  CHECK(pass);
}

TEST_CASE("criterion 3: metric oracles") {
  const auto t0 = Clock::now();
  bool pass = true;
  std::int64_t instances = 0;

  // Exhaustive over binary score patterns (every tie shape) x all label
  // masks, n = 1..12; both metrics must match the brute-force oracles
  // exactly. AUC needs both classes; AP needs a positive.
  for (std::int64_t n = 1; n <= 12 && pass; ++n) {
    std::vector<double> scores(static_cast<size_t>(n));
    std::vector<int> labels(static_cast<size_t>(n));
    for (std::int64_t sm = 0; sm < (std::int64_t(1) << n) && pass; ++sm) {
      for (std::int64_t i = 0; i < n; ++i)
        scores[static_cast<size_t>(i)] = (sm >> i) & 1 ? 1.0 : 0.0;
      for (std::int64_t lm = 1; lm < (std::int64_t(1) << n) && pass; ++lm) {
        for (std::int64_t i = 0; i < n; ++i)
          labels[static_cast<size_t>(i)] = static_cast<int>((lm >> i) & 1);
        instances++;
        pass = pass && tricl::evaluate::average_precision(scores, labels) ==
                           oracles::brute_average_precision(scores, labels);
        if (lm != (std::int64_t(1) << n) - 1)
          pass = pass && tricl::evaluate::auc(scores, labels) == oracles::brute_auc(scores, labels);
      }
    }
  }
  // Richer tie alphabets, exhaustive at n <= 6, randomized up to n = 12.
  for (std::int64_t n = 2; n <= 6 && pass; ++n) {
    std::vector<double> scores(static_cast<size_t>(n));
    std::vector<int> labels(static_cast<size_t>(n));
    std::int64_t total = 1;
    for (std::int64_t i = 0; i < n; ++i) total *= 3;
    for (std::int64_t sm = 0; sm < total && pass; ++sm) {
      std::int64_t v = sm;
      for (std::int64_t i = 0; i < n; ++i) {
        scores[static_cast<size_t>(i)] = 0.5 * static_cast<double>(v % 3);
        v /= 3;
      }
      for (std::int64_t lm = 1; lm < (std::int64_t(1) << n) && pass; ++lm) {
        for (std::int64_t i = 0; i < n; ++i)
          labels[static_cast<size_t>(i)] = static_cast<int>((lm >> i) & 1);
        instances++;
        pass = pass && tricl::evaluate::average_precision(scores, labels) ==
                           oracles::brute_average_precision(scores, labels);
        if (lm != (std::int64_t(1) << n) - 1)
          pass = pass && tricl::evaluate::auc(scores, labels) == oracles::brute_auc(scores, labels);
      }
    }
  }
  tricl::rng::Engine eng(1004);
  for (int trial = 0; trial < 20000 && pass; ++trial) {
    const auto n = eng.uniform_int(2, 12);
    std::vector<double> scores(static_cast<size_t>(n));
    std::vector<int> labels(static_cast<size_t>(n));
    bool pos = false, neg = false;
    for (std::int64_t i = 0; i < n; ++i) {
      scores[static_cast<size_t>(i)] = 0.2 * static_cast<double>(eng.uniform_int(0, 6));
      labels[static_cast<size_t>(i)] = static_cast<int>(eng.uniform_int(0, 1));
      (labels[static_cast<size_t>(i)] ? pos : neg) = true;
    }
    if (!pos) labels[0] = 1;
    instances++;
    pass = pass && tricl::evaluate::average_precision(scores, labels) ==
                       oracles::brute_average_precision(scores, labels);
    if (pos && neg)
      pass = pass && tricl::evaluate::auc(scores, labels) == oracles::brute_auc(scores, labels);
  }

  const bool d1 = std::fabs(tricl::evaluate::d_prime(0.958) - 2.44) < 0.01;
  const bool d2 = std::fabs(tricl::evaluate::d_prime(0.973) - 2.73) < 0.01;
  pass = pass && d1 && d2;
  std::printf("    %lld oracle instances, d'(0.958)=%.4f, d'(0.973)=%.4f, %.1f s\n",
              static_cast<long long>(instances), tricl::evaluate::d_prime(0.958),
              tricl::evaluate::d_prime(0.973), seconds_since(t0));
  report(3, "AP/AUC brute-force equality and d-prime reference points", pass);
  CHECK(pass);
}

TEST_CASE("criterion 4: DSP oracle") {
  const auto t0 = Clock::now();
  auto cfg = tricl::dsp::DspConfig::preset_a();
  const int sr = 16000;
  const auto win = cfg.win_samples(sr), hop = cfg.hop_samples(sr);
  const double mlo = oracles::mel_from_hz(cfg.fmin), mhi = oracles::mel_from_hz(cfg.fmax);
  std::vector<double> edge(82);
  for (int i = 0; i < 82; ++i)
    edge[static_cast<size_t>(i)] = oracles::hz_from_mel(mlo + (mhi - mlo) * i / 81.0);

  double worst = 0.0;
  for (std::uint64_t clip = 0; clip < 100; ++clip) {
    tricl::rng::Engine eng(2000 + clip);
    tricl::dsp::Waveform w;
    w.sample_rate = sr;
    w.samples.resize(8000);  // 0.5 s
    for (auto& s : w.samples) s = static_cast<Real>(eng.uniform(-0.9, 0.9));
    auto got = tricl::dsp::log_mel(w, cfg);
    const auto F = got.frames();

    for (std::int64_t f = 0; f < F; ++f) {
      std::vector<double> frame(static_cast<size_t>(win));
      for (std::int64_t n = 0; n < win; ++n)
        frame[static_cast<size_t>(n)] =
            w.samples[static_cast<size_t>(f * hop + n)] *
            0.5 * (1.0 - std::cos(2.0 * M_PI * static_cast<double>(n) / static_cast<double>(win)));
      auto power = oracles::naive_power_spectrum(frame, cfg.n_fft);
      for (int m = 0; m < cfg.n_mels; ++m) {
        double acc = 0.0;
        for (std::int64_t k = 0; k <= cfg.n_fft / 2; ++k) {
          const double fhz = static_cast<double>(sr) * static_cast<double>(k) / cfg.n_fft;
          const double fl = edge[static_cast<size_t>(m)];
          const double fc = edge[static_cast<size_t>(m) + 1];
          const double fr = edge[static_cast<size_t>(m) + 2];
          double wgt = 0.0;
          if (fhz > fl && fhz <= fc)
            wgt = (fhz - fl) / (fc - fl);
          else if (fhz > fc && fhz < fr)
            wgt = (fr - fhz) / (fr - fc);
          acc += wgt * power[static_cast<size_t>(k)];
        }
        worst = std::max(worst,
                         std::fabs(got.data.at({f, m}) - std::log(std::max(acc, cfg.log_floor))));
      }
    }
  }

  tricl::rng::Engine eng(2100);
  tricl::dsp::Waveform w3;
  w3.sample_rate = sr;
  w3.samples.resize(48000);
  for (auto& s : w3.samples) s = static_cast<Real>(eng.uniform(-0.9, 0.9));
  auto shape3 = tricl::dsp::log_mel(w3, cfg);
  const bool shape_ok = shape3.data.shape() == tricl::Shape{299, 80};

  const double elapsed = seconds_since(t0);
  const bool pass = worst < 1e-5 && shape_ok && elapsed < 60.0;
  std::printf("    max |log-mel - reference| = %.3e over 100 clips, 3 s shape %s, %.1f s\n",
              worst, tricl::shape_str(shape3.data.shape()).c_str(), elapsed);
  report(4, "log-mel matches the naive-DFT reference; preset A shape", pass);
  CHECK(worst < 1e-5);
  CHECK(shape_ok);
  CHECK(elapsed < 60.0);
}

TEST_CASE("criterion 5: learning happens (2000 steps, batch 64, linear probe)") {
  const auto t0 = Clock::now();
  tricl::runtime::set_threads(threads_for_heavy_runs());

  const auto dir = fs::temp_directory_path() / "tricl_accept_c5";
  if (!fs::exists(dir / "labels.csv")) {
    tricl::synthdata::LatentSpec spec;  // C=4, cues at 1, shared_cue = 1
    spec.noise_level = 0.3;
    spec.clip_len = 4.0;
    tricl::synthdata::write_dataset(dir.string(), spec, 4242, 400);
  }
  auto ds = tricl::data::Dataset::load(dir.string(), true);

  auto cfg = tricl::config::ExperimentConfig::desk();
  cfg.seed = 4242;
  cfg.threads = threads_for_heavy_runs();
  cfg.schedule = {250, 2000, 1e-4};
  cfg.batch_size = 64;
  cfg.checkpoint_every = 2000;
  const auto out = fs::temp_directory_path() / "tricl_accept_c5_run";
  fs::remove_all(out);
  auto run = tricl::trainer::run_pretraining(cfg, ds, out.string());
  REQUIRE(run.history.size() == 2000);

  double head = 0, tail = 0;
  for (size_t i = 0; i < 100; ++i) head += run.history[i].total;
  for (size_t i = 1900; i < 2000; ++i) tail += run.history[i].total;
  const bool loss_fell = tail / 100.0 < head / 100.0;

  auto [train_idx, test_idx] = tricl::data::split_indices(ds.size(), cfg.train_fraction);
  tricl::evaluate::ClassifierConfig ccfg;
  ccfg.kind = tricl::evaluate::ClassifierConfig::Kind::Linear;
  auto probe = tricl::evaluate::run_protocol(ds, train_idx, test_idx, cfg.model_config(),
                                             run.params, Modality::Spectrogram,
                                             tricl::evaluate::Protocol::Nonoverlap1s, ccfg,
                                             cfg.dsp, 1);
  const double acc = probe.report.accuracy;
  const double elapsed = seconds_since(t0);
  const bool pass = acc >= 0.90 && loss_fell && elapsed < 900.0;
  std::printf("    test accuracy %.4f (chance 0.25), loss %.0f -> %.0f, %.0f s\n", acc,
              head / 100.0, tail / 100.0, elapsed);
  report(5, "h_s linear probe >= 90% after the desk pretraining run", pass);
  CHECK(acc >= 0.90);
  CHECK(loss_fell);
  CHECK(elapsed < 900.0);
  fs::remove_all(out);
}

namespace {

tricl::config::ExperimentConfig trend_config(std::uint64_t seed, bool with_video) {
  auto cfg = tricl::config::ExperimentConfig::desk();
  cfg.seed = seed;
  cfg.threads = threads_for_heavy_runs();
  cfg.dsp.n_mels = 32;
  cfg.dsp.window_ms = 32.0;
  cfg.dsp.hop_ms = 16.0;
  cfg.dsp.n_fft = 256;
  cfg.dsp.fmax = 3800.0;
  cfg.model.spectrogram.stages = {{8, 5, 4}, {16, 3, 2}, {32, 3, 1}};
  cfg.model.spectrogram.input_width = 32;
  cfg.model.waveform.stages = {{8, 64, 64}, {16, 8, 4}, {32, 4, 2}};
  cfg.model.video.stages = {{6, 5, 5}, {12, 3, 1}, {24, 3, 1}};
  cfg.model.video.input_width = 32;
  cfg.model.spectrogram.hidden_dim = 64;
  cfg.model.waveform.hidden_dim = 64;
  cfg.model.video.hidden_dim = 64;
  cfg.model.projector.hidden = 256;
  cfg.model.projector.out = 32;
  cfg.video_size = 32;
  cfg.schedule = {100, 1200, 1e-3};
  cfg.batch_size = 32;
  cfg.checkpoint_every = 100000;
  // Example mixing hurts at desk batch sizes, and a +-10 bin shift crosses
  // the synthetic class spacing; both off for this comparison.
  cfg.mixup.enable_spectrogram = false;
  cfg.mixup.enable_waveform = false;
  cfg.mixup.enable_video = false;
  cfg.shift.max_shift = 0;
  cfg.modalities = with_video
                       ? std::set<Modality>{Modality::Spectrogram, Modality::Waveform,
                                            Modality::Video}
                       : std::set<Modality>{Modality::Spectrogram, Modality::Waveform};
  return cfg;
}

}  // namespace

TEST_CASE("criterion 6: cross-modal training advantage (3 seeds)") {
  const auto t0 = Clock::now();
  const auto dir = fs::temp_directory_path() / "tricl_accept_c6";
  if (!fs::exists(dir / "labels.csv")) {
    tricl::synthdata::LatentSpec spec;
    spec.audio_cue_kind = tricl::synthdata::AudioCueKind::Rate;
    spec.audio_cue_strength = 0.9;
    spec.noise_level = 1.0;
    spec.clip_len = 3.5;
    spec.sample_rate = 8000;
    spec.video_size = 32;
    tricl::synthdata::write_dataset(dir.string(), spec, 99, 240);
  }
  auto ds = tricl::data::Dataset::load(dir.string(), true);

  double gap_sum = 0.0;
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    double acc[2] = {0, 0};
    for (bool with_video : {false, true}) {
      auto cfg = trend_config(seed, with_video);
      tricl::runtime::set_threads(cfg.threads);
      tricl::trainer::Trainer tr(cfg, ds);
      tr.init_params();
      for (std::int64_t t = 0; t < cfg.schedule.total_steps; ++t) tr.step(t);
      tricl::evaluate::ClassifierConfig ccfg;
      ccfg.kind = tricl::evaluate::ClassifierConfig::Kind::Linear;
      ccfg.lr = 5e-3;
      ccfg.epochs = 60;
      auto r = tricl::evaluate::run_protocol(ds, tr.train_indices(), tr.test_indices(),
                                             cfg.model_config(), tr.params(),
                                             Modality::Spectrogram,
                                             tricl::evaluate::Protocol::Nonoverlap1s, ccfg,
                                             cfg.dsp, 1);
      acc[with_video ? 1 : 0] = r.report.accuracy;
    }
    const double gap = (acc[1] - acc[0]) * 100.0;
    gap_sum += gap;
    std::printf("    seed %llu: S,W %.1f%%  S,V,W %.1f%%  gap %+.1f points\n",
                static_cast<unsigned long long>(seed), acc[0] * 100.0, acc[1] * 100.0, gap);
    std::fflush(stdout);
  }
  const double mean_gap = gap_sum / 3.0;
  const double elapsed = seconds_since(t0);
  const bool pass = mean_gap >= 5.0;
  std::printf("    mean gap %+.1f points (need >= +5), %.0f s\n", mean_gap, elapsed);
  report(6, "{S,V,W} audio probe beats {S,W} by >= 5 points (3-seed mean)", pass);
  CHECK(mean_gap >= 5.0);
}

TEST_CASE("criterion 7: mixup machinery") {
  tricl::rng::Engine eng(7001);
  tricl::augment::MixupConfig cfg;  // beta(5, 2)
  const int n = 1000000;
  double sum = 0.0;
  std::vector<int> hist(40, 0);
  for (int i = 0; i < n; ++i) {
    const double a = tricl::augment::sample_mixing_ratio(cfg, eng);
    sum += a;
    hist[static_cast<size_t>(std::min(39.0, a * 40.0))]++;
  }
  const double mean = sum / n;
  int best = 0;
  for (int b = 1; b < 40; ++b)
    if (hist[static_cast<size_t>(b)] > hist[static_cast<size_t>(best)]) best = b;
  const double mode_center = (best + 0.5) / 40.0;

  auto x = Tensor::from({3}, {0.4, -0.2, 0.9});
  auto y = Tensor::from({3}, {-0.1, 0.5, 0.3});
  bool exact = tricl::augment::mixup(x, y, 1.0).values() == x.values();
  for (double a : {0.0, 0.3, 0.77, 1.0})
    exact = exact && tricl::augment::mixup(x, x, a).values() == x.values();

  const bool mean_ok = std::fabs(mean - 5.0 / 7.0) < 0.002;
  const bool mode_ok = mode_center >= 0.75 && mode_center <= 0.85;
  std::printf("    beta(5,2): mean %.5f (target %.5f), mode bin center %.3f\n", mean, 5.0 / 7.0,
              mode_center);
  report(7, "beta(5,2) mean/mode and exact mixup identities", mean_ok && mode_ok && exact);
  CHECK(mean_ok);
  CHECK(mode_ok);
  CHECK(exact);
}

TEST_CASE("criterion 8: learning-rate schedule") {
  tricl::trainer::Schedule s;  // warmup 5000, total 400000, peak 1e-4
  const double lr0 = tricl::trainer::lr_at_step(s, 0);
  const double lrw = tricl::trainer::lr_at_step(s, 5000);
  const double lrT = tricl::trainer::lr_at_step(s, 400000);
  const double ramp = s.peak_lr / static_cast<double>(s.warmup_steps);
  const bool continuous =
      std::fabs(tricl::trainer::lr_at_step(s, 4999) - lrw) <= ramp * 1.01 &&
      std::fabs(tricl::trainer::lr_at_step(s, 5001) - lrw) <= ramp * 1.01;
  const bool pass =
      lr0 == 0.0 && std::fabs(lrw - 1e-4) < 1e-18 && std::fabs(lrT) < 1e-12 && continuous;
  std::printf("    lr(0)=%g lr(warmup)=%g lr(total)=%g\n", lr0, lrw, lrT);
  report(8, "lr(0)=0, lr(warmup)=1e-4, lr(total)=0, continuous at warmup", pass);
  CHECK(pass);
}

TEST_CASE("criterion 9: determinism and bitwise resume") {
  tricl::runtime::set_threads(1);  // single-threaded as stated
  const auto dir = fs::temp_directory_path() / "tricl_accept_c9";
  if (!fs::exists(dir / "labels.csv")) {
    tricl::synthdata::LatentSpec spec;
    spec.num_classes = 2;
    spec.clip_len = 1.2;
    spec.sample_rate = 8000;
    spec.video_size = 16;
    spec.noise_level = 0.2;
    tricl::synthdata::write_dataset(dir.string(), spec, 9, 8);
  }
  auto ds = tricl::data::Dataset::load(dir.string(), true);

  auto cfg = tricl::config::ExperimentConfig::desk();
  cfg.seed = 9;
  cfg.threads = 1;
  cfg.dsp.n_mels = 24;
  cfg.dsp.window_ms = 25.0;
  cfg.dsp.hop_ms = 10.0;
  cfg.dsp.n_fft = 256;
  cfg.dsp.fmax = 3800.0;
  cfg.model.spectrogram.stages = {{4, 3, 2}, {6, 3, 2}};
  cfg.model.spectrogram.input_width = 24;
  cfg.model.spectrogram.hidden_dim = 16;
  cfg.model.waveform.stages = {{4, 32, 16}, {6, 4, 2}};
  cfg.model.waveform.hidden_dim = 16;
  cfg.model.video.stages = {{4, 3, 2}, {6, 3, 2}};
  cfg.model.video.input_width = 16;
  cfg.model.video.hidden_dim = 16;
  cfg.model.projector.hidden = 24;
  cfg.model.projector.out = 8;
  cfg.crop_len = 0.6;
  cfg.video_frames = 3;
  cfg.video_size = 16;
  cfg.batch_size = 8;
  cfg.schedule = {20, 100, 1e-3};
  cfg.checkpoint_every = 50;
  cfg.train_fraction = 0.75;

  const auto out_a = fs::temp_directory_path() / "tricl_accept_c9_a";
  const auto out_b = fs::temp_directory_path() / "tricl_accept_c9_b";
  const auto out_c = fs::temp_directory_path() / "tricl_accept_c9_c";
  fs::remove_all(out_a);
  fs::remove_all(out_b);
  fs::remove_all(out_c);
  tricl::trainer::run_pretraining(cfg, ds, out_a.string());
  tricl::trainer::run_pretraining(cfg, ds, out_b.string());
  tricl::trainer::run_pretraining(cfg, ds, out_c.string(),
                                  (out_a / tricl::trainer::checkpoint_name(50)).string());

  const auto ck = tricl::trainer::checkpoint_name(100);
  const bool identical =
      file_bytes((out_a / ck).string()) == file_bytes((out_b / ck).string());
  const bool resumed =
      file_bytes((out_a / ck).string()) == file_bytes((out_c / ck).string());
  report(9, "identical runs and resumed runs match bitwise at step 100", identical && resumed);
  CHECK(identical);
  CHECK(resumed);
  fs::remove_all(out_a);
  fs::remove_all(out_b);
  fs::remove_all(out_c);
}

TEST_CASE("criterion 10: frozen-evaluation contract") {
  const auto dir = fs::temp_directory_path() / "tricl_accept_c9";  // reuse tiny dataset
  if (!fs::exists(dir / "labels.csv")) {
    tricl::synthdata::LatentSpec spec;
    spec.num_classes = 2;
    spec.clip_len = 1.2;
    spec.sample_rate = 8000;
    spec.video_size = 16;
    spec.noise_level = 0.2;
    tricl::synthdata::write_dataset(dir.string(), spec, 9, 8);
  }
  auto ds = tricl::data::Dataset::load(dir.string(), false);

  tricl::model::ModelConfig mcfg;
  mcfg.spectrogram.stages = {{4, 3, 2}, {6, 3, 2}};
  mcfg.spectrogram.input_width = 24;
  mcfg.spectrogram.hidden_dim = 16;
  mcfg.waveform.stages = {{4, 32, 16}, {6, 4, 2}};
  mcfg.waveform.hidden_dim = 16;
  mcfg.video.hidden_dim = 16;
  auto params = tricl::model::init_params(mcfg, 10001);
  tricl::dsp::DspConfig dcfg;
  dcfg.n_mels = 24;
  dcfg.window_ms = 25.0;
  dcfg.n_fft = 256;
  dcfg.fmax = 3800.0;

  const auto before = tricl::io::params_checksum(params);
  auto [train_idx, test_idx] = tricl::data::split_indices(ds.size(), 0.75);
  tricl::evaluate::ClassifierConfig ccfg;
  ccfg.kind = tricl::evaluate::ClassifierConfig::Kind::Linear;
  ccfg.epochs = 5;
  auto result = tricl::evaluate::run_protocol(ds, train_idx, test_idx, mcfg, params,
                                              Modality::Spectrogram,
                                              tricl::evaluate::Protocol::Nonoverlap1s, ccfg,
                                              dcfg, 1);
  const bool frozen = tricl::io::params_checksum(params) == before;

  bool rejected = false;
  try {
    tricl::evaluate::extract_frozen_features(ds.waveform_full(0), mcfg, params, Modality::Video,
                                             tricl::evaluate::Protocol::Nonoverlap1s, dcfg);
  } catch (const tricl::Error& e) {
    rejected = e.kind() == tricl::ErrorKind::UnsupportedModality;
  }
  report(10, "upstream unchanged by downstream training; video eval rejected",
         frozen && rejected);
  CHECK(frozen);
  CHECK(rejected);
  fs::remove_all(dir);
  fs::remove_all(fs::temp_directory_path() / "tricl_accept_c5");
  fs::remove_all(fs::temp_directory_path() / "tricl_accept_c6");
}
