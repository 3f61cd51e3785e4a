#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "tricl/synthdata.hpp"
#include "tricl/trainer.hpp"

using tricl::Real;
using tricl::Tensor;
namespace tr = tricl::trainer;
namespace fs = std::filesystem;

TEST_CASE("lr schedule") {
  tr::Schedule s;  // warmup 5000, total 400000, peak 1e-4
  CHECK(tr::lr_at_step(s, 0) == 0.0);
  CHECK(tr::lr_at_step(s, 5000) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(std::fabs(tr::lr_at_step(s, 400000)) < 1e-12);

  // Midpoint of the cosine leg sits at half peak.
  const std::int64_t mid = 5000 + (400000 - 5000) / 2;
  CHECK(tr::lr_at_step(s, mid) == doctest::Approx(0.5e-4).epsilon(1e-9));

  // Continuous at the warmup boundary: one-step differences on both sides
  // stay within the warmup ramp's own increment.
  const double ramp = s.peak_lr / static_cast<double>(s.warmup_steps);
  CHECK(std::fabs(tr::lr_at_step(s, 5000) - tr::lr_at_step(s, 4999)) <= ramp * 1.01);
  CHECK(std::fabs(tr::lr_at_step(s, 5001) - tr::lr_at_step(s, 5000)) <= ramp * 1.01);
  for (std::int64_t t = 0; t <= 400000; t += 1979) CHECK(tr::lr_at_step(s, t) >= 0.0);

  CHECK_THROWS_AS(tr::lr_at_step(s, -1), tricl::Error);
  CHECK_THROWS_AS(tr::lr_at_step(s, 400001), tricl::Error);

  tr::Schedule bad{6000, 5000, 1e-4};
  CHECK_THROWS_AS(tr::lr_at_step(bad, 0), tricl::Error);
}

TEST_CASE("adam_step") {
  tricl::model::ModelParams params{{"p", Tensor::from({2}, {1.0, -2.0})}};
  tr::OptimState st;

  // Zero gradients: parameters hold still while the moments decay.
  st.m["p"] = Tensor::from({2}, {0.5, 0.5});
  st.v["p"] = Tensor::from({2}, {0.25, 0.25});
  tr::adam_step(params, {{"p", Tensor::zeros({2})}}, st, 1e-3);
  CHECK(params.at("p").values()[0] != doctest::Approx(1.0).epsilon(1e-15));  // moment still pushes
  CHECK(st.m.at("p").values()[0] == doctest::Approx(0.45));
  CHECK(st.v.at("p").values()[0] == doctest::Approx(0.25 * 0.999));

  // Fresh state, first step: update is about -lr * sign(g).
  tricl::model::ModelParams p2{{"w", Tensor::from({2}, {0.0, 0.0})}};
  tr::OptimState st2;
  tr::adam_step(p2, {{"w", Tensor::from({2}, {3.7, -0.02})}}, st2, 1e-3);
  CHECK(p2.at("w").values()[0] == doctest::Approx(-1e-3).epsilon(1e-4));
  CHECK(p2.at("w").values()[1] == doctest::Approx(1e-3).epsilon(1e-4));

  // A non-finite gradient aborts the step with parameters untouched.
  tricl::model::ModelParams p3{{"w", Tensor::from({1}, {1.0})},
                               {"u", Tensor::from({1}, {2.0})}};
  tr::OptimState st3;
  tricl::GradMap bad{{"w", Tensor::from({1}, {1.0})},
                     {"u", Tensor::from({1}, {std::nan("")})}};
  CHECK_THROWS_AS(tr::adam_step(p3, bad, st3, 1e-3), tricl::Error);
  CHECK(p3.at("w").values()[0] == 1.0);
  CHECK(p3.at("u").values()[0] == 2.0);
  CHECK(st3.step == 0);

  // Determinism: two identical sequences give bitwise-identical parameters.
  auto run = [] {
    tricl::model::ModelParams p{{"w", Tensor::from({3}, {0.3, -0.7, 1.1})}};
    tr::OptimState st;
    for (int k = 0; k < 10; ++k) {
      tricl::rng::Engine eng(40 + static_cast<std::uint64_t>(k));
      std::vector<Real> g(3);
      for (auto& x : g) x = static_cast<Real>(eng.uniform(-1, 1));
      tr::adam_step(p, {{"w", Tensor::from({3}, g)}}, st, 1e-3);
    }
    return p.at("w").values();
  };
  CHECK(run() == run());
}

namespace {

tricl::synthdata::LatentSpec tiny_spec() {
  tricl::synthdata::LatentSpec spec;
  spec.num_classes = 2;
  spec.clip_len = 1.2;
  spec.sample_rate = 8000;
  spec.video_size = 16;
  spec.noise_level = 0.2;
  return spec;
}

tricl::config::ExperimentConfig tiny_run_config() {
  auto c = tricl::config::ExperimentConfig::desk();
  c.seed = 7;
  c.dsp.n_mels = 24;
  c.dsp.window_ms = 25.0;
  c.dsp.hop_ms = 10.0;
  c.dsp.n_fft = 256;
  c.dsp.fmax = 3800.0;
  c.model.spectrogram.stages = {{4, 3, 2}, {6, 3, 2}};
  c.model.spectrogram.input_width = 24;
  c.model.spectrogram.hidden_dim = 16;
  c.model.waveform.stages = {{4, 32, 16}, {6, 4, 2}};
  c.model.waveform.hidden_dim = 16;
  c.model.video.stages = {{4, 3, 2}, {6, 3, 2}};
  c.model.video.input_width = 16;
  c.model.video.hidden_dim = 16;
  c.model.projector.hidden = 24;
  c.model.projector.out = 8;
  c.crop_len = 0.6;
  c.video_fps = 5.0;
  c.video_frames = 3;
  c.video_size = 16;
  c.schedule = {10, 60, 1e-3};
  c.batch_size = 4;
  c.train_fraction = 0.75;
  c.log_every = 5;
  c.checkpoint_every = 5;
  return c;
}

std::string make_dataset_dir(const char* name, std::uint64_t seed, std::int64_t n) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  tricl::synthdata::write_dataset(dir.string(), tiny_spec(), seed, n);
  return dir.string();
}

std::string file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("train_step: random-init loss sits near the uniform baseline") {
  // The near-uniform-similarity reading holds when the temperature does not
  // magnify the per-modality clustering of freshly initialized encoders, so
  // this probe runs at tau = 1 with a roomy embedding dimension.
  const auto dir = make_dataset_dir("tricl_tr_base", 31, 8);
  auto ds = tricl::data::Dataset::load(dir, true);
  auto cfg = tiny_run_config();
  cfg.batch_size = 64;
  cfg.model.projector.out = 64;
  cfg.loss.temperature = 1.0;
  tr::Trainer t(cfg, ds);
  t.init_params();
  auto stats = t.step(0);

  const double n = static_cast<double>(cfg.batch_size);
  const double baseline = 2.0 * n * std::log(2.0 * n - 1.0);
  for (double term : {stats.l_vs, stats.l_vw, stats.l_sw}) {
    CHECK(std::isfinite(term));
    CHECK(term > 0.8 * baseline);
    CHECK(term < 1.2 * baseline);
  }
  CHECK(stats.total == doctest::Approx(stats.l_vs + stats.l_vw + stats.l_sw).epsilon(1e-12));
  fs::remove_all(dir);
}

TEST_CASE("train_step: duplicated clips make positives indistinguishable") {
  // Every row of the manifest points at the same generated clip.
  const auto dir = fs::temp_directory_path() / "tricl_tr_dup";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto dup_spec = tiny_spec();
  dup_spec.clip_len = 0.6;  // equal to the crop window: one possible crop
  auto sample = tricl::synthdata::gen_sample(dup_spec, 77, 0);
  tricl::io::write_wav((dir / "c.wav").string(), sample.waveform);
  tricl::io::write_video_blob((dir / "c.vid").string(), sample.clip);
  {
    std::ofstream m(dir / "labels.csv");
    m << "index,label,wav,video,clip_len,sample_rate\n";
    for (int i = 0; i < 8; ++i)
      m << i << ',' << i % 2 << ",c.wav,c.vid,0.6,8000\n";
  }
  auto ds = tricl::data::Dataset::load(dir.string(), true);
  auto cfg = tiny_run_config();
  cfg.batch_size = 16;
  cfg.video_frames = 3;
  cfg.shift.max_shift = 0;
  cfg.jitter.enabled = false;
  cfg.mixup.enable_spectrogram = false;
  cfg.mixup.enable_waveform = false;
  cfg.mixup.enable_video = false;
  tr::Trainer t(cfg, ds);
  t.init_params();

  const auto N = cfg.batch_size;
  auto z = t.embed_batch(0);
  REQUIRE(z.s.has_value());
  REQUIRE(z.w.has_value());
  auto row_dot = [](const Tensor& a, std::int64_t i, const Tensor& b, std::int64_t j) {
    double acc = 0;
    for (std::int64_t e = 0; e < a.extent(1); ++e) acc += a.at({i, e}) * b.at({j, e});
    return acc;
  };
  // Each modality collapses the duplicated batch to a single embedding.
  for (const Tensor* m : {&*z.s, &*z.w, &*z.v})
    for (std::int64_t i = 1; i < N; ++i) CHECK(row_dot(*m, 0, *m, i) > 1.0 - 1e-12);
  // Positive pairs score exactly like inter-modality negatives.
  double max_gap = 0;
  for (std::int64_t i = 0; i < N; ++i)
    for (std::int64_t j = 0; j < N; ++j)
      max_gap = std::max(max_gap,
                         std::fabs(row_dot(*z.s, i, *z.w, i) - row_dot(*z.s, i, *z.w, j)));
  CHECK(max_gap < 1e-9);

  // Degenerate-batch evaluation: the batch reduces to one embedding per
  // modality, so the two-point evaluation reproduces each pairwise term, and
  // the collapsed loss can never drop below 2N*ln(2N-1).
  auto stats = t.step(0);
  auto repeat_first_row = [N](const Tensor& m) {
    std::vector<Real> v;
    for (std::int64_t i = 0; i < N; ++i)
      v.insert(v.end(), m.values().begin(), m.values().begin() + m.extent(1));
    return Tensor::from({N, m.extent(1)}, std::move(v));
  };
  auto two_point = [&](const Tensor& a, const Tensor& b) {
    return tricl::objective::pairwise_loss(repeat_first_row(a), repeat_first_row(b),
                                           cfg.loss.temperature)
        .value();
  };
  CHECK(stats.l_vs == doctest::Approx(two_point(*z.v, *z.s)).epsilon(1e-9));
  CHECK(stats.l_vw == doctest::Approx(two_point(*z.v, *z.w)).epsilon(1e-9));
  CHECK(stats.l_sw == doctest::Approx(two_point(*z.s, *z.w)).epsilon(1e-9));
  const double floor = 2.0 * static_cast<double>(N) * std::log(2.0 * N - 1.0);
  for (double term : {stats.l_vs, stats.l_vw, stats.l_sw}) CHECK(term >= floor * 0.999);

  fs::remove_all(dir);
}

TEST_CASE("training reduces the loss on correlated synthetic data") {
  const auto dir = make_dataset_dir("tricl_tr_learn", 32, 8);
  auto ds = tricl::data::Dataset::load(dir, true);
  auto cfg = tiny_run_config();
  cfg.schedule = {20, 150, 2e-3};
  tr::Trainer t(cfg, ds);
  t.init_params();
  double head = 0, tail = 0;
  for (std::int64_t s = 0; s < 150; ++s) {
    const double total = t.step(s).total;
    if (s < 30) head += total;
    if (s >= 120) tail += total;
  }
  CHECK(tail / 30.0 < head / 30.0);
  fs::remove_all(dir);
}

TEST_CASE("run_pretraining: checkpoints, determinism, resume, modality subsets") {
  const auto data_dir = make_dataset_dir("tricl_tr_run", 33, 8);
  auto ds = tricl::data::Dataset::load(data_dir, true);
  auto cfg = tiny_run_config();
  cfg.schedule = {4, 10, 1e-3};

  const auto out_a = fs::temp_directory_path() / "tricl_run_a";
  const auto out_b = fs::temp_directory_path() / "tricl_run_b";
  const auto out_c = fs::temp_directory_path() / "tricl_run_c";
  fs::remove_all(out_a);
  fs::remove_all(out_b);
  fs::remove_all(out_c);

  auto ra = tr::run_pretraining(cfg, ds, out_a.string());
  auto rb = tr::run_pretraining(cfg, ds, out_b.string());
  REQUIRE(ra.history.size() == 10);

  // Same seed and config: checkpoint files match byte for byte.
  CHECK(file_bytes((out_a / tr::checkpoint_name(10)).string()) ==
        file_bytes((out_b / tr::checkpoint_name(10)).string()));

  // Resume from the middle reproduces the uninterrupted run exactly.
  auto rc = tr::run_pretraining(cfg, ds, out_c.string(),
                                (out_a / tr::checkpoint_name(5)).string());
  CHECK(file_bytes((out_a / tr::checkpoint_name(10)).string()) ==
        file_bytes((out_c / tr::checkpoint_name(10)).string()));

  // Loss trajectories agree run to run.
  for (size_t i = 0; i < ra.history.size(); ++i)
    CHECK(ra.history[i].total == rb.history[i].total);

  // Checkpoint round trip is bitwise exact for every tensor.
  auto loaded = tr::read_training_checkpoint(ra.final_checkpoint);
  CHECK(loaded.step == 10);
  REQUIRE(loaded.params.size() == ra.params.size());
  for (const auto& [name, t] : ra.params) {
    CHECK(loaded.params.at(name).values() == t.values());
    CHECK(loaded.params.at(name).shape() == t.shape());
  }
  for (const auto& [name, t] : ra.opt.m) CHECK(loaded.opt.m.at(name).values() == t.values());
  for (const auto& [name, t] : ra.opt.v) CHECK(loaded.opt.v.at(name).values() == t.values());
  CHECK(loaded.opt.step == ra.opt.step);

  fs::remove_all(out_a);
  fs::remove_all(out_b);
  fs::remove_all(out_c);
  fs::remove_all(data_dir);
}

TEST_CASE("run_pretraining: init-only run and audio-only modality set") {
  const auto data_dir = make_dataset_dir("tricl_tr_sw", 34, 8);

  // S,W runs without loading video at all.
  auto ds_audio = tricl::data::Dataset::load(data_dir, false);
  auto cfg = tiny_run_config();
  cfg.modalities = {tricl::Modality::Spectrogram, tricl::Modality::Waveform};
  cfg.schedule = {2, 6, 1e-3};
  const auto out = fs::temp_directory_path() / "tricl_run_sw";
  fs::remove_all(out);
  auto res = tr::run_pretraining(cfg, ds_audio, out.string());
  for (const auto& h : res.history) {
    CHECK(std::isnan(h.l_vs));
    CHECK(std::isnan(h.l_vw));
    CHECK(std::isfinite(h.l_sw));
    CHECK(h.total == doctest::Approx(h.l_sw).epsilon(1e-15));
  }
  // The loss log carries only the configured pairwise terms.
  std::ifstream log(out / "loss_log.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    if (line.empty()) continue;
    lines++;
    CHECK(line.find("l_sw") != std::string::npos);
    CHECK(line.find("l_vs") == std::string::npos);
    CHECK(line.find("l_vw") == std::string::npos);
  }
  CHECK(lines > 0);

  // total_steps == 0 emits the initial checkpoint and nothing else.
  auto cfg0 = tiny_run_config();
  cfg0.schedule = {0, 0, 1e-3};
  const auto out0 = fs::temp_directory_path() / "tricl_run_zero";
  fs::remove_all(out0);
  auto r0 = tr::run_pretraining(cfg0, tricl::data::Dataset::load(data_dir, true), out0.string());
  CHECK(r0.history.empty());
  CHECK(fs::exists(out0 / tr::checkpoint_name(0)));
  int ckpts = 0;
  for (const auto& e : fs::directory_iterator(out0))
    if (e.path().extension() == ".tricl") ckpts++;
  CHECK(ckpts == 1);

  fs::remove_all(out);
  fs::remove_all(out0);
  fs::remove_all(data_dir);
}

TEST_CASE("corrupt checkpoints are refused") {
  const auto data_dir = make_dataset_dir("tricl_tr_corrupt", 35, 8);
  auto ds = tricl::data::Dataset::load(data_dir, true);
  auto cfg = tiny_run_config();
  cfg.schedule = {2, 4, 1e-3};
  const auto out = fs::temp_directory_path() / "tricl_run_corrupt";
  fs::remove_all(out);
  auto res = tr::run_pretraining(cfg, ds, out.string());

  auto bytes = file_bytes(res.final_checkpoint);
  bytes[bytes.size() - 9] ^= 0x40;  // flip one payload bit
  {
    std::ofstream f(res.final_checkpoint, std::ios::binary);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_AS(tr::read_training_checkpoint(res.final_checkpoint), tricl::Error);
  try {
    tr::read_training_checkpoint(res.final_checkpoint);
  } catch (const tricl::Error& e) {
    CHECK(e.kind() == tricl::ErrorKind::DataIntegrity);
  }

  fs::remove_all(out);
  fs::remove_all(data_dir);
}
