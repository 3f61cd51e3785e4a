// tricl command line: synth | dsp | pretrain | eval | ablate.
// Exit codes: 0 success, 2 config/usage error, 3 data or integrity error.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tricl/config.hpp"
#include "tricl/data.hpp"
#include "tricl/dsp.hpp"
#include "tricl/evaluate.hpp"
#include "tricl/io.hpp"
#include "tricl/synthdata.hpp"
#include "tricl/trainer.hpp"

namespace fs = std::filesystem;
using tricl::Modality;

namespace {

std::string default_out_dir() {
  const char* env = std::getenv("TRICL_OUT_DIR");
  return env ? std::string(env) : std::string("tricl_out");
}

std::set<Modality> parse_modalities(const std::string& tags) {
  std::set<Modality> out;
  for (char t : tags) {
    switch (t) {
      case 's': out.insert(Modality::Spectrogram); break;
      case 'w': out.insert(Modality::Waveform); break;
      case 'v': out.insert(Modality::Video); break;
      default:
        tricl::fail(tricl::ErrorKind::Usage,
                    std::string("unknown modality tag '") + t + "' (use s, w, v)");
    }
  }
  tricl::require(out.size() >= 2 || tags.size() == 1, tricl::ErrorKind::Usage,
                 "modality set needs at least two of s,w,v");
  return out;
}

int run_synth(const std::string& out_dir, std::uint64_t seed, tricl::synthdata::LatentSpec spec,
              std::int64_t count) {
  tricl::synthdata::write_dataset(out_dir, spec, seed, count);
  std::printf("wrote %lld clips to %s\n", static_cast<long long>(count), out_dir.c_str());
  return 0;
}

int run_dsp(const std::string& in_wav, const std::string& out_path, const std::string& preset,
            const std::string& format) {
  auto cfg = preset == "a" ? tricl::dsp::DspConfig::preset_a() : tricl::dsp::DspConfig::preset_b();
  auto wav = tricl::io::read_wav(in_wav);
  if (cfg.fmax > wav.sample_rate / 2.0) cfg.fmax = wav.sample_rate / 2.0 * 0.95;
  auto spec = tricl::dsp::log_mel(wav, cfg);
  if (format == "blob") {
    tricl::io::write_spectrogram_blob(out_path, spec);
  } else {
    std::ofstream f(out_path);
    tricl::require(f.good(), tricl::ErrorKind::DataIntegrity, "cannot open " + out_path);
    for (std::int64_t r = 0; r < spec.frames(); ++r) {
      for (std::int64_t m = 0; m < spec.n_mels(); ++m)
        f << (m ? "," : "") << spec.data.at({r, m});
      f << '\n';
    }
  }
  std::printf("%lld x %lld log-mel frames -> %s\n", static_cast<long long>(spec.frames()),
              static_cast<long long>(spec.n_mels()), out_path.c_str());
  return 0;
}

struct PretrainArgs {
  std::string config_path, data_dir, out_dir, resume, modalities;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> steps;
  std::optional<int> threads;
};

tricl::config::ExperimentConfig load_config(const std::string& path) {
  return path.empty() ? tricl::config::ExperimentConfig::desk()
                      : tricl::config::ExperimentConfig::from_file(path);
}

int run_pretrain(const PretrainArgs& a) {
  auto cfg = load_config(a.config_path);
  if (a.seed) cfg.seed = *a.seed;
  if (!a.modalities.empty()) cfg.modalities = parse_modalities(a.modalities);
  if (a.steps) {
    cfg.schedule.total_steps = *a.steps;
    if (*a.steps == 0) cfg.schedule.warmup_steps = 0;
    if (cfg.schedule.warmup_steps >= cfg.schedule.total_steps && *a.steps > 0)
      cfg.schedule.warmup_steps = cfg.schedule.total_steps / 8;
  }
  if (a.threads) cfg.threads = *a.threads;
  cfg.model.spectrogram.input_width = cfg.dsp.n_mels;
  cfg.model.video.input_width = cfg.video_size;
  cfg.validate();

  auto ds = tricl::data::Dataset::load(a.data_dir, cfg.modalities.count(Modality::Video) != 0);
  auto res = tricl::trainer::run_pretraining(cfg, ds, a.out_dir, a.resume);
  std::printf("pretraining done: %zu steps, final checkpoint %s\n", res.history.size(),
              res.final_checkpoint.c_str());
  return 0;
}

int run_eval(const std::string& ckpt_path, const std::string& data_dir,
             const std::string& protocol_name, const std::string& modality_tag,
             const std::string& out_dir, std::uint64_t seed, bool onfly, bool balanced,
             int threads, std::optional<std::int64_t> epochs) {
  tricl::runtime::set_threads(threads);
  auto loaded = tricl::trainer::read_training_checkpoint(ckpt_path);
  const auto& cfg = loaded.cfg;

  Modality modality;
  if (modality_tag == "s")
    modality = Modality::Spectrogram;
  else if (modality_tag == "w")
    modality = Modality::Waveform;
  else if (modality_tag == "v")
    modality = Modality::Video;  // rejected below by the extractor's contract
  else
    tricl::fail(tricl::ErrorKind::Usage, "eval: --modality must be s, w, or v");

  tricl::evaluate::Protocol protocol;
  tricl::evaluate::ClassifierConfig ccfg;
  if (protocol_name == "audioset") {
    protocol = tricl::evaluate::Protocol::TensecBy3s;
    ccfg.kind = tricl::evaluate::ClassifierConfig::Kind::Mlp;
    ccfg.hidden = 512;
    ccfg.augment_at_train = onfly;
  } else if (protocol_name == "linear") {
    protocol = tricl::evaluate::Protocol::Nonoverlap1s;
    ccfg.kind = tricl::evaluate::ClassifierConfig::Kind::Linear;
  } else {
    tricl::fail(tricl::ErrorKind::Usage, "eval: --protocol must be audioset or linear");
  }
  ccfg.class_balanced = balanced;
  if (epochs) ccfg.epochs = *epochs;

  auto ds = tricl::data::Dataset::load(data_dir, false);
  auto [train_idx, test_idx] = tricl::data::split_indices(ds.size(), cfg.train_fraction);
  tricl::require(!test_idx.empty(), tricl::ErrorKind::InvalidConfig,
                 "eval: the train fraction leaves no test clips");

  const auto before = tricl::io::params_checksum(loaded.params);
  auto result = tricl::evaluate::run_protocol(ds, train_idx, test_idx, cfg.model_config(),
                                              loaded.params, modality, protocol, ccfg, cfg.dsp,
                                              seed, cfg.shift, cfg.mixup);
  tricl::require(tricl::io::params_checksum(loaded.params) == before,
                 tricl::ErrorKind::ContractViolation,
                 "eval: upstream parameters changed during downstream training");

  fs::create_directories(out_dir);
  const auto& rep = result.report;
  tricl::io::json j{{"mAP", rep.mAP},
                    {"AUC", rep.auc},
                    {"d_prime", rep.d_prime},
                    {"accuracy", rep.accuracy},
                    {"num_eval_clips", rep.num_eval_clips},
                    {"per_class_ap", rep.per_class_ap},
                    {"augmentation", rep.augmentation_mode},
                    {"warnings", rep.warnings},
                    {"protocol", protocol_name},
                    {"modality", modality_tag},
                    {"checkpoint_step", loaded.step}};
  {
    std::ofstream f(fs::path(out_dir) / "metrics.json");
    f << j.dump(2) << '\n';
  }
  {
    std::ofstream f(fs::path(out_dir) / "metrics.csv");
    f << "metric,value\n";
    f << "mAP," << rep.mAP << "\nAUC," << rep.auc << "\nd_prime," << rep.d_prime
      << "\naccuracy," << rep.accuracy << "\nnum_eval_clips," << rep.num_eval_clips << '\n';
    for (size_t c = 0; c < rep.per_class_ap.size(); ++c)
      f << "ap_class_" << c << ',' << rep.per_class_ap[c] << '\n';
  }
  {
    // Cache the frozen test features alongside the metrics.
    std::vector<std::vector<tricl::Real>> rows;
    for (auto i : test_idx) {
      auto feats = tricl::evaluate::extract_frozen_features(
          ds.waveform_full(i), cfg.model_config(), loaded.params, modality, protocol, cfg.dsp);
      for (auto& f : feats) rows.push_back(std::move(f));
    }
    tricl::io::write_feature_blob((fs::path(out_dir) / "features_test.bin").string(), rows,
                                  tricl::io::json{{"modality", modality_tag},
                                                  {"protocol", protocol_name}});
  }
  std::printf("mAP %.4f  AUC %.4f  d' %.4f  accuracy %.4f  (%lld clips) -> %s\n", rep.mAP,
              rep.auc, rep.d_prime, rep.accuracy, static_cast<long long>(rep.num_eval_clips),
              out_dir.c_str());
  return 0;
}

int run_ablate(const std::string& config_path, const std::string& data_dir,
               const std::string& out_csv, const std::vector<std::uint64_t>& seeds,
               std::optional<std::int64_t> steps, int threads) {
  auto base = load_config(config_path);
  if (steps) {
    base.schedule.total_steps = *steps;
    if (base.schedule.warmup_steps >= base.schedule.total_steps)
      base.schedule.warmup_steps = base.schedule.total_steps / 8;
  }
  base.threads = threads;

  const std::vector<std::string> subsets{"sw", "sv", "wv", "svw"};
  const auto work_root = fs::path(out_csv).parent_path().empty()
                             ? fs::path("ablate_runs")
                             : fs::path(out_csv).parent_path() / "ablate_runs";

  std::ofstream csv(out_csv);
  tricl::require(csv.good(), tricl::ErrorKind::DataIntegrity, "cannot open " + out_csv);
  csv << "modalities,acc_spectrogram,acc_waveform\n";

  for (const auto& subset : subsets) {
    double acc_s_sum = 0, acc_w_sum = 0;
    int acc_s_n = 0, acc_w_n = 0;
    for (auto seed : seeds) {
      auto cfg = base;
      cfg.seed = seed;
      cfg.modalities = parse_modalities(subset);
      cfg.model.spectrogram.input_width = cfg.dsp.n_mels;
      cfg.model.video.input_width = cfg.video_size;
      cfg.validate();
      auto ds = tricl::data::Dataset::load(data_dir,
                                           cfg.modalities.count(Modality::Video) != 0);
      const auto run_dir = work_root / (subset + "_seed" + std::to_string(seed));
      auto res = tricl::trainer::run_pretraining(cfg, ds, run_dir.string());

      auto [train_idx, test_idx] = tricl::data::split_indices(ds.size(), cfg.train_fraction);
      tricl::evaluate::ClassifierConfig ccfg;
      ccfg.kind = tricl::evaluate::ClassifierConfig::Kind::Linear;
      for (Modality m : {Modality::Spectrogram, Modality::Waveform}) {
        if (!cfg.modalities.count(m)) continue;
        auto r = tricl::evaluate::run_protocol(ds, train_idx, test_idx, cfg.model_config(),
                                               res.params, m, tricl::evaluate::Protocol::Nonoverlap1s,
                                               ccfg, cfg.dsp, seed);
        if (m == Modality::Spectrogram) {
          acc_s_sum += r.report.accuracy;
          acc_s_n++;
        } else {
          acc_w_sum += r.report.accuracy;
          acc_w_n++;
        }
      }
    }
    auto cell = [](double sum, int n) {
      if (n == 0) return std::string("-");
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.4f", sum / n);
      return std::string(buf);
    };
    csv << subset << ',' << cell(acc_s_sum, acc_s_n) << ',' << cell(acc_w_sum, acc_w_n) << '\n';
    csv.flush();
  }
  std::printf("ablation table -> %s\n", out_csv.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"trimodal contrastive audio representation learning"};
  app.require_subcommand(1);

  // synth ------------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "generate a labeled trimodal clip dataset");
  std::string synth_out = default_out_dir() + "/dataset";
  std::uint64_t synth_seed = 1;
  tricl::synthdata::LatentSpec spec;
  std::int64_t synth_count = 400;
  synth->add_option("--out", synth_out, "output directory");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--classes", spec.num_classes, "number of classes");
  synth->add_option("--count", synth_count, "number of clips");
  synth->add_option("--clip-len", spec.clip_len, "clip length in seconds");
  synth->add_option("--sample-rate", spec.sample_rate, "audio sample rate");
  synth->add_option("--audio-cue", spec.audio_cue_strength, "audio class cue strength [0,1]");
  synth->add_option("--video-cue", spec.video_cue_strength, "video class cue strength [0,1]");
  synth->add_option("--shared-cue", spec.shared_cue_strength, "audio/video latent agreement [0,1]");
  synth->add_option("--noise", spec.noise_level, "distractor + noise level");
  synth->add_option("--video-size", spec.video_size, "square frame size");
  synth->add_option("--video-fps", spec.video_fps, "video frame rate");

  // dsp --------------------------------------------------------------------
  auto* dsp_cmd = app.add_subcommand("dsp", "waveform -> log-mel spectrogram");
  std::string dsp_in, dsp_out = "spectrogram.csv", dsp_preset = "a", dsp_format = "csv";
  dsp_cmd->add_option("--in", dsp_in, "input mono 16-bit PCM WAV")->required();
  dsp_cmd->add_option("--out", dsp_out, "output file");
  dsp_cmd->add_option("--preset", dsp_preset, "a (80 mel, 20 ms) or b (64 mel, 25 ms)")
      ->check(CLI::IsMember({"a", "b"}));
  dsp_cmd->add_option("--format", dsp_format, "csv or blob")
      ->check(CLI::IsMember({"csv", "blob"}));

  // pretrain ----------------------------------------------------------------
  auto* pre = app.add_subcommand("pretrain", "contrastive pretraining run");
  PretrainArgs pa;
  pa.out_dir = default_out_dir() + "/pretrain";
  std::uint64_t pre_seed = 0;
  std::int64_t pre_steps = -1;
  int pre_threads = 0;
  pre->add_option("--config", pa.config_path, "experiment config JSON");
  pre->add_option("--data", pa.data_dir, "dataset directory")->required();
  pre->add_option("--out", pa.out_dir, "output directory");
  pre->add_option("--resume", pa.resume, "checkpoint to resume from");
  pre->add_option("--modality", pa.modalities, "modality tags, e.g. swv or sw");
  auto* pre_seed_opt = pre->add_option("--seed", pre_seed, "seed override");
  auto* pre_steps_opt = pre->add_option("--steps", pre_steps, "total steps override");
  auto* pre_threads_opt = pre->add_option("--threads", pre_threads, "worker threads");

  // eval ---------------------------------------------------------------------
  auto* ev = app.add_subcommand("eval", "frozen-feature downstream evaluation");
  std::string ev_ckpt, ev_data, ev_protocol = "linear", ev_modality = "s";
  std::string ev_out = default_out_dir() + "/eval";
  std::uint64_t ev_seed = 1;
  bool ev_onfly = false, ev_balanced = false;
  int ev_threads = 1;
  std::int64_t ev_epochs = -1;
  ev->add_option("--checkpoint", ev_ckpt, "pretraining checkpoint")->required();
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--protocol", ev_protocol, "audioset or linear")
      ->check(CLI::IsMember({"audioset", "linear"}));
  ev->add_option("--modality", ev_modality, "s or w (video is training-only)");
  ev->add_option("--out", ev_out, "output directory");
  ev->add_option("--seed", ev_seed, "classifier seed");
  ev->add_option("--threads", ev_threads, "worker threads");
  auto* ev_epochs_opt = ev->add_option("--epochs", ev_epochs, "classifier epochs override");
  ev->add_flag("--onfly", ev_onfly, "re-extract augmented features each epoch (audioset)");
  ev->add_flag("--balanced", ev_balanced, "class-balanced sampling for the classifier");

  // ablate --------------------------------------------------------------------
  auto* ab = app.add_subcommand("ablate", "modality-subset comparison table");
  std::string ab_config, ab_data, ab_out = default_out_dir() + "/ablate.csv";
  std::vector<std::uint64_t> ab_seeds{1};
  std::int64_t ab_steps = -1;
  int ab_threads = 1;
  ab->add_option("--config", ab_config, "experiment config JSON");
  ab->add_option("--data", ab_data, "dataset directory")->required();
  ab->add_option("--out", ab_out, "output CSV path");
  ab->add_option("--seeds", ab_seeds, "seeds to average over");
  auto* ab_steps_opt = ab->add_option("--steps", ab_steps, "total steps override");
  ab->add_option("--threads", ab_threads, "worker threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*synth) return run_synth(synth_out, synth_seed, spec, synth_count);
    if (*dsp_cmd) return run_dsp(dsp_in, dsp_out, dsp_preset, dsp_format);
    if (*pre) {
      if (*pre_seed_opt) pa.seed = pre_seed;
      if (*pre_steps_opt) pa.steps = pre_steps;
      if (*pre_threads_opt) pa.threads = pre_threads;
      return run_pretrain(pa);
    }
    if (*ev)
      return run_eval(ev_ckpt, ev_data, ev_protocol, ev_modality, ev_out, ev_seed, ev_onfly,
                      ev_balanced, ev_threads,
                      *ev_epochs_opt ? std::optional<std::int64_t>(ev_epochs) : std::nullopt);
    if (*ab)
      return run_ablate(ab_config, ab_data, ab_out, ab_seeds,
                        *ab_steps_opt ? std::optional<std::int64_t>(ab_steps) : std::nullopt,
                        ab_threads);
  } catch (const tricl::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    const bool config_error = e.kind() == tricl::ErrorKind::InvalidConfig ||
                              e.kind() == tricl::ErrorKind::Usage;
    return config_error ? 2 : 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 2;
}
