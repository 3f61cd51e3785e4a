#include "doctest.h"
#include "tricl/config.hpp"

namespace cfg = tricl::config;

TEST_CASE("config round trip and presets") {
  auto desk = cfg::ExperimentConfig::desk();
  auto round = cfg::ExperimentConfig::from_json(desk.to_json());
  CHECK(round.to_json() == desk.to_json());

  auto big = cfg::ExperimentConfig::published();
  CHECK(big.batch_size == 4096);
  CHECK(big.schedule.total_steps == 400000);
  CHECK(big.schedule.warmup_steps == 5000);
  CHECK(big.dsp.n_mels == 80);
  CHECK(big.model.spectrogram.hidden_dim == 2048);
  big.validate();  // recorded, runnable in principle
}

TEST_CASE("config rejects unknown keys and bad values") {
  auto j = cfg::ExperimentConfig::desk().to_json();
  j["surprise"] = 1;
  CHECK_THROWS_AS(cfg::ExperimentConfig::from_json(j), tricl::Error);

  auto j2 = cfg::ExperimentConfig::desk().to_json();
  j2["augment"]["mixup"]["beta_gamma"] = 0.5;
  CHECK_THROWS_AS(cfg::ExperimentConfig::from_json(j2), tricl::Error);

  auto j3 = cfg::ExperimentConfig::desk().to_json();
  j3["modalities"] = "sq";
  CHECK_THROWS_AS(cfg::ExperimentConfig::from_json(j3), tricl::Error);

  auto j4 = cfg::ExperimentConfig::desk().to_json();
  j4["schedule"]["warmup_steps"] = 5000;
  j4["schedule"]["total_steps"] = 2000;
  CHECK_THROWS_AS(cfg::ExperimentConfig::from_json(j4), tricl::Error);

  auto j5 = cfg::ExperimentConfig::desk().to_json();
  j5["modalities"] = "s";  // a single modality cannot form a pair
  CHECK_THROWS_AS(cfg::ExperimentConfig::from_json(j5), tricl::Error);
}
