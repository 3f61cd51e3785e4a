#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "tricl/augment.hpp"

using tricl::Real;
using tricl::Tensor;
namespace aug = tricl::augment;

TEST_CASE("sample_crop_plan") {
  tricl::rng::Engine eng(41);

  auto exact = aug::sample_crop_plan(3.0, eng);
  CHECK(exact.crop1_start == 0.0);
  CHECK(exact.crop2_start == 0.0);

  CHECK_THROWS_AS(aug::sample_crop_plan(2.5, eng), tricl::Error);

  // Starts are uniform on [0, clip - crop]; KS test against U(0,1) after
  // normalizing, and the video window always equals the first audio crop.
  std::vector<double> s1, s2;
  for (int i = 0; i < 100000; ++i) {
    auto plan = aug::sample_crop_plan(10.0, eng);
    CHECK(plan.crop1_start >= 0.0);
    CHECK(plan.crop1_start <= 7.0);
    CHECK(plan.crop2_start >= 0.0);
    CHECK(plan.crop2_start <= 7.0);
    CHECK(plan.video_start() == plan.crop1_start);
    CHECK(plan.video_span() == doctest::Approx(plan.crop_len));
    s1.push_back(plan.crop1_start / 7.0);
    s2.push_back(plan.crop2_start / 7.0);
  }
  CHECK(oracles::ks_uniform_pvalue(std::move(s1)) > 0.01);
  CHECK(oracles::ks_uniform_pvalue(std::move(s2)) > 0.01);
}

namespace {

tricl::dsp::Spectrogram make_spec(std::int64_t F, std::int64_t M, Real base = 1.0) {
  std::vector<Real> v(static_cast<size_t>(F * M));
  for (std::int64_t f = 0; f < F; ++f)
    for (std::int64_t b = 0; b < M; ++b)
      v[static_cast<size_t>(f * M + b)] = base + static_cast<Real>(f * M + b);
  tricl::dsp::Spectrogram s;
  s.data = Tensor::from({F, M}, std::move(v));
  return s;
}

}  // namespace

TEST_CASE("freq_shift") {
  auto s = make_spec(2, 4);
  auto same = aug::freq_shift(s, 0);
  CHECK(same.data.values() == s.data.values());

  tricl::dsp::Spectrogram row;
  row.data = Tensor::from({1, 4}, {1, 2, 3, 4});
  auto up2 = aug::freq_shift(row, 2);
  CHECK(up2.data.values() == std::vector<Real>{0, 0, 1, 2});

  CHECK_THROWS_AS(aug::freq_shift(row, 5), tricl::Error);
  CHECK_THROWS_AS(aug::freq_shift(row, -5), tricl::Error);

  // Shape preserved; exactly min(|k|, M) bins per frame zeroed on positive data.
  auto big = make_spec(5, 12);
  for (int k : {-12, -3, 1, 4, 12}) {
    auto shifted = aug::freq_shift(big, k);
    CHECK(shifted.data.shape() == big.data.shape());
    const auto M = big.n_mels();
    for (std::int64_t f = 0; f < big.frames(); ++f) {
      std::int64_t zeros = 0;
      for (std::int64_t b = 0; b < M; ++b)
        if (shifted.data.at({f, b}) == Real(0)) zeros++;
      CHECK(zeros == std::min<std::int64_t>(std::abs(k), M));
    }
  }

  // Round trip +k then -k: data survives where neither shift pushed it out.
  // Composing the stated semantics by hand: survivors are bins [0, M-k) for
  // k > 0, so exactly k boundary bins come back zeroed.
  const int k = 3;
  auto round = aug::freq_shift(aug::freq_shift(big, k), -k);
  const auto M = big.n_mels();
  for (std::int64_t f = 0; f < big.frames(); ++f) {
    for (std::int64_t b = 0; b < M - k; ++b) CHECK(round.data.at({f, b}) == big.data.at({f, b}));
    for (std::int64_t b = M - k; b < M; ++b) CHECK(round.data.at({f, b}) == Real(0));
  }
}

TEST_CASE("sample_shift stays within [-F, F]") {
  tricl::rng::Engine eng(42);
  aug::ShiftConfig cfg;  // F = 10
  bool saw_neg = false, saw_pos = false;
  for (int i = 0; i < 2000; ++i) {
    const int k = aug::sample_shift(cfg, eng);
    CHECK(k >= -10);
    CHECK(k <= 10);
    saw_neg = saw_neg || k < 0;
    saw_pos = saw_pos || k > 0;
  }
  CHECK(saw_neg);
  CHECK(saw_pos);
}

TEST_CASE("sample_mixing_ratio follows beta(5,2)") {
  tricl::rng::Engine eng(43);
  aug::MixupConfig cfg;
  const int n = 1000000;
  double sum = 0.0;
  std::vector<int> hist(40, 0);  // bins of width 0.025
  for (int i = 0; i < n; ++i) {
    const double a = aug::sample_mixing_ratio(cfg, eng);
    CHECK(a >= 0.0);
    CHECK(a <= 1.0);
    sum += a;
    hist[static_cast<size_t>(std::min(39.0, a * 40.0))]++;
  }
  const double mean = sum / n;
  CHECK(std::fabs(mean - 5.0 / 7.0) < 0.002);  // analytic mean of Beta(5,2)

  int best = 0;
  for (int b = 1; b < 40; ++b)
    if (hist[static_cast<size_t>(b)] > hist[static_cast<size_t>(best)]) best = b;
  const double mode_center = (best + 0.5) / 40.0;
  CHECK(mode_center >= 0.75);
  CHECK(mode_center <= 0.85);
}

TEST_CASE("mixup") {
  auto x1 = Tensor::from({2}, {1, 0});
  auto x2 = Tensor::from({2}, {0, 1});

  CHECK(aug::mixup(x1, x2, 1.0).values() == x1.values());  // exact
  CHECK(aug::mixup(x1, x2, 0.0).values() == x2.values());

  auto m = aug::mixup(x1, x2, 0.7);
  CHECK(m.values()[0] == doctest::Approx(0.7));
  CHECK(m.values()[1] == doctest::Approx(0.3));

  auto x = Tensor::from({3}, {0.3, -0.2, 0.9});
  for (double a : {0.0, 0.13, 0.5, 0.77, 1.0})
    CHECK(aug::mixup(x, x, a).values() == x.values());  // fixed point, exact

  CHECK_THROWS_AS(aug::mixup(x1, Tensor::from({3}, {1, 2, 3}), 0.5), tricl::Error);
  CHECK_THROWS_AS(aug::mixup(x1, x2, 1.5), tricl::Error);

  // Convex hull, up to last-place rounding of the blend.
  tricl::rng::Engine eng(44);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Real> a(8), b(8);
    for (size_t i = 0; i < 8; ++i) {
      a[i] = static_cast<Real>(eng.uniform(-1, 1));
      b[i] = static_cast<Real>(eng.uniform(-1, 1));
    }
    auto ta = Tensor::from({8}, a), tb = Tensor::from({8}, b);
    auto mm = aug::mixup(ta, tb, eng.uniform());
    for (size_t i = 0; i < 8; ++i) {
      CHECK(mm.values()[i] >= std::min(a[i], b[i]) - 1e-15);
      CHECK(mm.values()[i] <= std::max(a[i], b[i]) + 1e-15);
    }
  }
}

TEST_CASE("mixup_batch") {
  auto batch = Tensor::from({2, 2}, {1, 2, 3, 4});

  auto ident = aug::mixup_batch(batch, {0, 1}, {0.3, 0.9});
  CHECK(ident.values() == batch.values());  // identity permutation, exact

  auto swap_ones = aug::mixup_batch(batch, {1, 0}, {1.0, 1.0});
  CHECK(swap_ones.values() == batch.values());

  auto half = aug::mixup_batch(batch, {1, 0}, {0.5, 0.5});
  CHECK(half.values()[0] == doctest::Approx(2.0));
  CHECK(half.values()[1] == doctest::Approx(3.0));
  CHECK(half.values()[2] == doctest::Approx(2.0));
  CHECK(half.values()[3] == doctest::Approx(3.0));

  CHECK_THROWS_AS(aug::mixup_batch(batch, {0, 0}, {0.5, 0.5}), tricl::Error);
  CHECK_THROWS_AS(aug::mixup_batch(batch, {0}, {0.5}), tricl::Error);
}

namespace {

tricl::video::VideoClip const_clip(std::int64_t T, std::int64_t hw, Real v) {
  tricl::video::VideoClip c;
  c.fps = 5.0;
  c.data = Tensor::full({T, 1, hw, hw}, v);
  return c;
}

}  // namespace

TEST_CASE("video_jitter") {
  tricl::rng::Engine eng(45);

  // Disabled jitter on 50x50 frames is the identity, bit-exact.
  tricl::rng::Engine e2(46);
  tricl::video::VideoClip clip;
  clip.fps = 5.0;
  {
    std::vector<Real> px(static_cast<size_t>(4 * 1 * 50 * 50));
    for (auto& p : px) p = static_cast<Real>(e2.uniform());
    clip.data = Tensor::from({4, 1, 50, 50}, std::move(px));
  }
  aug::JitterConfig off;
  off.enabled = false;
  auto same = aug::video_jitter(clip, eng, off, 50);
  CHECK(same.data.values() == clip.data.values());

  // Output geometry is frames x 50 x 50 x channels regardless of the draw.
  for (int trial = 0; trial < 20; ++trial) {
    auto j = aug::video_jitter(clip, eng, aug::JitterConfig{}, 50);
    CHECK(j.frames() == 4);
    CHECK(j.channels() == 1);
    CHECK(j.height() == 50);
    CHECK(j.width() == 50);
    for (Real p : j.data.values()) {
      CHECK(p >= Real(0));
      CHECK(p <= Real(1));
    }
  }

  // Photometric stage: +0.1 brightness at unit contrast on a 0.5 clip.
  auto bright = aug::apply_photometric(const_clip(3, 8, 0.5), 0.1, 1.0);
  for (Real p : bright.data.values()) CHECK(p == doctest::Approx(0.6).epsilon(1e-12));

  // Same seed, same outputs.
  tricl::rng::Engine ea(99), eb(99);
  auto ja = aug::video_jitter(clip, ea, aug::JitterConfig{}, 50);
  auto jb = aug::video_jitter(clip, eb, aug::JitterConfig{}, 50);
  CHECK(ja.data.values() == jb.data.values());
}

TEST_CASE("sample_permutation is a permutation") {
  tricl::rng::Engine eng(47);
  for (int trial = 0; trial < 50; ++trial) {
    auto p = aug::sample_permutation(17, eng);
    std::vector<bool> seen(17, false);
    for (auto v : p) {
      CHECK(v >= 0);
      CHECK(v < 17);
      CHECK(!seen[static_cast<size_t>(v)]);
      seen[static_cast<size_t>(v)] = true;
    }
  }
}
