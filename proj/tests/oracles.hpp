// Test-side reference implementations. Everything here is written straight
// from definitions and stays independent of the library's compute paths.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "tricl/rng.hpp"
#include "tricl/tensor.hpp"

namespace oracles {

using tricl::Real;
using tricl::Tensor;

using ParamMap = std::map<std::string, Tensor>;
// Forward pass over (possibly tape-bound) named tensors, returning the loss.
using ForwardFn = std::function<Tensor(const ParamMap&)>;

inline Tensor bump(const Tensor& t, std::int64_t flat, Real h) {
  std::vector<Real> v(t.values());
  v[static_cast<size_t>(flat)] += h;
  return Tensor::from(t.shape(), std::move(v));
}

struct FdResult {
  double max_rel_err = 0.0;
  double worst_ad = 0.0;
  double worst_fd = 0.0;
  std::string worst_coord;
  std::int64_t checked = 0;
};

// Central finite differences against reverse-mode gradients. When max_coords
// is positive, coordinates are subsampled with the given seed.
inline FdResult fd_check(const ParamMap& params, const ForwardFn& forward,
                         double h = 1e-5, std::int64_t max_coords = -1,
                         std::uint64_t seed = 7) {
  ParamMap bound;
  tricl::GradMap grads;
  {
    tricl::Tape tape;
    for (const auto& [name, t] : params) bound.emplace(name, tape.watch(name, t));
    Tensor loss = forward(bound);
    grads = tape.gradients(loss);
  }

  std::vector<std::pair<std::string, std::int64_t>> coords;
  for (const auto& [name, t] : params)
    for (std::int64_t i = 0; i < t.numel(); ++i) coords.emplace_back(name, i);
  if (max_coords > 0 && static_cast<std::int64_t>(coords.size()) > max_coords) {
    tricl::rng::Engine eng(seed);
    for (size_t i = coords.size(); i > 1; --i)
      std::swap(coords[i - 1], coords[static_cast<size_t>(eng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    coords.resize(static_cast<size_t>(max_coords));
  }

  FdResult res;
  for (const auto& [name, flat] : coords) {
    ParamMap plus = params, minus = params;
    plus[name] = bump(params.at(name), flat, static_cast<Real>(h));
    minus[name] = bump(params.at(name), flat, static_cast<Real>(-h));
    const double lp = forward(plus).value();
    const double lm = forward(minus).value();
    const double fd = (lp - lm) / (2.0 * h);
    const double ad = grads.at(name).values()[static_cast<size_t>(flat)];
    const double denom = std::max({std::fabs(fd), std::fabs(ad), 1e-8});
    const double rel = std::fabs(fd - ad) / denom;
    if (rel > res.max_rel_err) {
      res.max_rel_err = rel;
      res.worst_ad = ad;
      res.worst_fd = fd;
      res.worst_coord = name + "[" + std::to_string(flat) + "]";
    }
    res.checked++;
  }
  return res;
}

// Naive O(n^2) DFT; returns squared magnitudes of bins 0..n/2.
inline std::vector<double> naive_power_spectrum(const std::vector<double>& frame,
                                                std::int64_t n_fft) {
  std::vector<double> out(static_cast<size_t>(n_fft / 2 + 1));
  for (std::int64_t k = 0; k <= n_fft / 2; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (std::int64_t n = 0; n < static_cast<std::int64_t>(frame.size()); ++n) {
      const double ang = -2.0 * M_PI * static_cast<double>(k * n) / static_cast<double>(n_fft);
      acc += frame[static_cast<size_t>(n)] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[static_cast<size_t>(k)] = std::norm(acc);
  }
  return out;
}

inline double mel_from_hz(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline double hz_from_mel(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

// Average precision straight from the definition: for every positive, count
// how many items outrank it (strictly higher score, or equal score and
// earlier input position), giving O(n^2) with explicit tie handling. The
// precision terms are accumulated in ascending-rank order so the result is
// comparable bit-for-bit.
inline double brute_average_precision(const std::vector<double>& scores,
                                      const std::vector<int>& labels) {
  const size_t n = scores.size();
  std::int64_t positives = 0;
  for (int l : labels) positives += (l == 1);
  if (positives == 0) return -1.0;
  std::vector<std::pair<std::int64_t, double>> terms;  // (rank, precision@rank)
  for (size_t i = 0; i < n; ++i) {
    if (labels[i] != 1) continue;
    std::int64_t rank = 1, hits = 0;
    for (size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const bool outranks = scores[j] > scores[i] || (scores[j] == scores[i] && j < i);
      if (outranks) {
        rank++;
        if (labels[j] == 1) hits++;
      }
    }
    terms.emplace_back(rank, static_cast<double>(hits + 1) / static_cast<double>(rank));
  }
  std::sort(terms.begin(), terms.end());
  double ap = 0.0;
  for (const auto& [rank, prec] : terms) ap += prec;
  return ap / static_cast<double>(positives);
}

// Mann-Whitney AUC by exhaustive pair counting, ties worth 1/2.
inline double brute_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  double num = 0.0;
  std::int64_t pairs = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      pairs++;
      if (scores[i] > scores[j])
        num += 1.0;
      else if (scores[i] == scores[j])
        num += 0.5;
    }
  }
  if (pairs == 0) return -1.0;
  return num / static_cast<double>(pairs);
}

// Kolmogorov-Smirnov p-value for samples against U(0,1).
inline double ks_uniform_pvalue(std::vector<double> samples) {
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (size_t i = 0; i < samples.size(); ++i) {
    const double cdf = samples[i];
    const double lo = static_cast<double>(i) / n;
    const double hi = static_cast<double>(i + 1) / n;
    d = std::max({d, std::fabs(cdf - lo), std::fabs(cdf - hi)});
  }
  const double en = std::sqrt(n);
  const double lambda = (en + 0.12 + 0.11 / en) * d;
  double p = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * lambda * lambda * static_cast<double>(k) * static_cast<double>(k));
    p += 2.0 * sign * term;
    sign = -sign;
    if (term < 1e-12) break;
  }
  return std::clamp(p, 0.0, 1.0);
}

// Two-sample Kolmogorov-Smirnov p-value.
inline double ks_two_sample_pvalue(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0.0;
  size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] <= b[j])
      ++i;
    else
      ++j;
    const double fa = static_cast<double>(i) / static_cast<double>(a.size());
    const double fb = static_cast<double>(j) / static_cast<double>(b.size());
    d = std::max(d, std::fabs(fa - fb));
  }
  const double ne = static_cast<double>(a.size()) * static_cast<double>(b.size()) /
                    static_cast<double>(a.size() + b.size());
  const double en = std::sqrt(ne);
  const double lambda = (en + 0.12 + 0.11 / en) * d;
  double p = 0.0, sign = 1.0;
  for (int k = 1; k <= 100; ++k) {
    const double term =
        std::exp(-2.0 * lambda * lambda * static_cast<double>(k) * static_cast<double>(k));
    p += 2.0 * sign * term;
    sign = -sign;
    if (term < 1e-12) break;
  }
  return std::clamp(p, 0.0, 1.0);
}

}  // namespace oracles
