// Pairwise contrastive objective over normalized embeddings. Each anchor
// faces 2N-2 negatives: same-modality rows j != i plus other-modality rows
// j != i, with the cross-modality row j == i as the positive.
#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>

#include "tricl/common.hpp"
#include "tricl/tensor.hpp"

namespace tricl::objective {

struct LossBreakdown {
  Tensor l_vs, l_vw, l_sw;  // present iff both modalities of a pair exist
  Tensor total;
  double temperature = 0.1;

  bool has_vs() const { return l_vs.defined(); }
  bool has_vw() const { return l_vw.defined(); }
  bool has_sw() const { return l_sw.defined(); }
};

namespace detail {

inline void check_embeddings(const Tensor& za, const Tensor& zb, double tau) {
  require(tau > 0.0, ErrorKind::InvalidConfig, "loss: temperature must be positive");
  require(za.rank() == 2 && zb.rank() == 2, ErrorKind::InvalidShape,
          "loss: embeddings must be [N,E]");
  require(za.shape() == zb.shape(), ErrorKind::InvalidBatch,
          "loss: embedding matrices must agree in shape");
  require(za.extent(0) >= 2, ErrorKind::InvalidBatch, "loss: batch size must be >= 2");
  for (const Tensor* z : {&za, &zb}) {
    const auto N = z->extent(0), E = z->extent(1);
    const auto& v = z->values();
    for (std::int64_t n = 0; n < N; ++n) {
      double nsq = 0;
      for (std::int64_t e = 0; e < E; ++e) {
        const double x = v[static_cast<size_t>(n * E + e)];
        nsq += x * x;
      }
      require(std::fabs(std::sqrt(nsq) - 1.0) <= 1e-6, ErrorKind::ContractViolation,
              "loss: embedding row " + std::to_string(n) + " is not unit norm");
    }
  }
}

// L_i for the a->b direction, assuming inputs already validated.
inline Tensor directional_term(const Tensor& za, const Tensor& zb, std::int64_t i, double tau) {
  const Real inv_tau = static_cast<Real>(1.0 / tau);
  auto anchor = row(za, i);
  auto intra = matvec(za, anchor);  // includes the self term, dropped below
  auto inter = matvec(zb, anchor);
  auto negatives_and_positive = scale(concat(drop_index(intra, i), inter), inv_tau);
  auto positive = scale(at_index(inter, i), inv_tau);
  return sub(logsumexp(negatives_and_positive), positive);
}

}  // namespace detail

// -log softmax of the positive pair against intra- and inter-modality terms.
inline Tensor directional_loss(const Tensor& za, const Tensor& zb, std::int64_t i, double tau) {
  detail::check_embeddings(za, zb, tau);
  require(i >= 0 && i < za.extent(0), ErrorKind::InvalidBatch,
          "directional_loss: index out of range");
  return detail::directional_term(za, zb, i, tau);
}

// Sum (not mean) of both directions across the batch. mean_reduction divides
// by the batch size; off by default so the loss reads exactly as defined.
inline Tensor pairwise_loss(const Tensor& za, const Tensor& zb, double tau,
                            bool mean_reduction = false) {
  detail::check_embeddings(za, zb, tau);
  const auto N = za.extent(0);
  Tensor acc;
  for (std::int64_t i = 0; i < N; ++i) {
    auto term = add(detail::directional_term(za, zb, i, tau),
                    detail::directional_term(zb, za, i, tau));
    acc = acc.defined() ? add(acc, term) : term;
  }
  return mean_reduction ? scale(acc, static_cast<Real>(1.0 / static_cast<double>(N))) : acc;
}

// Three-way total over whichever modalities are present (video, spectrogram,
// waveform). Missing modalities simply drop their pairwise terms.
inline LossBreakdown total_loss(const std::optional<Tensor>& zv, const std::optional<Tensor>& zs,
                                const std::optional<Tensor>& zw, double tau,
                                bool mean_reduction = false) {
  int present = int(zv.has_value()) + int(zs.has_value()) + int(zw.has_value());
  require(present >= 2, ErrorKind::InvalidBatch, "total_loss: need at least two modalities");
  std::int64_t N = -1;
  for (const auto* z : {&zv, &zs, &zw})
    if (z->has_value()) {
      require((*z)->rank() == 2, ErrorKind::InvalidShape, "total_loss: embeddings must be [N,E]");
      if (N < 0) N = (**z).extent(0);
      require((**z).extent(0) == N, ErrorKind::InvalidBatch,
              "total_loss: batch sizes differ across modalities");
    }

  LossBreakdown out;
  out.temperature = tau;
  if (zv && zs) out.l_vs = pairwise_loss(*zv, *zs, tau, mean_reduction);
  if (zv && zw) out.l_vw = pairwise_loss(*zv, *zw, tau, mean_reduction);
  if (zs && zw) out.l_sw = pairwise_loss(*zs, *zw, tau, mean_reduction);
  for (const Tensor* t : {&out.l_vs, &out.l_vw, &out.l_sw}) {
    if (!t->defined()) continue;
    out.total = out.total.defined() ? add(out.total, *t) : *t;
  }
  return out;
}

}  // namespace tricl::objective
