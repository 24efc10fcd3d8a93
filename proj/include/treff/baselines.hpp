#pragma once

#include <string>
#include <vector>

#include "treff/treff.hpp"

namespace treff {

// TIP-adapter cache: trainable keys (initialised to the normalized support
// embeddings) and frozen one-hot values.
struct TipCache {
  Matrix keys;    // nk x d
  Matrix values;  // nk x n
  ClassVocabulary vocab;
  double beta = kDefaultTemperature;
  double alpha = kDefaultFusionWeight;
  PhiSign phi_sign = PhiSign::corrected;

  std::size_t dim() const noexcept { return static_cast<std::size_t>(keys.cols()); }
};

inline TipCache tip_init(const SupportSet& support, double beta = kDefaultTemperature,
                         PhiSign sign = PhiSign::corrected) {
  return TipCache{l2_normalize_rows(support.embeddings().data()),
                  one_hot(support.labels(), support.num_classes()).data(), support.vocab(), beta,
                  kDefaultFusionWeight, sign};
}

inline ScoreMatrix tip_predict(const TipCache& cache, const ZeroShotHead& head, const EmbeddingSet& queries) {
  require_same_vocab(cache.vocab, head.vocab());
  require_same_dim(queries.dim(), cache.dim(), "tip_predict");
  if (!all_finite(cache.keys)) throw Error(ErrorCode::non_finite, "cache keys");
  const Matrix affinity = l2_normalize_rows(queries.data()) * cache.keys.transpose();
  Matrix logits = zsl_logits(head, queries).data() + cache.alpha * (phi_scale(affinity, cache.beta, cache.phi_sign) * cache.values);
  return ScoreMatrix(std::move(logits), ScoreRole::logits);
}

struct TipFitReport {
  double initial_loss = 0.0;
  std::vector<double> loss_per_epoch;
  TipCache final_cache;
  bool degenerate = false;
};

namespace detail {

struct TipGrad {
  double loss = 0.0;
  Matrix d_keys;
  double d_alpha = 0.0;
};

inline TipGrad tip_support_grad(const TipCache& cache, const SupportProblem& prob) {
  const Matrix s = prob.normalized * cache.keys.transpose();
  auto rg = retrieval_loss_grad(s, prob.mask ? &*prob.mask : nullptr, cache.values, prob.zsl ? &*prob.zsl : nullptr,
                                cache.alpha, cache.beta, cache.phi_sign, prob.labels);
  return TipGrad{rg.loss, rg.d_affinity.transpose() * prob.normalized, rg.d_alpha};
}

}  // namespace detail

inline TipFitReport tip_finetune(TipCache cache, const ZeroShotHead& head, const SupportSet& support,
                                 const TrainConfig& cfg = {}) {
  cfg.validate();
  if (cache.keys.rows() != static_cast<Eigen::Index>(support.size()))
    throw Error(ErrorCode::dim_mismatch, "cache size differs from support size");
  const detail::SupportProblem prob(head, support, cfg);

  TipFitReport report;
  report.final_cache = std::move(cache);
  TipCache& c = report.final_cache;
  auto lg = detail::tip_support_grad(c, prob);
  report.initial_loss = lg.loss;
  if (prob.degenerate) {
    report.degenerate = true;
    report.loss_per_epoch.assign(static_cast<std::size_t>(cfg.epochs), lg.loss);
    return report;
  }

  Adam<Matrix> adam_keys(c.keys, cfg.adam());
  ScalarAdam adam_alpha(cfg.adam());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    adam_keys.step(c.keys, lg.d_keys);
    if (cfg.loss == FinetuneLoss::full) adam_alpha.step(c.alpha, lg.d_alpha);
    lg = detail::tip_support_grad(c, prob);
    if (!std::isfinite(lg.loss))
      throw Error(ErrorCode::non_finite, "cache loss diverged at epoch " + std::to_string(epoch + 1));
    report.loss_per_epoch.push_back(lg.loss);
  }
  return report;
}

// Per-class mean of the support rows, one row per class.
inline Matrix proto_prototypes(const SupportSet& support, bool normalize_first = false) {
  const Matrix x = normalize_first ? l2_normalize_rows(support.embeddings().data()) : support.embeddings().data();
  const auto n = static_cast<Eigen::Index>(support.num_classes());
  Matrix prototypes = Matrix::Zero(n, x.cols());
  std::vector<int> counts(static_cast<std::size_t>(n), 0);
  for (std::size_t i = 0; i < support.size(); ++i) {
    prototypes.row(support.labels()[i]) += x.row(static_cast<Eigen::Index>(i));
    ++counts[support.labels()[i]];
  }
  for (Eigen::Index c = 0; c < n; ++c) {
    if (counts[static_cast<std::size_t>(c)] == 0)
      throw Error(ErrorCode::insufficient_data, "class '" + support.vocab().name(static_cast<ClassId>(c)) +
                                                    "' has no support examples");
    prototypes.row(c) /= counts[static_cast<std::size_t>(c)];
  }
  return prototypes;
}

// Prototypical head: logits are negative squared distances to class means.
inline ScoreMatrix proto_predict(const SupportSet& support, const EmbeddingSet& queries, bool normalize_first = false) {
  require_same_dim(queries.dim(), support.embeddings().dim(), "proto_predict");
  const Matrix prototypes = proto_prototypes(support, normalize_first);
  const Matrix q = normalize_first ? l2_normalize_rows(queries.data()) : queries.data();
  Matrix logits(q.rows(), prototypes.rows());
  for (Eigen::Index i = 0; i < q.rows(); ++i)
    for (Eigen::Index c = 0; c < prototypes.rows(); ++c) logits(i, c) = -(q.row(i) - prototypes.row(c)).squaredNorm();
  return ScoreMatrix(std::move(logits), ScoreRole::logits);
}

// Matching head: softmax attention over support cosines, summed per class.
inline ScoreMatrix match_predict(const SupportSet& support, const EmbeddingSet& queries) {
  const ScoreMatrix cos = cosine_matrix(queries, support.embeddings());
  Matrix probs = softmax_rows(cos.data()) * one_hot(support.labels(), support.num_classes()).data();
  return ScoreMatrix(std::move(probs), ScoreRole::probabilities);
}

}  // namespace treff
