#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "treff/adam.hpp"
#include "treff/calm.hpp"
#include "treff/zero_shot.hpp"

namespace treff {

// Which logits the fine-tuning loss is computed on.
//   full:      zsl + alpha * calm, trains W and alpha
//   calm_only: calm scores alone, trains W, alpha frozen
enum class FinetuneLoss { full, calm_only };

struct TrainConfig {
  int epochs = 20;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  // Each support example is scored against the full cache, itself included.
  bool include_self = true;
  FinetuneLoss loss = FinetuneLoss::full;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 1) throw Error(ErrorCode::invalid_argument, "epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw Error(ErrorCode::invalid_argument, "learning rate must be positive");
  }
  AdamHyper adam() const { return {learning_rate, adam_beta1, adam_beta2, adam_eps}; }
};

struct FitReport {
  double initial_loss = 0.0;
  std::vector<double> loss_per_epoch;  // loss after each update
  AdapterParams final_params;
  bool degenerate = false;  // fewer than two classes present; no update made
};

inline void require_same_vocab(const ClassVocabulary& a, const ClassVocabulary& b) {
  if (!(a == b)) throw Error(ErrorCode::vocab_mismatch, "support vocabulary differs from text vocabulary");
}

// Fused class scores: zsl_logits + alpha * calm_forward.
inline ScoreMatrix treff_predict(const AdapterParams& params, const ZeroShotHead& head, const SupportSet& support,
                                 const EmbeddingSet& queries) {
  require_same_vocab(support.vocab(), head.vocab());
  const ScoreMatrix zsl = zsl_logits(head, queries);
  const ScoreMatrix fsl = calm_forward(params, queries, support);
  return ScoreMatrix(zsl.data() + params.alpha * fsl.data(), ScoreRole::logits);
}

inline ScoreMatrix treff_training_free(const ZeroShotHead& head, const SupportSet& support, const EmbeddingSet& queries,
                                       double b = kDefaultTemperature, PhiSign sign = PhiSign::corrected) {
  return treff_predict(identity_init(head.dim(), b, sign), head, support, queries);
}

namespace detail {

struct RetrievalGrad {
  double loss = 0.0;
  Matrix d_affinity;  // dL/dS
  double d_alpha = 0.0;
};

// Loss and gradient of CE(zsl + alpha * (mask .* phi(S)) Y) with respect to S
// and alpha. With `zsl` null the logits are the retrieval scores alone.
inline RetrievalGrad retrieval_loss_grad(const Matrix& affinity, const Matrix* mask, const Matrix& one_hot_labels,
                                         const Matrix* zsl, double alpha, double b, PhiSign sign,
                                         std::span<const ClassId> labels) {
  Matrix phi_s = phi_scale(affinity, b, sign);
  if (mask) phi_s = phi_s.cwiseProduct(*mask);
  const Matrix scores = phi_s * one_hot_labels;
  const Matrix logits = zsl ? Matrix(*zsl + alpha * scores) : scores;

  RetrievalGrad out;
  out.loss = cross_entropy(logits, labels);
  Matrix g = softmax_rows(logits);
  for (std::size_t i = 0; i < labels.size(); ++i) g(static_cast<Eigen::Index>(i), labels[i]) -= 1.0;
  g /= static_cast<double>(labels.size());

  out.d_alpha = zsl ? g.cwiseProduct(scores).sum() : 0.0;
  const Matrix d_scores = zsl ? Matrix(alpha * g) : g;
  const Matrix d_phi = d_scores * one_hot_labels.transpose();
  const double slope = sign == PhiSign::corrected ? b : -b;
  out.d_affinity = slope * d_phi.cwiseProduct(phi_s);
  return out;
}

// Support-set objective pieces that do not depend on the trainable parameters.
struct SupportProblem {
  Matrix normalized;             // nk x d
  Matrix one_hot_labels;         // nk x n
  std::optional<Matrix> zsl;     // nk x n, absent for calm_only
  std::optional<Matrix> mask;    // nk x nk, absent when self-matches count
  Labels labels;
  bool degenerate = false;

  SupportProblem(const ZeroShotHead& head, const SupportSet& support, const TrainConfig& cfg)
      : normalized(l2_normalize_rows(support.embeddings().data())),
        one_hot_labels(one_hot(support.labels(), support.num_classes()).data()),
        labels(support.labels()) {
    require_same_vocab(support.vocab(), head.vocab());
    require_same_dim(support.embeddings().dim(), head.dim(), "support vs text");
    if (cfg.loss == FinetuneLoss::full) zsl = zsl_logits(head, support.embeddings()).data();
    if (!cfg.include_self) {
      const auto n = normalized.rows();
      mask = Matrix::Ones(n, n) - Matrix::Identity(n, n);
    }
    degenerate = std::set<ClassId>(labels.begin(), labels.end()).size() < 2;
  }
};

struct TreffGrad {
  double loss = 0.0;
  Matrix d_W;
  double d_alpha = 0.0;
};

inline TreffGrad treff_support_grad(const AdapterParams& params, const SupportProblem& prob) {
  const Matrix e = prob.normalized * params.W.transpose();
  const Matrix s = e * e.transpose();
  auto rg = retrieval_loss_grad(s, prob.mask ? &*prob.mask : nullptr, prob.one_hot_labels,
                                prob.zsl ? &*prob.zsl : nullptr, params.alpha, params.b, params.phi_sign, prob.labels);
  // S = N W^T W N^T with W shared on both sides.
  const Matrix& h = rg.d_affinity;
  TreffGrad out;
  out.loss = rg.loss;
  out.d_W = e.transpose() * (h + h.transpose()) * prob.normalized;
  out.d_alpha = rg.d_alpha;
  return out;
}

}  // namespace detail

// Support-set training objective evaluated through the public prediction
// path (no gradient code involved).
inline double treff_support_loss(const AdapterParams& params, const ZeroShotHead& head, const SupportSet& support,
                                 const TrainConfig& cfg = {}) {
  require_same_vocab(support.vocab(), head.vocab());
  const EmbeddingSet& x = support.embeddings();
  Matrix phi_s = phi_scale(calm_affinity(params, x, x).data(), params.b, params.phi_sign);
  if (!cfg.include_self) phi_s.diagonal().setZero();
  Matrix logits = phi_s * one_hot(support.labels(), support.num_classes()).data();
  if (cfg.loss == FinetuneLoss::full) logits = zsl_logits(head, x).data() + params.alpha * logits;
  return cross_entropy(logits, support.labels());
}

inline FitReport treff_finetune(const ZeroShotHead& head, const SupportSet& support, const TrainConfig& cfg,
                                AdapterParams start) {
  cfg.validate();
  start.validate();
  require_same_dim(start.dim(), support.embeddings().dim(), "treff_finetune");
  const detail::SupportProblem prob(head, support, cfg);

  FitReport report;
  report.final_params = std::move(start);
  AdapterParams& params = report.final_params;
  auto lg = detail::treff_support_grad(params, prob);
  report.initial_loss = lg.loss;
  if (!std::isfinite(lg.loss)) throw Error(ErrorCode::non_finite, "initial support loss is not finite");

  if (prob.degenerate) {
    report.degenerate = true;
    report.loss_per_epoch.assign(static_cast<std::size_t>(cfg.epochs), lg.loss);
    return report;
  }

  Adam<Matrix> adam_w(params.W, cfg.adam());
  ScalarAdam adam_alpha(cfg.adam());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    adam_w.step(params.W, lg.d_W);
    if (cfg.loss == FinetuneLoss::full) adam_alpha.step(params.alpha, lg.d_alpha);
    lg = detail::treff_support_grad(params, prob);
    if (!std::isfinite(lg.loss) || !all_finite(params.W))
      throw Error(ErrorCode::non_finite, "support loss diverged at epoch " + std::to_string(epoch + 1) +
                                             " (lr=" + std::to_string(cfg.learning_rate) + ")");
    report.loss_per_epoch.push_back(lg.loss);
  }
  return report;
}

inline FitReport treff_finetune(const ZeroShotHead& head, const SupportSet& support, const TrainConfig& cfg = {}) {
  return treff_finetune(head, support, cfg, identity_init(support.embeddings().dim()));
}

struct GradCheckResult {
  double max_rel_error_W = 0.0;
  double rel_error_alpha = 0.0;
  double max_rel_error() const { return std::max(max_rel_error_W, rel_error_alpha); }
};

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

// Analytic gradients of the support loss against central differences.
inline GradCheckResult grad_check(const AdapterParams& params, const ZeroShotHead& head, const SupportSet& support,
                                  double epsilon, const TrainConfig& cfg = {}) {
  const detail::SupportProblem prob(head, support, cfg);
  const auto analytic = detail::treff_support_grad(params, prob);

  GradCheckResult out;
  AdapterParams probe = params;
  for (Eigen::Index r = 0; r < params.W.rows(); ++r)
    for (Eigen::Index c = 0; c < params.W.cols(); ++c) {
      probe.W(r, c) = params.W(r, c) + epsilon;
      const double up = treff_support_loss(probe, head, support, cfg);
      probe.W(r, c) = params.W(r, c) - epsilon;
      const double down = treff_support_loss(probe, head, support, cfg);
      probe.W(r, c) = params.W(r, c);
      out.max_rel_error_W = std::max(out.max_rel_error_W, relative_error(analytic.d_W(r, c), (up - down) / (2 * epsilon)));
    }
  if (cfg.loss == FinetuneLoss::full) {
    probe.alpha = params.alpha + epsilon;
    const double up = treff_support_loss(probe, head, support, cfg);
    probe.alpha = params.alpha - epsilon;
    const double down = treff_support_loss(probe, head, support, cfg);
    out.rel_error_alpha = relative_error(analytic.d_alpha, (up - down) / (2 * epsilon));
  }
  return out;
}

// Analytic d loss / d alpha on the support objective.
inline double treff_alpha_gradient(const AdapterParams& params, const ZeroShotHead& head, const SupportSet& support,
                                   const TrainConfig& cfg = {}) {
  return detail::treff_support_grad(params, detail::SupportProblem(head, support, cfg)).d_alpha;
}

}  // namespace treff
