#pragma once

#include <span>

#include "treff/embedding_store.hpp"
#include "treff/metric_core.hpp"

namespace treff {

inline constexpr double kDefaultLogitScale = 100.0;

// Zero-shot classifier over class text embeddings (one row per class, in
// vocabulary order). Text rows are unit-normalized on construction.
class ZeroShotHead {
 public:
  ZeroShotHead(const EmbeddingSet& text, ClassVocabulary vocab, double tau = kDefaultLogitScale)
      : text_(l2_normalize(text)), vocab_(std::move(vocab)), tau_(tau) {
    if (text_.rows() != vocab_.size())
      throw Error(ErrorCode::vocab_mismatch, "text rows " + std::to_string(text_.rows()) + " != vocabulary size " +
                                                 std::to_string(vocab_.size()));
    if (!(tau_ >= 0.0) || !std::isfinite(tau_)) throw Error(ErrorCode::invalid_argument, "tau must be finite and >= 0");
  }

  const EmbeddingSet& text() const noexcept { return text_; }
  const ClassVocabulary& vocab() const noexcept { return vocab_; }
  double tau() const noexcept { return tau_; }
  std::size_t num_classes() const noexcept { return vocab_.size(); }
  std::size_t dim() const noexcept { return text_.dim(); }

  // Head restricted to the given classes, renumbered in the given order.
  ZeroShotHead subset(std::span<const ClassId> classes) const {
    std::vector<std::size_t> rows(classes.begin(), classes.end());
    std::vector<std::string> names;
    for (ClassId c : classes) names.push_back(vocab_.name(c));
    return ZeroShotHead(text_.select(rows), ClassVocabulary(std::move(names)), tau_);
  }

 private:
  EmbeddingSet text_;
  ClassVocabulary vocab_;
  double tau_;
};

inline ScoreMatrix zsl_logits(const ZeroShotHead& head, const EmbeddingSet& queries) {
  require_same_dim(queries.dim(), head.dim(), "zsl_logits");
  Matrix logits = head.tau() * (l2_normalize_rows(queries.data()) * head.text().data().transpose());
  return ScoreMatrix(std::move(logits), ScoreRole::logits);
}

inline Labels zsl_predict(const ZeroShotHead& head, const EmbeddingSet& queries) {
  return argmax_rows(zsl_logits(head, queries));
}

}  // namespace treff
