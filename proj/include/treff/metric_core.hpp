#pragma once

#include <cmath>
#include <span>
#include <string>

#include "treff/embedding_store.hpp"
#include "treff/matrix.hpp"

namespace treff {

inline constexpr double kZeroNormThreshold = 1e-12;

// Sign convention of the sharpness function.
//   corrected: phi(x) = exp(-b (1 - x)), increasing in similarity (default)
//   paper:     phi(x) = exp( b (1 - x)), positive exponent, kept for ablation
enum class PhiSign { corrected, paper };

inline const char* to_string(PhiSign s) { return s == PhiSign::corrected ? "corrected" : "paper"; }

inline PhiSign parse_phi_sign(const std::string& s) {
  if (s == "corrected") return PhiSign::corrected;
  if (s == "paper") return PhiSign::paper;
  throw Error(ErrorCode::invalid_argument, "phi sign must be 'corrected' or 'paper', got '" + s + "'");
}

inline Matrix l2_normalize_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double norm = m.row(r).norm();
    if (!(norm >= kZeroNormThreshold)) throw Error(ErrorCode::zero_norm, "row " + std::to_string(r));
    out.row(r) = m.row(r) / norm;
  }
  return out;
}

inline EmbeddingSet l2_normalize(const EmbeddingSet& set) { return EmbeddingSet(l2_normalize_rows(set.data())); }

inline void require_same_dim(std::size_t a, std::size_t b, const char* what) {
  if (a != b)
    throw Error(ErrorCode::dim_mismatch, std::string(what) + ": " + std::to_string(a) + " vs " + std::to_string(b));
}

inline ScoreMatrix cosine_matrix(const EmbeddingSet& x, const EmbeddingSet& y) {
  require_same_dim(x.dim(), y.dim(), "cosine_matrix");
  Matrix s = l2_normalize_rows(x.data()) * l2_normalize_rows(y.data()).transpose();
  return ScoreMatrix(std::move(s), ScoreRole::affinity);
}

inline double phi(double x, double b, PhiSign sign = PhiSign::corrected) {
  return sign == PhiSign::corrected ? std::exp(-b * (1.0 - x)) : std::exp(b * (1.0 - x));
}

// d phi / dx expressed through phi itself.
inline double phi_derivative_from_value(double phi_value, double b, PhiSign sign) {
  return sign == PhiSign::corrected ? b * phi_value : -b * phi_value;
}

inline Matrix phi_scale(const Matrix& s, double b, PhiSign sign = PhiSign::corrected) {
  if (!(b > 0.0)) throw Error(ErrorCode::invalid_argument, "phi temperature must be positive");
  return s.unaryExpr([b, sign](double x) { return phi(x, b, sign); });
}

inline ScoreMatrix phi_scale(const ScoreMatrix& s, double b, PhiSign sign = PhiSign::corrected) {
  return ScoreMatrix(phi_scale(s.data(), b, sign), s.role());
}

inline Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    out.row(r) = (logits.row(r).array() - mx).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

inline ScoreMatrix softmax_rows(const ScoreMatrix& logits) {
  return ScoreMatrix(softmax_rows(logits.data()), ScoreRole::probabilities);
}

inline void check_labels(std::span<const ClassId> labels, Eigen::Index rows, Eigen::Index cols) {
  if (static_cast<Eigen::Index>(labels.size()) != rows)
    throw Error(ErrorCode::invalid_argument,
                "expected " + std::to_string(rows) + " labels, got " + std::to_string(labels.size()));
  for (ClassId id : labels)
    if (static_cast<Eigen::Index>(id) >= cols)
      throw Error(ErrorCode::out_of_range, "label " + std::to_string(id) + " >= " + std::to_string(cols));
}

// Mean of -log softmax(logits)[i, labels[i]], via log-sum-exp.
inline double cross_entropy(const Matrix& logits, std::span<const ClassId> labels) {
  check_labels(labels, logits.rows(), logits.cols());
  double total = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    const double lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
    total += lse - logits(r, labels[static_cast<std::size_t>(r)]);
  }
  return total / static_cast<double>(logits.rows());
}

inline double cross_entropy(const ScoreMatrix& logits, std::span<const ClassId> labels) {
  return cross_entropy(logits.data(), labels);
}

// Row-wise argmax; ties go to the lowest column.
inline Labels argmax_rows(const Matrix& scores) {
  Labels out(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < scores.cols(); ++c)
      if (scores(r, c) > scores(r, best)) best = c;
    out[static_cast<std::size_t>(r)] = static_cast<ClassId>(best);
  }
  return out;
}

inline Labels argmax_rows(const ScoreMatrix& scores) { return argmax_rows(scores.data()); }

}  // namespace treff
