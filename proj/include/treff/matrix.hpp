#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include <Eigen/Dense>

#include "treff/error.hpp"

namespace treff {

// Embeddings are stored one per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

enum class ScoreRole { affinity, logits, probabilities, one_hot };

inline const char* to_string(ScoreRole role) {
  switch (role) {
    case ScoreRole::affinity: return "affinity";
    case ScoreRole::logits: return "logits";
    case ScoreRole::probabilities: return "probabilities";
    case ScoreRole::one_hot: return "one_hot";
  }
  return "?";
}

// A dense score table tagged with what its entries mean. Probabilities are
// checked on construction: entries in [0, 1], rows summing to 1 within 1e-6.
class ScoreMatrix {
 public:
  ScoreMatrix(Matrix data, ScoreRole role) : data_(std::move(data)), role_(role) {
    if (!all_finite(data_)) throw Error(ErrorCode::non_finite, "score matrix has non-finite entries");
    if (role_ == ScoreRole::probabilities) {
      for (Eigen::Index r = 0; r < data_.rows(); ++r) {
        const double sum = data_.row(r).sum();
        if (std::abs(sum - 1.0) > 1e-6 || data_.row(r).minCoeff() < 0.0 || data_.row(r).maxCoeff() > 1.0)
          throw Error(ErrorCode::invalid_argument, "row " + std::to_string(r) + " is not a distribution");
      }
    }
  }

  const Matrix& data() const noexcept { return data_; }
  ScoreRole role() const noexcept { return role_; }
  Eigen::Index rows() const noexcept { return data_.rows(); }
  Eigen::Index cols() const noexcept { return data_.cols(); }
  double operator()(Eigen::Index r, Eigen::Index c) const { return data_(r, c); }

 private:
  Matrix data_;
  ScoreRole role_;
};

}  // namespace treff
