#pragma once

#include <cmath>

#include "treff/matrix.hpp"

namespace treff {

struct AdamHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam for one dense parameter block:
//   m <- b1 m + (1 - b1) g
//   v <- b2 v + (1 - b2) g^2
//   p <- p - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
template <typename Param>
class Adam {
 public:
  Adam(const Param& shape, AdamHyper hyper)
      : hyper_(hyper), m_(Param::Zero(shape.rows(), shape.cols())), v_(Param::Zero(shape.rows(), shape.cols())) {}

  void step(Param& param, const Param& grad) {
    ++t_;
    m_ = hyper_.beta1 * m_ + (1.0 - hyper_.beta1) * grad;
    v_ = hyper_.beta2 * v_ + (1.0 - hyper_.beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(hyper_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(hyper_.beta2, static_cast<double>(t_));
    param.array() -= hyper_.learning_rate * (m_.array() / c1) / ((v_.array() / c2).sqrt() + hyper_.eps);
  }

 private:
  AdamHyper hyper_;
  Param m_;
  Param v_;
  long t_ = 0;
};

// Scalar parameter, same update.
class ScalarAdam {
 public:
  explicit ScalarAdam(AdamHyper hyper) : inner_(Matrix::Zero(1, 1), hyper) {}

  void step(double& param, double grad) {
    Matrix p(1, 1), g(1, 1);
    p(0, 0) = param;
    g(0, 0) = grad;
    inner_.step(p, g);
    param = p(0, 0);
  }

 private:
  Adam<Matrix> inner_;
};

}  // namespace treff
