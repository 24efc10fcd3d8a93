#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"

#include "treff/embedding_store.hpp"
#include "treff/metric_core.hpp"

namespace treff {

inline constexpr double kDefaultTemperature = 5.5;
inline constexpr double kDefaultFusionWeight = 1.0;

// Parameters of the cross-attention linear model: one square map shared by
// queries and supports, the sharpness temperature and the fusion weight.
struct AdapterParams {
  Matrix W;
  double b = kDefaultTemperature;
  double alpha = kDefaultFusionWeight;
  PhiSign phi_sign = PhiSign::corrected;

  std::size_t dim() const noexcept { return static_cast<std::size_t>(W.rows()); }

  void validate() const {
    if (W.rows() < 1 || W.rows() != W.cols()) throw Error(ErrorCode::invalid_argument, "W must be square and non-empty");
    if (!all_finite(W) || !std::isfinite(alpha)) throw Error(ErrorCode::non_finite, "adapter parameters");
    if (!(b > 0.0)) throw Error(ErrorCode::invalid_argument, "temperature b must be positive");
  }
};

inline AdapterParams identity_init(std::size_t d, double b = kDefaultTemperature, PhiSign sign = PhiSign::corrected) {
  if (d < 1) throw Error(ErrorCode::invalid_argument, "dimension must be >= 1");
  const auto n = static_cast<Eigen::Index>(d);
  AdapterParams p{Matrix::Identity(n, n), b, kDefaultFusionWeight, sign};
  p.validate();
  return p;
}

// Rows are L2-normalized first, then mapped by the shared W (x -> x W^T).
// The result is not re-normalized.
inline Matrix transform_rows(const AdapterParams& params, const Matrix& rows) {
  return l2_normalize_rows(rows) * params.W.transpose();
}

inline EmbeddingSet transform(const AdapterParams& params, const EmbeddingSet& set) {
  params.validate();
  require_same_dim(set.dim(), params.dim(), "transform");
  return EmbeddingSet(transform_rows(params, set.data()));
}

inline ScoreMatrix calm_affinity(const AdapterParams& params, const EmbeddingSet& queries, const EmbeddingSet& supports) {
  params.validate();
  require_same_dim(queries.dim(), params.dim(), "calm_affinity queries");
  require_same_dim(supports.dim(), params.dim(), "calm_affinity supports");
  Matrix s = transform_rows(params, queries.data()) * transform_rows(params, supports.data()).transpose();
  return ScoreMatrix(std::move(s), ScoreRole::affinity);
}

// Class scores o = phi(S) Y. Unnormalized; use calm_probabilities for a
// distribution.
inline ScoreMatrix calm_forward(const AdapterParams& params, const EmbeddingSet& queries, const SupportSet& support) {
  const ScoreMatrix s = calm_affinity(params, queries, support.embeddings());
  const ScoreMatrix y = one_hot(support.labels(), support.num_classes());
  Matrix o = phi_scale(s.data(), params.b, params.phi_sign) * y.data();
  return ScoreMatrix(std::move(o), ScoreRole::logits);
}

inline ScoreMatrix calm_probabilities(const AdapterParams& params, const EmbeddingSet& queries,
                                      const SupportSet& support) {
  Matrix o = calm_forward(params, queries, support).data();
  for (Eigen::Index r = 0; r < o.rows(); ++r) o.row(r) /= o.row(r).sum();
  return ScoreMatrix(std::move(o), ScoreRole::probabilities);
}

// W goes to a TREFFEMB file at `path`; scalars to `path` + ".json".
inline std::filesystem::path params_sidecar_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".json");
}

inline void save_params(const AdapterParams& params, const std::filesystem::path& path) {
  params.validate();
  write_embeddings(EmbeddingSet(params.W), path);
  const nlohmann::ordered_json side = {
      {"b", params.b}, {"alpha", params.alpha}, {"phi_sign", to_string(params.phi_sign)}};
  std::ofstream out(params_sidecar_path(path), std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + params_sidecar_path(path).string());
  out << side.dump(2) << '\n';
}

inline AdapterParams load_params(const std::filesystem::path& path) {
  auto file = read_embeddings(path);
  std::ifstream in(params_sidecar_path(path));
  if (!in) throw Error(ErrorCode::io, "cannot open " + params_sidecar_path(path).string());
  nlohmann::json side;
  try {
    in >> side;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::invalid_argument, std::string("params sidecar: ") + e.what());
  }
  AdapterParams p;
  p.W = file.embeddings.data();
  try {
    p.b = side.at("b").get<double>();
    p.alpha = side.at("alpha").get<double>();
    p.phi_sign = parse_phi_sign(side.value("phi_sign", std::string("corrected")));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::invalid_argument, std::string("params sidecar: ") + e.what());
  }
  p.validate();
  return p;
}

}  // namespace treff
