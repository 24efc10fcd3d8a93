#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"

#include "treff/baselines.hpp"
#include "treff/rng.hpp"
#include "treff/treff.hpp"

namespace treff {

// One n-way k-shot task. Indices point into the source dataset; classes are
// renumbered 0..n-1 in the order of `class_ids`.
struct Episode {
  std::vector<ClassId> class_ids;
  std::vector<std::size_t> support_indices;
  std::vector<std::size_t> query_indices;
  Labels support_labels;
  Labels query_labels;
  std::uint64_t seed = 0;
};

inline Episode sample_episode(const SupportSet& dataset, std::size_t n, std::size_t k, std::size_t q_per_class,
                              std::uint64_t seed) {
  if (n < 1 || k < 1) throw Error(ErrorCode::invalid_argument, "n-way and k-shot must be >= 1");
  std::vector<std::vector<std::size_t>> by_class(dataset.num_classes());
  for (std::size_t i = 0; i < dataset.size(); ++i) by_class[dataset.labels()[i]].push_back(i);

  std::vector<ClassId> eligible;
  for (std::size_t c = 0; c < by_class.size(); ++c)
    if (by_class[c].size() >= k + q_per_class) eligible.push_back(static_cast<ClassId>(c));
  if (eligible.size() < n)
    throw Error(ErrorCode::insufficient_data,
                std::to_string(eligible.size()) + " classes have >= " + std::to_string(k + q_per_class) +
                    " examples, need " + std::to_string(n));

  Rng rng(seed);
  Episode ep;
  ep.seed = seed;
  for (std::size_t pick : rng.sample(eligible.size(), n)) ep.class_ids.push_back(eligible[pick]);
  for (std::size_t local = 0; local < n; ++local) {
    // One stream per slot and a full permutation, so the queries (taken
    // first) are the same for every k.
    Rng class_rng = rng.split(local + 1);
    auto items = by_class[ep.class_ids[local]];
    class_rng.shuffle(items);
    for (std::size_t j = 0; j < k + q_per_class; ++j) {
      if (j < q_per_class) {
        ep.query_indices.push_back(items[j]);
        ep.query_labels.push_back(static_cast<ClassId>(local));
      } else {
        ep.support_indices.push_back(items[j]);
        ep.support_labels.push_back(static_cast<ClassId>(local));
      }
    }
  }
  return ep;
}

inline ClassVocabulary episode_vocab(const SupportSet& dataset, const Episode& ep) {
  std::vector<std::string> names;
  for (ClassId c : ep.class_ids) names.push_back(dataset.vocab().name(c));
  return ClassVocabulary(std::move(names));
}

inline SupportSet episode_support(const SupportSet& dataset, const Episode& ep) {
  return SupportSet(dataset.embeddings().select(ep.support_indices), ep.support_labels, episode_vocab(dataset, ep));
}

// ---------------------------------------------------------------------------

enum class Method { zsl, treff_free, treff_ft, tip_free, tip_ft, proto, match };

inline constexpr std::pair<Method, const char*> kMethodNames[] = {
    {Method::zsl, "zsl"},         {Method::treff_free, "treff-free"}, {Method::treff_ft, "treff-ft"},
    {Method::tip_free, "tip-free"}, {Method::tip_ft, "tip-ft"},         {Method::proto, "proto"},
    {Method::match, "match"},
};

inline const char* to_string(Method m) {
  for (const auto& [method, name] : kMethodNames)
    if (method == m) return name;
  return "?";
}

inline Method parse_method(const std::string& s) {
  for (const auto& [method, name] : kMethodNames)
    if (s == name) return method;
  throw Error(ErrorCode::unknown_method, "'" + s + "'");
}

struct MethodConfig {
  Method method = Method::treff_free;
  double tau = kDefaultLogitScale;
  double b = kDefaultTemperature;     // CALM sharpness
  double beta = kDefaultTemperature;  // TIP cache sharpness
  PhiSign phi_sign = PhiSign::corrected;
  bool proto_normalize = false;
  TrainConfig train;
};

// Predicted local class ids for the queries of one episode.
using EpisodePredictor =
    std::function<Labels(const ZeroShotHead& head, const SupportSet& support, const EmbeddingSet& queries)>;

inline EpisodePredictor make_predictor(const MethodConfig& cfg) {
  return [cfg](const ZeroShotHead& head, const SupportSet& support, const EmbeddingSet& queries) -> Labels {
    switch (cfg.method) {
      case Method::zsl:
        return zsl_predict(head, queries);
      case Method::treff_free:
        return argmax_rows(treff_training_free(head, support, queries, cfg.b, cfg.phi_sign));
      case Method::treff_ft: {
        const auto fit = treff_finetune(head, support, cfg.train, identity_init(head.dim(), cfg.b, cfg.phi_sign));
        return argmax_rows(treff_predict(fit.final_params, head, support, queries));
      }
      case Method::tip_free:
        return argmax_rows(tip_predict(tip_init(support, cfg.beta, cfg.phi_sign), head, queries));
      case Method::tip_ft: {
        const auto fit = tip_finetune(tip_init(support, cfg.beta, cfg.phi_sign), head, support, cfg.train);
        return argmax_rows(tip_predict(fit.final_cache, head, queries));
      }
      case Method::proto:
        return argmax_rows(proto_predict(support, queries, cfg.proto_normalize));
      case Method::match:
        return argmax_rows(match_predict(support, queries));
    }
    throw Error(ErrorCode::unknown_method, "unhandled method");
  };
}

struct EvalSummary {
  std::string method;
  std::size_t n = 0;
  std::size_t k = 0;
  std::size_t q_per_class = 0;
  std::size_t episode_count = 0;
  std::uint64_t base_seed = 0;
  double mean_accuracy = 0.0;
  double std_error = 0.0;
  std::vector<double> per_episode;
};

inline bool operator==(const EvalSummary& a, const EvalSummary& b) {
  return a.method == b.method && a.n == b.n && a.k == b.k && a.q_per_class == b.q_per_class &&
         a.episode_count == b.episode_count && a.base_seed == b.base_seed && a.mean_accuracy == b.mean_accuracy &&
         a.std_error == b.std_error && a.per_episode == b.per_episode;
}

struct EvalSpec {
  std::size_t n = 5;
  std::size_t k = 1;
  std::size_t q_per_class = 5;
  std::size_t episodes = 100;
  std::uint64_t base_seed = 0;
  unsigned threads = 1;
};

// Runs `spec.episodes` episodes; episode i is sampled with seed base_seed + i
// and written to slot i, so the summary does not depend on thread count.
inline EvalSummary evaluate(const EpisodePredictor& predict, const std::string& method_name, const SupportSet& dataset,
                            const ZeroShotHead& head, const EvalSpec& spec) {
  require_same_vocab(dataset.vocab(), head.vocab());
  if (spec.episodes < 1) throw Error(ErrorCode::invalid_argument, "episode count must be >= 1");
  if (spec.q_per_class < 1) throw Error(ErrorCode::invalid_argument, "queries per class must be >= 1");

  EvalSummary out{method_name, spec.n, spec.k, spec.q_per_class, spec.episodes, spec.base_seed, 0.0, 0.0,
                  std::vector<double>(spec.episodes, 0.0)};

  auto run_one = [&](std::size_t i) {
    const Episode ep = sample_episode(dataset, spec.n, spec.k, spec.q_per_class, spec.base_seed + i);
    const SupportSet support = episode_support(dataset, ep);
    const EmbeddingSet queries = dataset.embeddings().select(ep.query_indices);
    const Labels pred = predict(head.subset(ep.class_ids), support, queries);
    std::size_t correct = 0;
    for (std::size_t j = 0; j < pred.size(); ++j) correct += pred[j] == ep.query_labels[j];
    out.per_episode[i] = static_cast<double>(correct) / static_cast<double>(ep.query_labels.size());
  };

  const unsigned threads = std::max(1u, std::min<unsigned>(spec.threads, static_cast<unsigned>(spec.episodes)));
  if (threads == 1) {
    for (std::size_t i = 0; i < spec.episodes; ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < spec.episodes;) {
          try {
            run_one(i);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }

  double sum = 0.0;
  for (double a : out.per_episode) sum += a;
  out.mean_accuracy = sum / static_cast<double>(spec.episodes);
  if (spec.episodes > 1) {
    double ss = 0.0;
    for (double a : out.per_episode) ss += (a - out.mean_accuracy) * (a - out.mean_accuracy);
    out.std_error = std::sqrt(ss / static_cast<double>(spec.episodes - 1)) / std::sqrt(static_cast<double>(spec.episodes));
  }
  return out;
}

inline EvalSummary evaluate(const MethodConfig& cfg, const SupportSet& dataset, const ZeroShotHead& head,
                            const EvalSpec& spec) {
  return evaluate(make_predictor(cfg), to_string(cfg.method), dataset, head, spec);
}

// Accuracy against shots, one summary per k, all sharing base_seed.
inline std::vector<std::pair<std::size_t, EvalSummary>> shot_curve(const MethodConfig& cfg, const SupportSet& dataset,
                                                                   const ZeroShotHead& head, std::vector<std::size_t> shots,
                                                                   EvalSpec spec) {
  std::sort(shots.begin(), shots.end());
  std::vector<std::pair<std::size_t, EvalSummary>> out;
  for (std::size_t k : shots) {
    spec.k = k;
    out.emplace_back(k, evaluate(cfg, dataset, head, spec));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Output formats

inline nlohmann::ordered_json to_json(const EvalSummary& s) {
  return {{"method", s.method},
          {"n", s.n},
          {"k", s.k},
          {"queries_per_class", s.q_per_class},
          {"episodes", s.episode_count},
          {"base_seed", s.base_seed},
          {"mean_acc", s.mean_accuracy},
          {"std_err", s.std_error},
          {"per_episode", s.per_episode}};
}

inline constexpr const char* kCsvHeader = "method,n,k,episodes,mean_acc,std_err";

inline std::string to_csv_row(const EvalSummary& s) {
  char buf[64];
  std::string row = s.method + "," + std::to_string(s.n) + "," + std::to_string(s.k) + "," +
                    std::to_string(s.episode_count) + ",";
  std::snprintf(buf, sizeof buf, "%.6f,%.6f", s.mean_accuracy, s.std_error);
  return row + buf;
}

}  // namespace treff
