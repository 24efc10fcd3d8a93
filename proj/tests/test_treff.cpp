#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace treff;
using treff::testing::rows2;

namespace {

struct Worked {
  ZeroShotHead head{EmbeddingSet(rows2({{1, 0}, {0, 1}})), ClassVocabulary({"a", "b"}), 1.0};
  SupportSet support{EmbeddingSet(rows2({{1, 0}, {0, 1}})), {0, 1}, ClassVocabulary({"a", "b"})};
  EmbeddingSet query{rows2({{0.8, 0.6}})};
};

struct Instance {
  AdapterParams params;
  ZeroShotHead head;
  SupportSet support;
};

// Random small problem; W perturbed away from identity so the check is not
// only exercised at the symmetric starting point.
Instance random_instance(std::uint64_t seed, std::size_t d, std::size_t n, std::size_t k, double tau) {
  Rng rng(seed);
  const auto di = static_cast<Eigen::Index>(d);
  AdapterParams p = identity_init(d);
  p.W += 0.2 * treff::testing::random_matrix(rng, di, di);
  p.alpha = 0.5 + rng.uniform01();
  auto support = treff::testing::random_support(rng, n, k, di);
  ZeroShotHead head(treff::testing::random_set(rng, static_cast<Eigen::Index>(n), di), support.vocab(), tau);
  return {std::move(p), std::move(head), std::move(support)};
}

SynthData benchmark(std::uint64_t seed) {
  SynthConfig cfg;
  cfg.seed = seed;
  return generate(cfg);
}

}  // namespace

TEST(TreffPredict, WorkedExample) {
  Worked w;
  const auto p = treff_predict(identity_init(2), w.head, w.support, w.query);
  EXPECT_NEAR(p(0, 0), 1.1328710836980795, 1e-12);
  EXPECT_NEAR(p(0, 1), 0.71080315836233386, 1e-12);
  EXPECT_EQ(argmax_rows(p), Labels{0});
}

TEST(TreffPredict, AlphaZeroIsZeroShot) {
  Rng rng(1);
  const auto support = treff::testing::random_support(rng, 3, 2, 5);
  const ZeroShotHead head(treff::testing::random_set(rng, 3, 5), support.vocab());
  const auto q = treff::testing::random_set(rng, 6, 5);
  AdapterParams p = identity_init(5);
  p.alpha = 0.0;
  EXPECT_EQ(treff_predict(p, head, support, q).data(), zsl_logits(head, q).data());
}

TEST(TreffPredict, ZeroScaleHeadFollowsCalm) {
  Rng rng(2);
  const auto support = treff::testing::random_support(rng, 4, 3, 6);
  const ZeroShotHead head(treff::testing::random_set(rng, 4, 6), support.vocab(), 0.0);
  const auto q = treff::testing::random_set(rng, 10, 6);
  AdapterParams p = identity_init(6);
  p.alpha = 0.3;
  EXPECT_EQ(argmax_rows(treff_predict(p, head, support, q)), argmax_rows(calm_forward(p, q, support)));
}

TEST(TreffPredict, Linearity) {
  Rng rng(3);
  for (int t = 0; t < 10; ++t) {
    const auto support = treff::testing::random_support(rng, 3, 2, 4);
    const ZeroShotHead head(treff::testing::random_set(rng, 3, 4), support.vocab());
    const auto q = treff::testing::random_set(rng, 5, 4);
    AdapterParams p = identity_init(4);
    p.W += 0.1 * treff::testing::random_matrix(rng, 4, 4);
    const Matrix z = zsl_logits(head, q).data();
    const Matrix o = calm_forward(p, q, support).data();
    for (double a : {0.0, 0.5, 1.0, 2.0}) {
      p.alpha = a;
      EXPECT_LT((treff_predict(p, head, support, q).data() - (z + a * o)).cwiseAbs().maxCoeff(), 1e-9);
    }
  }
}

TEST(TreffPredict, VocabAndDimErrors) {
  Worked w;
  const ZeroShotHead other(EmbeddingSet(rows2({{1, 0}, {0, 1}})), ClassVocabulary({"a", "c"}));
  try {
    treff_predict(identity_init(2), other, w.support, w.query);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::vocab_mismatch);
  }
  EXPECT_THROW(treff_predict(identity_init(2), w.head, w.support, EmbeddingSet(Matrix::Ones(1, 3))), Error);
}

TEST(TreffTrainingFree, SameAsIdentityPredict) {
  Rng rng(4);
  for (int t = 0; t < 10; ++t) {
    const auto support = treff::testing::random_support(rng, 5, 3, 8);
    const ZeroShotHead head(treff::testing::random_set(rng, 5, 8), support.vocab());
    const auto q = treff::testing::random_set(rng, 7, 8);
    EXPECT_EQ(treff_training_free(head, support, q).data(), treff_predict(identity_init(8), head, support, q).data());
  }
}

TEST(TreffTrainingFree, ClassWithoutSupportScoresZero) {
  // class "c" has no supports; with tau = 0 its fused score is exactly 0
  const SupportSet support(EmbeddingSet(rows2({{0, 1}, {0, -1}})), {0, 1}, ClassVocabulary({"a", "b", "c"}));
  const ZeroShotHead head(EmbeddingSet(rows2({{1, 0}, {0, 1}, {1, 1}})), support.vocab(), 0.0);
  const auto p = treff_training_free(head, support, EmbeddingSet(rows2({{1, 0}})));
  EXPECT_EQ(p(0, 2), 0.0);
  EXPECT_NEAR(p(0, 0), phi(0.0, 5.5), 1e-15);
  EXPECT_NEAR(p(0, 1), phi(0.0, 5.5), 1e-15);
}

TEST(TreffTrainingFree, BeatsZeroShotOneShot) {
  const auto data = benchmark(101);
  const ZeroShotHead head(data.text, data.vocab);
  EvalSpec spec;
  spec.k = 1;
  spec.episodes = 150;
  spec.base_seed = 500;
  MethodConfig zsl;
  zsl.method = Method::zsl;
  MethodConfig free;
  free.method = Method::treff_free;
  const auto a = evaluate(zsl, data.audio, head, spec);
  const auto b = evaluate(free, data.audio, head, spec);
  EXPECT_GT(b.mean_accuracy, a.mean_accuracy);
}

// ---------------------------------------------------------------------------
// gradients

TEST(GradCheck, SeededInstances) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto inst = random_instance(seed, 8, 3, 2, 1.0);
    const auto r = grad_check(inst.params, inst.head, inst.support, 1e-5);
    EXPECT_LT(r.max_rel_error(), 1e-4) << "seed " << seed;
  }
}

TEST(GradCheck, AllObjectiveVariants) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const auto inst = random_instance(100 + seed, 6, 3, 3, 10.0);
    for (bool self : {true, false})
      for (auto loss : {FinetuneLoss::full, FinetuneLoss::calm_only})
        for (auto sign : {PhiSign::corrected, PhiSign::paper}) {
          TrainConfig cfg;
          cfg.include_self = self;
          cfg.loss = loss;
          AdapterParams p = inst.params;
          p.phi_sign = sign;
          p.b = sign == PhiSign::paper ? 1.0 : 5.5;
          const auto r = grad_check(p, inst.head, inst.support, 1e-5, cfg);
          EXPECT_LT(r.max_rel_error(), 1e-4) << "seed " << seed << " self " << self;
        }
  }
}

TEST(GradCheck, EpsilonDoublingIsStable) {
  const auto inst = random_instance(7, 8, 3, 2, 1.0);
  const double e1 = grad_check(inst.params, inst.head, inst.support, 1e-5).max_rel_error();
  const double e2 = grad_check(inst.params, inst.head, inst.support, 2e-5).max_rel_error();
  const double e4 = grad_check(inst.params, inst.head, inst.support, 4e-5).max_rel_error();
  EXPECT_LT(e1, 1e-4);
  EXPECT_LT(e2, 1e-4);
  EXPECT_LT(e4, 1e-4);
}

TEST(GradCheck, AlphaGradientVanishesOnPlateau) {
  // Identical supports: every class receives the same retrieval score, so
  // alpha cannot change the loss.
  const SupportSet support(EmbeddingSet(rows2({{1, 0}, {1, 0}})), {0, 1}, ClassVocabulary({"a", "b"}));
  const ZeroShotHead head(EmbeddingSet(rows2({{1, 0}, {0, 1}})), support.vocab(), 1.0);
  EXPECT_NEAR(treff_alpha_gradient(identity_init(2), head, support), 0.0, 1e-8);
}

// ---------------------------------------------------------------------------
// fine-tuning

TEST(TreffFinetune, EpochContract) {
  Rng rng(5);
  const auto support = treff::testing::random_support(rng, 3, 2, 4);
  const ZeroShotHead head(treff::testing::random_set(rng, 3, 4), support.vocab());
  TrainConfig cfg;
  cfg.epochs = 0;
  EXPECT_THROW(treff_finetune(head, support, cfg), Error);
  cfg.epochs = 1;
  EXPECT_EQ(treff_finetune(head, support, cfg).loss_per_epoch.size(), 1u);
  cfg.epochs = 7;
  EXPECT_EQ(treff_finetune(head, support, cfg).loss_per_epoch.size(), 7u);
  cfg.learning_rate = 0;
  EXPECT_THROW(treff_finetune(head, support, cfg), Error);
}

TEST(TreffFinetune, SeparableLossNonIncreasing) {
  SynthConfig sc;
  sc.n_classes = 3;
  sc.dim = 16;
  sc.per_class = 4;
  sc.kappa = 64;
  sc.seed = 9;
  const auto data = generate(sc);
  const ZeroShotHead head(data.text, data.vocab);
  const auto fit = treff_finetune(head, data.audio);
  ASSERT_EQ(fit.loss_per_epoch.size(), 20u);
  for (std::size_t e = 1; e < fit.loss_per_epoch.size(); ++e)
    EXPECT_LE(fit.loss_per_epoch[e], fit.loss_per_epoch[e - 1] + 1e-6) << "epoch " << e;
  EXPECT_LE(fit.loss_per_epoch.back(), fit.initial_loss);
  EXPECT_FALSE(fit.degenerate);
}

TEST(TreffFinetune, Deterministic) {
  Rng rng(6);
  const auto support = treff::testing::random_support(rng, 4, 3, 8);
  const ZeroShotHead head(treff::testing::random_set(rng, 4, 8), support.vocab());
  TrainConfig cfg;
  cfg.seed = 77;
  const auto a = treff_finetune(head, support, cfg);
  const auto b = treff_finetune(head, support, cfg);
  EXPECT_EQ(a.loss_per_epoch, b.loss_per_epoch);
  EXPECT_EQ(a.final_params.W, b.final_params.W);
  EXPECT_EQ(a.final_params.alpha, b.final_params.alpha);
}

TEST(TreffFinetune, FinalLossNotAboveInitial) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const auto support = treff::testing::random_support(rng, 3, 4, 8);
    const ZeroShotHead head(treff::testing::random_set(rng, 3, 8), support.vocab());
    for (bool self : {true, false}) {
      TrainConfig cfg;
      cfg.include_self = self;
      const auto fit = treff_finetune(head, support, cfg);
      EXPECT_LE(fit.loss_per_epoch.back(), fit.initial_loss) << "seed " << seed;
      EXPECT_NEAR(fit.initial_loss, treff_support_loss(identity_init(8), head, support, cfg), 1e-12);
      EXPECT_NEAR(fit.loss_per_epoch.back(), treff_support_loss(fit.final_params, head, support, cfg), 1e-12);
    }
  }
}

TEST(TreffFinetune, CalmOnlyKeepsAlpha) {
  Rng rng(8);
  const auto support = treff::testing::random_support(rng, 3, 3, 6);
  const ZeroShotHead head(treff::testing::random_set(rng, 3, 6), support.vocab());
  TrainConfig cfg;
  cfg.loss = FinetuneLoss::calm_only;
  const auto fit = treff_finetune(head, support, cfg);
  EXPECT_EQ(fit.final_params.alpha, 1.0);
  EXPECT_NE(fit.final_params.W, Matrix::Identity(6, 6));
}

TEST(TreffFinetune, SingleClassIsDegenerate) {
  Rng rng(9);
  const SupportSet support(treff::testing::random_set(rng, 3, 4), {0, 0, 0}, ClassVocabulary({"only"}));
  const ZeroShotHead head(treff::testing::random_set(rng, 1, 4), support.vocab());
  const auto fit = treff_finetune(head, support);
  EXPECT_TRUE(fit.degenerate);
  EXPECT_EQ(fit.initial_loss, 0.0);
  EXPECT_EQ(fit.loss_per_epoch, std::vector<double>(20, 0.0));
  EXPECT_EQ(fit.final_params.W, Matrix::Identity(4, 4));
}

TEST(TreffFinetune, DivergenceIsReported) {
  Rng rng(10);
  const auto support = treff::testing::random_support(rng, 3, 3, 4);
  const ZeroShotHead head(treff::testing::random_set(rng, 3, 4), support.vocab());
  TrainConfig cfg;
  cfg.learning_rate = 1e6;
  cfg.epochs = 50;
  try {
    treff_finetune(head, support, cfg);
    FAIL() << "expected divergence";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::non_finite);
  }
}

TEST(TreffFinetune, NotWorseThanTrainingFreeOnBenchmark) {
  const auto data = benchmark(202);
  const ZeroShotHead head(data.text, data.vocab);
  EvalSpec spec;
  spec.k = 4;
  spec.episodes = 100;
  spec.base_seed = 900;
  MethodConfig free;
  free.method = Method::treff_free;
  MethodConfig ft;
  ft.method = Method::treff_ft;
  const auto a = evaluate(free, data.audio, head, spec);
  const auto b = evaluate(ft, data.audio, head, spec);
  EXPECT_GE(b.mean_accuracy, a.mean_accuracy);
}
