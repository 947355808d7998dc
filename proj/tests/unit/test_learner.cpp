#include "doctest.h"

#include "../common/tiny_mdp.hpp"
#include "tact/diff/grad_check.hpp"
#include "tact/learner.hpp"

#include <cmath>
#include <limits>

using namespace tact;
using namespace tact::learner;
using corpus::Vocabulary;

namespace {

double max_abs_diff(const ParamSet& a, const ParamSet& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto x = a[i].values();
    auto y = b[i].values();
    for (std::size_t j = 0; j < x.size(); ++j) m = std::max(m, std::abs(x[j] - y[j]));
  }
  return m;
}

double max_abs(const ParamSet& a) { return max_abs_diff(a, a.zeros_like()); }

mdp::Episode scored(const tiny::Mdp& m, const policy::Policy& p, const std::vector<TokenId>& z,
                    mdp::EpisodeKind kind) {
  mdp::Episode e;
  e.context = m.context;
  e.actions = z;
  e.kind = kind;
  e.rewards = m.rewards(z);
  e.truncated = z.back() != Vocabulary::kEos;
  (void)p;
  return e;
}

// Sum over all episodes of P(z) times the on-policy estimate.
ParamSet expected_on_policy(const tiny::Mdp& m, const policy::Policy& p, const Baseline& b,
                            const std::vector<std::vector<TokenId>>& all) {
  ParamSet acc = p.params().zeros_like();
  for (const auto& z : all) {
    acc.axpy(tiny::episode_probability(p, m.context, z),
             on_policy_gradient(p, scored(m, p, z, mdp::EpisodeKind::Sampled), b, 1.0));
  }
  return acc;
}

}  // namespace

TEST_CASE("importance sampling coefficients") {
  CHECK(is_coefficient(IsStrategy::constant(1.0), 0.2, 0.7) == 1.0);
  CHECK(is_coefficient(IsStrategy::constant(0.5), 0.2, 0.0) == 0.5);
  CHECK(is_coefficient(IsStrategy::clipped(5.0), 0.6, 0.05) == 5.0);
  CHECK(is_coefficient(IsStrategy::clipped(5.0), 0.2, 0.4) == doctest::Approx(0.5));
  CHECK(is_coefficient(IsStrategy::estimated(), 0.3, 0.3) == 1.0);
  CHECK(is_coefficient(IsStrategy::estimated(), 0.6, 0.2) == doctest::Approx(3.0));
  CHECK_THROWS_AS(is_coefficient(IsStrategy::estimated(), 0.3, 0.0), std::domain_error);
  CHECK_THROWS_AS(is_coefficient(IsStrategy::clipped(2.0), 0.3, 0.0), std::domain_error);
}

TEST_CASE("learner configuration validation") {
  LearnerConfig c;
  CHECK(c.lambda_e == 0.3);
  CHECK(c.learning_rate == 1e-3);
  CHECK(c.is == IsStrategy::constant(1.0));
  CHECK_NOTHROW(c.validate());
  c.lambda_e = 1.2;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.lambda_e = 0.5;
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("baseline moving average") {
  Baseline frozen(4, 1.0);
  frozen.values() = {0.5, 1.0, 1.5, 2.0};
  const double q[] = {9, 9, 9, 9, 9};
  frozen.update(q);
  CHECK(frozen.values() == std::vector<double>{0.5, 1.0, 1.5, 2.0});
  CHECK(frozen.at(7) == 0.0);

  Baseline b(3, 0.95);
  const double c[] = {0.7, 0.7};
  for (int i = 0; i < 2000; ++i) b.update(c);
  CHECK(b.at(0) == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(b.at(1) == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(b.at(2) == 0.0);
  const double before = b.at(0);
  (void)b.at(0);
  CHECK(b.at(0) == before);
}

TEST_CASE("weights of the two estimators") {
  const double r[] = {0.1, 0.2, 0.5};
  Baseline b(3, 0.9);
  b.values() = {0.3, 0.1, 0.0};
  auto on = on_policy_weights(r, b, 1.0);
  CHECK(on[0] == doctest::Approx(0.8 - 0.3));
  CHECK(on[1] == doctest::Approx(0.7 - 0.1));
  CHECK(on[2] == 0.5);

  // Constant strategy: c^(T - t + 1) (1-based) times the return, times c.
  auto w = off_policy_weights(r, {}, {}, IsStrategy::constant(0.5), Baseline(3, 0.9), 1.0);
  CHECK(w[0] == doctest::Approx(0.5 * 0.125 * 0.8));
  CHECK(w[1] == doctest::Approx(0.5 * 0.25 * 0.7));
  CHECK(w[2] == doctest::Approx(0.5 * 0.5 * 0.5));

  // Estimated strategy: products of the remaining ratios.
  const double pi[] = {0.2, 0.4, 0.9};
  const double q[] = {0.4, 0.2, 0.9};
  auto e = off_policy_weights(r, pi, q, IsStrategy::estimated(), b, 1.0);
  CHECK(e[2] == doctest::Approx(1.0 * (1.0 * 0.5 - 0.0)));
  CHECK(e[1] == doctest::Approx(2.0 * (2.0 * 0.7 - 0.1)));
  CHECK(e[0] == doctest::Approx(0.5 * (1.0 * 0.8 - 0.3)));

  // Long sequences under a large constant stay finite until the true value overflows.
  std::vector<double> longr(200, 0.0);
  longr.back() = 1.0;
  auto big = off_policy_weights(longr, {}, {}, IsStrategy::constant(2.0), Baseline(), 1.0);
  CHECK(std::isfinite(big[0]));
  CHECK(big[0] == doctest::Approx(std::ldexp(1.0, 201)));
  const double short_pi[] = {0.5};
  CHECK_THROWS_AS(off_policy_weights(r, short_pi, short_pi, IsStrategy::estimated(), b, 1.0), std::invalid_argument);
}

TEST_CASE("baseline equal to the return zeroes the gradient") {
  tiny::Mdp m(2, 3, 0.5);
  const std::vector<TokenId> z = {4, 3, Vocabulary::kEos};
  mdp::Episode e = scored(m, m.policy, z, mdp::EpisodeKind::Sampled);
  Baseline b(4, 0.95);
  auto q = mdp::returns(e.rewards, 1.0);
  std::copy(q.begin(), q.end(), b.values().begin());
  CHECK(max_abs(on_policy_gradient(m.policy, e, b, 1.0)) == 0.0);
  CHECK(max_abs(on_policy_gradient(m.policy, e, Baseline(4, 0.95), 1.0)) > 0.0);

  mdp::Episode bad = e;
  bad.actions[0] = 17;
  CHECK_THROWS_AS(on_policy_gradient(m.policy, bad, b, 1.0), std::out_of_range);
  mdp::Episode unscored = e;
  unscored.rewards.clear();
  CHECK_THROWS_AS(on_policy_gradient(m.policy, unscored, b, 1.0), std::invalid_argument);
}

TEST_CASE("expected on-policy estimate equals the enumerated gradient") {
  const auto all = tiny::all_episodes(5, tiny::kMaxLen);
  CHECK(all.size() == 1 + 4 + 16 + 64 + 256);
  for (int k : {1, 2}) {
    tiny::Mdp m(k, 10 + static_cast<std::uint64_t>(k), 0.8);
    double total = 0.0;
    for (const auto& z : all) total += tiny::episode_probability(m.policy, m.context, z);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

    double j = 0.0;
    ParamSet exact = tiny::expected_return_gradient(m, m.policy, all, j);
    CHECK(max_abs(exact) > 1e-4);
    ParamSet zero_b = expected_on_policy(m, m.policy, Baseline(tiny::kMaxLen, 0.95), all);
    CHECK(max_abs_diff(exact, zero_b) < 1e-6);

    Baseline b(tiny::kMaxLen, 0.95);
    b.values() = {0.4, -0.2, 1.3, 0.05};
    ParamSet with_b = expected_on_policy(m, m.policy, b, all);
    CHECK(max_abs_diff(exact, with_b) < 1e-6);
  }
}

TEST_CASE("off-policy estimate reduces to the cross-entropy gradient") {
  tiny::Mdp m(1, 4, 0.5);
  const std::vector<TokenId> y = {3, 4, 3, Vocabulary::kEos};
  mdp::Episode e;
  e.context = m.context;
  e.actions = y;
  e.kind = mdp::EpisodeKind::Reference;
  e.rewards = {0.0, 0.0, 0.0, 1.0};
  ParamSet g = off_policy_gradient(m.policy, e, {}, IsStrategy::constant(1.0), Baseline(), 1.0);

  // Gradient of the teacher-forced negative log-likelihood, negated.
  diff::Tape tape;
  policy::Graph graph(tape, m.policy);
  auto enc = graph.encode(m.context);
  std::vector<diff::Var> lp = graph.teacher_forced(enc, y);
  diff::Var nll = tape.linear(lp, std::vector<double>(lp.size(), -1.0));
  tape.backward(nll);
  ParamSet ce = tape.gradients(m.policy.params());
  ce.scale(-1.0);
  CHECK(max_abs_diff(g, ce) < 1e-10);

  // The same against central differences of the sequence log-likelihood.
  diff::LossFn loss = [&](diff::Tape& t, const ParamSet& ps) {
    policy::Graph gg(t, m.policy, ps);
    auto en = gg.encode(m.context);
    auto steps = gg.teacher_forced(en, y);
    return t.linear(steps, std::vector<double>(steps.size(), 1.0));
  };
  CHECK(diff::grad_check(loss, m.policy.params()).passed);
}

TEST_CASE("self-importance: estimated ratios under pi = q are all one") {
  tiny::Mdp m(2, 6, 0.7);
  const std::vector<TokenId> y = {4, 3, 3, Vocabulary::kEos};
  mdp::Episode e = scored(m, m.policy, y, mdp::EpisodeKind::Reference);
  ModelBehavior q(m.policy);
  auto qp = q.step_probabilities(m.context, y);
  Baseline b(4, 0.9);
  b.values() = {0.1, 0.2, 0.3, 0.4};
  ParamSet est = off_policy_gradient(m.policy, e, qp, IsStrategy::estimated(), b, 1.0);
  ParamSet one = off_policy_gradient(m.policy, e, {}, IsStrategy::constant(1.0), b, 1.0);
  CHECK(max_abs_diff(est, one) < 1e-12);

  std::vector<double> zero_q = qp;
  zero_q[1] = 0.0;
  CHECK_THROWS_AS(off_policy_gradient(m.policy, e, zero_q, IsStrategy::estimated(), b, 1.0), std::domain_error);
  CHECK_THROWS_AS(off_policy_gradient(m.policy, scored(m, m.policy, y, mdp::EpisodeKind::Sampled), qp,
                                      IsStrategy::estimated(), b, 1.0),
                  std::invalid_argument);
}

TEST_CASE("off-policy estimate over data from q") {
  tiny::Mdp m(2, 21, 0.8);
  const policy::Policy q_model(tiny::Mdp::model_config(0.8), 22);
  ModelBehavior q(q_model);
  const auto all = tiny::all_episodes(5, tiny::kMaxLen);
  const Baseline b(tiny::kMaxLen, 0.95);

  auto estimate = [&](const policy::Policy& pi, const std::vector<TokenId>& o) {
    std::vector<double> qp = q.step_probabilities(m.context, o);
    return off_policy_gradient(pi, scored(m, pi, o, mdp::EpisodeKind::Reference), qp, IsStrategy::estimated(), b,
                               1.0);
  };

  SUBCASE("pi = q: its expectation is the on-policy gradient") {
    ParamSet expect = q_model.params().zeros_like();
    for (const auto& o : all) expect.axpy(tiny::episode_probability(q_model, m.context, o), estimate(q_model, o));
    double j = 0.0;
    ParamSet exact = tiny::expected_return_gradient(m, q_model, all, j);
    CHECK(max_abs_diff(expect, exact) < 1e-6);
  }

  SUBCASE("corpus averages converge to the q-weighted expectation") {
    std::vector<double> expect(tiny::flat(m.policy.params()).size(), 0.0);
    tiny::EstimatorCache cache;
    auto f = [&](const std::vector<TokenId>& o) { return estimate(m.policy, o); };
    for (const auto& o : all) {
      const double w = tiny::episode_probability(q_model, m.context, o);
      const auto& g = cache.get(o, f);
      for (std::size_t i = 0; i < g.size(); ++i) expect[i] += w * g[i];
    }
    Rng rng(2024);
    tiny::Moments mom;
    for (int n = 0; n < 20000; ++n) {
      auto ep = mdp::rollout(q_model, m.context, tiny::kMaxLen, rng);
      mom.add(cache.get(ep.actions, f));
    }
    auto s = mom.stats();
    std::size_t outside = 0;
    for (std::size_t i = 0; i < expect.size(); ++i) {
      const double se = std::sqrt(s.variance[i] / static_cast<double>(s.n));
      if (std::abs(s.mean[i] - expect[i]) > 4.0 * se + 1e-12) ++outside;
    }
    CHECK(outside == 0);
  }
}

TEST_CASE("convex combination and Adam steps") {
  ParamSet like;
  like.add("w", diff::Tensor({1, 3}));
  ParamSet on = like.zeros_like(), off = like.zeros_like();
  on[0].values()[0] = 2.0;
  off[0].values()[0] = -1.0;
  off[0].values()[2] = 4.0;
  CHECK(combine(on, off, 0.0) == off);
  CHECK(combine(on, off, 1.0) == on);
  ParamSet mix = combine(on, off, 0.3);
  CHECK(mix[0].values()[0] == doctest::Approx(0.3 * 2.0 - 0.7));
  CHECK(mix[0].values()[2] == doctest::Approx(0.7 * 4.0));

  // Two Adam steps against a hand evaluation of the update rule.
  ParamSet p = like.zeros_like();
  Adam adam(p, 1e-3);
  ParamSet g1 = like.zeros_like(), g2 = like.zeros_like();
  g1[0].values()[0] = 0.5;
  g2[0].values()[0] = -0.25;
  adam.ascend(p, g1);
  CHECK(p[0].values()[0] == doctest::Approx(1e-3 * 0.5 / (0.5 + 1e-8)).epsilon(1e-12));
  adam.ascend(p, g2);
  const double m = 0.9 * 0.1 * 0.5 + 0.1 * -0.25, v = 0.999 * 0.001 * 0.25 + 0.001 * 0.0625;
  const double step2 = 1e-3 * (m / (1 - 0.81)) / (std::sqrt(v / (1 - 0.999 * 0.999)) + 1e-8);
  CHECK(p[0].values()[0] == doctest::Approx(1e-3 * 0.5 / (0.5 + 1e-8) + step2).epsilon(1e-12));
  CHECK(p[0].values()[1] == 0.0);
  CHECK(adam.steps() == 2);

  diff::Checkpoint ck;
  adam.save(ck);
  Adam restored(like, 1e-3);
  restored.load(ck);
  CHECK(restored == adam);

  // Non-finite gradients leave parameters untouched.
  ParamSet before = p;
  ParamSet nan = like.zeros_like();
  nan[0].values()[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(combine_and_update(p, nan, off, 0.5, adam), NonFiniteGradient);
  CHECK(p == before);
  CHECK(adam.steps() == 2);
  ParamSet stepped = combine_and_update(p, on, off, 0.3, adam);
  CHECK(stepped == mix);
  CHECK_FALSE(p == before);
}

TEST_CASE("behavior model fitting") {
  policy::ModelConfig c;
  c.vocab_size = 8;
  c.embedding_dim = 6;
  c.hidden_dim = 8;
  c.attention_dim = 6;
  std::vector<TurnExample> data = {
      {{3, 4}, {5, Vocabulary::kEos}},
      {{4, 3}, {6, 7, Vocabulary::kEos}},
      {{5, 5, 6}, {3, Vocabulary::kEos}},
      {{7}, {4, 4, Vocabulary::kEos}},
  };

  SUBCASE("zero epochs return the initial model") {
    ModelBehavior q = fit_behavior_model(data, c, 0, 1);
    CHECK(q.model().params() == policy::Policy(c, substream_seed(1, "behavior.init")).params());
    for (double p : q.step_probabilities(data[0].context, data[0].target)) CHECK(p > 0.0);
  }

  SUBCASE("a deterministic corpus is learned to near certainty") {
    ModelBehavior q = fit_behavior_model(data, c, 400, 2, 1e-2);
    for (const auto& ex : data) {
      for (double p : q.step_probabilities(ex.context, ex.target)) CHECK(p >= 0.99);
    }
  }

  SUBCASE("held-out perplexity falls across epochs") {
    // Target: first and last context tokens.
    Rng rng(8);
    auto make = [&](std::size_t n) {
      std::vector<TurnExample> out;
      for (std::size_t i = 0; i < n; ++i) {
        TurnExample ex;
        const std::size_t len = 2 + rng.below(3);
        for (std::size_t j = 0; j < len; ++j) ex.context.push_back(static_cast<TokenId>(3 + rng.below(5)));
        ex.target = {ex.context.front(), ex.context.back(), Vocabulary::kEos};
        out.push_back(ex);
      }
      return out;
    };
    auto train = make(60), held = make(20);
    policy::ModelConfig cc = c;
    cc.dropout_keep = 1.0;
    policy::Policy model(cc, 3);
    CrossEntropyTrainer trainer(model, 1e-2, 4);
    double prev = perplexity(model, held);
    for (int epoch = 0; epoch < 4; ++epoch) {
      for (const auto& ex : train) trainer.step(ex);
      const double now = perplexity(model, held);
      CHECK(now < prev);
      prev = now;
    }
  }
  CHECK_THROWS_AS(fit_behavior_model({}, c, 1, 1), std::invalid_argument);
}
