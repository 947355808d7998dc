// End-to-end acceptance checks. One line per criterion:
//   criterion N: PASS|FAIL|SKIP  <title>  <details>  (<seconds>s)

#include "CLI11.hpp"

#include "../common/bleu_oracle.hpp"
#include "../common/tiny_mdp.hpp"
#include "tact/harness.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

using namespace tact;
namespace fs = std::filesystem;
using corpus::TokenId;
using corpus::Vocabulary;

namespace {

enum class Status { Pass, Fail, Skip };

struct Outcome {
  Status status = Status::Fail;
  std::string detail;
};

struct Context {
  fs::path work;
  fs::path source;
  fs::path babi;
  bool long_runs = false;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void progress(const std::string& s) {
  std::fprintf(stderr, "  .. %s\n", s.c_str());
  std::fflush(stderr);
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// ----------------------------------------------------------------------------

Outcome dataset_fidelity(const Context& c) {
  harness::RunConfig cfg;
  for (const auto& f : {cfg.train_file, cfg.valid_file, cfg.test_file}) {
    if (!fs::exists(c.babi / f)) return {Status::Skip, "bAbI task 6 files not found in " + c.babi.string()};
  }
  const harness::Dataset d = harness::load_dataset(c.babi, cfg);
  const corpus::CorpusStats s = corpus::compute_stats(d.train);
  const double vocab = static_cast<double>(d.vocab.size());
  const bool ok = d.train.size() == 1618 && d.valid.size() == 500 && d.test.size() == 1117 &&
                  std::abs(s.avg_context_length - 152.94) <= 0.5 && s.max_context_length == 1556 &&
                  s.max_agent_length == 29 && std::abs(vocab - 1229.0) <= 0.05 * 1229.0;
  return {ok ? Status::Pass : Status::Fail,
          fmt("dialogs %zu/%zu/%zu avg_ctx %.3f max_ctx %zu max_agent %zu vocab %zu", d.train.size(), d.valid.size(),
              d.test.size(), s.avg_context_length, s.max_context_length, s.max_agent_length, d.vocab.size())};
}

// ----------------------------------------------------------------------------

Outcome bleu_oracle(const Context&) {
  Rng rng(substream_seed(7, "acceptance.bleu"));
  auto sentence = [&] {
    std::vector<TokenId> s(1 + rng.below(15));
    for (auto& t : s) t = static_cast<TokenId>(3 + rng.below(6));
    return s;
  };
  auto words = [](const std::vector<TokenId>& v) {
    oracle::Sentence s;
    for (auto t : v) s.push_back("w" + std::to_string(t));
    return s;
  };
  double worst = 0.0;
  bool identity = true;
  for (int i = 0; i < 100; ++i) {
    const auto cand = sentence();
    const auto ref = sentence();
    for (bool smooth : {false, true}) {
      const bleu::BleuConfig cfg{4, smooth ? bleu::Smoothing::AddOneForNGe2 : bleu::Smoothing::None};
      worst = std::max(worst, std::abs(bleu::sentence_bleu(cand, ref, cfg) -
                                       oracle::sentence_bleu(words(cand), words(ref), 4, smooth)));
    }
    identity = identity && bleu::sentence_bleu(cand, cand, {4, bleu::Smoothing::None}) == 1.0;
  }
  return {worst < 1e-9 && identity ? Status::Pass : Status::Fail,
          fmt("max |diff| %.3g over 100 pairs x 2 smoothings, identity exact: %s", worst, identity ? "yes" : "no")};
}

// ----------------------------------------------------------------------------

Outcome gradient_correctness(const Context&) {
  const harness::GradCheckResult r = harness::gradcheck(1);
  std::ostringstream os;
  os << "on-policy max rel " << r.on_policy.max_rel_error << ", off-policy max rel " << r.off_policy.max_rel_error;
  const bool ok = r.passed() && r.on_policy.max_rel_error < 1e-4 && r.off_policy.max_rel_error < 1e-4;
  return {ok ? Status::Pass : Status::Fail, os.str()};
}

// ----------------------------------------------------------------------------

// The process shared by the estimator and baseline criteria.
tiny::Mdp criterion_mdp() { return tiny::Mdp(2, 11, 0.9); }

mdp::Episode sampled_episode(const tiny::Mdp& m, const std::vector<TokenId>& z) {
  mdp::Episode e;
  e.context = m.context;
  e.actions = z;
  e.rewards = m.rewards(z);
  e.truncated = z.back() != Vocabulary::kEos;
  return e;
}

Outcome estimator_exactness(const Context&) {
  const tiny::Mdp m = criterion_mdp();
  const auto all = tiny::all_episodes(5, tiny::kMaxLen);
  double value = 0.0;
  const auto exact = tiny::flat(tiny::expected_return_gradient(m, m.policy, all, value));

  learner::Baseline zero(tiny::kMaxLen, 0.95);
  learner::Baseline fixed(tiny::kMaxLen, 0.95);
  fixed.values() = {0.5, 0.3, -0.2, 0.8};
  tiny::EstimatorCache cache;
  auto estimate = [&](const std::vector<TokenId>& z) {
    return learner::on_policy_gradient(m.policy, sampled_episode(m, z), zero, 1.0);
  };
  std::vector<double> expect_zero(exact.size(), 0.0), expect_fixed(exact.size(), 0.0);
  for (const auto& z : all) {
    const double p = tiny::episode_probability(m.policy, m.context, z);
    const auto& g = cache.get(z, estimate);
    const auto gb = tiny::flat(learner::on_policy_gradient(m.policy, sampled_episode(m, z), fixed, 1.0));
    for (std::size_t i = 0; i < g.size(); ++i) {
      expect_zero[i] += p * g[i];
      expect_fixed[i] += p * gb[i];
    }
  }
  const double enum_err = std::max(max_abs_diff(expect_zero, exact), max_abs_diff(expect_fixed, exact));

  Rng rng(substream_seed(4, "acceptance.mc"));
  tiny::Moments mom;
  const int n = 50000;
  for (int i = 0; i < n; ++i) mom.add(cache.get(mdp::rollout(m.policy, m.context, tiny::kMaxLen, rng).actions, estimate));
  const auto s = mom.stats();
  std::size_t outside = 0;
  double worst_z = 0.0;
  for (std::size_t i = 0; i < exact.size(); ++i) {
    const double se = std::sqrt(s.variance[i] / static_cast<double>(s.n));
    const double dev = std::abs(s.mean[i] - exact[i]);
    if (se > 0.0) worst_z = std::max(worst_z, dev / se);
    if (dev > 3.0 * se + 1e-12) ++outside;
  }
  double scale = 0.0;
  for (double v : exact) scale = std::max(scale, std::abs(v));
  const bool ok = enum_err < 1e-6 && outside == 0;
  return {ok ? Status::Pass : Status::Fail,
          fmt("enumeration max |diff| %.3g (max |grad| %.3g); MC n=%d: %zu/%zu coords beyond 3 SE, worst %.2f SE",
              enum_err, scale, n, outside, exact.size(), worst_z)};
}

// ----------------------------------------------------------------------------

fs::path synth_corpus(const Context& c, const synth::SynthConfig& s, const std::string& name) {
  const fs::path dir = c.work / name;
  std::ifstream in(dir / synth::kConfigFile);
  std::stringstream existing;
  existing << in.rdbuf();
  if (existing.str() != s.to_text()) synth::write_corpus(s, dir);
  return dir;
}

harness::RunConfig synth_run_config(const Context& c) {
  return harness::load_run_config(c.source / "configs" / "synth.cfg");
}

Outcome cross_entropy_reduction(const Context& c) {
  // Gradient identity on the tiny process.
  tiny::Mdp m(1, 4, 0.7);
  const std::vector<TokenId> y = {3, 4, 4, Vocabulary::kEos};
  mdp::Episode e;
  e.context = m.context;
  e.actions = y;
  e.kind = mdp::EpisodeKind::Reference;
  e.rewards = {0.0, 0.0, 0.0, 1.0};
  const auto off = tiny::flat(learner::off_policy_gradient(m.policy, e, {}, learner::IsStrategy::constant(1.0),
                                                           learner::Baseline(), 1.0));
  diff::Tape tape;
  policy::Graph graph(tape, m.policy);
  auto enc = graph.encode(m.context);
  auto lp = graph.teacher_forced(enc, y);
  tape.backward(tape.linear(lp, std::vector<double>(lp.size(), -1.0)));
  auto ce = tiny::flat(tape.gradients(m.policy.params()));
  for (double& v : ce) v = -v;
  const double grad_err = max_abs_diff(off, ce);

  // Trajectory against an independent teacher-forced trainer.
  synth::SynthConfig s;
  s.num_dialogs = 120;
  s.num_valid = 20;
  s.num_test = 20;
  s.seed = 31;
  const fs::path data = synth_corpus(c, s, "ce_corpus");
  harness::RunConfig cfg = synth_run_config(c);
  cfg.epochs = 2;
  cfg.seed = 9;
  cfg.model.embedding_dim = 16;
  cfg.model.hidden_dim = 24;
  cfg.model.attention_dim = 24;
  cfg.learner.lambda_e = 0.0;
  cfg.learner.is = learner::IsStrategy::constant(1.0);
  cfg.learner.baseline = learner::BaselineKind::Zero;
  cfg.reward.gamma = 1.0;
  cfg.reward.shaping = mdp::Shaping::None;
  cfg.reward.dialog_level = false;
  const harness::Dataset ds = harness::load_dataset(data, cfg);

  std::vector<double> trainer_loss;
  harness::Trainer t(cfg, ds, c.work / "ce_run");
  t.on_step = [&](const harness::StepRecord& r) { trainer_loss.push_back(r.reference_nll); };
  t.run();

  policy::ModelConfig mc = cfg.model;
  mc.vocab_size = ds.vocab.size();
  policy::Policy reference(mc, substream_seed(cfg.seed, "init"));
  learner::CrossEntropyTrainer ce_trainer(reference, cfg.learner.learning_rate, substream_seed(cfg.seed, "dropout"));
  Rng shuffle(substream_seed(cfg.seed, "shuffle"));
  std::vector<double> ce_loss;
  std::vector<std::size_t> order(ds.train.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle.shuffle(order);
    for (std::size_t i : order) {
      const auto& d = ds.train[i];
      const auto ctx = corpus::build_contexts(d, ds.vocab);
      for (std::size_t k = 0; k < d.K(); ++k) {
        ce_loss.push_back(ce_trainer.step({ctx[k].tokens, corpus::encode_target(d.turns[k].agent, ds.vocab)}));
      }
    }
  }
  double worst = 0.0;
  const bool same_len = ce_loss.size() == trainer_loss.size();
  if (same_len) {
    for (std::size_t i = 0; i < ce_loss.size(); ++i) {
      worst = std::max(worst, std::abs(trainer_loss[i] - ce_loss[i]) / std::max(std::abs(ce_loss[i]), 1e-12));
    }
  }
  const bool ok = grad_err < 1e-10 && same_len && worst <= 1e-4;
  return {ok ? Status::Pass : Status::Fail,
          fmt("gradient max |diff| %.3g; %zu steps, max relative loss gap %.3g (first %.4f last %.4f)", grad_err,
              ce_loss.size(), worst, ce_loss.empty() ? 0.0 : ce_loss.front(), ce_loss.empty() ? 0.0 : ce_loss.back())};
}

// ----------------------------------------------------------------------------

Outcome shaping_telescoping(const Context&) {
  Rng rng(substream_seed(6, "acceptance.shaping"));
  const std::vector<std::string> words = {"a", "b", "c", "d", "e", "f", "api_call"};
  const mdp::RewardConfig cfg;
  double worst = 0.0;
  std::size_t terminal_mismatch = 0;
  for (int i = 0; i < 1000; ++i) {
    auto sentence = [&](std::size_t max_len) {
      std::vector<std::string> s(1 + rng.below(max_len));
      for (auto& w : s) w = words[rng.below(words.size())];
      return s;
    };
    std::vector<std::string> y = sentence(10);
    if (rng.below(3) == 0) y[0] = "api_call";
    std::string agent;
    for (const auto& w : y) agent += (agent.empty() ? "" : " ") + w;
    const auto dialog = corpus::parse_transcripts_text("1 hello\t" + agent + "\n").at(0);
    Vocabulary vocab;
    for (const auto& w : words) vocab.add(w);
    const auto ref = mdp::make_reference(dialog, 1, vocab);
    std::vector<TokenId> z = vocab.encode(sentence(12));
    if (rng.below(2) == 0) z.push_back(Vocabulary::kEos);
    const auto r = mdp::shaped_rewards(z, ref, vocab, cfg);
    const double head = std::accumulate(r.begin(), r.end() - 1, 0.0);
    oracle::Sentence prefix;
    for (std::size_t t = 0; t + 1 < z.size(); ++t) {
      if (z[t] != Vocabulary::kEos) prefix.push_back(vocab.token(z[t]));
    }
    const double want = prefix.empty() ? 0.0 : oracle::sentence_bleu(prefix, dialog.turns[0].agent.tokens, 4, true);
    worst = std::max(worst, std::abs(head - want));
    if (r.back() != mdp::utterance_reward(z, ref, vocab, cfg)) ++terminal_mismatch;
  }
  return {worst < 1e-9 && terminal_mismatch == 0 ? Status::Pass : Status::Fail,
          fmt("max |sum r_t - BLEU(prefix)| %.3g over 1000 pairs; terminal mismatches %zu", worst, terminal_mismatch)};
}

// ----------------------------------------------------------------------------

// Exact per-coordinate variances of the on-policy estimator by enumeration.
std::vector<double> exact_variance(const tiny::Mdp& m, const learner::Baseline& b,
                                   const std::vector<std::vector<TokenId>>& all) {
  std::vector<double> m1, m2;
  for (const auto& z : all) {
    const double p = tiny::episode_probability(m.policy, m.context, z);
    const auto g = tiny::flat(learner::on_policy_gradient(m.policy, sampled_episode(m, z), b, 1.0));
    if (m1.empty()) m1.assign(g.size(), 0.0), m2.assign(g.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      m1[i] += p * g[i];
      m2[i] += p * g[i] * g[i];
    }
  }
  for (std::size_t i = 0; i < m1.size(); ++i) m2[i] -= m1[i] * m1[i];
  return m2;
}

std::pair<std::size_t, std::size_t> reduced_count(const std::vector<double>& with_b, const std::vector<double>& without_b,
                                                  double zero_tol) {
  std::size_t counted = 0, reduced = 0;
  for (std::size_t i = 0; i < with_b.size(); ++i) {
    if (std::abs(with_b[i]) <= zero_tol && std::abs(without_b[i]) <= zero_tol) continue;
    ++counted;
    if (with_b[i] <= without_b[i]) ++reduced;
  }
  return {reduced, counted};
}

Outcome baseline_variance(const Context&) {
  const tiny::Mdp m = criterion_mdp();
  learner::Baseline ema(tiny::kMaxLen, 0.95);
  Rng warm(substream_seed(8, "acceptance.warmup"));
  for (int i = 0; i < 5000; ++i) {
    auto ep = sampled_episode(m, mdp::rollout(m.policy, m.context, tiny::kMaxLen, warm).actions);
    ema.update(mdp::returns(ep.rewards, 1.0));
  }
  const learner::Baseline zero(tiny::kMaxLen, 0.95);
  tiny::EstimatorCache with_b, without_b;
  tiny::Moments mb, mz;
  Rng rng(substream_seed(8, "acceptance.variance"));
  for (int i = 0; i < 10000; ++i) {
    const auto z = mdp::rollout(m.policy, m.context, tiny::kMaxLen, rng).actions;
    mb.add(with_b.get(z, [&](const auto& a) { return learner::on_policy_gradient(m.policy, sampled_episode(m, a), ema, 1.0); }));
    mz.add(without_b.get(z, [&](const auto& a) { return learner::on_policy_gradient(m.policy, sampled_episode(m, a), zero, 1.0); }));
  }
  const auto [reduced, counted] = reduced_count(mb.stats().variance, mz.stats().variance, 0.0);
  const double frac = counted ? static_cast<double>(reduced) / static_cast<double>(counted) : 0.0;

  // The same comparison without sampling noise, for the record.
  const auto all = tiny::all_episodes(5, tiny::kMaxLen);
  const auto [exact_reduced, exact_counted] =
      reduced_count(exact_variance(m, ema, all), exact_variance(m, zero, all), 1e-18);

  std::ostringstream b;
  for (double v : ema.values()) b << (b.tellp() ? " " : "") << fmt("%.3f", v);
  return {frac >= 0.9 ? Status::Pass : Status::Fail,
          fmt("variance reduced on %zu/%zu coordinates (%.1f%%) over 10000 episodes; exact by enumeration %zu/%zu;"
              " frozen EMA baseline [%s]",
              reduced, counted, 100.0 * frac, exact_reduced, exact_counted, b.str().c_str())};
}

// ----------------------------------------------------------------------------

synth::SynthConfig default_synth() { return synth::SynthConfig{}; }

struct SynthRun {
  std::optional<std::size_t> reach_epoch;  // first epoch with valid API exact match >= 0.90
  std::size_t epochs_run = 0;
  eval::EvalReport test;
};

SynthRun train_synth(const Context& c, const fs::path& data, double lambda_e, std::uint64_t seed,
                     std::size_t epochs, bool stop_at_reach) {
  harness::RunConfig cfg = synth_run_config(c);
  cfg.learner.lambda_e = lambda_e;
  cfg.seed = seed;
  cfg.epochs = epochs;
  const fs::path out = c.work / fmt("synth_le%.1f_seed%llu", lambda_e, static_cast<unsigned long long>(seed));
  fs::remove_all(out);
  harness::Trainer t(cfg, harness::load_dataset(data, cfg), out);
  SynthRun run;
  t.on_eval = [&](const harness::MetricsRow& r) {
    progress(fmt("lambda_e %.1f seed %llu epoch %zu: valid acc %.4f api_em %.4f bleu %.4f", lambda_e,
                 static_cast<unsigned long long>(seed), r.epoch, r.report.per_response_accuracy,
                 r.report.api_exact_match, r.report.bleu));
    run.epochs_run = r.epoch;
    if (!run.reach_epoch && !r.report.exact_match_undefined && r.report.api_exact_match >= 0.90) run.reach_epoch = r.epoch;
  };
  // A validation accuracy of 1 cannot be beaten under the selection rule, so later epochs cannot change the result.
  t.stop_when = [&](const harness::MetricsRow& r) {
    return (stop_at_reach && run.reach_epoch) || r.report.per_response_accuracy == 1.0;
  };
  t.run();
  if (!stop_at_reach) run.test = harness::evaluate(out / harness::Trainer::kBestCheckpoint, "test", data);
  return run;
}

Outcome synthetic_end_to_end(const Context& c) {
  const fs::path data = synth_corpus(c, default_synth(), "synth_corpus");
  std::string detail;
  bool ok = true;
  for (std::uint64_t seed : {1, 2, 3}) {
    const SynthRun r = train_synth(c, data, 0.3, seed, 30, false);
    const bool pass = r.test.api_exact_match >= 0.95 && r.test.per_response_accuracy >= 0.90;
    ok = ok && pass;
    detail += fmt("%sseed %llu: test api_em %.4f acc %.4f (%zu epochs)", detail.empty() ? "" : "; ",
                  static_cast<unsigned long long>(seed), r.test.api_exact_match, r.test.per_response_accuracy,
                  r.epochs_run);
  }
  return {ok ? Status::Pass : Status::Fail, detail};
}

Outcome acceleration(const Context& c) {
  const fs::path data = synth_corpus(c, default_synth(), "synth_corpus");
  std::string detail;
  bool ok = true;
  for (std::uint64_t seed : {1, 2, 3}) {
    const SynthRun mixed = train_synth(c, data, 0.3, seed, 30, true);
    std::string on_policy = "not run";
    bool pass = false;
    if (mixed.reach_epoch) {
      // lambda_e = 1 only needs to run as long as the mixed run took: reaching later is a pass either way.
      const SynthRun pure = train_synth(c, data, 1.0, seed, *mixed.reach_epoch, true);
      pass = !pure.reach_epoch.has_value();
      on_policy = pure.reach_epoch ? fmt("epoch %zu", *pure.reach_epoch)
                                   : fmt("not within %zu epochs", *mixed.reach_epoch);
    }
    ok = ok && pass;
    detail += fmt("%sseed %llu: lambda_e 0.3 reaches at %s, lambda_e 1.0 %s", detail.empty() ? "" : "; ",
                  static_cast<unsigned long long>(seed),
                  mixed.reach_epoch ? fmt("epoch %zu", *mixed.reach_epoch).c_str() : "never", on_policy.c_str());
  }
  return {ok ? Status::Pass : Status::Fail, detail};
}

// ----------------------------------------------------------------------------

Outcome babi_directional(const Context& c) {
  harness::RunConfig cfg = harness::load_run_config(c.source / "configs" / "babi.cfg");
  for (const auto& f : {cfg.train_file, cfg.valid_file, cfg.test_file}) {
    if (!fs::exists(c.babi / f)) return {Status::Skip, "bAbI task 6 files not found in " + c.babi.string()};
  }
  if (!c.long_runs) return {Status::Skip, "multi-day run; set TACT_LONG_RUNS=1 to enable"};
  const harness::Dataset d = harness::load_dataset(c.babi, cfg);
  auto run = [&](harness::RunConfig rc, const std::string& name) {
    harness::Trainer t(rc, d, c.work / name);
    t.on_eval = [&](const harness::MetricsRow& r) {
      progress(fmt("%s epoch %zu: valid acc %.4f api_em %.4f", name.c_str(), r.epoch, r.report.per_response_accuracy,
                   r.report.api_exact_match));
    };
    t.run();
    return harness::evaluate(c.work / name / harness::Trainer::kBestCheckpoint, "test", c.babi);
  };
  const eval::EvalReport full = run(cfg, "babi_algorithm1");
  harness::RunConfig ce = cfg;
  ce.learner.lambda_e = 0.0;
  ce.learner.is = learner::IsStrategy::constant(1.0);
  ce.learner.baseline = learner::BaselineKind::Zero;
  ce.reward.shaping = mdp::Shaping::None;
  ce.reward.dialog_level = false;
  const eval::EvalReport base = run(ce, "babi_cross_entropy");
  const bool ok = full.api_exact_match > base.api_exact_match && full.per_response_accuracy > base.per_response_accuracy;
  return {ok ? Status::Pass : Status::Fail,
          fmt("api_em %.4f vs %.4f, acc %.4f vs %.4f", full.api_exact_match, base.api_exact_match,
              full.per_response_accuracy, base.per_response_accuracy)};
}

struct Criterion {
  int id;
  const char* title;
  Outcome (*run)(const Context&);
};

const Criterion kCriteria[] = {
    {1, "dataset fidelity", dataset_fidelity},
    {2, "BLEU oracle equivalence", bleu_oracle},
    {3, "gradient correctness", gradient_correctness},
    {4, "estimator exactness", estimator_exactness},
    {5, "cross-entropy reduction", cross_entropy_reduction},
    {6, "reward shaping telescoping", shaping_telescoping},
    {7, "baseline variance reduction", baseline_variance},
    {8, "synthetic end-to-end", synthetic_end_to_end},
    {9, "off-policy acceleration", acceleration},
    {10, "bAbI directional check", babi_directional},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  Context c;
  c.source = TACT_SOURCE_DIR;
  c.work = fs::temp_directory_path() / "tact_acceptance";
  app.add_option("--only", only, "Criteria to run (default: all)");
  app.add_option("--work-dir", c.work, "Scratch directory for corpora and runs");
  CLI11_PARSE(app, argc, argv);

  const char* babi = std::getenv("TACT_BABI_DIR");
  c.babi = babi ? fs::path(babi) : c.source / "data" / "babi";
  const char* long_runs = std::getenv("TACT_LONG_RUNS");
  c.long_runs = long_runs && std::string(long_runs) == "1";
  fs::create_directories(c.work);

  int failed = 0, passed = 0, skipped = 0;
  for (const auto& cr : kCriteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), cr.id) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = cr.run(c);
    } catch (const std::exception& e) {
      o = {Status::Fail, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const char* tag = o.status == Status::Pass ? "PASS" : o.status == Status::Skip ? "SKIP" : "FAIL";
    std::printf("criterion %d: %s  %s  %s  (%.1fs)\n", cr.id, tag, cr.title, o.detail.c_str(), secs);
    std::fflush(stdout);
    (o.status == Status::Pass ? passed : o.status == Status::Skip ? skipped : failed)++;
  }
  if (failed) return 1;
  if (skipped && !passed) return 77;
  return 0;
}
