#pragma once

#include "tact/config.hpp"
#include "tact/diff/checkpoint.hpp"
#include "tact/diff/grad_check.hpp"
#include "tact/eval.hpp"
#include "tact/learner.hpp"
#include "tact/mdp.hpp"
#include "tact/policy.hpp"
#include "tact/synth.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace tact::harness {

enum class BehaviorSource { Model, Exact };

struct RunConfig {
  mdp::RewardConfig reward;
  learner::LearnerConfig learner;
  policy::ModelConfig model;  // vocab_size is taken from the training data
  std::size_t max_decode_len = 35;
  std::size_t epochs = 20;
  std::uint64_t seed = 1;
  std::size_t eval_every = 0;  // steps between validations; 0 = end of each epoch only
  std::size_t max_steps = 0;   // stop (and save a resumable checkpoint) after this many steps; 0 = no limit
  std::string train_file = "dialog-babi-task6-dstc2-trn.txt";
  std::string valid_file = "dialog-babi-task6-dstc2-dev.txt";
  std::string test_file = "dialog-babi-task6-dstc2-tst.txt";
  BehaviorSource behavior = BehaviorSource::Model;
  std::size_t behavior_epochs = 5;
  eval::EvalConfig eval;

  void validate() const;
  std::string to_text() const;
};

/// Reads documented keys; unknown keys are an error.
RunConfig parse_run_config(KeyValues kv);
RunConfig load_run_config(const std::filesystem::path& path);

struct Dataset {
  std::vector<corpus::Dialog> train, valid, test;
  corpus::Vocabulary vocab;  // built from the training split
  std::optional<synth::SynthConfig> synth;  // present when the directory holds a synthetic corpus
};

/// Parses all three splits; missing files raise before any training.
Dataset load_dataset(const std::filesystem::path& dir, const RunConfig& cfg);
std::vector<corpus::Dialog> load_split(const std::filesystem::path& dir, const RunConfig& cfg,
                                       const std::string& split);

/// One row of the metrics curve.
struct MetricsRow {
  std::size_t step = 0;
  std::size_t epoch = 0;
  eval::EvalReport report;
  double mean_sampled_return = 0.0;
  double mean_grad_norm = 0.0;
  bool best = false;
};

std::string metrics_header();
std::string metrics_line(const MetricsRow& row);
std::vector<MetricsRow> read_metrics(const std::filesystem::path& path);

/// Per-step diagnostics.
struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double reference_nll = 0.0;   // -log pi(y) before the update (0 when the off-policy term is off)
  double sampled_return = 0.0;  // sum of shaped rewards of the rollout (0 when on-policy is off)
  std::size_t sampled_length = 0;
  double grad_norm = 0.0;
};

/// Training loop: per epoch, dialogs in seeded random order; per turn, one
/// rollout, both gradients, one combined Adam step.
class Trainer {
 public:
  Trainer(RunConfig cfg, Dataset data, std::filesystem::path out_dir);
  ~Trainer();

  /// Loads last.ckpt from the output directory and continues from it.
  void resume();
  /// Trains until the epoch budget or max_steps is spent. Returns the rows written.
  std::vector<MetricsRow> run();
  /// One update on dialog `d`, turn k (1-based).
  StepRecord train_turn(const corpus::Dialog& d, int k, const std::vector<corpus::TokenId>& context);

  const policy::Policy& policy() const { return policy_; }
  const learner::Baseline& baseline() const { return baseline_; }
  const RunConfig& config() const { return cfg_; }
  const Dataset& data() const { return data_; }
  std::size_t step() const { return step_; }
  std::optional<MetricsRow> best() const { return best_; }

  std::function<void(const StepRecord&)> on_step;
  std::function<void(const MetricsRow&)> on_eval;
  /// Stops after the current epoch when it returns true.
  std::function<bool(const MetricsRow&)> stop_when;

  static constexpr const char* kBestCheckpoint = "best.ckpt";
  static constexpr const char* kLastCheckpoint = "last.ckpt";
  static constexpr const char* kMetricsFile = "metrics.csv";
  static constexpr const char* kVocabFile = "vocab.txt";

 private:
  MetricsRow validate_now();
  void save(const std::filesystem::path& path, bool with_state) const;
  void new_epoch_order();

  RunConfig cfg_;
  Dataset data_;
  std::filesystem::path out_;
  policy::Policy policy_;
  learner::Adam adam_;
  learner::Baseline baseline_;
  Rng shuffle_rng_, rollout_rng_, dropout_rng_;
  std::unique_ptr<synth::ScriptedAgent> agent_;
  std::unique_ptr<learner::BehaviorPolicy> behavior_;
  std::vector<std::size_t> order_;
  std::size_t epoch_ = 0, position_ = 0, turn_ = 0, step_ = 0;
  double return_sum_ = 0.0, norm_sum_ = 0.0;
  std::size_t rollouts_ = 0, norms_ = 0;
  std::optional<MetricsRow> best_;
};

/// Model, vocabulary and run configuration saved by the trainer.
struct LoadedModel {
  policy::Policy policy;
  corpus::Vocabulary vocab;
  RunConfig config;
};
/// Throws when the checkpoint's tensors disagree with its vocabulary or config.
LoadedModel load_model(const std::filesystem::path& checkpoint);

/// Evaluates a saved checkpoint on a split (train, valid or test) and writes
/// <checkpoint stem>.<split>.txt and .json beside it unless `write` is false.
eval::EvalReport evaluate(const std::filesystem::path& checkpoint, const std::string& split,
                          const std::filesystem::path& data_dir, bool write = true);

struct GradCheckResult {
  diff::GradCheckReport on_policy;
  diff::GradCheckReport off_policy;
  bool passed() const { return on_policy.passed && off_policy.passed; }
};
/// Finite-difference check of the full on-policy and off-policy surrogates on
/// a miniature model (vocab 5, dims 4). `configure_tape` may inject faults.
GradCheckResult gradcheck(std::uint64_t seed = 1, std::function<void(diff::Tape&)> configure_tape = {});

}  // namespace tact::harness
