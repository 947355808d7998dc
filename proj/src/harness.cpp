#include "tact/harness.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace tact::harness {

namespace fs = std::filesystem;
using corpus::TokenId;
using diff::Tape;
using diff::Var;

namespace {

const char* shaping_name(mdp::Shaping s) {
  switch (s) {
    case mdp::Shaping::Potential: return "potential";
    case mdp::Shaping::Strict: return "strict";
    case mdp::Shaping::None: return "none";
  }
  return "?";
}

const char* is_name(learner::IsKind k) {
  switch (k) {
    case learner::IsKind::Constant: return "constant";
    case learner::IsKind::Clipped: return "clipped";
    case learner::IsKind::Estimated: return "estimated";
  }
  return "?";
}

const char* smoothing_name(bleu::Smoothing s) { return s == bleu::Smoothing::None ? "none" : "add_one"; }

template <typename E>
E pick(const std::string& key, const std::string& value, std::initializer_list<std::pair<const char*, E>> options) {
  std::string names;
  for (const auto& [n, e] : options) {
    if (value == n) return e;
    names += std::string(names.empty() ? "" : ", ") + n;
  }
  throw std::invalid_argument("bad value '" + value + "' for " + key + " (expected one of: " + names + ")");
}

}  // namespace

void RunConfig::validate() const {
  reward.validate();
  learner.validate();
  if (max_decode_len == 0) throw std::invalid_argument("train.max_decode_len must be positive");
  if (model.embedding_dim == 0 || model.hidden_dim == 0 || model.attention_dim == 0) {
    throw std::invalid_argument("model dimensions must be positive");
  }
  if (!(model.dropout_keep > 0.0 && model.dropout_keep <= 1.0)) {
    throw std::invalid_argument("model.dropout_keep must be in (0,1]");
  }
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  os << "reward.lambda_a = " << format_double(reward.lambda_a) << "\n"
     << "reward.lambda_b = " << format_double(reward.lambda_b) << "\n"
     << "reward.lambda_c = " << format_double(reward.lambda_c) << "\n"
     << "reward.lambda_d = " << format_double(reward.lambda_d) << "\n"
     << "reward.gamma = " << format_double(reward.gamma) << "\n"
     << "reward.shaping = " << shaping_name(reward.shaping) << "\n"
     << "reward.dialog_level = " << (reward.dialog_level ? "true" : "false") << "\n"
     << "reward.k_prime_rule = "
     << (reward.k_prime_rule == mdp::KPrimeRule::NearestFutureFirst ? "nearest_future" : "nearest_past") << "\n"
     << "reward.bleu_smoothing = " << smoothing_name(reward.bleu.smoothing) << "\n"
     << "learner.lambda_e = " << format_double(learner.lambda_e) << "\n"
     << "learner.is_strategy = " << is_name(learner.is.kind) << "\n";
  if (learner.is.kind == learner::IsKind::Constant) os << "learner.is_constant = " << format_double(learner.is.value) << "\n";
  if (learner.is.kind == learner::IsKind::Clipped) os << "learner.is_clip = " << format_double(learner.is.value) << "\n";
  os << "learner.learning_rate = " << format_double(learner.learning_rate) << "\n"
     << "learner.baseline = " << (learner.baseline == learner::BaselineKind::Ema ? "ema" : "zero") << "\n"
     << "learner.baseline_decay = " << format_double(learner.baseline_decay) << "\n"
     << "learner.off_policy_baseline = " << (learner.off_policy_baseline ? "true" : "false") << "\n"
     << "model.embedding_dim = " << model.embedding_dim << "\n"
     << "model.hidden_dim = " << model.hidden_dim << "\n"
     << "model.attention_dim = " << model.attention_dim << "\n"
     << "model.dropout_keep = " << format_double(model.dropout_keep) << "\n"
     << "model.init_scale = " << format_double(model.init_scale) << "\n"
     << "behavior.source = " << (behavior == BehaviorSource::Model ? "model" : "exact") << "\n"
     << "behavior.epochs = " << behavior_epochs << "\n"
     << "train.max_decode_len = " << max_decode_len << "\n"
     << "train.epochs = " << epochs << "\n"
     << "train.seed = " << seed << "\n"
     << "train.eval_every = " << eval_every << "\n"
     << "train.max_steps = " << max_steps << "\n"
     << "train.train_file = " << train_file << "\n"
     << "train.valid_file = " << valid_file << "\n"
     << "train.test_file = " << test_file << "\n"
     << "eval.bleu_smoothing = " << smoothing_name(eval.bleu.smoothing) << "\n";
  return os.str();
}

RunConfig parse_run_config(KeyValues kv) {
  RunConfig c;
  auto& r = c.reward;
  r.lambda_a = kv.get("reward.lambda_a", r.lambda_a);
  r.lambda_b = kv.get("reward.lambda_b", r.lambda_b);
  r.lambda_c = kv.get("reward.lambda_c", r.lambda_c);
  r.lambda_d = kv.get("reward.lambda_d", r.lambda_d);
  r.gamma = kv.get("reward.gamma", r.gamma);
  r.shaping = pick<mdp::Shaping>("reward.shaping", kv.get("reward.shaping", std::string("potential")),
                                 {{"potential", mdp::Shaping::Potential}, {"strict", mdp::Shaping::Strict}, {"none", mdp::Shaping::None}});
  r.dialog_level = kv.get("reward.dialog_level", r.dialog_level);
  r.k_prime_rule = pick<mdp::KPrimeRule>(
      "reward.k_prime_rule", kv.get("reward.k_prime_rule", std::string("nearest_future")),
      {{"nearest_future", mdp::KPrimeRule::NearestFutureFirst}, {"nearest_past", mdp::KPrimeRule::NearestPastFirst}});
  r.bleu.smoothing = pick<bleu::Smoothing>("reward.bleu_smoothing", kv.get("reward.bleu_smoothing", std::string("add_one")),
                                           {{"add_one", bleu::Smoothing::AddOneForNGe2}, {"none", bleu::Smoothing::None}});

  auto& l = c.learner;
  l.lambda_e = kv.get("learner.lambda_e", l.lambda_e);
  const auto kind = pick<learner::IsKind>(
      "learner.is_strategy", kv.get("learner.is_strategy", std::string("constant")),
      {{"constant", learner::IsKind::Constant}, {"clipped", learner::IsKind::Clipped}, {"estimated", learner::IsKind::Estimated}});
  const double constant = kv.get("learner.is_constant", 1.0);
  const double clip = kv.get("learner.is_clip", 5.0);
  l.is = kind == learner::IsKind::Constant  ? learner::IsStrategy::constant(constant)
         : kind == learner::IsKind::Clipped ? learner::IsStrategy::clipped(clip)
                                            : learner::IsStrategy::estimated();
  l.learning_rate = kv.get("learner.learning_rate", l.learning_rate);
  l.baseline = pick<learner::BaselineKind>("learner.baseline", kv.get("learner.baseline", std::string("ema")),
                                           {{"ema", learner::BaselineKind::Ema}, {"zero", learner::BaselineKind::Zero}});
  l.baseline_decay = kv.get("learner.baseline_decay", l.baseline_decay);
  l.off_policy_baseline = kv.get("learner.off_policy_baseline", l.off_policy_baseline);

  auto& m = c.model;
  m.embedding_dim = kv.get("model.embedding_dim", m.embedding_dim);
  m.hidden_dim = kv.get("model.hidden_dim", m.hidden_dim);
  m.attention_dim = kv.get("model.attention_dim", m.attention_dim);
  m.dropout_keep = kv.get("model.dropout_keep", m.dropout_keep);
  m.init_scale = kv.get("model.init_scale", m.init_scale);

  c.behavior = pick<BehaviorSource>("behavior.source", kv.get("behavior.source", std::string("model")),
                                    {{"model", BehaviorSource::Model}, {"exact", BehaviorSource::Exact}});
  c.behavior_epochs = kv.get("behavior.epochs", c.behavior_epochs);
  c.max_decode_len = kv.get("train.max_decode_len", c.max_decode_len);
  c.epochs = kv.get("train.epochs", c.epochs);
  c.seed = static_cast<std::uint64_t>(kv.get("train.seed", static_cast<std::size_t>(c.seed)));
  c.eval_every = kv.get("train.eval_every", c.eval_every);
  c.max_steps = kv.get("train.max_steps", c.max_steps);
  c.train_file = kv.get("train.train_file", c.train_file);
  c.valid_file = kv.get("train.valid_file", c.valid_file);
  c.test_file = kv.get("train.test_file", c.test_file);
  c.eval.bleu.smoothing = pick<bleu::Smoothing>("eval.bleu_smoothing", kv.get("eval.bleu_smoothing", std::string("none")),
                                                {{"add_one", bleu::Smoothing::AddOneForNGe2}, {"none", bleu::Smoothing::None}});
  c.eval.max_decode_len = c.max_decode_len;
  kv.require_all_used();
  c.validate();
  return c;
}

RunConfig load_run_config(const fs::path& path) { return parse_run_config(KeyValues::load(path)); }

std::vector<corpus::Dialog> load_split(const fs::path& dir, const RunConfig& cfg, const std::string& split) {
  const std::string& name = split == "train"   ? cfg.train_file
                            : split == "valid" ? cfg.valid_file
                            : split == "test"  ? cfg.test_file
                                               : throw std::invalid_argument("unknown split '" + split + "'");
  const fs::path p = dir / name;
  if (!fs::exists(p)) throw std::runtime_error("missing data file " + p.string());
  return corpus::parse_transcripts(p);
}

Dataset load_dataset(const fs::path& dir, const RunConfig& cfg) {
  Dataset d;
  d.train = load_split(dir, cfg, "train");
  d.valid = load_split(dir, cfg, "valid");
  d.test = load_split(dir, cfg, "test");
  if (d.train.empty()) throw std::runtime_error("training split is empty");
  d.vocab = corpus::build_vocab(d.train);
  if (fs::exists(dir / synth::kConfigFile)) {
    KeyValues kv = KeyValues::load(dir / synth::kConfigFile);
    d.synth = synth::SynthConfig::from_key_values(kv);
    kv.require_all_used();
  }
  return d;
}

std::string metrics_header() {
  return "step,epoch,per_response_accuracy,bleu,api_precision,api_recall,api_f1,api_exact_match,"
         "true_positives,false_positives,false_negatives,exact_matches,turns,mean_sampled_return,mean_grad_norm,best";
}

std::string metrics_line(const MetricsRow& row) {
  const auto& r = row.report;
  std::ostringstream os;
  os << row.step << ',' << row.epoch << ',' << format_double(r.per_response_accuracy) << ',' << format_double(r.bleu)
     << ',' << format_double(r.api_precision) << ',' << format_double(r.api_recall) << ','
     << format_double(r.api_f1) << ',' << format_double(r.api_exact_match) << ',' << r.true_positives << ','
     << r.false_positives << ',' << r.false_negatives << ',' << r.exact_matches << ',' << r.turns << ','
     << format_double(row.mean_sampled_return) << ',' << format_double(row.mean_grad_norm) << ','
     << (row.best ? 1 : 0);
  return os.str();
}

std::vector<MetricsRow> read_metrics(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != metrics_header()) throw std::runtime_error(path.string() + ": unexpected header");
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 16) throw std::runtime_error(path.string() + ": malformed row");
    MetricsRow r;
    r.step = std::stoull(f[0]);
    r.epoch = std::stoull(f[1]);
    r.report.per_response_accuracy = std::stod(f[2]);
    r.report.bleu = std::stod(f[3]);
    r.report.api_precision = std::stod(f[4]);
    r.report.api_recall = std::stod(f[5]);
    r.report.api_f1 = std::stod(f[6]);
    r.report.api_exact_match = std::stod(f[7]);
    r.report.true_positives = std::stoull(f[8]);
    r.report.false_positives = std::stoull(f[9]);
    r.report.false_negatives = std::stoull(f[10]);
    r.report.exact_matches = std::stoull(f[11]);
    r.report.turns = std::stoull(f[12]);
    r.mean_sampled_return = std::stod(f[13]);
    r.mean_grad_norm = std::stod(f[14]);
    r.best = f[15] == "1";
    rows.push_back(r);
  }
  return rows;
}

namespace {

policy::ModelConfig with_vocab(policy::ModelConfig m, std::size_t vocab) {
  m.vocab_size = vocab;
  return m;
}

bool better(const eval::EvalReport& a, const eval::EvalReport& b) {
  if (a.per_response_accuracy != b.per_response_accuracy) return a.per_response_accuracy > b.per_response_accuracy;
  return a.bleu > b.bleu;
}

}  // namespace

Trainer::Trainer(RunConfig cfg, Dataset data, fs::path out_dir)
    : cfg_(std::move(cfg)),
      data_(std::move(data)),
      out_(std::move(out_dir)),
      policy_(with_vocab(cfg_.model, data_.vocab.size()), substream_seed(cfg_.seed, "init")),
      adam_(policy_.params(), cfg_.learner.learning_rate, cfg_.learner.adam_beta1, cfg_.learner.adam_beta2,
            cfg_.learner.adam_epsilon),
      baseline_(cfg_.max_decode_len,
                cfg_.learner.baseline == learner::BaselineKind::Ema ? cfg_.learner.baseline_decay : 1.0),
      shuffle_rng_(substream_seed(cfg_.seed, "shuffle")),
      rollout_rng_(substream_seed(cfg_.seed, "rollout")),
      dropout_rng_(substream_seed(cfg_.seed, "dropout")) {
  cfg_.validate();
  if (cfg_.learner.is.needs_behavior() && cfg_.learner.lambda_e < 1.0) {
    if (cfg_.behavior == BehaviorSource::Exact) {
      if (!data_.synth) throw std::invalid_argument("behavior.source = exact needs a synthetic corpus with synth.cfg");
      agent_ = std::make_unique<synth::ScriptedAgent>(*data_.synth);
      behavior_ = std::make_unique<synth::ExactBehavior>(*agent_, data_.vocab);
    } else {
      behavior_ = std::make_unique<learner::ModelBehavior>(
          learner::fit_behavior_model(learner::turn_examples(data_.train, data_.vocab), policy_.config(),
                                      cfg_.behavior_epochs, substream_seed(cfg_.seed, "behavior")));
    }
  }
  fs::create_directories(out_);
  data_.vocab.save(out_ / kVocabFile);
}

Trainer::~Trainer() = default;

void Trainer::new_epoch_order() {
  order_.resize(data_.train.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  shuffle_rng_.shuffle(order_);
}

StepRecord Trainer::train_turn(const corpus::Dialog& d, int k, const std::vector<TokenId>& context) {
  const double le = cfg_.learner.lambda_e;
  const mdp::TurnReference ref = mdp::make_reference(d, k, data_.vocab, cfg_.reward.k_prime_rule);
  StepRecord rec;
  rec.epoch = epoch_ + 1;

  Tape tape;
  policy::Graph graph(tape, policy_, policy::bernoulli_masks(dropout_rng_, policy_.config().dropout_keep));
  policy::Encoding enc = graph.encode(context);
  std::vector<Var> terms;
  std::vector<double> weights;
  std::vector<double> sampled_q;

  if (le > 0.0) {
    mdp::GraphRollout gr = mdp::rollout_on_graph(graph, enc, context, cfg_.max_decode_len, rollout_rng_);
    mdp::score(gr.episode, ref, data_.vocab, cfg_.reward);
    const auto w = learner::on_policy_weights(gr.episode.rewards, baseline_, cfg_.reward.gamma);
    for (std::size_t t = 0; t < w.size(); ++t) {
      terms.push_back(gr.log_probs[t]);
      weights.push_back(le * w[t]);
    }
    sampled_q = mdp::returns(gr.episode.rewards, cfg_.reward.gamma);
    rec.sampled_return = std::accumulate(gr.episode.rewards.begin(), gr.episode.rewards.end(), 0.0);
    rec.sampled_length = gr.episode.T();
  }
  if (le < 1.0) {
    std::vector<Var> lp = graph.teacher_forced(enc, ref.target);
    const auto rewards = mdp::shaped_rewards(ref.target, ref, data_.vocab, cfg_.reward);
    std::vector<double> pi, q;
    if (cfg_.learner.is.needs_behavior()) {
      for (const Var& v : lp) pi.push_back(std::exp(v.scalar()));
      q = behavior_->step_probabilities(context, ref.target);
    }
    static const learner::Baseline kNoBaseline;
    const learner::Baseline& b = cfg_.learner.off_policy_baseline ? baseline_ : kNoBaseline;
    const auto w = learner::off_policy_weights(rewards, pi, q, cfg_.learner.is, b, cfg_.reward.gamma);
    for (std::size_t t = 0; t < w.size(); ++t) {
      terms.push_back(lp[t]);
      weights.push_back((1.0 - le) * w[t]);
      rec.reference_nll -= lp[t].scalar();
    }
  }

  tape.backward(tape.linear(terms, weights));
  diff::ParamSet g = tape.gradients(policy_.params());
  learner::check_finite(g);
  adam_.ascend(policy_.params(), g);
  if (le > 0.0) baseline_.update(sampled_q);

  rec.grad_norm = std::sqrt(g.squared_norm());
  rec.step = ++step_;
  if (le > 0.0) {
    return_sum_ += rec.sampled_return;
    ++rollouts_;
  }
  norm_sum_ += rec.grad_norm;
  ++norms_;
  if (on_step) on_step(rec);
  return rec;
}

MetricsRow Trainer::validate_now() {
  MetricsRow row;
  row.step = step_;
  row.epoch = epoch_;
  row.report = eval::evaluate_split(policy_, data_.valid, data_.vocab, cfg_.eval);
  row.mean_sampled_return = rollouts_ ? return_sum_ / static_cast<double>(rollouts_) : 0.0;
  row.mean_grad_norm = norms_ ? norm_sum_ / static_cast<double>(norms_) : 0.0;
  return_sum_ = norm_sum_ = 0.0;
  rollouts_ = norms_ = 0;
  row.best = !best_ || better(row.report, best_->report);
  if (row.best) {
    best_ = row;
    save(out_ / kBestCheckpoint, false);
  }
  const fs::path metrics = out_ / kMetricsFile;
  const bool fresh = !fs::exists(metrics);
  std::ofstream out(metrics, std::ios::app);
  if (fresh) out << metrics_header() << '\n';
  out << metrics_line(row) << '\n';
  if (on_eval) on_eval(row);
  return row;
}

void Trainer::save(const fs::path& path, bool with_state) const {
  diff::Checkpoint ck;
  ck.put_params("param.", policy_.params());
  ck.put_bytes("config", cfg_.to_text());
  if (with_state) {
    adam_.save(ck);
    ck.put("baseline", diff::Tensor::from_matrix(
                           Eigen::Map<const diff::Matrix>(baseline_.values().data(), 1,
                                                          static_cast<Eigen::Index>(baseline_.values().size()))));
    ck.put_bytes("rng.shuffle", shuffle_rng_.serialize());
    ck.put_bytes("rng.rollout", rollout_rng_.serialize());
    ck.put_bytes("rng.dropout", dropout_rng_.serialize());
    diff::Tensor order({order_.size()});
    for (std::size_t i = 0; i < order_.size(); ++i) order.values()[i] = static_cast<double>(order_[i]);
    ck.put("train.order", order);
    ck.put_scalar("train.epoch", static_cast<double>(epoch_));
    ck.put_scalar("train.position", static_cast<double>(position_));
    ck.put_scalar("train.turn", static_cast<double>(turn_));
    ck.put_scalar("train.step", static_cast<double>(step_));
    ck.put_scalar("train.return_sum", return_sum_);
    ck.put_scalar("train.norm_sum", norm_sum_);
    ck.put_scalar("train.rollouts", static_cast<double>(rollouts_));
    ck.put_scalar("train.norms", static_cast<double>(norms_));
    if (best_) {
      ck.put_bytes("best.report", eval::to_key_value(best_->report));
      ck.put_scalar("best.step", static_cast<double>(best_->step));
      ck.put_scalar("best.epoch", static_cast<double>(best_->epoch));
    }
  }
  const fs::path tmp = path.string() + ".tmp";
  ck.save(tmp);
  fs::rename(tmp, path);
}

void Trainer::resume() {
  const diff::Checkpoint ck = diff::Checkpoint::load(out_ / kLastCheckpoint);
  ck.read_params("param.", policy_.params());
  adam_.load(ck);
  const auto& b = ck.tensor("baseline").values();
  if (b.size() != baseline_.values().size()) throw std::runtime_error("resume: baseline length mismatch");
  std::copy(b.begin(), b.end(), baseline_.values().begin());
  shuffle_rng_.deserialize(ck.bytes("rng.shuffle"));
  rollout_rng_.deserialize(ck.bytes("rng.rollout"));
  dropout_rng_.deserialize(ck.bytes("rng.dropout"));
  order_.clear();
  for (double v : ck.tensor("train.order").values()) order_.push_back(static_cast<std::size_t>(v));
  epoch_ = static_cast<std::size_t>(ck.scalar("train.epoch"));
  position_ = static_cast<std::size_t>(ck.scalar("train.position"));
  turn_ = static_cast<std::size_t>(ck.scalar("train.turn"));
  step_ = static_cast<std::size_t>(ck.scalar("train.step"));
  return_sum_ = ck.scalar("train.return_sum");
  norm_sum_ = ck.scalar("train.norm_sum");
  rollouts_ = static_cast<std::size_t>(ck.scalar("train.rollouts"));
  norms_ = static_cast<std::size_t>(ck.scalar("train.norms"));
  if (ck.contains("best.report")) {
    MetricsRow r;
    r.report = eval::from_key_value(ck.bytes("best.report"));
    r.step = static_cast<std::size_t>(ck.scalar("best.step"));
    r.epoch = static_cast<std::size_t>(ck.scalar("best.epoch"));
    r.best = true;
    best_ = r;
  }
}

std::vector<MetricsRow> Trainer::run() {
  std::vector<MetricsRow> rows;
  auto collect = on_eval;
  on_eval = [&](const MetricsRow& r) {
    rows.push_back(r);
    if (collect) collect(r);
  };
  if (order_.empty()) new_epoch_order();
  bool stopped = false;
  while (epoch_ < cfg_.epochs && !stopped) {
    while (position_ < order_.size()) {
      const corpus::Dialog& d = data_.train[order_[position_]];
      const std::vector<corpus::Context> ctx = corpus::build_contexts(d, data_.vocab);
      while (turn_ < d.K()) {
        train_turn(d, static_cast<int>(turn_ + 1), ctx[turn_].tokens);
        ++turn_;
        if (cfg_.eval_every && step_ % cfg_.eval_every == 0) validate_now();
        if (cfg_.max_steps && step_ >= cfg_.max_steps) {
          save(out_ / kLastCheckpoint, true);
          on_eval = collect;
          return rows;
        }
      }
      turn_ = 0;
      ++position_;
    }
    ++epoch_;
    position_ = 0;
    MetricsRow row = validate_now();
    new_epoch_order();
    stopped = stop_when && stop_when(row);
  }
  save(out_ / kLastCheckpoint, true);
  on_eval = collect;
  return rows;
}

LoadedModel load_model(const fs::path& checkpoint) {
  const diff::Checkpoint ck = diff::Checkpoint::load(checkpoint);
  RunConfig cfg = parse_run_config(KeyValues::parse(ck.bytes("config"), checkpoint.string() + ":config"));
  corpus::Vocabulary vocab = corpus::Vocabulary::load(checkpoint.parent_path() / Trainer::kVocabFile);
  diff::ParamSet params = ck.params_with_prefix("param.");
  policy::ModelConfig inferred = policy::Policy::infer_config(params);
  if (inferred.vocab_size != vocab.size()) {
    throw std::runtime_error("checkpoint has " + std::to_string(inferred.vocab_size) + " embedding rows but vocabulary has " +
                             std::to_string(vocab.size()) + " tokens");
  }
  if (inferred.embedding_dim != cfg.model.embedding_dim || inferred.hidden_dim != cfg.model.hidden_dim ||
      inferred.attention_dim != cfg.model.attention_dim) {
    throw std::runtime_error("checkpoint tensor dimensions disagree with its configuration");
  }
  policy::ModelConfig m = cfg.model;
  m.vocab_size = vocab.size();
  return LoadedModel{policy::Policy(m, std::move(params)), std::move(vocab), std::move(cfg)};
}

eval::EvalReport evaluate(const fs::path& checkpoint, const std::string& split, const fs::path& data_dir, bool write) {
  LoadedModel m = load_model(checkpoint);
  const auto dialogs = load_split(data_dir, m.config, split);
  eval::EvalReport r = eval::evaluate_split(m.policy, dialogs, m.vocab, m.config.eval);
  if (write) {
    const fs::path base = checkpoint.parent_path() / (checkpoint.stem().string() + "." + split);
    std::ofstream(base.string() + ".txt") << eval::to_key_value(r);
    std::ofstream(base.string() + ".json") << eval::to_json(r);
  }
  return r;
}

GradCheckResult gradcheck(std::uint64_t seed, std::function<void(Tape&)> configure_tape) {
  corpus::Vocabulary vocab;
  vocab.add("x");
  vocab.add(std::string(corpus::kApiCallMarker));
  const auto dialog = corpus::parse_transcripts_text("1 x\tx api_call\n2 x x\tapi_call x\n").at(0);
  policy::ModelConfig mc;
  mc.vocab_size = vocab.size();
  mc.embedding_dim = mc.hidden_dim = mc.attention_dim = 4;
  mc.init_scale = 0.5;
  policy::Policy p(mc, seed);
  mdp::RewardConfig rc;
  const int k = 2;
  const auto ref = mdp::make_reference(dialog, k, vocab);
  const auto ctx = corpus::build_context(dialog, k, vocab).tokens;

  Rng rng(substream_seed(seed, "gradcheck"));
  mdp::Episode ep = mdp::rollout(p, ctx, 6, rng);
  mdp::score(ep, ref, vocab, rc);
  learner::Baseline b(6, 0.95);
  b.values() = {0.2, 0.1, 0.05, 0.0, 0.0, 0.0};
  const auto w_on = learner::on_policy_weights(ep.rewards, b, rc.gamma);

  const auto rewards = mdp::shaped_rewards(ref.target, ref, vocab, rc);
  std::vector<double> pi;
  for (double lp : policy::step_log_probs(p, ctx, ref.target)) pi.push_back(std::exp(lp));
  std::vector<double> q(pi.size());
  for (std::size_t i = 0; i < q.size(); ++i) q[i] = 0.5 + 0.1 * static_cast<double>(i);
  const auto w_off = learner::off_policy_weights(rewards, pi, q, learner::IsStrategy::estimated(), b, rc.gamma);

  auto surrogate = [&](const std::vector<TokenId>& actions, const std::vector<double>& w) {
    return [&, actions, w](Tape& t, const diff::ParamSet& ps) {
      policy::Graph g(t, p, ps);
      auto enc = g.encode(ctx);
      return t.linear(g.teacher_forced(enc, actions), w);
    };
  };
  diff::GradCheckOptions opt;
  opt.configure_tape = std::move(configure_tape);
  GradCheckResult r;
  r.on_policy = diff::grad_check(surrogate(ep.actions, w_on), p.params(), opt);
  r.off_policy = diff::grad_check(surrogate(ref.target, w_off), p.params(), opt);
  return r;
}

}  // namespace tact::harness
