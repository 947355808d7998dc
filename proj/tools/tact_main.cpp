#include "CLI11.hpp"

#include "tact/harness.hpp"

#include <cstdio>
#include <iostream>

using namespace tact;
namespace fs = std::filesystem;

namespace {

void print_row(const harness::MetricsRow& r) {
  std::printf("epoch %zu step %zu  acc %.4f  bleu %.4f  api_em %.4f  api_f1 %.4f  return %.4f%s\n", r.epoch, r.step,
              r.report.per_response_accuracy, r.report.bleu, r.report.api_exact_match, r.report.api_f1,
              r.mean_sampled_return, r.best ? "  *" : "");
  std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Offline policy-gradient training of goal-oriented dialog agents"};
  app.require_subcommand(1);

  fs::path config, data_dir, out, checkpoint;
  std::optional<std::uint64_t> seed;
  bool resume = false;
  std::string split = "test";

  auto* train = app.add_subcommand("train", "Train a policy and keep the best validation checkpoint");
  train->add_option("--config", config, "Run configuration file")->required()->check(CLI::ExistingFile);
  train->add_option("--data-dir", data_dir, "Directory holding the corpus files")->required()->check(CLI::ExistingDirectory);
  train->add_option("--out", out, "Output directory for checkpoints and metrics")->required();
  train->add_option("--seed", seed, "Override train.seed");
  train->add_flag("--resume", resume, "Continue from <out>/last.ckpt");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on one split");
  ev->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  ev->add_option("--split", split, "Split to evaluate")->check(CLI::IsMember({"train", "valid", "test"}));
  ev->add_option("--data-dir", data_dir, "Directory holding the corpus files")->required()->check(CLI::ExistingDirectory);

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of both policy-gradient losses");
  gc->add_option("--seed", seed, "Seed of the mini model");

  auto* sy = app.add_subcommand("synth", "Write a synthetic corpus");
  sy->add_option("--config", config, "Synthetic corpus configuration")->check(CLI::ExistingFile);
  sy->add_option("--out", out, "Output directory")->required();
  sy->add_option("--seed", seed, "Override synth.seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      harness::RunConfig cfg = harness::load_run_config(config);
      if (seed) cfg.seed = *seed;
      harness::Trainer t(cfg, harness::load_dataset(data_dir, cfg), out);
      if (resume) t.resume();
      t.on_eval = print_row;
      t.run();
      if (const auto best = t.best()) {
        std::printf("best: epoch %zu step %zu -> %s\n", best->epoch, best->step,
                    (out / harness::Trainer::kBestCheckpoint).c_str());
      }
    } else if (*ev) {
      const eval::EvalReport r = harness::evaluate(checkpoint, split, data_dir);
      std::cout << eval::to_key_value(r);
    } else if (*gc) {
      const harness::GradCheckResult r = harness::gradcheck(seed.value_or(1));
      std::cout << "on-policy  " << r.on_policy << "off-policy " << r.off_policy;
      return r.passed() ? 0 : 1;
    } else if (*sy) {
      synth::SynthConfig s;
      if (!config.empty()) {
        KeyValues kv = KeyValues::load(config);
        s = synth::SynthConfig::from_key_values(kv);
        kv.require_all_used();
      }
      if (seed) s.seed = *seed;
      synth::write_corpus(s, out);
      std::printf("wrote %s, %s, %s and %s to %s\n", synth::kTrainFile, synth::kValidFile, synth::kTestFile,
                  synth::kConfigFile, out.c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
