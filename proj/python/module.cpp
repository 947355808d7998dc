#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "tact/harness.hpp"

#include <map>

namespace py = pybind11;
using namespace tact;

namespace {

py::dict report_dict(const eval::EvalReport& r) {
  py::dict d;
  d["per_response_accuracy"] = r.per_response_accuracy;
  d["bleu"] = r.bleu;
  d["api_precision"] = r.api_precision;
  d["api_recall"] = r.api_recall;
  d["api_f1"] = r.api_f1;
  d["api_exact_match"] = r.api_exact_match;
  d["true_positives"] = r.true_positives;
  d["false_positives"] = r.false_positives;
  d["false_negatives"] = r.false_negatives;
  d["exact_matches"] = r.exact_matches;
  d["turns"] = r.turns;
  return d;
}

py::dict row_dict(const harness::MetricsRow& r) {
  py::dict d = report_dict(r.report);
  d["step"] = r.step;
  d["epoch"] = r.epoch;
  d["mean_sampled_return"] = r.mean_sampled_return;
  d["mean_grad_norm"] = r.mean_grad_norm;
  d["best"] = r.best;
  return d;
}

double sentence_bleu(const std::vector<std::string>& candidate, const std::vector<std::string>& reference,
                     bool smoothing, int max_n) {
  std::map<std::string, corpus::TokenId> ids;
  auto encode = [&](const std::vector<std::string>& s) {
    std::vector<corpus::TokenId> out;
    for (const auto& t : s) out.push_back(ids.emplace(t, static_cast<corpus::TokenId>(ids.size() + 10)).first->second);
    return out;
  };
  const auto c = encode(candidate);
  const auto r = encode(reference);
  return bleu::sentence_bleu(c, r, {max_n, smoothing ? bleu::Smoothing::AddOneForNGe2 : bleu::Smoothing::None});
}

py::list load_dialogs(const std::filesystem::path& path) {
  py::list out;
  for (const auto& d : corpus::parse_transcripts(path)) {
    py::list turns;
    for (const auto& t : d.turns) turns.append(py::make_tuple(t.user.raw, t.agent.raw));
    out.append(turns);
  }
  return out;
}

py::dict corpus_stats(const std::filesystem::path& path) {
  const auto dialogs = corpus::parse_transcripts(path);
  const corpus::CorpusStats s = corpus::compute_stats(dialogs);
  py::dict d;
  d["dialogs"] = s.dialogs;
  d["turns"] = s.turns;
  d["avg_context_length"] = s.avg_context_length;
  d["max_context_length"] = s.max_context_length;
  d["max_agent_length"] = s.max_agent_length;
  d["vocab_size"] = corpus::build_vocab(dialogs).size();
  return d;
}

void write_synth(const std::filesystem::path& out, const std::string& config_text) {
  KeyValues kv = KeyValues::parse(config_text, "<synth config>");
  const synth::SynthConfig cfg = synth::SynthConfig::from_key_values(kv);
  kv.require_all_used();
  synth::write_corpus(cfg, out);
}

py::list train(const std::string& config_text, const std::filesystem::path& data_dir, const std::filesystem::path& out,
               std::optional<std::uint64_t> seed) {
  harness::RunConfig cfg = harness::parse_run_config(KeyValues::parse(config_text, "<run config>"));
  if (seed) cfg.seed = *seed;
  std::vector<harness::MetricsRow> rows;
  {
    py::gil_scoped_release release;
    harness::Trainer t(cfg, harness::load_dataset(data_dir, cfg), out);
    rows = t.run();
  }
  py::list result;
  for (const auto& r : rows) result.append(row_dict(r));
  return result;
}

py::dict evaluate(const std::filesystem::path& checkpoint, const std::string& split,
                  const std::filesystem::path& data_dir) {
  eval::EvalReport r;
  {
    py::gil_scoped_release release;
    r = harness::evaluate(checkpoint, split, data_dir);
  }
  return report_dict(r);
}

py::dict gradcheck(std::uint64_t seed) {
  const harness::GradCheckResult r = harness::gradcheck(seed);
  py::dict d;
  d["passed"] = r.passed();
  d["on_policy_max_rel_error"] = r.on_policy.max_rel_error;
  d["off_policy_max_rel_error"] = r.off_policy.max_rel_error;
  return d;
}

}  // namespace

PYBIND11_MODULE(_tact, m) {
  m.doc() = "Offline policy-gradient dialog learning";
  m.def("sentence_bleu", &sentence_bleu, py::arg("candidate"), py::arg("reference"), py::arg("smoothing") = true,
        py::arg("max_n") = 4);
  m.def("load_dialogs", &load_dialogs, py::arg("path"), "List of dialogs, each a list of (user, agent) strings.");
  m.def("corpus_stats", &corpus_stats, py::arg("path"));
  m.def("write_synth", &write_synth, py::arg("out"), py::arg("config_text") = "");
  m.def("normalize_run_config", [](const std::string& text) {
    return harness::parse_run_config(KeyValues::parse(text, "<run config>")).to_text();
  });
  m.def("train", &train, py::arg("config_text"), py::arg("data_dir"), py::arg("out"), py::arg("seed") = py::none());
  m.def("evaluate", &evaluate, py::arg("checkpoint"), py::arg("split"), py::arg("data_dir"));
  m.def("gradcheck", &gradcheck, py::arg("seed") = 1);
}
