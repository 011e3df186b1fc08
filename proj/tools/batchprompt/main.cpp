#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "batchprompt/accounting.hpp"
#include "batchprompt/backends.hpp"
#include "batchprompt/datamodel.hpp"
#include "batchprompt/error.hpp"
#include "batchprompt/pipeline.hpp"
#include "batchprompt/prompting.hpp"

namespace bp = batchprompt;

namespace {

struct OracleOptions {
  double p0 = 0.9;
  double slope = 0.0;
  double conf_correct = 0.95;
  double conf_wrong = 0.45;
  bool round_dependent = false;
  std::uint64_t seed = 0;
  std::size_t task_tokens = 500;
};

struct HttpOptions {
  std::string base_url = "https://api.openai.com/v1";
  std::string model = "gpt-4";
  std::string api_key_env = "OPENAI_API_KEY";
  double temperature = 0.0;
  int timeout = 120;
  int max_retries = 3;
  std::size_t max_context = 8192;
};

struct DataOptions {
  std::string dataset;
  std::string format;
  std::string tmpl = "builtin:boolq";
  std::string fewshot;
  std::string indices;
};

struct RunOptions {
  DataOptions data;
  bp::RunConfig config;
  std::string strategy = "mv";
  std::string backend = "oracle";
  std::string report_dir;
  std::string baseline = "formula";
  std::optional<double> random_drop;
  OracleOptions oracle;
  HttpOptions http;
};

void add_oracle_options(CLI::App* cmd, OracleOptions& o) {
  cmd->add_option("--oracle-p0", o.p0, "Oracle accuracy at position 0")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--oracle-slope", o.slope, "Accuracy lost per batch position");
  cmd->add_option("--oracle-conf-correct", o.conf_correct, "P(confident | correct)")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--oracle-conf-wrong", o.conf_wrong, "P(confident | wrong)")->check(CLI::Range(0.0, 1.0));
  cmd->add_flag("--oracle-round-dependent", o.round_dependent,
                "Share each item's correctness draw across rounds");
  cmd->add_option("--oracle-seed", o.seed, "Oracle seed");
  cmd->add_option("--oracle-task-tokens", o.task_tokens, "Task specification length charged per call");
}

void add_http_options(CLI::App* cmd, HttpOptions& h) {
  cmd->add_option("--base-url", h.base_url, "OpenAI-compatible API base URL");
  cmd->add_option("--model", h.model, "Model name");
  cmd->add_option("--api-key-env", h.api_key_env, "Environment variable holding the API key");
  cmd->add_option("--temperature", h.temperature, "Sampling temperature");
  cmd->add_option("--timeout", h.timeout, "Request timeout in seconds")->check(CLI::PositiveNumber);
  cmd->add_option("--max-retries", h.max_retries, "Retries for rate limits and server errors")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--max-context", h.max_context, "Context window in tokens (0 = unchecked)");
}

void add_data_options(CLI::App* cmd, DataOptions& d, bool dataset_required) {
  auto* opt = cmd->add_option("--dataset", d.dataset, "Dataset file (.jsonl or .csv)")->check(CLI::ExistingFile);
  if (dataset_required) opt->required();
  cmd->add_option("--format", d.format, "Dataset format")->check(CLI::IsMember({"jsonl", "csv"}));
  cmd->add_option("--template", d.tmpl, "Template file or builtin:<boolq|qqp|rte|gsm8k>");
  cmd->add_option("--fewshot", d.fewshot, "Few-shot examples (JSONL)")->check(CLI::ExistingFile);
  cmd->add_option("--indices", d.indices, "File of dataset indices to keep, in order")->check(CLI::ExistingFile);
}

void add_run_options(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("--batch-size,-b", o.config.batch_size, "Items per prompt")->check(CLI::PositiveNumber);
  cmd->add_option("--rounds,-k", o.config.rounds, "Voting rounds")->check(CLI::PositiveNumber);
  cmd->add_option("--strategy", o.strategy, "Vote aggregation")->check(CLI::IsMember({"mv", "sw-mv", "sw-mv-neg"}));
  cmd->add_flag("--seas", o.config.seas, "Drop items after two consistent confident answers");
  cmd->add_option("--alpha", o.config.alpha, "Weight of a not-confident vote")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--seed", o.config.seed, "Permutation seed");
  cmd->add_flag("--identity-first", o.config.identity_first_round, "Keep dataset order in round 1");
  cmd->add_option("--negatives", o.config.negatives, "Negative few-shot examples under sw-mv-neg");
  cmd->add_option("--workers,-j", o.config.workers, "Concurrent batches")->check(CLI::PositiveNumber);
  cmd->add_option("--backend", o.backend, "Labeler")->check(CLI::IsMember({"oracle", "http"}));
  cmd->add_option("--random-drop", o.random_drop, "Drop each active item with this probability from round 2")
      ->check(CLI::Range(0.0, 1.0));
  add_oracle_options(cmd, o.oracle);
  add_http_options(cmd, o.http);
}

bp::OracleModel oracle_model(const OracleOptions& o) {
  bp::OracleModel m;
  m.p0 = o.p0;
  m.position_slope = o.slope;
  m.p_confident_if_correct = o.conf_correct;
  m.p_confident_if_wrong = o.conf_wrong;
  m.round_independent = !o.round_dependent;
  m.seed = o.seed;
  m.task_tokens = o.task_tokens;
  m.validate();
  return m;
}

bp::HttpBackendConfig http_config(const HttpOptions& h) {
  bp::HttpBackendConfig c;
  c.base_url = h.base_url;
  c.model = h.model;
  c.api_key_env = h.api_key_env;
  c.temperature = h.temperature;
  c.timeout = std::chrono::seconds(h.timeout);
  c.max_retries = h.max_retries;
  c.max_context_tokens = h.max_context;
  return c;
}

struct Workload {
  bp::PromptTemplate tmpl;
  std::vector<bp::DataItem> items;
  std::vector<bp::FewShotExample> fewshot;
};

Workload load_workload(const DataOptions& d) {
  Workload w;
  w.tmpl = bp::load_template(d.tmpl);
  const auto task = w.tmpl.task_spec();
  std::optional<bp::DatasetFormat> format;
  if (d.format == "jsonl") format = bp::DatasetFormat::jsonl;
  else if (d.format == "csv") format = bp::DatasetFormat::csv;
  else format = bp::format_from_path(d.dataset);
  if (!format) throw bp::ConfigError("cannot infer dataset format of " + d.dataset + "; pass --format");
  w.items = bp::load_dataset(d.dataset, *format, task);
  if (!d.indices.empty()) w.items = bp::select_indices(w.items, bp::load_index_list(d.indices));
  if (!d.fewshot.empty()) w.fewshot = bp::load_fewshot(d.fewshot, task);
  return w;
}

std::unique_ptr<bp::Labeler> make_labeler(const std::string& backend, const Workload& w, const OracleOptions& oracle,
                                          const HttpOptions& http, std::size_t negatives) {
  if (backend == "http") return std::make_unique<bp::HttpLabeler>(http_config(http), w.tmpl, w.fewshot, negatives);
  return std::make_unique<bp::OracleLabeler>(oracle_model(oracle), w.tmpl.task_spec());
}

void print_report(const bp::RunReport& r, std::ostream& out) {
  out << "items: " << r.items << "\n";
  if (r.accuracy) out << "accuracy: " << *r.accuracy << " (" << r.correct << " correct)\n";
  else out << "accuracy: n/a (no gold labels)\n";
  out << "abstained items: " << r.abstained_items << "\n";
  out << "tie-broken items: " << r.tie_broken_items << "\n";
  out << "rounds histogram:";
  for (const auto& [rounds, n] : r.rounds_histogram) out << ' ' << rounds << ':' << n;
  out << "\n";
  out << "calls (until drain): " << r.until_drain.calls << " (" << r.until_drain.failed_calls << " failed)\n";
  out << "calls (batches x rounds): " << r.batches_x_rounds.calls << "\n";
  out << "prompt tokens (until drain): " << r.until_drain.prompt_tokens << " [" << r.token_provenance << "]\n";
  out << "prompt tokens (batches x rounds): " << r.batches_x_rounds.prompt_tokens << "\n";
  out << "completion tokens: " << r.until_drain.completion_tokens << "\n";
  if (r.baseline) {
    out << "SinglePrompt (" << r.baseline->provenance << "): " << r.baseline->calls << " calls, "
        << r.baseline->prompt_tokens << " prompt tokens";
    if (r.baseline->accuracy) out << ", accuracy " << *r.baseline->accuracy;
    out << "\n";
    out << "calls ratio: " << 100.0 * r.baseline->calls_ratio << "%\n";
    out << "token ratio: " << 100.0 * r.baseline->token_ratio << "%\n";
  }
}

int cmd_run(RunOptions& o) {
  o.config.strategy = bp::parse_strategy(o.strategy);
  const Workload w = load_workload(o.data);
  if (w.items.empty()) throw bp::DatasetError("dataset is empty");
  const auto labeler = make_labeler(o.backend, w, o.oracle, o.http, o.config.negatives);

  const auto run = bp::run_dataset(w.items, o.config, *labeler, o.random_drop);
  std::optional<bp::Baseline> baseline;
  if (o.baseline == "formula")
    baseline = bp::single_prompt_baseline_formula(w.items, *labeler, o.config.strategy);
  else if (o.baseline == "run")
    baseline = bp::single_prompt_baseline_run(w.items, *labeler, o.config.strategy, o.config.seed, o.config.workers);

  auto echo = bp::config_echo(o.config);
  echo.emplace_back("backend", o.backend);
  echo.emplace_back("template", o.data.tmpl);
  if (o.random_drop) echo.emplace_back("random_drop", std::to_string(*o.random_drop));
  const auto report = bp::emit_report(run.results, run.ledger, baseline, std::move(echo), o.config.batch_size);
  print_report(report, std::cout);
  if (!o.report_dir.empty()) {
    bp::write_report_files(report, run.results, o.report_dir);
    std::cout << "report written to " << o.report_dir << "\n";
  }
  return 0;
}

struct PositionsOptions {
  DataOptions data;
  std::size_t synthetic = 0;
  std::size_t batch_size = 32;
  std::string strategy = "mv";
  std::string backend = "oracle";
  std::string report_dir;
  OracleOptions oracle;
  HttpOptions http;
  std::size_t negatives = 2;
};

int cmd_positions(PositionsOptions& o) {
  const auto strategy = bp::parse_strategy(o.strategy);
  Workload w;
  if (o.synthetic > 0) {
    w.tmpl = bp::load_template(o.data.tmpl);
    w.items = bp::make_synthetic_items(o.synthetic, w.tmpl.task_spec(), o.oracle.seed);
  } else if (!o.data.dataset.empty()) {
    w = load_workload(o.data);
  } else {
    throw bp::ConfigError("positions needs --dataset or --synthetic");
  }
  const auto labeler = make_labeler(o.backend, w, o.oracle, o.http, o.negatives);
  const auto pos = bp::run_positions(w.items, o.batch_size, *labeler, strategy);
  const auto csv = bp::position_accuracy_csv(pos.accuracy);
  std::cout << csv;
  if (!o.report_dir.empty()) {
    auto echo = std::vector<std::pair<std::string, std::string>>{{"mode", "positions"},
                                                                 {"batch_size", std::to_string(o.batch_size)},
                                                                 {"strategy", o.strategy},
                                                                 {"backend", o.backend}};
    const auto report = bp::emit_report(pos.results, pos.ledger, std::nullopt, std::move(echo), o.batch_size);
    bp::write_report_files(report, pos.results, o.report_dir);
  }
  return 0;
}

struct SimulateOptions {
  std::size_t items = 320;
  std::vector<std::size_t> batch_sizes{1, 4, 8, 16, 32};
  std::vector<int> rounds{1, 3, 5};
  std::string strategy = "sw-mv";
  bool seas = false;
  bool random_drop = false;
  double alpha = bp::kDefaultAlpha;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::string tmpl = "builtin:boolq";
  std::string output;
  OracleOptions oracle;
};

int cmd_simulate(SimulateOptions& o) {
  const auto tmpl = bp::load_template(o.tmpl);
  const auto task = tmpl.task_spec();
  const auto items = bp::make_synthetic_items(o.items, task, o.seed);
  const bp::OracleLabeler labeler(oracle_model(o.oracle), task);
  const auto strategy = bp::parse_strategy(o.strategy);
  const auto single = bp::single_prompt_baseline_formula(items, labeler, strategy);

  std::ostringstream csv;
  csv << "mode,batch_size,rounds,accuracy,calls,prompt_tokens,calls_batches_x_rounds,"
         "prompt_tokens_batches_x_rounds,calls_ratio,token_ratio,drop_rate\n";
  auto emit = [&](const std::string& mode, const bp::RunConfig& cfg, const bp::DatasetRun& run, double drop_rate) {
    const auto r = bp::emit_report(run.results, run.ledger, single, {}, cfg.batch_size);
    csv << mode << ',' << cfg.batch_size << ',' << cfg.rounds << ',' << (r.accuracy ? *r.accuracy : 0.0) << ','
        << r.until_drain.calls << ',' << r.until_drain.prompt_tokens << ',' << r.batches_x_rounds.calls << ','
        << r.batches_x_rounds.prompt_tokens << ',' << r.baseline->calls_ratio << ',' << r.baseline->token_ratio
        << ',' << drop_rate << '\n';
  };

  for (auto bs : o.batch_sizes) {
    for (int k : o.rounds) {
      bp::RunConfig cfg;
      cfg.batch_size = bs;
      cfg.rounds = k;
      cfg.strategy = strategy;
      cfg.alpha = o.alpha;
      cfg.seas = o.seas;
      cfg.seed = o.seed;
      cfg.workers = o.workers;
      const auto run = bp::run_dataset(items, cfg, labeler);
      const double rate = bp::observed_drop_rate(run.batches);
      emit(o.seas ? "seas" : "bpe", cfg, run, rate);
      if (o.random_drop && o.seas) {
        const auto ablation = bp::run_dataset(items, cfg, labeler, rate);
        emit("random-drop", cfg, ablation, bp::observed_drop_rate(ablation.batches));
      }
    }
  }

  if (o.output.empty()) {
    std::cout << csv.str();
  } else {
    std::ofstream out(o.output, std::ios::binary | std::ios::trunc);
    if (!out) throw bp::ConfigError("cannot write " + o.output);
    out << csv.str();
  }
  return 0;
}

struct EstimateOptions {
  std::size_t task_tokens = 0;
  std::size_t data_tokens = 0;
  std::size_t items = 0;
  std::vector<std::size_t> batch_sizes{1};
  int rounds = 1;
};

int cmd_estimate(const EstimateOptions& o) {
  std::cout << "batch_size,calls,total_tokens\n";
  for (auto s : o.batch_sizes) {
    const auto total = bp::estimate_total_tokens(o.task_tokens, o.data_tokens, o.items, s);
    const auto calls = (o.items + s - 1) / s * static_cast<std::size_t>(o.rounds);
    std::cout << s << ',' << calls << ',' << total << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Batched prompting with permutation voting and early stopping"};
  app.set_config("--config", "", "TOML or INI file with option values");
  app.require_subcommand(1);

  RunOptions run;
  auto* run_cmd = app.add_subcommand("run", "Label a dataset with batched, permuted voting rounds");
  add_data_options(run_cmd, run.data, true);
  add_run_options(run_cmd, run);
  run_cmd->add_option("--report-dir", run.report_dir, "Write report.json, summary.csv and verdicts.csv here");
  run_cmd->add_option("--baseline", run.baseline, "SinglePrompt comparison")
      ->check(CLI::IsMember({"none", "formula", "run"}));

  PositionsOptions positions;
  auto* pos_cmd = app.add_subcommand("positions", "Per-position accuracy over a full rotation schedule");
  add_data_options(pos_cmd, positions.data, false);
  pos_cmd->add_option("--synthetic", positions.synthetic, "Use this many synthetic items instead of a dataset");
  pos_cmd->add_option("--batch-size,-b", positions.batch_size, "Batch size (rotations)")->check(CLI::PositiveNumber);
  pos_cmd->add_option("--strategy", positions.strategy, "Prompt strategy")
      ->check(CLI::IsMember({"mv", "sw-mv", "sw-mv-neg"}));
  pos_cmd->add_option("--backend", positions.backend, "Labeler")->check(CLI::IsMember({"oracle", "http"}));
  pos_cmd->add_option("--negatives", positions.negatives, "Negative few-shot examples under sw-mv-neg");
  pos_cmd->add_option("--report-dir", positions.report_dir, "Also write report files here");
  add_oracle_options(pos_cmd, positions.oracle);
  add_http_options(pos_cmd, positions.http);

  SimulateOptions sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Oracle sweep over batch sizes and round counts");
  sim_cmd->add_option("--items,-n", sim.items, "Synthetic items")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--batch-sizes", sim.batch_sizes, "Batch sizes to sweep")->delimiter(',');
  sim_cmd->add_option("--rounds", sim.rounds, "Round counts to sweep")->delimiter(',');
  sim_cmd->add_option("--strategy", sim.strategy, "Vote aggregation")
      ->check(CLI::IsMember({"mv", "sw-mv", "sw-mv-neg"}));
  sim_cmd->add_flag("--seas", sim.seas, "Enable early stopping");
  sim_cmd->add_flag("--random-drop", sim.random_drop, "Add a random-drop row calibrated to each SEAS run");
  sim_cmd->add_option("--alpha", sim.alpha, "Weight of a not-confident vote")->check(CLI::Range(0.0, 1.0));
  sim_cmd->add_option("--seed", sim.seed, "Item and permutation seed");
  sim_cmd->add_option("--workers,-j", sim.workers, "Concurrent batches")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--template", sim.tmpl, "Template that defines the label space");
  sim_cmd->add_option("--output,-o", sim.output, "CSV output file (default stdout)");
  add_oracle_options(sim_cmd, sim.oracle);

  EstimateOptions est;
  auto* est_cmd = app.add_subcommand("estimate-tokens", "Closed-form prompt token total");
  est_cmd->add_option("--task-tokens", est.task_tokens, "Task specification length")->required();
  est_cmd->add_option("--data-tokens", est.data_tokens, "Total data length")->required();
  est_cmd->add_option("--items,-n", est.items, "Number of items")->required();
  est_cmd->add_option("--batch-size,-b", est.batch_sizes, "Batch size(s)")->delimiter(',')->check(CLI::PositiveNumber);
  est_cmd->add_option("--rounds,-k", est.rounds, "Voting rounds (for the call count)")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) return cmd_run(run);
    if (*pos_cmd) return cmd_positions(positions);
    if (*sim_cmd) return cmd_simulate(sim);
    if (*est_cmd) return cmd_estimate(est);
  } catch (const bp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
