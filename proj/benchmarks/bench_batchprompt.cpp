#include <numeric>
#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "batchprompt/accounting.hpp"
#include "batchprompt/backends.hpp"
#include "batchprompt/ensemble.hpp"
#include "batchprompt/parsing.hpp"
#include "batchprompt/pipeline.hpp"
#include "batchprompt/prompting.hpp"
#include "batchprompt/seas.hpp"

namespace bp = batchprompt;

namespace {

void BM_Permute(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  int round = 1;
  for (auto _ : state) benchmark::DoNotOptimize(bp::permute(n, 42, round++));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_Permute)->Arg(8)->Arg(32)->Arg(256);

void BM_ParseBatchResponse(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::vector<std::string> labels{"0", "1"};
  std::string text;
  for (std::size_t i = 0; i < n; ++i)
    text += "Label for Input " + std::to_string(i) + ": [class " + std::to_string(i % 2) + "] (confident)\n";
  for (auto _ : state)
    benchmark::DoNotOptimize(bp::parse_batch_response(text, n, bp::AnswerKind::class_label, labels));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(text.size()));
}
BENCHMARK(BM_ParseBatchResponse)->Arg(16)->Arg(64);

void BM_RenderPrompt(benchmark::State& state) {
  const auto tmpl = bp::load_template("builtin:boolq");
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto items = bp::make_synthetic_items(n, tmpl.task_spec(), 1, 40, 120);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (auto _ : state)
    benchmark::DoNotOptimize(bp::render_prompt(tmpl, {}, items, order, bp::Strategy::sw_mv));
}
BENCHMARK(BM_RenderPrompt)->Arg(16)->Arg(64);

void BM_RunBatchOracle(benchmark::State& state) {
  const auto tmpl = bp::load_template("builtin:boolq");
  const auto task = tmpl.task_spec();
  const auto items = bp::make_synthetic_items(static_cast<std::size_t>(state.range(0)), task, 3);
  const bp::OracleLabeler labeler(bp::OracleModel{}, task);
  bp::RunConfig cfg;
  cfg.batch_size = items.size();
  cfg.rounds = 5;
  cfg.strategy = bp::Strategy::sw_mv;
  cfg.seas = state.range(1) != 0;
  for (auto _ : state) {
    bp::TokenLedger ledger;
    benchmark::DoNotOptimize(bp::run_batch(items, cfg, labeler, ledger, 0));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_RunBatchOracle)->Args({32, 0})->Args({32, 1})->Args({128, 1});

}  // namespace

BENCHMARK_MAIN();
