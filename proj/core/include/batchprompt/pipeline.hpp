#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "batchprompt/accounting.hpp"
#include "batchprompt/backends.hpp"
#include "batchprompt/datamodel.hpp"
#include "batchprompt/seas.hpp"

namespace batchprompt {

struct DatasetRun {
  std::vector<BatchRunResult> batches;
  TokenLedger ledger;
  RunResults results;
};

/// Splits `items` into consecutive batches of config.batch_size (the last one
/// may be smaller) and runs every batch. With `random_drop` set the ablation
/// controller replaces SEAS. Batches run on config.workers threads, each with
/// a private ledger; ledgers are merged in batch order afterwards.
DatasetRun run_dataset(std::span<const DataItem> items, const RunConfig& config, const Labeler& labeler,
                       std::optional<double> random_drop = std::nullopt);

/// SinglePrompt cost from the token model alone: N calls, each carrying the
/// full task specification and one item.
Baseline single_prompt_baseline_formula(std::span<const DataItem> items, const Labeler& labeler,
                                        Strategy strategy);

/// SinglePrompt measured by running batch size 1, one round.
Baseline single_prompt_baseline_run(std::span<const DataItem> items, const Labeler& labeler, Strategy strategy,
                                    std::uint64_t seed, std::size_t workers = 1);

/// Fraction of eligible (round >= 2) item-rounds that ended in a drop.
double observed_drop_rate(std::span<const BatchRunResult> batches);

struct PositionRun {
  std::vector<PositionSample> samples;
  std::vector<PositionAccuracy> accuracy;
  TokenLedger ledger;
  RunResults results;
};

/// Rotation experiment: items.size() must equal batches * batch_size. Each of
/// the batch_size rotations issues one call per batch with no shuffling.
PositionRun run_positions(std::span<const DataItem> items, std::size_t batch_size, const Labeler& labeler,
                          Strategy strategy);

/// Deterministic labeled items for simulations: `n` items whose text length
/// varies between min_words and max_words and whose gold labels are drawn
/// uniformly from the task's label space (integers for numeric tasks).
std::vector<DataItem> make_synthetic_items(std::size_t n, const TaskSpec& task, std::uint64_t seed,
                                           std::size_t min_words = 40, std::size_t max_words = 120);

/// Ordered key/value echo of a run configuration for reports.
std::vector<std::pair<std::string, std::string>> config_echo(const RunConfig& config);

}  // namespace batchprompt
