#include "batchprompt/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "batchprompt/error.hpp"
#include "batchprompt/rng.hpp"

namespace batchprompt {

namespace {

std::string format_double(double v) {
  std::ostringstream ss;
  ss << v;
  return ss.str();
}

// Runs job(i) for i in [0, n) on up to `workers` threads. The first exception
// is rethrown after all threads have joined.
template <typename Job>
void parallel_for(std::size_t n, std::size_t workers, Job&& job) {
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  pool.clear();
  if (error) std::rethrow_exception(error);
}

void fill_token_lengths(TokenLedger& ledger, std::span<const DataItem> items, const Labeler& labeler,
                        Strategy strategy) {
  ledger.task_tokens = labeler.task_tokens(strategy);
  ledger.data_tokens = 0;
  for (const auto& item : items) ledger.data_tokens += labeler.item_tokens(item);
}

}  // namespace

DatasetRun run_dataset(std::span<const DataItem> items, const RunConfig& config, const Labeler& labeler,
                       std::optional<double> random_drop) {
  config.validate();
  const std::size_t s = config.batch_size;
  const std::size_t n_batches = (items.size() + s - 1) / s;

  DatasetRun run;
  run.batches.resize(n_batches);
  std::vector<TokenLedger> sub(n_batches);
  parallel_for(n_batches, config.workers, [&](std::size_t b) {
    const auto batch = items.subspan(b * s, std::min(s, items.size() - b * s));
    run.batches[b] = random_drop ? run_batch_random_drop(batch, config, labeler, *random_drop, sub[b], b)
                                 : run_batch(batch, config, labeler, sub[b], b);
  });

  fill_token_lengths(run.ledger, items, labeler, config.strategy);
  for (const auto& l : sub) run.ledger.merge(l);

  run.results.max_rounds = config.rounds;
  for (std::size_t b = 0; b < n_batches; ++b) {
    const auto& br = run.batches[b];
    run.results.batches.push_back({b, br.verdicts.size(), br.rounds_issued, br.effective_sizes});
    for (std::size_t i = 0; i < br.verdicts.size(); ++i) {
      const auto& item = items[b * s + i];
      const auto& v = br.verdicts[i];
      int votes = 0;
      for (const auto& [_, av] : br.tallies[i].votes) votes += av.count;
      run.results.items.push_back({item.id, item.gold, v.final_answer, v.rounds_participated, votes, v.tie_broken});
    }
  }
  return run;
}

Baseline single_prompt_baseline_formula(std::span<const DataItem> items, const Labeler& labeler,
                                        Strategy strategy) {
  Baseline base;
  base.provenance = "formula";
  fill_token_lengths(base.ledger, items, labeler, strategy);
  for (std::size_t i = 0; i < items.size(); ++i) {
    base.item_ids.push_back(items[i].id);
    base.ledger.record({i, 1, base.ledger.task_tokens + labeler.item_tokens(items[i]), 0, true, false});
  }
  return base;
}

Baseline single_prompt_baseline_run(std::span<const DataItem> items, const Labeler& labeler, Strategy strategy,
                                    std::uint64_t seed, std::size_t workers) {
  RunConfig cfg;
  cfg.batch_size = 1;
  cfg.rounds = 1;
  cfg.strategy = strategy;
  cfg.seed = seed;
  cfg.workers = workers;
  DatasetRun run = run_dataset(items, cfg, labeler);

  Baseline base;
  base.provenance = "run";
  base.ledger = std::move(run.ledger);
  std::size_t graded = 0, correct = 0;
  for (const auto& item : run.results.items) {
    base.item_ids.push_back(item.id);
    if (!item.gold) continue;
    ++graded;
    if (item.answer && grade(*item.answer, *item.gold)) ++correct;
  }
  if (graded > 0) base.accuracy = static_cast<double>(correct) / static_cast<double>(graded);
  return base;
}

double observed_drop_rate(std::span<const BatchRunResult> batches) {
  std::size_t eligible = 0, dropped = 0;
  for (const auto& b : batches) {
    for (std::size_t k = 1; k < b.effective_sizes.size(); ++k) eligible += b.effective_sizes[k];
    for (int r : b.dropped_after) dropped += r >= 2 ? 1 : 0;
  }
  return eligible == 0 ? 0.0 : static_cast<double>(dropped) / static_cast<double>(eligible);
}

PositionRun run_positions(std::span<const DataItem> items, std::size_t batch_size, const Labeler& labeler,
                          Strategy strategy) {
  if (batch_size == 0 || items.empty() || items.size() % batch_size != 0)
    throw ConfigError("rotation needs a whole number of full batches");
  const std::size_t m = items.size() / batch_size;

  PositionRun out;
  fill_token_lengths(out.ledger, items, labeler, strategy);
  out.results.max_rounds = static_cast<int>(batch_size);
  std::vector<std::size_t> correct(items.size(), 0);
  const auto schedule = rotation_schedule(m, batch_size);
  for (std::size_t r = 0; r < schedule.size(); ++r) {
    for (std::size_t b = 0; b < m; ++b) {
      const auto& slots = schedule[r].batches[b];
      std::vector<DataItem> ordered;
      for (auto idx : slots) ordered.push_back(items[idx]);
      const RoundContext ctx{b, static_cast<int>(r + 1), strategy};
      const LabelResult res = labeler.label_batch(ordered, ctx);
      out.ledger.record({b, ctx.round, res.usage.prompt_tokens, res.usage.completion_tokens, res.usage.estimated,
                         false});
      for (std::size_t j = 0; j < slots.size(); ++j) {
        const auto& item = items[slots[j]];
        const auto& ans = res.answers.at(j);
        const bool ok = item.gold && ans.answer && grade(*ans.answer, *item.gold);
        out.samples.push_back({r, slots[j], j, ok});
        correct[slots[j]] += ok ? 1 : 0;
      }
    }
  }
  out.accuracy = position_accuracy(out.samples, m, batch_size);
  out.results.positions = out.accuracy;
  for (std::size_t b = 0; b < m; ++b)
    out.results.batches.push_back({b, batch_size, static_cast<int>(batch_size),
                                   std::vector<std::size_t>(batch_size, batch_size)});
  // Per-item "answer" in a rotation run is the gold label when the item was
  // right in a majority of its positions.
  for (std::size_t i = 0; i < items.size(); ++i) {
    ItemOutcome o{items[i].id, items[i].gold, std::nullopt, static_cast<int>(batch_size),
                  static_cast<int>(batch_size), false};
    if (items[i].gold && 2 * correct[i] > batch_size) o.answer = items[i].gold;
    out.results.items.push_back(std::move(o));
  }
  return out;
}

std::vector<DataItem> make_synthetic_items(std::size_t n, const TaskSpec& task, std::uint64_t seed,
                                           std::size_t min_words, std::size_t max_words) {
  static constexpr const char* kWords[] = {"the", "river", "question", "whether", "city", "passage", "law",
                                           "season", "film", "tax", "state", "number", "sequel", "court",
                                           "island", "power", "series", "team", "record", "energy"};
  constexpr std::size_t kWordCount = sizeof(kWords) / sizeof(kWords[0]);
  task.validate();
  if (min_words > max_words) std::swap(min_words, max_words);

  std::vector<DataItem> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    SplitMix64 rng(hash_words({seed, i, 0x51a7}));
    DataItem item;
    item.id = "syn-" + std::to_string(i);
    for (const auto& field : task.field_schema.empty() ? std::vector<std::string>{"text"} : task.field_schema) {
      const std::size_t words = min_words + rng.below(max_words - min_words + 1);
      std::string text;
      for (std::size_t w = 0; w < words; ++w) {
        if (w) text.push_back(' ');
        text += kWords[rng.below(kWordCount)];
      }
      item.fields.emplace_back(field, std::move(text));
    }
    if (task.kind == AnswerKind::class_label) {
      item.gold = Answer::label(task.label_space[rng.below(task.label_space.size())]);
    } else {
      item.gold = Answer::numeric(std::to_string(rng.below(1000)));
    }
    out.push_back(std::move(item));
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> config_echo(const RunConfig& config) {
  return {{"batch_size", std::to_string(config.batch_size)},
          {"rounds", std::to_string(config.rounds)},
          {"strategy", std::string(to_string(config.strategy))},
          {"alpha", format_double(config.alpha)},
          {"seas", config.seas ? "true" : "false"},
          {"seed", std::to_string(config.seed)},
          {"identity_first_round", config.identity_first_round ? "true" : "false"},
          {"negatives", std::to_string(config.negatives)}};
}

}  // namespace batchprompt
