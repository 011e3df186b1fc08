#include "batchprompt/seas.hpp"

#include <functional>

#include "batchprompt/error.hpp"
#include "batchprompt/rng.hpp"

namespace batchprompt {

namespace {

constexpr std::uint64_t kDropTag = 0xd509;

using DropRule = std::function<bool(std::size_t local, const ParsedAnswer& cur, int round, const ActiveSet&)>;

LabelResult call_with_retry(const Labeler& labeler, std::span<const DataItem> ordered, const RoundContext& ctx,
                            TokenLedger& ledger, CallTotals& usage) {
  auto charge_failure = [&](const BackendError& e) {
    for (int i = 0; i < std::max(1, e.attempts()); ++i) {
      ledger.record({ctx.batch, ctx.round, 0, 0, false, true});
      ++usage.calls;
      ++usage.failed_calls;
    }
  };

  for (int attempt = 0;; ++attempt) {
    try {
      LabelResult res = labeler.label_batch(ordered, ctx);
      if (res.answers.size() != ordered.size())
        throw BackendError("labeler returned " + std::to_string(res.answers.size()) + " slots for " +
                               std::to_string(ordered.size()) + " items",
                           false);
      for (int i = 1; i < res.attempts; ++i) {
        ledger.record({ctx.batch, ctx.round, 0, 0, false, true});
        ++usage.calls;
        ++usage.failed_calls;
      }
      ledger.record({ctx.batch, ctx.round, res.usage.prompt_tokens, res.usage.completion_tokens,
                     res.usage.estimated, false});
      ++usage.calls;
      usage.prompt_tokens += res.usage.prompt_tokens;
      usage.completion_tokens += res.usage.completion_tokens;
      return res;
    } catch (const ContextLengthError& e) {
      if (e.attempts() > 0) charge_failure(e);
      throw;
    } catch (const BackendError& e) {
      charge_failure(e);
      if (attempt >= 1) throw;
    }
  }
}

BatchRunResult run_rounds(std::span<const DataItem> items, const RunConfig& config, const Labeler& labeler,
                          TokenLedger& ledger, std::size_t batch_id, const DropRule& drop) {
  config.validate();
  if (items.empty()) throw ConfigError("cannot run an empty batch");

  const std::uint64_t batch_seed = hash_words({config.seed, batch_id});
  BatchRunResult result;
  result.batch = batch_id;
  result.tallies.resize(items.size());
  result.dropped_after.assign(items.size(), 0);
  for (std::size_t i = 0; i < items.size(); ++i) result.tallies[i].item_id = items[i].id;

  ActiveSet state(items.size());
  std::vector<DataItem> ordered;
  for (int k = 1; k <= config.rounds && !state.empty(); ++k) {
    const std::size_t n = state.active.size();
    const Permutation perm = (config.identity_first_round && k == 1) ? identity_permutation(n, batch_seed, k)
                                                                     : permute(n, batch_seed, k);
    ordered.clear();
    for (auto p : perm.order) ordered.push_back(items[state.active[p]]);

    const RoundContext ctx{batch_id, k, config.strategy};
    const LabelResult res = call_with_retry(labeler, ordered, ctx, ledger, result.usage);
    state.rounds_issued = k;
    result.effective_sizes.push_back(n);

    std::vector<std::size_t> keep;
    keep.reserve(n);
    std::vector<bool> dropped(items.size(), false);
    for (std::size_t pos = 0; pos < n; ++pos) {
      const std::size_t local = state.active[perm.order[pos]];
      const ParsedAnswer& cur = res.answers[pos];
      update_tally(result.tallies[local], k, pos, cur, config.strategy, config.alpha);
      if (drop && drop(local, cur, k, state)) dropped[local] = true;
      state.last_answer[local] = cur.answer;
      state.last_confidence[local] = cur.confidence;
    }
    for (auto local : state.active) {
      if (dropped[local]) result.dropped_after[local] = k;
      else keep.push_back(local);
    }
    state.active = std::move(keep);
  }

  result.rounds_issued = state.rounds_issued;
  result.verdicts.reserve(items.size());
  for (const auto& tally : result.tallies)
    result.verdicts.push_back(decide(tally, config.strategy, config.alpha));
  return result;
}

}  // namespace

void RunConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  if (rounds < 1) throw ConfigError("rounds must be >= 1");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  if (seas && !uses_confidence(strategy))
    throw ConfigError("SEAS needs confidence markers: use strategy sw-mv or sw-mv-neg");
}

bool drop_check(const std::optional<Answer>& prev_answer, Confidence prev_confidence,
                const std::optional<Answer>& cur_answer, Confidence cur_confidence, int round) {
  return round > 1 && cur_answer.has_value() && prev_answer.has_value() &&
         cur_confidence == Confidence::confident && prev_confidence == Confidence::confident &&
         *cur_answer == *prev_answer;
}

ActiveSet::ActiveSet(std::size_t n) : active(n), last_answer(n), last_confidence(n, Confidence::absent) {
  for (std::size_t i = 0; i < n; ++i) active[i] = i;
}

BatchRunResult run_batch(std::span<const DataItem> items, const RunConfig& config, const Labeler& labeler,
                         TokenLedger& ledger, std::size_t batch_id) {
  DropRule rule;
  if (config.seas) {
    rule = [](std::size_t local, const ParsedAnswer& cur, int round, const ActiveSet& s) {
      return drop_check(s.last_answer[local], s.last_confidence[local], cur.answer, cur.confidence, round);
    };
  }
  return run_rounds(items, config, labeler, ledger, batch_id, rule);
}

BatchRunResult run_batch_random_drop(std::span<const DataItem> items, const RunConfig& config,
                                     const Labeler& labeler, double drop_prob, TokenLedger& ledger,
                                     std::size_t batch_id) {
  if (!(drop_prob >= 0.0 && drop_prob <= 1.0)) throw ConfigError("drop probability must lie in [0, 1]");
  RunConfig plain = config;
  plain.seas = false;
  const std::uint64_t seed = config.seed;
  DropRule rule = [&items, seed, batch_id, drop_prob](std::size_t local, const ParsedAnswer&, int round,
                                                      const ActiveSet&) {
    if (round < 2) return false;
    const auto key = hash_words({seed, batch_id, hash_string(items[local].id), static_cast<std::uint64_t>(round),
                                 kDropTag});
    return to_unit(key) < drop_prob;
  };
  return run_rounds(items, plain, labeler, ledger, batch_id, rule);
}

}  // namespace batchprompt
