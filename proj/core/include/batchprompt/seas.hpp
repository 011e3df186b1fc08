#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "batchprompt/accounting.hpp"
#include "batchprompt/backends.hpp"
#include "batchprompt/datamodel.hpp"
#include "batchprompt/ensemble.hpp"

namespace batchprompt {

struct RunConfig {
  std::size_t batch_size = 32;
  int rounds = 5;  // K
  Strategy strategy = Strategy::mv;
  double alpha = kDefaultAlpha;
  bool seas = false;
  std::uint64_t seed = 0;
  /// Round 1 keeps dataset order (naive BatchPrompt); later rounds permute.
  bool identity_first_round = false;
  /// Few-shot negatives shown under sw-mv-neg.
  std::size_t negatives = 2;
  /// Concurrent batch workers. Results do not depend on this value.
  std::size_t workers = 1;

  /// Throws ConfigError for out-of-range values or SEAS without confidence.
  void validate() const;
};

/// Early-stopping rule: drop once two consecutive rounds return the same
/// confident answer (never before round 2, never on an abstention).
bool drop_check(const std::optional<Answer>& prev_answer, Confidence prev_confidence,
                const std::optional<Answer>& cur_answer, Confidence cur_confidence, int round);

/// Items still voting in a batch. Dropped items never come back.
struct ActiveSet {
  std::vector<std::size_t> active;  // batch-local indices, ascending
  std::vector<std::optional<Answer>> last_answer;
  std::vector<Confidence> last_confidence;
  int rounds_issued = 0;

  explicit ActiveSet(std::size_t n);
  bool empty() const { return active.empty(); }
};

struct BatchRunResult {
  std::size_t batch = 0;
  std::vector<Verdict> verdicts;  // one per batch item, in batch order
  std::vector<Tally> tallies;
  int rounds_issued = 0;
  std::vector<std::size_t> effective_sizes;  // active items per issued round
  std::vector<int> dropped_after;  // round an item left the active set, 0 = stayed
  CallTotals usage;
};

/// Runs up to K voting rounds over one batch. Each round permutes the active
/// items, issues one labeler call (none once the batch has drained), votes,
/// and with SEAS enabled drops items per drop_check. A failed call is retried
/// once with the identical batch before the error propagates. Every call is
/// recorded in `ledger`.
BatchRunResult run_batch(std::span<const DataItem> items, const RunConfig& config, const Labeler& labeler,
                         TokenLedger& ledger, std::size_t batch_id = 0);

/// Ablation: as run_batch, but from round 2 each active item is dropped
/// independently with probability `drop_prob` instead of by drop_check.
BatchRunResult run_batch_random_drop(std::span<const DataItem> items, const RunConfig& config,
                                     const Labeler& labeler, double drop_prob, TokenLedger& ledger,
                                     std::size_t batch_id = 0);

}  // namespace batchprompt
