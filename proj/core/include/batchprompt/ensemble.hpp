#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "batchprompt/datamodel.hpp"
#include "batchprompt/parsing.hpp"

namespace batchprompt {

inline constexpr double kDefaultAlpha = 0.2;

struct Permutation {
  std::vector<std::size_t> order;  // order[position] = batch-local item index
  std::uint64_t seed = 0;
  int round = 0;

  /// Rebuilds the permutation from (seed, round).
  Permutation regenerate() const;
};

/// Uniform random bijection on [0, n), a pure function of (n, seed, round).
Permutation permute(std::size_t n, std::uint64_t seed, int round);
Permutation identity_permutation(std::size_t n, std::uint64_t seed = 0, int round = 0);

struct Vote {
  int round = 0;
  std::size_t position = 0;
  std::optional<Answer> answer;  // nullopt = abstention
  Confidence confidence = Confidence::absent;
};

/// Per-answer vote totals. Weight is kept as (strong, weak) counts so the
/// weighted sum is exact and independent of history order.
struct AnswerVotes {
  int count = 0;
  int strong = 0;  // weight 1
  int weak = 0;    // weight alpha
  int last_round = 0;

  double weight(double alpha) const { return strong + alpha * weak; }
};

struct Tally {
  std::string item_id;
  std::map<Answer, AnswerVotes> votes;
  std::vector<Vote> history;

  int count(const Answer& a) const;
  double weight(const Answer& a, double alpha) const;
  std::size_t abstentions() const;
};

/// Appends one round's vote. Confident answers weigh 1; not-confident answers
/// weigh alpha, as do answers without a marker under sw-mv / sw-mv-neg.
/// Abstentions only extend the history. Throws ConfigError if alpha is
/// outside [0, 1].
void update_tally(Tally& tally, int round, std::size_t position, const ParsedAnswer& parsed,
                  Strategy strategy, double alpha = kDefaultAlpha);

/// Tie-break order after the primary score: larger weight-sum, then the
/// answer voted most recently, then the lexicographically smallest label.
enum class TieRule { weight_recent_lexicographic };

struct Verdict {
  std::string item_id;
  std::optional<Answer> final_answer;  // nullopt when every round abstained
  Strategy decided_by = Strategy::mv;
  bool tie_broken = false;
  int rounds_participated = 0;
};

Verdict decide(const Tally& tally, Strategy strategy, double alpha = kDefaultAlpha,
               TieRule rule = TieRule::weight_recent_lexicographic);

/// Rotation r places item b*n + ((j + r) mod n) at position j of batch b.
/// Over n rotations every item visits every position exactly once.
struct Rotation {
  std::vector<std::vector<std::size_t>> batches;  // global item indices by position
};

std::vector<Rotation> rotation_schedule(std::size_t batches, std::size_t batch_size);

struct PositionSample {
  std::size_t rotation = 0;
  std::size_t item = 0;
  std::size_t position = 0;
  bool correct = false;
};

struct PositionAccuracy {
  std::size_t position = 0;
  double accuracy = 0.0;
  std::size_t samples = 0;
};

/// Accuracy by position over a complete rotation run. Throws ConfigError
/// unless every (item, position) pair of the m*n items appears exactly once.
std::vector<PositionAccuracy> position_accuracy(std::span<const PositionSample> samples,
                                                std::size_t batches, std::size_t batch_size);

/// CSV with header `position,accuracy,n_samples`.
std::string position_accuracy_csv(std::span<const PositionAccuracy> rows);

}  // namespace batchprompt
