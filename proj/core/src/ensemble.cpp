#include "batchprompt/ensemble.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "batchprompt/error.hpp"
#include "batchprompt/rng.hpp"

namespace batchprompt {

namespace {

constexpr double kWeightEps = 1e-9;

}  // namespace

Permutation permute(std::size_t n, std::uint64_t seed, int round) {
  if (n == 0) throw ConfigError("cannot permute an empty batch");
  Permutation p{std::vector<std::size_t>(n), seed, round};
  std::iota(p.order.begin(), p.order.end(), std::size_t{0});
  SplitMix64 rng(hash_words({seed, static_cast<std::uint64_t>(round), n}));
  for (std::size_t i = n - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i + 1));
    std::swap(p.order[i], p.order[j]);
  }
  return p;
}

Permutation identity_permutation(std::size_t n, std::uint64_t seed, int round) {
  Permutation p{std::vector<std::size_t>(n), seed, round};
  std::iota(p.order.begin(), p.order.end(), std::size_t{0});
  return p;
}

Permutation Permutation::regenerate() const { return permute(order.size(), seed, round); }

int Tally::count(const Answer& a) const {
  auto it = votes.find(a);
  return it == votes.end() ? 0 : it->second.count;
}

double Tally::weight(const Answer& a, double alpha) const {
  auto it = votes.find(a);
  return it == votes.end() ? 0.0 : it->second.weight(alpha);
}

std::size_t Tally::abstentions() const {
  std::size_t n = 0;
  for (const auto& v : history) n += v.answer ? 0 : 1;
  return n;
}

void update_tally(Tally& tally, int round, std::size_t position, const ParsedAnswer& parsed,
                  Strategy strategy, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  tally.history.push_back({round, position, parsed.answer, parsed.confidence});
  if (!parsed.answer) return;

  auto& v = tally.votes[*parsed.answer];
  ++v.count;
  v.last_round = std::max(v.last_round, round);
  const bool strong = parsed.confidence == Confidence::confident ||
                      (parsed.confidence == Confidence::absent && !uses_confidence(strategy));
  (strong ? v.strong : v.weak) += 1;
}

Verdict decide(const Tally& tally, Strategy strategy, double alpha, TieRule) {
  Verdict verdict;
  verdict.item_id = tally.item_id;
  verdict.decided_by = uses_confidence(strategy) ? Strategy::sw_mv : Strategy::mv;
  verdict.rounds_participated = static_cast<int>(tally.history.size());
  if (tally.votes.empty()) return verdict;

  auto primary = [&](const AnswerVotes& v) {
    return uses_confidence(strategy) ? v.weight(alpha) : static_cast<double>(v.count);
  };
  double best = -1.0;
  for (const auto& [answer, v] : tally.votes) best = std::max(best, primary(v));

  std::vector<std::pair<const Answer*, const AnswerVotes*>> tied;
  for (const auto& [answer, v] : tally.votes)
    if (std::abs(primary(v) - best) <= kWeightEps) tied.emplace_back(&answer, &v);

  verdict.tie_broken = tied.size() > 1;
  // std::map iterates in ascending label order, so keeping the first on
  // equality yields the lexicographically smallest answer.
  const auto* winner = tied.front().first;
  const auto* wv = tied.front().second;
  for (std::size_t i = 1; i < tied.size(); ++i) {
    const auto* v = tied[i].second;
    const double dw = v->weight(alpha) - wv->weight(alpha);
    if (dw > kWeightEps || (std::abs(dw) <= kWeightEps && v->last_round > wv->last_round)) {
      winner = tied[i].first;
      wv = v;
    }
  }
  verdict.final_answer = *winner;
  return verdict;
}

std::vector<Rotation> rotation_schedule(std::size_t batches, std::size_t batch_size) {
  if (batches == 0 || batch_size == 0) throw ConfigError("rotation needs at least one full batch");
  std::vector<Rotation> out(batch_size);
  for (std::size_t r = 0; r < batch_size; ++r) {
    out[r].batches.assign(batches, std::vector<std::size_t>(batch_size));
    for (std::size_t b = 0; b < batches; ++b)
      for (std::size_t j = 0; j < batch_size; ++j)
        out[r].batches[b][j] = b * batch_size + (j + r) % batch_size;
  }
  return out;
}

std::vector<PositionAccuracy> position_accuracy(std::span<const PositionSample> samples,
                                                std::size_t batches, std::size_t batch_size) {
  const std::size_t items = batches * batch_size;
  if (samples.size() != items * batch_size)
    throw ConfigError("incomplete rotation set: expected " + std::to_string(items * batch_size) +
                      " samples, got " + std::to_string(samples.size()));
  std::vector<bool> seen(items * batch_size, false);
  std::vector<PositionAccuracy> rows(batch_size);
  std::vector<std::size_t> correct(batch_size, 0);
  for (const auto& s : samples) {
    if (s.item >= items || s.position >= batch_size)
      throw ConfigError("rotation sample outside the schedule");
    auto cell = s.item * batch_size + s.position;
    if (seen[cell])
      throw ConfigError("item " + std::to_string(s.item) + " seen twice at position " +
                        std::to_string(s.position));
    seen[cell] = true;
    ++rows[s.position].samples;
    correct[s.position] += s.correct ? 1 : 0;
  }
  for (std::size_t j = 0; j < batch_size; ++j) {
    rows[j].position = j;
    rows[j].accuracy = static_cast<double>(correct[j]) / static_cast<double>(rows[j].samples);
  }
  return rows;
}

std::string position_accuracy_csv(std::span<const PositionAccuracy> rows) {
  std::ostringstream out;
  out.precision(6);
  out << std::fixed << "position,accuracy,n_samples\n";
  for (const auto& r : rows) out << r.position << ',' << r.accuracy << ',' << r.samples << '\n';
  return out.str();
}

}  // namespace batchprompt
