#include "batchprompt/backends.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "batchprompt/error.hpp"
#include "batchprompt/rng.hpp"

namespace batchprompt {

namespace {

enum DrawTag : std::uint64_t { kCorrect = 1, kWrongPick = 2, kConfident = 3 };

bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

Answer wrong_answer(const TaskSpec& task, const Answer& gold, std::uint64_t key) {
  SplitMix64 rng(key);
  if (task.kind == AnswerKind::class_label) {
    std::vector<const std::string*> others;
    for (const auto& l : task.label_space)
      if (l != gold.value) others.push_back(&l);
    if (others.empty()) return gold;
    return Answer::label(*others[rng.below(others.size())]);
  }
  const auto offset = static_cast<long long>(1 + rng.below(9));
  if (gold.value.find('.') == std::string::npos && gold.value.size() < 18)
    return Answer::numeric(std::to_string(std::stoll(gold.value) + offset));
  return Answer::numeric(gold.value + std::to_string(offset));
}

}  // namespace

std::size_t TokenEstimator::count(std::string_view text) const {
  std::size_t words = 0;
  bool in_word = false;
  for (unsigned char c : text) {
    const bool space = std::isspace(c) != 0;
    if (!space && !in_word) ++words;
    in_word = !space;
  }
  // Nudge down so exact products (e.g. 10 * 1.3) do not round up.
  return static_cast<std::size_t>(std::ceil(static_cast<double>(words) * ratio - 1e-9));
}

double OracleModel::p_correct(std::size_t position) const {
  return std::clamp(p0 - position_slope * static_cast<double>(position), 0.0, 1.0);
}

void OracleModel::validate() const {
  if (!is_probability(p0)) throw ConfigError("oracle p0 must lie in [0, 1]");
  if (!is_probability(p_confident_if_correct) || !is_probability(p_confident_if_wrong))
    throw ConfigError("oracle confidence probabilities must lie in [0, 1]");
  if (!std::isfinite(position_slope)) throw ConfigError("oracle slope must be finite");
}

ParsedAnswer oracle_answer(const OracleModel& model, const TaskSpec& task, const DataItem& item, int round,
                           std::size_t position, Strategy strategy) {
  if (!item.gold) throw ConfigError("oracle backend needs a gold label for item '" + item.id + "'");
  const std::uint64_t id = hash_string(item.id);
  const auto r = static_cast<std::uint64_t>(round);
  const std::uint64_t correct_key = model.round_independent
                                        ? hash_words({model.seed, id, r, position, kCorrect})
                                        : hash_words({model.seed, id, kCorrect});
  const bool correct = to_unit(correct_key) < model.p_correct(position);

  ParsedAnswer out;
  out.index = position;
  out.answer = correct ? *item.gold : wrong_answer(task, *item.gold, hash_words({model.seed, id, r, position, kWrongPick}));
  if (uses_confidence(strategy)) {
    const double p_conf = correct ? model.p_confident_if_correct : model.p_confident_if_wrong;
    const bool confident = to_unit(hash_words({model.seed, id, r, position, kConfident})) < p_conf;
    out.confidence = confident ? Confidence::confident : Confidence::not_confident;
  }
  return out;
}

OracleLabeler::OracleLabeler(OracleModel model, TaskSpec task) : model_(std::move(model)), task_(std::move(task)) {
  model_.validate();
  task_.validate();
}

LabelResult OracleLabeler::label_batch(std::span<const DataItem> items, const RoundContext& ctx) const {
  LabelResult result;
  result.answers.reserve(items.size());
  result.usage.prompt_tokens = model_.task_tokens;
  for (std::size_t j = 0; j < items.size(); ++j) {
    result.answers.push_back(oracle_answer(model_, task_, items[j], ctx.round, j, ctx.strategy));
    result.usage.prompt_tokens += item_tokens(items[j]);
  }
  result.usage.completion_tokens = model_.completion_tokens_per_item * items.size();
  result.usage.estimated = true;
  return result;
}

std::size_t OracleLabeler::item_tokens(const DataItem& item) const {
  std::size_t n = 0;
  for (const auto& [_, text] : item.fields) n += model_.estimator.count(text);
  return n;
}

}  // namespace batchprompt
