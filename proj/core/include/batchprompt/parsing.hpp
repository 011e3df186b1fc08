#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "batchprompt/datamodel.hpp"

namespace batchprompt {

/// Answer slot for one batch index. A missing answer is an abstention.
struct ParsedAnswer {
  std::size_t index = 0;
  std::optional<Answer> answer;
  Confidence confidence = Confidence::absent;
  std::string raw_line;

  bool abstained() const { return !answer.has_value(); }
};

struct ParseResult {
  /// Exactly expected_n entries; answers[i].index == i.
  std::vector<ParsedAnswer> answers;
  std::vector<std::string> warnings;
  /// No line of the completion matched the answer grammar.
  bool batch_failure = false;

  std::size_t abstentions() const;
};

/// Extracts per-index answers from a completion such as
///
///   Label for Input 0: [class 1] (confident)
///   Result for Input 3: 5 + 6 = 11. The answer is 11. ('not confident')
///
/// Any "<Label|Result|Answer> for <name> <i>:" header is accepted, so the
/// same parser serves every template grammar. Class mode reads the first
/// "[class X]"; numeric mode reads the number after the last "The answer is".
/// Labels outside `label_space` (when given) become abstentions. Duplicate
/// indices keep the first occurrence; out-of-range indices are ignored. Both
/// cases are reported in `warnings`.
ParseResult parse_batch_response(std::string_view text, std::size_t expected_n, AnswerKind mode,
                                 std::span<const std::string> label_space = {});

/// Exact equality after canonicalization. Throws ConfigError on kind mismatch.
bool grade(const Answer& answer, const Answer& gold);

}  // namespace batchprompt
