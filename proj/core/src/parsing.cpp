#include "batchprompt/parsing.hpp"

#include <algorithm>
#include <cctype>
#include <regex>

#include "batchprompt/error.hpp"

namespace batchprompt {

namespace {

const std::regex& header_re() {
  static const std::regex re(
      R"(^[\s>*#-]*(?:label|result|answer)s?\s+for\s+[a-z][a-z _-]*?\s*(\d+)\s*\**\s*:(.*)$)",
      std::regex::icase | std::regex::optimize);
  return re;
}

const std::regex& class_re() {
  static const std::regex re(R"(\[\s*class\s*([^\]\s]+)\s*\])", std::regex::icase | std::regex::optimize);
  return re;
}

const std::regex& number_re() {
  static const std::regex re(R"(^[\s:*]*([-+]?\s?\$?\s?[0-9][0-9,]*(?:\.[0-9]+)?))", std::regex::optimize);
  return re;
}

const std::regex& confidence_re() {
  static const std::regex re(R"(\(\s*['"]?\s*(not\s+confident|confident)\s*['"]?\s*\))",
                             std::regex::icase | std::regex::optimize);
  return re;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

Confidence extract_confidence(const std::string& content) {
  Confidence conf = Confidence::absent;
  for (std::sregex_iterator it(content.begin(), content.end(), confidence_re()), end; it != end; ++it)
    conf = lower((*it)[1].str()).rfind("not", 0) == 0 ? Confidence::not_confident : Confidence::confident;
  return conf;
}

std::optional<Answer> extract_class(const std::string& content, std::span<const std::string> label_space,
                                    std::size_t index, std::vector<std::string>& warnings) {
  std::smatch m;
  if (!std::regex_search(content, m, class_re())) return std::nullopt;
  std::string label = m[1].str();
  if (!label_space.empty() &&
      std::find(label_space.begin(), label_space.end(), label) == label_space.end()) {
    warnings.push_back("index " + std::to_string(index) + ": label '" + label + "' outside label space");
    return std::nullopt;
  }
  return Answer::label(std::move(label));
}

std::optional<Answer> extract_number(const std::string& content) {
  const std::string hay = lower(content);
  const auto pos = hay.rfind("the answer is");
  if (pos == std::string::npos) return std::nullopt;
  const std::string rest = content.substr(pos + std::string_view("the answer is").size());
  std::smatch m;
  if (!std::regex_search(rest, m, number_re())) return std::nullopt;
  std::string number = m[1].str();
  number.erase(std::remove(number.begin(), number.end(), ' '), number.end());
  auto canon = canonicalize_decimal(number);
  if (!canon) return std::nullopt;
  return Answer{AnswerKind::numeric, std::move(*canon)};
}

struct Block {
  std::size_t index;
  std::string raw;
  std::string content;
};

}  // namespace

std::size_t ParseResult::abstentions() const {
  return static_cast<std::size_t>(
      std::count_if(answers.begin(), answers.end(), [](const ParsedAnswer& a) { return a.abstained(); }));
}

ParseResult parse_batch_response(std::string_view text, std::size_t expected_n, AnswerKind mode,
                                 std::span<const std::string> label_space) {
  if (expected_n == 0) throw ConfigError("expected_n must be >= 1");

  // Split into header-led blocks; continuation lines belong to the preceding header.
  std::vector<Block> blocks;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string line(text.substr(start, end - start));
    start = end + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();

    std::smatch m;
    if (std::regex_match(line, m, header_re())) {
      const auto digits = m[1].str();
      const std::size_t index = digits.size() > 9 ? expected_n : std::stoul(digits);
      blocks.push_back({index, line, m[2].str()});
    } else if (!blocks.empty() && line.find_first_not_of(" \t") != std::string::npos) {
      blocks.back().raw += "\n" + line;
      blocks.back().content += " " + line;
    }
  }

  ParseResult result;
  result.answers.resize(expected_n);
  for (std::size_t i = 0; i < expected_n; ++i) result.answers[i].index = i;
  result.batch_failure = blocks.empty();

  std::vector<bool> filled(expected_n, false);
  for (auto& block : blocks) {
    if (block.index >= expected_n) {
      result.warnings.push_back("ignoring out-of-range index " + std::to_string(block.index));
      continue;
    }
    if (filled[block.index]) {
      result.warnings.push_back("duplicate answer for index " + std::to_string(block.index) +
                                ", keeping the first");
      continue;
    }
    filled[block.index] = true;
    auto& slot = result.answers[block.index];
    slot.raw_line = std::move(block.raw);
    slot.answer = mode == AnswerKind::class_label
                      ? extract_class(block.content, label_space, block.index, result.warnings)
                      : extract_number(block.content);
    slot.confidence = slot.answer ? extract_confidence(block.content) : Confidence::absent;
  }
  return result;
}

bool grade(const Answer& answer, const Answer& gold) {
  if (answer.kind != gold.kind) throw ConfigError("cannot grade answers of different kinds");
  if (answer.kind == AnswerKind::class_label) return answer.value == gold.value;
  auto a = canonicalize_decimal(answer.value);
  auto g = canonicalize_decimal(gold.value);
  return a && g && *a == *g;
}

}  // namespace batchprompt
