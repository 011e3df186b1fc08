#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "batchprompt/datamodel.hpp"

namespace batchprompt {

/// Placeholder tokens recognized in task text (matched case-insensitively).
inline constexpr std::string_view kBatchSizeToken = "[BATCH-SIZE]";
inline constexpr std::string_view kConfDescriptionToken = "[Conf-Description]";
inline constexpr std::string_view kConfPlaceholderToken = "[Place-Holder-Conf]";

/// Default substitutions used for the confidence placeholders when a
/// template does not override them.
extern const std::string_view kDefaultConfDescription;
extern const std::string_view kDefaultConfPlaceholder;

struct FieldBinding {
  std::string name;     // field name in the dataset
  std::string display;  // label shown in the prompt, e.g. "Passage"
};

/// A task prompt: instructions with placeholder tokens plus the line grammars
/// used for input blocks and expected answer lines.
///
/// `input_header` and `output_line` are patterns: `{i}` is the 0-based batch
/// index, `{answer}` the label/number, `{conf}` the rendered confidence marker
/// (" (confident)", " (not confident)" or empty) and `{rationale}` the few-shot
/// reasoning text for numeric tasks.
struct PromptTemplate {
  std::string name;
  AnswerKind kind = AnswerKind::class_label;
  std::vector<std::string> labels;
  std::vector<FieldBinding> fields;
  std::string task_text;
  std::string input_header = "Input {i}:";
  std::string output_line = "Label for Input {i}: [class {answer}]{conf}";
  std::string fewshot_header;
  std::string answer_separator = "====Answer====";
  std::string data_header;
  std::string reminder = "Please make sure to generate [BATCH-SIZE] labels.";
  std::string conf_description{kDefaultConfDescription};
  std::string conf_placeholder{kDefaultConfPlaceholder};

  TaskSpec task_spec() const;
};

/// Parses a template file: a `---` delimited header of `key: value` lines
/// followed by the task text. Header values may use `\n` escapes.
PromptTemplate parse_template(std::string_view text);

/// `builtin:<name>` selects a bundled template; anything else is a file path.
PromptTemplate load_template(std::string_view spec);

std::vector<std::string> bundled_template_names();

enum class Polarity { positive, negative };

struct FewShotExample {
  DataItem item;
  Answer answer;
  Confidence confidence = Confidence::confident;
  Polarity polarity = Polarity::positive;
  std::string rationale;  // numeric tasks only
};

/// JSONL: {"fields": {...}, "label": "1", "confidence": "confident",
/// "polarity": "positive"|"negative", "rationale": "..."}.
std::vector<FewShotExample> load_fewshot(const std::filesystem::path& path, const TaskSpec& task);
std::vector<FewShotExample> parse_fewshot(std::string_view text, const TaskSpec& task);

/// Examples actually shown for `strategy`: every positive, followed by the
/// first `negatives` negative examples under sw-mv-neg.
std::vector<FewShotExample> select_fewshot(std::span<const FewShotExample> pool, Strategy strategy,
                                           std::size_t negatives = 2);

struct RenderedPrompt {
  std::string text;
  std::vector<std::string> order;  // order[i] is the id of the item shown as index i
  std::size_t declared_batch_size = 0;
};

std::string render_task_spec(const PromptTemplate& tmpl, std::size_t batch_size, Strategy strategy);

std::string render_fewshot(std::span<const FewShotExample> examples, const PromptTemplate& tmpl,
                           Strategy strategy);

/// Data section only: data header, indexed input blocks in `order`, reminder.
RenderedPrompt render_batch(std::span<const DataItem> items, std::span<const std::size_t> order,
                            const PromptTemplate& tmpl);

/// Complete prompt for one voting round.
RenderedPrompt render_prompt(const PromptTemplate& tmpl, std::span<const FewShotExample> fewshot,
                             std::span<const DataItem> items, std::span<const std::size_t> order,
                             Strategy strategy);

std::string render_input_block(const PromptTemplate& tmpl, std::size_t index, const DataItem& item);

/// One expected-answer line in the template grammar. Confidence::absent
/// renders no marker.
std::string render_output_line(const PromptTemplate& tmpl, std::size_t index, const Answer& answer,
                               Confidence confidence, std::string_view rationale = {});

}  // namespace batchprompt
