#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace batchprompt {

enum class AnswerKind { class_label, numeric };

/// A label or final numeric answer. Numeric values are always stored in
/// canonical decimal form, so equality is plain string equality.
struct Answer {
  AnswerKind kind = AnswerKind::class_label;
  std::string value;

  static Answer label(std::string value) { return {AnswerKind::class_label, std::move(value)}; }
  /// Canonicalizes `text`; throws ConfigError when it is not a decimal number.
  static Answer numeric(std::string_view text);

  auto operator<=>(const Answer&) const = default;
};

enum class Confidence { absent, not_confident, confident };

std::string_view to_string(Confidence c);

/// Vote aggregation strategy: plain majority, self-weighted majority, and
/// self-weighted majority with deliberately wrong few-shot examples.
enum class Strategy { mv, sw_mv, sw_mv_neg };

std::string_view to_string(Strategy s);
/// Accepts "mv", "sw-mv", "sw-mv-neg". Throws ConfigError otherwise.
Strategy parse_strategy(std::string_view text);
/// True when the prompt asks the model for a confidence marker.
constexpr bool uses_confidence(Strategy s) { return s != Strategy::mv; }

/// Ordered field-name -> text pairs. Order is the dataset's declared schema order.
using FieldList = std::vector<std::pair<std::string, std::string>>;

struct DataItem {
  std::string id;
  FieldList fields;
  std::optional<Answer> gold;

  /// Text of `name`, or nullptr when the item has no such field.
  const std::string* field(std::string_view name) const;
};

struct TaskSpec {
  std::string name;
  AnswerKind kind = AnswerKind::class_label;
  std::vector<std::string> label_space;   // empty iff kind == numeric
  std::vector<std::string> field_schema;  // dataset field names, in order
  std::string template_id;

  bool accepts(const Answer& a) const;
  /// Builds the Answer for a raw gold/predicted string, validating it against the label space.
  Answer make_answer(std::string_view raw) const;
  void validate() const;
};

/// Canonical decimal form: no grouping commas, no leading zeros, no trailing
/// fractional zeros, "-" only for non-zero negatives. nullopt if not a number.
std::optional<std::string> canonicalize_decimal(std::string_view text);

enum class DatasetFormat { jsonl, csv };

std::optional<DatasetFormat> format_from_path(const std::filesystem::path& path);

/// Loads records in file order. JSONL records are either
/// {"id", "fields": {...}, "label"} or flat objects carrying the schema fields
/// at top level (label under "label" or "answer"). CSV needs a header row.
std::vector<DataItem> load_dataset(const std::filesystem::path& path, DatasetFormat format,
                                   const TaskSpec& schema);
std::vector<DataItem> parse_jsonl_dataset(std::string_view text, const TaskSpec& schema);
std::vector<DataItem> parse_csv_dataset(std::string_view text, const TaskSpec& schema);

/// Canonical JSONL serialization, one record per line.
std::string to_jsonl(std::span<const DataItem> items);

std::vector<DataItem> select_indices(std::span<const DataItem> items,
                                     std::span<const std::size_t> indices);

/// Comma and/or whitespace separated non-negative integers.
std::vector<std::size_t> parse_index_list(std::string_view text);
std::vector<std::size_t> load_index_list(const std::filesystem::path& path);

}  // namespace batchprompt
