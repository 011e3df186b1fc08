#include "batchprompt/datamodel.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "batchprompt/error.hpp"

namespace batchprompt {

namespace {

using json = nlohmann::json;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// JSON label -> raw string. Booleans follow the usual yes=1/no=0 convention.
std::string label_text(const json& v, std::size_t row) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "1" : "0";
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number()) return v.dump();
  throw DatasetError("label must be a string, number or boolean", row);
}

std::string field_text(const json& v, const std::string& name, std::size_t row) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number() || v.is_boolean()) return v.dump();
  throw DatasetError("field '" + name + "' must be a string", row);
}

class DatasetBuilder {
 public:
  explicit DatasetBuilder(const TaskSpec& schema) : schema_(schema) {}

  void add(std::string id, FieldList fields, std::optional<std::string> label, std::size_t row) {
    if (id.empty()) id = std::to_string(items_.size());
    if (!ids_.insert(id).second) throw DatasetError("duplicate id '" + id + "'", row);

    if (!schema_.field_schema.empty()) {
      FieldList ordered;
      for (const auto& name : schema_.field_schema) {
        auto it = std::find_if(fields.begin(), fields.end(),
                               [&](const auto& f) { return f.first == name; });
        if (it == fields.end()) throw DatasetError("missing field '" + name + "'", row);
        ordered.emplace_back(name, std::move(it->second));
      }
      fields = std::move(ordered);
    } else {
      std::vector<std::string> names;
      for (const auto& f : fields) names.push_back(f.first);
      if (items_.empty()) {
        first_names_ = names;
      } else if (names != first_names_) {
        throw DatasetError("field set differs from the first record", row);
      }
    }

    std::optional<Answer> gold;
    if (label) {
      try {
        gold = schema_.make_answer(*label);
      } catch (const Error& e) {
        throw DatasetError(e.what(), row);
      }
    }
    items_.push_back(DataItem{std::move(id), std::move(fields), std::move(gold)});
  }

  void check_known(const std::string& name, std::size_t row) const {
    if (schema_.field_schema.empty()) return;
    if (std::find(schema_.field_schema.begin(), schema_.field_schema.end(), name) ==
        schema_.field_schema.end())
      throw DatasetError("unknown field '" + name + "'", row);
  }

  std::vector<DataItem> take() { return std::move(items_); }

 private:
  const TaskSpec& schema_;
  std::vector<DataItem> items_;
  std::set<std::string> ids_;
  std::vector<std::string> first_names_;
};

std::vector<std::string> split_csv_record(std::string_view text, std::size_t& pos, std::size_t row) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  bool at_start = true;
  while (pos < text.size()) {
    char c = text[pos++];
    if (quoted) {
      if (c == '"') {
        if (pos < text.size() && text[pos] == '"') {
          cell.push_back('"');
          ++pos;
        } else {
          quoted = false;
        }
      } else {
        cell.push_back(c);
      }
      continue;
    }
    if (c == '"' && at_start) {
      quoted = true;
      at_start = false;
    } else if (c == ',') {
      out.push_back(std::move(cell));
      cell.clear();
      at_start = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && pos < text.size() && text[pos] == '\n') ++pos;
      out.push_back(std::move(cell));
      return out;
    } else {
      cell.push_back(c);
      at_start = false;
    }
  }
  if (quoted) throw DatasetError("unterminated quoted cell", row);
  out.push_back(std::move(cell));
  return out;
}

}  // namespace

Answer Answer::numeric(std::string_view text) {
  auto canon = canonicalize_decimal(text);
  if (!canon) throw ConfigError("not a decimal number: '" + std::string(text) + "'");
  return {AnswerKind::numeric, std::move(*canon)};
}

std::string_view to_string(Confidence c) {
  switch (c) {
    case Confidence::confident: return "confident";
    case Confidence::not_confident: return "not confident";
    case Confidence::absent: break;
  }
  return "absent";
}

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::mv: return "mv";
    case Strategy::sw_mv: return "sw-mv";
    case Strategy::sw_mv_neg: return "sw-mv-neg";
  }
  return "mv";
}

Strategy parse_strategy(std::string_view text) {
  if (text == "mv") return Strategy::mv;
  if (text == "sw-mv") return Strategy::sw_mv;
  if (text == "sw-mv-neg") return Strategy::sw_mv_neg;
  throw ConfigError("unknown strategy '" + std::string(text) + "' (expected mv, sw-mv or sw-mv-neg)");
}

const std::string* DataItem::field(std::string_view name) const {
  for (const auto& [k, v] : fields)
    if (k == name) return &v;
  return nullptr;
}

bool TaskSpec::accepts(const Answer& a) const {
  if (a.kind != kind) return false;
  if (kind == AnswerKind::numeric) return true;
  return std::find(label_space.begin(), label_space.end(), a.value) != label_space.end();
}

Answer TaskSpec::make_answer(std::string_view raw) const {
  if (kind == AnswerKind::numeric) return Answer::numeric(raw);
  Answer a = Answer::label(std::string(trim(raw)));
  if (!accepts(a)) throw ConfigError("label '" + a.value + "' outside label space of task " + name);
  return a;
}

void TaskSpec::validate() const {
  if ((kind == AnswerKind::class_label) == label_space.empty())
    throw ConfigError("task " + name + ": label space must be non-empty iff answers are class labels");
}

std::optional<std::string> canonicalize_decimal(std::string_view text) {
  text = trim(text);
  std::string digits;
  bool negative = false;
  std::size_t i = 0;
  if (i < text.size() && (text[i] == '+' || text[i] == '-')) negative = text[i++] == '-';
  if (i < text.size() && text[i] == '$') ++i;

  std::string int_part, frac_part;
  bool seen_point = false;
  bool any_digit = false;
  for (; i < text.size(); ++i) {
    char c = text[i];
    if (std::isdigit(static_cast<unsigned char>(c))) {
      (seen_point ? frac_part : int_part).push_back(c);
      any_digit = true;
    } else if (c == ',' && !seen_point) {
      continue;
    } else if (c == '.' && !seen_point) {
      seen_point = true;
    } else {
      return std::nullopt;
    }
  }
  if (!any_digit) return std::nullopt;

  auto nz = int_part.find_first_not_of('0');
  int_part = nz == std::string::npos ? "0" : int_part.substr(nz);
  while (!frac_part.empty() && frac_part.back() == '0') frac_part.pop_back();

  std::string out;
  if (negative && !(int_part == "0" && frac_part.empty())) out.push_back('-');
  out += int_part;
  if (!frac_part.empty()) out += "." + frac_part;
  return out;
}

std::optional<DatasetFormat> format_from_path(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".jsonl" || ext == ".json" || ext == ".ndjson") return DatasetFormat::jsonl;
  if (ext == ".csv") return DatasetFormat::csv;
  return std::nullopt;
}

std::vector<DataItem> load_dataset(const std::filesystem::path& path, DatasetFormat format,
                                   const TaskSpec& schema) {
  const std::string text = read_file(path);
  return format == DatasetFormat::jsonl ? parse_jsonl_dataset(text, schema)
                                        : parse_csv_dataset(text, schema);
}

std::vector<DataItem> parse_jsonl_dataset(std::string_view text, const TaskSpec& schema) {
  DatasetBuilder builder(schema);
  std::size_t row = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = trim(text.substr(start, end - start));
    start = end + 1;
    ++row;
    if (line.empty()) continue;

    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DatasetError(std::string("malformed JSON: ") + e.what(), row);
    }
    if (!rec.is_object()) throw DatasetError("record is not an object", row);

    std::string id;
    if (auto it = rec.find("id"); it != rec.end()) {
      id = it->is_string() ? it->get<std::string>() : it->dump();
    } else if (auto idx = rec.find("idx"); idx != rec.end()) {
      id = idx->is_string() ? idx->get<std::string>() : idx->dump();
    }

    std::optional<std::string> label;
    FieldList fields;
    if (auto f = rec.find("fields"); f != rec.end()) {
      if (!f->is_object()) throw DatasetError("\"fields\" must be an object", row);
      for (const auto& [name, value] : f->items()) {
        builder.check_known(name, row);
        fields.emplace_back(name, field_text(value, name, row));
      }
      for (const auto& [key, value] : rec.items())
        if (key != "id" && key != "idx" && key != "fields" && key != "label")
          throw DatasetError("unknown field '" + key + "'", row);
      if (auto l = rec.find("label"); l != rec.end() && !l->is_null()) label = label_text(*l, row);
    } else {
      for (const auto& [key, value] : rec.items()) {
        if (key == "id" || key == "idx") continue;
        if (key == "label" || key == "answer") {
          if (!value.is_null()) label = label_text(value, row);
          continue;
        }
        builder.check_known(key, row);
        fields.emplace_back(key, field_text(value, key, row));
      }
    }
    builder.add(std::move(id), std::move(fields), std::move(label), row);
  }
  return builder.take();
}

std::vector<DataItem> parse_csv_dataset(std::string_view text, const TaskSpec& schema) {
  DatasetBuilder builder(schema);
  if (trim(text).empty()) return {};
  std::size_t pos = 0;
  std::size_t row = 1;
  const auto header = split_csv_record(text, pos, row);
  for (const auto& h : header)
    if (h != "id" && h != "label" && h != "answer") builder.check_known(h, row);

  while (pos < text.size()) {
    ++row;
    auto cells = split_csv_record(text, pos, row);
    if (cells.size() == 1 && trim(cells[0]).empty()) continue;
    if (cells.size() != header.size())
      throw DatasetError("expected " + std::to_string(header.size()) + " columns, got " +
                             std::to_string(cells.size()),
                         row);
    std::string id;
    std::optional<std::string> label;
    FieldList fields;
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (header[c] == "id") {
        id = cells[c];
      } else if (header[c] == "label" || header[c] == "answer") {
        if (!trim(cells[c]).empty()) label = cells[c];
      } else {
        fields.emplace_back(header[c], std::move(cells[c]));
      }
    }
    builder.add(std::move(id), std::move(fields), std::move(label), row);
  }
  return builder.take();
}

std::string to_jsonl(std::span<const DataItem> items) {
  std::string out;
  for (const auto& item : items) {
    json rec;
    rec["id"] = item.id;
    json fields = json::object();
    for (const auto& [k, v] : item.fields) fields[k] = v;
    rec["fields"] = std::move(fields);
    if (item.gold) rec["label"] = item.gold->value;
    out += rec.dump();
    out.push_back('\n');
  }
  return out;
}

std::vector<DataItem> select_indices(std::span<const DataItem> items,
                                     std::span<const std::size_t> indices) {
  std::vector<bool> seen(items.size(), false);
  std::vector<DataItem> out;
  out.reserve(indices.size());
  for (auto idx : indices) {
    if (idx >= items.size())
      throw DatasetError("index " + std::to_string(idx) + " out of range for " +
                         std::to_string(items.size()) + " items");
    if (seen[idx]) throw DatasetError("duplicate index " + std::to_string(idx));
    seen[idx] = true;
    out.push_back(items[idx]);
  }
  return out;
}

std::vector<std::size_t> parse_index_list(std::string_view text) {
  std::vector<std::size_t> out;
  std::string token;
  auto flush = [&] {
    if (token.empty()) return;
    std::size_t value = 0;
    for (char c : token) {
      if (!std::isdigit(static_cast<unsigned char>(c)))
        throw DatasetError("invalid index '" + token + "'");
      value = value * 10 + static_cast<std::size_t>(c - '0');
    }
    out.push_back(value);
    token.clear();
  };
  for (char c : text) {
    if (c == ',' || std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else {
      token.push_back(c);
    }
  }
  flush();
  return out;
}

std::vector<std::size_t> load_index_list(const std::filesystem::path& path) {
  return parse_index_list(read_file(path));
}

}  // namespace batchprompt
