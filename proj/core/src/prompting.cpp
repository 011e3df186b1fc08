#include "batchprompt/prompting.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "batchprompt/error.hpp"
#include "bundled_templates.hpp"

namespace batchprompt {

const std::string_view kDefaultConfDescription =
    "You not only need to generate the label/answer, but also your confidence. If you are "
    "confident in your output class, append a \"(confident)\" at the end of the label; else, "
    "append a \"(not confident)\".";
const std::string_view kDefaultConfPlaceholder = "(confident or not confident)";

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool contains_token(std::string_view text, std::string_view token) {
  return lower(text).find(lower(token)) != std::string::npos;
}

std::string replace_token(std::string_view text, std::string_view token, std::string_view with) {
  const std::string hay = lower(text);
  const std::string needle = lower(token);
  std::string out;
  std::size_t pos = 0;
  for (auto hit = hay.find(needle); hit != std::string::npos; hit = hay.find(needle, pos)) {
    out.append(text.substr(pos, hit - pos));
    out.append(with);
    pos = hit + needle.size();
  }
  out.append(text.substr(pos));
  return out;
}

std::string replace_all(std::string text, std::string_view from, std::string_view to) {
  for (auto pos = text.find(from); pos != std::string::npos; pos = text.find(from, pos + to.size()))
    text.replace(pos, from.size(), to);
  return text;
}

// Placeholder removal leaves dangling spaces; strip them per line.
std::string strip_trailing_spaces(std::string_view text) {
  std::string out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    while (!line.empty() && (line.back() == ' ' || line.back() == '\t')) line.remove_suffix(1);
    out.append(line);
    if (end < text.size()) out.push_back('\n');
    start = end + 1;
  }
  return out;
}

std::string unescape(std::string_view v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] == '\\' && i + 1 < v.size()) {
      char n = v[++i];
      out.push_back(n == 'n' ? '\n' : n == 't' ? '\t' : n);
    } else {
      out.push_back(v[i]);
    }
  }
  return out;
}

std::vector<std::string> split_list(std::string_view v) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    auto end = v.find(',', start);
    if (end == std::string_view::npos) end = v.size();
    auto item = trim(v.substr(start, end - start));
    if (!item.empty()) out.emplace_back(item);
    start = end + 1;
  }
  return out;
}

std::string confidence_marker(Confidence c) {
  switch (c) {
    case Confidence::confident: return " (confident)";
    case Confidence::not_confident: return " (not confident)";
    case Confidence::absent: break;
  }
  return {};
}

std::string substitute_index(std::string_view pattern, std::size_t index) {
  return replace_all(std::string(pattern), "{i}", std::to_string(index));
}

void join_section(std::string& out, std::string_view section) {
  if (section.empty()) return;
  if (!out.empty()) out += "\n\n";
  out.append(section);
}

void validate_task_text(const PromptTemplate& tmpl) {
  if (!contains_token(tmpl.task_text, kBatchSizeToken))
    throw TemplateError("template '" + tmpl.name + "' has no " + std::string(kBatchSizeToken) +
                        " placeholder");
}

}  // namespace

TaskSpec PromptTemplate::task_spec() const {
  TaskSpec spec;
  spec.name = name;
  spec.kind = kind;
  spec.label_space = labels;
  for (const auto& f : fields) spec.field_schema.push_back(f.name);
  spec.template_id = name;
  return spec;
}

PromptTemplate parse_template(std::string_view text) {
  PromptTemplate tmpl;
  auto next_line = [&](std::size_t& pos) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    return line;
  };

  std::size_t pos = 0;
  if (trim(next_line(pos)) != "---") throw TemplateError("template must start with a '---' header");
  bool closed = false;
  while (pos <= text.size()) {
    auto line = next_line(pos);
    if (trim(line) == "---") {
      closed = true;
      break;
    }
    if (trim(line).empty() || trim(line).front() == '#') continue;
    auto colon = line.find(':');
    if (colon == std::string_view::npos)
      throw TemplateError("header line without ':': " + std::string(line));
    const auto key = std::string(trim(line.substr(0, colon)));
    const auto value = unescape(trim(line.substr(colon + 1)));

    if (key == "name") {
      tmpl.name = value;
    } else if (key == "mode") {
      if (value == "class") tmpl.kind = AnswerKind::class_label;
      else if (value == "numeric") tmpl.kind = AnswerKind::numeric;
      else throw TemplateError("mode must be 'class' or 'numeric', got '" + value + "'");
    } else if (key == "labels") {
      tmpl.labels = split_list(value);
    } else if (key == "fields") {
      for (const auto& entry : split_list(value)) {
        auto eq = entry.find('=');
        if (eq == std::string::npos) tmpl.fields.push_back({entry, entry});
        else tmpl.fields.push_back({std::string(trim(std::string_view(entry).substr(0, eq))),
                                    std::string(trim(std::string_view(entry).substr(eq + 1)))});
      }
    } else if (key == "input_header") {
      tmpl.input_header = value;
    } else if (key == "output_line") {
      tmpl.output_line = value;
    } else if (key == "fewshot_header") {
      tmpl.fewshot_header = value;
    } else if (key == "answer_separator") {
      tmpl.answer_separator = value;
    } else if (key == "data_header") {
      tmpl.data_header = value;
    } else if (key == "reminder") {
      tmpl.reminder = value;
    } else if (key == "conf_description") {
      tmpl.conf_description = value;
    } else if (key == "conf_placeholder") {
      tmpl.conf_placeholder = value;
    } else {
      throw TemplateError("unknown template header key '" + key + "'");
    }
  }
  if (!closed) throw TemplateError("unterminated template header");

  tmpl.task_text = std::string(trim(pos < text.size() ? text.substr(pos) : std::string_view{}));
  if (tmpl.fields.empty()) throw TemplateError("template '" + tmpl.name + "' declares no fields");
  if (tmpl.output_line.find("{i}") == std::string::npos ||
      tmpl.output_line.find("{answer}") == std::string::npos)
    throw TemplateError("output_line must contain {i} and {answer}");
  if (tmpl.input_header.find("{i}") == std::string::npos)
    throw TemplateError("input_header must contain {i}");
  validate_task_text(tmpl);
  tmpl.task_spec().validate();
  return tmpl;
}

PromptTemplate load_template(std::string_view spec) {
  constexpr std::string_view prefix = "builtin:";
  if (spec.substr(0, prefix.size()) == prefix) {
    const std::string name(spec.substr(prefix.size()));
    const auto& table = detail::bundled_templates();
    auto it = table.find(name);
    if (it == table.end()) throw TemplateError("no bundled template named '" + name + "'");
    return parse_template(it->second);
  }
  std::ifstream in{std::string(spec), std::ios::binary};
  if (!in) throw TemplateError("cannot open template " + std::string(spec));
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_template(ss.str());
}

std::vector<std::string> bundled_template_names() {
  std::vector<std::string> names;
  for (const auto& [name, _] : detail::bundled_templates()) names.push_back(name);
  return names;
}

std::vector<FewShotExample> parse_fewshot(std::string_view text, const TaskSpec& task) {
  std::vector<FewShotExample> out;
  std::size_t row = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = trim(text.substr(start, end - start));
    start = end + 1;
    ++row;
    if (line.empty()) continue;

    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DatasetError(std::string("malformed few-shot record: ") + e.what(), row);
    }
    FewShotExample ex;
    ex.item.id = "fewshot-" + std::to_string(out.size());
    const auto& fields = rec.at("fields");
    for (const auto& name : task.field_schema) {
      if (!fields.contains(name)) throw DatasetError("few-shot example lacks field '" + name + "'", row);
      ex.item.fields.emplace_back(name, fields.at(name).get<std::string>());
    }
    const auto label = rec.at("label");
    const std::string raw = label.is_string() ? label.get<std::string>() : label.dump();
    // Negative examples are deliberately wrong but still inside the label space.
    try {
      ex.answer = task.make_answer(raw);
    } catch (const Error& e) {
      throw DatasetError(e.what(), row);
    }
    const auto conf = rec.value("confidence", std::string("confident"));
    if (conf == "confident") ex.confidence = Confidence::confident;
    else if (conf == "not confident" || conf == "not-confident") ex.confidence = Confidence::not_confident;
    else throw DatasetError("confidence must be 'confident' or 'not confident'", row);
    const auto polarity = rec.value("polarity", std::string("positive"));
    if (polarity == "positive") ex.polarity = Polarity::positive;
    else if (polarity == "negative") ex.polarity = Polarity::negative;
    else throw DatasetError("polarity must be 'positive' or 'negative'", row);
    if (ex.polarity == Polarity::negative && ex.confidence != Confidence::not_confident)
      throw DatasetError("negative few-shot examples must be marked not confident", row);
    ex.rationale = rec.value("rationale", std::string());
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<FewShotExample> load_fewshot(const std::filesystem::path& path, const TaskSpec& task) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open few-shot file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_fewshot(ss.str(), task);
}

std::vector<FewShotExample> select_fewshot(std::span<const FewShotExample> pool, Strategy strategy,
                                           std::size_t negatives) {
  std::vector<FewShotExample> out;
  for (const auto& ex : pool)
    if (ex.polarity == Polarity::positive) out.push_back(ex);
  if (strategy != Strategy::sw_mv_neg) return out;

  std::size_t taken = 0;
  for (const auto& ex : pool) {
    if (taken == negatives) break;
    if (ex.polarity == Polarity::negative) {
      out.push_back(ex);
      ++taken;
    }
  }
  if (taken < negatives)
    throw ConfigError("sw-mv-neg needs " + std::to_string(negatives) +
                      " negative few-shot examples, found " + std::to_string(taken));
  return out;
}

std::string render_task_spec(const PromptTemplate& tmpl, std::size_t batch_size, Strategy strategy) {
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  validate_task_text(tmpl);
  const bool conf = uses_confidence(strategy);
  if (conf && !contains_token(tmpl.task_text, kConfDescriptionToken))
    throw TemplateError("template '" + tmpl.name + "' has no " + std::string(kConfDescriptionToken) +
                        " placeholder, required for " + std::string(to_string(strategy)));

  std::string text = replace_token(tmpl.task_text, kBatchSizeToken, std::to_string(batch_size));
  text = replace_token(text, kConfDescriptionToken, conf ? tmpl.conf_description : "");
  text = replace_token(text, kConfPlaceholderToken, conf ? tmpl.conf_placeholder : "");
  return strip_trailing_spaces(text);
}

std::string render_input_block(const PromptTemplate& tmpl, std::size_t index, const DataItem& item) {
  std::string out = substitute_index(tmpl.input_header, index);
  for (const auto& binding : tmpl.fields) {
    const std::string* value = item.field(binding.name);
    if (!value)
      throw DatasetError("item '" + item.id + "' has no field '" + binding.name + "'");
    out += "\n" + binding.display + ": " + std::string(trim(*value));
  }
  return out;
}

std::string render_output_line(const PromptTemplate& tmpl, std::size_t index, const Answer& answer,
                               Confidence confidence, std::string_view rationale) {
  std::string line = substitute_index(tmpl.output_line, index);
  line = replace_all(std::move(line), "{answer}", answer.value);
  line = replace_all(std::move(line), "{rationale}", trim(rationale));
  line = replace_all(std::move(line), "{conf}", confidence_marker(confidence));
  // An empty rationale leaves a double space behind.
  line = replace_all(std::move(line), ":  ", ": ");
  return std::string(trim(line));
}

std::string render_fewshot(std::span<const FewShotExample> examples, const PromptTemplate& tmpl,
                           Strategy strategy) {
  if (examples.empty()) return {};
  for (const auto& ex : examples) {
    if (ex.polarity == Polarity::negative) {
      if (strategy != Strategy::sw_mv_neg)
        throw ConfigError("negative few-shot example supplied under " + std::string(to_string(strategy)));
      if (ex.confidence != Confidence::not_confident)
        throw ConfigError("negative few-shot examples must be not confident");
    }
  }
  const bool conf = uses_confidence(strategy);

  std::string inputs;
  for (std::size_t i = 0; i < examples.size(); ++i)
    join_section(inputs, render_input_block(tmpl, i, examples[i].item));

  std::string answers;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (!answers.empty()) answers += "\n";
    answers += render_output_line(tmpl, i, examples[i].answer,
                                  conf ? examples[i].confidence : Confidence::absent,
                                  examples[i].rationale);
  }

  std::string out;
  join_section(out, tmpl.fewshot_header);
  join_section(out, inputs);
  if (!tmpl.answer_separator.empty()) out += "\n\n" + tmpl.answer_separator + "\n" + answers;
  else join_section(out, answers);
  return out;
}

RenderedPrompt render_batch(std::span<const DataItem> items, std::span<const std::size_t> order,
                            const PromptTemplate& tmpl) {
  if (order.size() != items.size()) throw ConfigError("order is not a permutation of the batch");
  std::vector<bool> seen(items.size(), false);
  for (auto idx : order) {
    if (idx >= items.size() || seen[idx]) throw ConfigError("order is not a permutation of the batch");
    seen[idx] = true;
  }

  RenderedPrompt prompt;
  prompt.declared_batch_size = items.size();
  join_section(prompt.text, tmpl.data_header);
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const auto& item = items[order[pos]];
    join_section(prompt.text, render_input_block(tmpl, pos, item));
    prompt.order.push_back(item.id);
  }
  join_section(prompt.text,
               strip_trailing_spaces(replace_token(tmpl.reminder, kBatchSizeToken, std::to_string(items.size()))));
  return prompt;
}

RenderedPrompt render_prompt(const PromptTemplate& tmpl, std::span<const FewShotExample> fewshot,
                             std::span<const DataItem> items, std::span<const std::size_t> order,
                             Strategy strategy) {
  RenderedPrompt batch = render_batch(items, order, tmpl);
  std::string text = render_task_spec(tmpl, items.size(), strategy);
  join_section(text, render_fewshot(fewshot, tmpl, strategy));
  join_section(text, batch.text);
  batch.text = std::move(text);
  batch.text.push_back('\n');
  return batch;
}

}  // namespace batchprompt
