#include "batchprompt/accounting.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "batchprompt/error.hpp"
#include "batchprompt/parsing.hpp"

namespace batchprompt {

namespace {

using ojson = nlohmann::ordered_json;

std::string csv_escape(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

ojson totals_json(const CallTotals& t) {
  return ojson{{"calls", t.calls},
               {"failed_calls", t.failed_calls},
               {"prompt_tokens", t.prompt_tokens},
               {"completion_tokens", t.completion_tokens}};
}

std::string fixed(double v, int precision = 6) {
  std::ostringstream ss;
  ss.setf(std::ios::fixed);
  ss.precision(precision);
  ss << v;
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

}  // namespace

std::size_t estimate_total_tokens(std::size_t task_tokens, std::size_t data_tokens, std::size_t items,
                                  std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  const std::size_t calls = (items + batch_size - 1) / batch_size;
  return task_tokens * calls + data_tokens;
}

void TokenLedger::record(const CallRecord& call) {
  calls_.push_back(call);
  ++total_calls_;
  failed_calls_ += call.failed ? 1 : 0;
  total_prompt_ += call.prompt_tokens;
  total_completion_ += call.completion_tokens;
  estimated_calls_ += call.estimated ? 1 : 0;
}

void TokenLedger::merge(const TokenLedger& other) {
  for (const auto& c : other.calls_) record(c);
}

void record_call(TokenLedger& ledger, std::size_t batch, int round, std::size_t prompt_tokens,
                 std::size_t completion_tokens, bool estimated) {
  ledger.record({batch, round, prompt_tokens, completion_tokens, estimated, false});
}

RunReport emit_report(const RunResults& results, const TokenLedger& ledger, const std::optional<Baseline>& baseline,
                      std::vector<std::pair<std::string, std::string>> config, std::size_t batch_size) {
  RunReport r;
  r.config = std::move(config);
  r.items = results.items.size();
  r.batch_size = batch_size;
  r.positions = results.positions;

  std::size_t graded = 0;
  for (const auto& item : results.items) {
    ++r.rounds_histogram[item.rounds_participated];
    if (!item.answer) ++r.abstained_items;
    if (item.tie_broken) ++r.tie_broken_items;
    if (item.gold) {
      ++graded;
      if (item.answer && grade(*item.answer, *item.gold)) ++r.correct;
    }
  }
  if (graded > 0) r.accuracy = static_cast<double>(r.correct) / static_cast<double>(graded);

  r.until_drain = {ledger.total_calls(), ledger.failed_calls(), ledger.total_prompt_tokens(),
                   ledger.total_completion_tokens()};
  std::size_t phantom = 0;
  for (const auto& b : results.batches)
    phantom += static_cast<std::size_t>(std::max(0, results.max_rounds - b.rounds_issued));
  r.batches_x_rounds = r.until_drain;
  r.batches_x_rounds.calls += phantom;
  r.batches_x_rounds.prompt_tokens += phantom * ledger.task_tokens;

  r.token_provenance = ledger.all_estimated() ? "estimated" : ledger.contains_estimates() ? "mixed" : "measured";
  r.task_tokens = ledger.task_tokens;
  r.data_tokens = ledger.data_tokens;
  if (batch_size > 0)
    r.closed_form_tokens = estimate_total_tokens(ledger.task_tokens, ledger.data_tokens, r.items, batch_size);

  if (baseline) {
    std::vector<std::string> run_ids, base_ids = baseline->item_ids;
    for (const auto& item : results.items) run_ids.push_back(item.id);
    std::sort(run_ids.begin(), run_ids.end());
    std::sort(base_ids.begin(), base_ids.end());
    if (run_ids != base_ids) throw ConfigError("baseline and run cover different item sets");

    BaselineComparison cmp;
    cmp.provenance = baseline->provenance;
    cmp.calls = baseline->ledger.total_calls();
    cmp.prompt_tokens = baseline->ledger.total_prompt_tokens();
    cmp.accuracy = baseline->accuracy;
    if (cmp.calls > 0)
      cmp.calls_ratio = static_cast<double>(r.until_drain.calls) / static_cast<double>(cmp.calls);
    if (cmp.prompt_tokens > 0)
      cmp.token_ratio = static_cast<double>(r.until_drain.prompt_tokens) / static_cast<double>(cmp.prompt_tokens);
    r.baseline = cmp;
  }
  return r;
}

std::string RunReport::to_json() const {
  ojson doc;
  doc["schema_version"] = kReportSchemaVersion;
  ojson cfg = ojson::object();
  for (const auto& [k, v] : config) cfg[k] = v;
  doc["config"] = std::move(cfg);
  doc["items"] = items;
  doc["batch_size"] = batch_size;
  if (accuracy) {
    doc["accuracy"] = *accuracy;
    doc["correct"] = correct;
  }
  doc["abstained_items"] = abstained_items;
  doc["tie_broken_items"] = tie_broken_items;
  ojson hist = ojson::object();
  for (const auto& [rounds, n] : rounds_histogram) hist[std::to_string(rounds)] = n;
  doc["rounds_histogram"] = std::move(hist);
  doc["totals"] = {{"until_drain", totals_json(until_drain)}, {"batches_x_rounds", totals_json(batches_x_rounds)}};
  doc["tokens"] = {{"provenance", token_provenance},
                   {"task_tokens", task_tokens},
                   {"data_tokens", data_tokens},
                   {"closed_form_single_round", closed_form_tokens}};
  if (baseline) {
    ojson b{{"provenance", baseline->provenance},
            {"calls", baseline->calls},
            {"prompt_tokens", baseline->prompt_tokens},
            {"calls_ratio", baseline->calls_ratio},
            {"token_ratio", baseline->token_ratio}};
    if (baseline->accuracy) b["accuracy"] = *baseline->accuracy;
    doc["single_prompt_baseline"] = std::move(b);
  }
  if (!positions.empty()) {
    ojson pos = ojson::array();
    for (const auto& p : positions)
      pos.push_back({{"position", p.position}, {"accuracy", p.accuracy}, {"n_samples", p.samples}});
    doc["position_accuracy"] = std::move(pos);
  }
  return doc.dump(2) + "\n";
}

std::string RunReport::summary_csv_header() {
  return "schema_version,items,batch_size,accuracy,abstained_items,calls_until_drain,prompt_tokens_until_drain,"
         "calls_batches_x_rounds,prompt_tokens_batches_x_rounds,completion_tokens,token_provenance,"
         "baseline_calls,baseline_prompt_tokens,calls_ratio,token_ratio";
}

std::string RunReport::summary_csv_row() const {
  std::ostringstream out;
  out << kReportSchemaVersion << ',' << items << ',' << batch_size << ',' << (accuracy ? fixed(*accuracy) : "")
      << ',' << abstained_items << ',' << until_drain.calls << ',' << until_drain.prompt_tokens << ','
      << batches_x_rounds.calls << ',' << batches_x_rounds.prompt_tokens << ',' << until_drain.completion_tokens
      << ',' << token_provenance << ',';
  if (baseline) {
    out << baseline->calls << ',' << baseline->prompt_tokens << ',' << fixed(baseline->calls_ratio) << ','
        << fixed(baseline->token_ratio);
  } else {
    out << ",,,";
  }
  return out.str();
}

std::string verdicts_csv(const RunResults& results) {
  std::ostringstream out;
  out << "id,gold,answer,correct,rounds,votes,tie_broken\n";
  for (const auto& item : results.items) {
    out << csv_escape(item.id) << ',' << (item.gold ? csv_escape(item.gold->value) : "") << ','
        << (item.answer ? csv_escape(item.answer->value) : "") << ',';
    if (item.gold) out << ((item.answer && grade(*item.answer, *item.gold)) ? 1 : 0);
    out << ',' << item.rounds_participated << ',' << item.votes << ',' << (item.tie_broken ? 1 : 0) << '\n';
  }
  return out.str();
}

void write_report_files(const RunReport& report, const RunResults& results, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file(dir / "report.json", report.to_json());
  write_file(dir / "summary.csv", RunReport::summary_csv_header() + "\n" + report.summary_csv_row() + "\n");
  write_file(dir / "verdicts.csv", verdicts_csv(results));
  if (!report.positions.empty()) write_file(dir / "positions.csv", position_accuracy_csv(report.positions));
}

}  // namespace batchprompt
