#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "batchprompt/datamodel.hpp"
#include "batchprompt/ensemble.hpp"

namespace batchprompt {

/// Closed-form prompt-token cost of one pass over N items at batch size s:
/// l_task * ceil(N / s) + l_data. Throws ConfigError when s == 0.
std::size_t estimate_total_tokens(std::size_t task_tokens, std::size_t data_tokens, std::size_t items,
                                  std::size_t batch_size);

struct CallRecord {
  std::size_t batch = 0;
  int round = 0;
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
  bool estimated = false;
  bool failed = false;  // request sent but no usable completion
};

class TokenLedger {
 public:
  std::size_t task_tokens = 0;  // l_task
  std::size_t data_tokens = 0;  // l_data, summed over every item once

  void record(const CallRecord& call);
  /// Appends every call of `other` (used for the single-writer merge of
  /// worker-local ledgers). Task/data lengths are left alone.
  void merge(const TokenLedger& other);

  const std::vector<CallRecord>& calls() const { return calls_; }
  std::size_t total_calls() const { return total_calls_; }
  std::size_t failed_calls() const { return failed_calls_; }
  std::size_t total_prompt_tokens() const { return total_prompt_; }
  std::size_t total_completion_tokens() const { return total_completion_; }
  bool contains_estimates() const { return estimated_calls_ > 0; }
  bool all_estimated() const { return estimated_calls_ > 0 && estimated_calls_ == total_calls_; }

 private:
  std::vector<CallRecord> calls_;
  std::size_t total_calls_ = 0;
  std::size_t failed_calls_ = 0;
  std::size_t total_prompt_ = 0;
  std::size_t total_completion_ = 0;
  std::size_t estimated_calls_ = 0;
};

void record_call(TokenLedger& ledger, std::size_t batch, int round, std::size_t prompt_tokens,
                 std::size_t completion_tokens, bool estimated);

/// Per-item outcome fed to the report.
struct ItemOutcome {
  std::string id;
  std::optional<Answer> gold;
  std::optional<Answer> answer;  // nullopt = abstained in every round
  int rounds_participated = 0;
  int votes = 0;
  bool tie_broken = false;
};

struct BatchOutcome {
  std::size_t batch = 0;
  std::size_t size = 0;
  int rounds_issued = 0;
  std::vector<std::size_t> effective_sizes;
};

struct RunResults {
  std::vector<ItemOutcome> items;
  std::vector<BatchOutcome> batches;
  int max_rounds = 1;
  std::vector<PositionAccuracy> positions;  // filled by rotation runs only
};

/// SinglePrompt reference: one item per call, full task specification each time.
struct Baseline {
  std::vector<std::string> item_ids;
  TokenLedger ledger;
  std::optional<double> accuracy;
  std::string provenance;  // "formula" or "run"
};

struct CallTotals {
  std::size_t calls = 0;
  std::size_t failed_calls = 0;
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
};

struct BaselineComparison {
  std::string provenance;
  std::size_t calls = 0;
  std::size_t prompt_tokens = 0;
  std::optional<double> accuracy;
  double calls_ratio = 0.0;  // run calls / baseline calls
  double token_ratio = 0.0;  // run prompt tokens / baseline prompt tokens
};

inline constexpr int kReportSchemaVersion = 1;

struct RunReport {
  std::vector<std::pair<std::string, std::string>> config;
  std::size_t items = 0;
  std::size_t batch_size = 0;
  std::optional<double> accuracy;
  std::size_t correct = 0;
  std::size_t abstained_items = 0;
  std::size_t tie_broken_items = 0;
  std::map<int, std::size_t> rounds_histogram;  // rounds participated -> items
  /// Calls actually issued; a drained batch stops calling.
  CallTotals until_drain;
  /// Every batch charged for all K rounds; phantom rounds cost the task
  /// specification only.
  CallTotals batches_x_rounds;
  std::string token_provenance;  // "measured", "estimated" or "mixed"
  std::size_t task_tokens = 0;
  std::size_t data_tokens = 0;
  std::size_t closed_form_tokens = 0;  // estimate_total_tokens for one round
  std::optional<BaselineComparison> baseline;
  std::vector<PositionAccuracy> positions;

  std::string to_json() const;
  static std::string summary_csv_header();
  std::string summary_csv_row() const;
};

/// Builds the run report. Throws ConfigError when a baseline covers a
/// different item set than the run.
RunReport emit_report(const RunResults& results, const TokenLedger& ledger, const std::optional<Baseline>& baseline,
                      std::vector<std::pair<std::string, std::string>> config, std::size_t batch_size);

/// id,gold,answer,correct,rounds,votes,tie_broken
std::string verdicts_csv(const RunResults& results);

/// Writes report.json, summary.csv, verdicts.csv and (rotation runs) positions.csv.
void write_report_files(const RunReport& report, const RunResults& results, const std::filesystem::path& dir);

}  // namespace batchprompt
