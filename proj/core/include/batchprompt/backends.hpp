#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "batchprompt/datamodel.hpp"
#include "batchprompt/parsing.hpp"
#include "batchprompt/prompting.hpp"

namespace batchprompt {

struct RoundContext {
  std::size_t batch = 0;
  int round = 1;
  Strategy strategy = Strategy::mv;
};

struct TokenUsage {
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
  bool estimated = false;
};

struct LabelResult {
  std::vector<ParsedAnswer> answers;  // one per input position
  TokenUsage usage;
  int attempts = 1;  // requests sent, including rejected ones
  bool batch_failure = false;
  std::vector<std::string> warnings;
};

struct LabelerCapabilities {
  bool emits_confidence = true;
  std::size_t max_context_tokens = 0;  // 0 = unbounded
};

/// Whitespace-token count scaled by `ratio`, rounded up.
struct TokenEstimator {
  double ratio = 1.3;
  std::size_t count(std::string_view text) const;
};

/// Something that labels an ordered batch of items in one call. Implementations
/// must be callable from several batch workers at once.
class Labeler {
 public:
  virtual ~Labeler() = default;

  /// `items` are in prompt order; result.answers[j] belongs to items[j].
  virtual LabelResult label_batch(std::span<const DataItem> items, const RoundContext& ctx) const = 0;
  virtual LabelerCapabilities capabilities() const = 0;

  /// Token length of the task specification (instructions + few-shot).
  virtual std::size_t task_tokens(Strategy strategy) const = 0;
  /// Token length of one rendered data item.
  virtual std::size_t item_tokens(const DataItem& item) const = 0;
};

/// Simulated labeler. P(correct | position j) = clamp(p0 - slope * j, 0, 1);
/// wrong answers are drawn uniformly from the other labels. Every draw is a
/// hash of (seed, item id, round, position) so results never depend on call
/// order. With `round_independent` false, an item's correctness draw is shared
/// across rounds and positions (persistently hard items).
struct OracleModel {
  double p0 = 0.9;
  double position_slope = 0.0;
  bool round_independent = true;
  double p_confident_if_correct = 0.95;
  double p_confident_if_wrong = 0.45;
  std::uint64_t seed = 0;
  std::size_t task_tokens = 500;
  std::size_t completion_tokens_per_item = 12;
  TokenEstimator estimator{};

  double p_correct(std::size_t position) const;
  void validate() const;
};

class OracleLabeler final : public Labeler {
 public:
  OracleLabeler(OracleModel model, TaskSpec task);

  LabelResult label_batch(std::span<const DataItem> items, const RoundContext& ctx) const override;
  LabelerCapabilities capabilities() const override { return {true, 0}; }
  std::size_t task_tokens(Strategy) const override { return model_.task_tokens; }
  std::size_t item_tokens(const DataItem& item) const override;

  const OracleModel& model() const { return model_; }

 private:
  OracleModel model_;
  TaskSpec task_;
};

/// Oracle draw for one (model, item, round, position). Exposed for tests.
ParsedAnswer oracle_answer(const OracleModel& model, const TaskSpec& task, const DataItem& item,
                           int round, std::size_t position, Strategy strategy);

struct HttpBackendConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string model = "gpt-4";
  std::string api_key_env = "OPENAI_API_KEY";
  double temperature = 0.0;
  std::chrono::seconds timeout{120};
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{1000};
  double backoff_factor = 2.0;
  std::size_t max_context_tokens = 8192;
  TokenEstimator estimator{};
};

struct HttpResponse {
  int status = 0;  // 0 = transport failure
  std::string body;
  std::string error;
  std::string retry_after;  // Retry-After header, if any
};

using HttpHeaders = std::vector<std::pair<std::string, std::string>>;

/// Minimal POST interface so the chat client can run against a mock.
class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse post(const std::string& url, const std::string& body, const HttpHeaders& headers,
                            std::chrono::seconds timeout) = 0;
};

/// cpp-httplib backed transport. Opens one connection per request.
std::shared_ptr<HttpTransport> make_default_transport();

/// Request body for one chat-completion call.
std::string chat_request_body(const HttpBackendConfig& cfg, std::string_view prompt);

/// Sends one rendered prompt as a single user message and parses the
/// completion. Rate limits (429), 5xx and transport failures are retried with
/// exponential backoff up to cfg.max_retries; context-length rejections and
/// other 4xx responses are not.
LabelResult http_label_batch(const HttpBackendConfig& cfg, const RenderedPrompt& prompt, const TaskSpec& task,
                             HttpTransport& transport);

class HttpLabeler final : public Labeler {
 public:
  HttpLabeler(HttpBackendConfig cfg, PromptTemplate tmpl, std::vector<FewShotExample> fewshot_pool,
              std::size_t negatives = 2, std::shared_ptr<HttpTransport> transport = make_default_transport());

  LabelResult label_batch(std::span<const DataItem> items, const RoundContext& ctx) const override;
  LabelerCapabilities capabilities() const override { return {true, cfg_.max_context_tokens}; }
  std::size_t task_tokens(Strategy strategy) const override;
  std::size_t item_tokens(const DataItem& item) const override;

  /// Exact prompt this labeler would send.
  RenderedPrompt render(std::span<const DataItem> items, Strategy strategy) const;

 private:
  HttpBackendConfig cfg_;
  PromptTemplate tmpl_;
  TaskSpec task_;
  std::vector<FewShotExample> pool_;
  std::size_t negatives_;
  std::shared_ptr<HttpTransport> transport_;
};

}  // namespace batchprompt
