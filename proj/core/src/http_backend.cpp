#include <algorithm>
#include <cstdlib>
#include <numeric>
#include <optional>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "batchprompt/backends.hpp"
#include "batchprompt/error.hpp"

namespace batchprompt {

namespace {

using json = nlohmann::json;

class HttplibTransport final : public HttpTransport {
 public:
  HttpResponse post(const std::string& url, const std::string& body, const HttpHeaders& headers,
                    std::chrono::seconds timeout) override {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) return {0, {}, "malformed URL " + url, {}};
    const auto path_start = url.find('/', scheme_end + 3);
    const std::string origin = url.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

    httplib::Client client(origin);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    httplib::Headers h;
    for (const auto& [k, v] : headers)
      if (k != "Content-Type") h.emplace(k, v);

    auto res = client.Post(path, h, body, "application/json");
    if (!res) return {0, {}, httplib::to_string(res.error()), {}};
    return {res->status, res->body, {}, res->get_header_value("Retry-After")};
  }
};

bool is_context_length_rejection(const HttpResponse& r) {
  if (r.status != 400 && r.status != 413) return false;
  if (r.status == 413) return true;
  auto body = json::parse(r.body, nullptr, false);
  if (body.is_object() && body.contains("error") && body["error"].is_object()) {
    const auto& err = body["error"];
    if (err.value("code", json()).is_string() && err["code"].get<std::string>() == "context_length_exceeded")
      return true;
  }
  return r.body.find("context length") != std::string::npos ||
         r.body.find("context_length") != std::string::npos;
}

std::string truncate(std::string s, std::size_t n = 300) {
  if (s.size() > n) s = s.substr(0, n) + "...";
  return s;
}

}  // namespace

std::shared_ptr<HttpTransport> make_default_transport() { return std::make_shared<HttplibTransport>(); }

std::string chat_request_body(const HttpBackendConfig& cfg, std::string_view prompt) {
  json body;
  body["model"] = cfg.model;
  body["messages"] = json::array({json{{"role", "user"}, {"content", std::string(prompt)}}});
  body["temperature"] = cfg.temperature;
  return body.dump();
}

LabelResult http_label_batch(const HttpBackendConfig& cfg, const RenderedPrompt& prompt, const TaskSpec& task,
                             HttpTransport& transport) {
  const std::size_t estimated_prompt = cfg.estimator.count(prompt.text);
  if (cfg.max_context_tokens > 0 && estimated_prompt > cfg.max_context_tokens)
    throw ContextLengthError("prompt of ~" + std::to_string(estimated_prompt) + " tokens exceeds context of " +
                                 std::to_string(cfg.max_context_tokens),
                             estimated_prompt);

  std::string url = cfg.base_url;
  while (!url.empty() && url.back() == '/') url.pop_back();
  url += "/chat/completions";

  HttpHeaders headers{{"Content-Type", "application/json"}};
  if (!cfg.api_key_env.empty())
    if (const char* key = std::getenv(cfg.api_key_env.c_str()); key && *key)
      headers.emplace_back("Authorization", std::string("Bearer ") + key);

  const std::string body = chat_request_body(cfg, prompt.text);
  const int max_attempts = 1 + std::max(0, cfg.max_retries);
  auto delay = cfg.initial_backoff;
  std::string last_error;

  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    const HttpResponse resp = transport.post(url, body, headers, cfg.timeout);
    std::chrono::milliseconds wait = delay;

    if (resp.status == 200) {
      auto doc = json::parse(resp.body, nullptr, false);
      std::optional<std::string> content;
      if (doc.is_object() && doc.contains("choices") && doc["choices"].is_array() && !doc["choices"].empty()) {
        const json msg = doc["choices"][0].value("message", json::object());
        if (msg.is_object() && msg.contains("content")) {
          if (msg["content"].is_string()) content = msg["content"].get<std::string>();
          else if (msg["content"].is_null()) content = std::string();
        }
      }
      if (content) {
        const std::string& text = *content;
        ParseResult parsed =
            parse_batch_response(text, prompt.declared_batch_size, task.kind, task.label_space);
        LabelResult result;
        result.answers = std::move(parsed.answers);
        result.warnings = std::move(parsed.warnings);
        result.batch_failure = parsed.batch_failure;
        result.attempts = attempt;

        const auto usage = doc.value("usage", json::object());
        if (usage.is_object() && usage.contains("prompt_tokens") && usage["prompt_tokens"].is_number_unsigned() &&
            usage.contains("completion_tokens") && usage["completion_tokens"].is_number_unsigned()) {
          result.usage = {usage["prompt_tokens"].get<std::size_t>(), usage["completion_tokens"].get<std::size_t>(),
                          false};
        } else {
          result.usage = {estimated_prompt, cfg.estimator.count(text), true};
        }
        return result;
      }
      last_error = "malformed completion body: " + truncate(resp.body);
    } else if (resp.status == 0) {
      last_error = "transport error: " + resp.error;
    } else if (is_context_length_rejection(resp)) {
      throw ContextLengthError("endpoint rejected prompt of ~" + std::to_string(estimated_prompt) +
                                   " tokens: " + truncate(resp.body),
                               estimated_prompt, attempt);
    } else if (resp.status == 429) {
      last_error = "rate limited (429)";
      if (!resp.retry_after.empty()) {
        char* end = nullptr;
        const long secs = std::strtol(resp.retry_after.c_str(), &end, 10);
        if (end && *end == '\0' && secs >= 0)
          wait = std::max(wait, std::chrono::milliseconds(std::min(secs, 60L) * 1000));
      }
    } else if (resp.status >= 500) {
      last_error = "server error " + std::to_string(resp.status) + ": " + truncate(resp.body);
    } else {
      throw BackendError("HTTP " + std::to_string(resp.status) + ": " + truncate(resp.body), false, attempt);
    }

    if (attempt < max_attempts) {
      std::this_thread::sleep_for(wait);
      delay = std::chrono::milliseconds(
          static_cast<long long>(static_cast<double>(delay.count()) * cfg.backoff_factor));
    }
  }
  throw BackendError("giving up after " + std::to_string(max_attempts) + " attempts: " + last_error, true,
                     max_attempts);
}

HttpLabeler::HttpLabeler(HttpBackendConfig cfg, PromptTemplate tmpl, std::vector<FewShotExample> fewshot_pool,
                         std::size_t negatives, std::shared_ptr<HttpTransport> transport)
    : cfg_(std::move(cfg)),
      tmpl_(std::move(tmpl)),
      task_(tmpl_.task_spec()),
      pool_(std::move(fewshot_pool)),
      negatives_(negatives),
      transport_(std::move(transport)) {
  if (!transport_) throw ConfigError("HTTP labeler needs a transport");
}

RenderedPrompt HttpLabeler::render(std::span<const DataItem> items, Strategy strategy) const {
  const auto fewshot = select_fewshot(pool_, strategy, negatives_);
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  return render_prompt(tmpl_, fewshot, items, order, strategy);
}

LabelResult HttpLabeler::label_batch(std::span<const DataItem> items, const RoundContext& ctx) const {
  return http_label_batch(cfg_, render(items, ctx.strategy), task_, *transport_);
}

std::size_t HttpLabeler::task_tokens(Strategy strategy) const {
  const auto fewshot = select_fewshot(pool_, strategy, negatives_);
  return cfg_.estimator.count(render_task_spec(tmpl_, 1, strategy)) +
         cfg_.estimator.count(render_fewshot(fewshot, tmpl_, strategy)) +
         cfg_.estimator.count(tmpl_.data_header) + cfg_.estimator.count(tmpl_.reminder);
}

std::size_t HttpLabeler::item_tokens(const DataItem& item) const {
  return cfg_.estimator.count(render_input_block(tmpl_, 0, item));
}

}  // namespace batchprompt
