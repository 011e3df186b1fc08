#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <deque>
#include <set>

#include <nlohmann/json.hpp>

#include "batchprompt/backends.hpp"
#include "batchprompt/error.hpp"
#include "fixture_server.hpp"
#include "test_support.hpp"

using namespace batchprompt;
using json = nlohmann::json;

namespace {

TaskSpec binary_task() { return TaskSpec{"boolq", AnswerKind::class_label, {"0", "1"}, {"passage", "question"}, "boolq"}; }

std::vector<DataItem> gold_items(std::size_t n, const std::string& prefix = "it") {
  std::vector<DataItem> items;
  for (std::size_t i = 0; i < n; ++i)
    items.push_back(DataItem{prefix + std::to_string(i),
                             {{"passage", "one two three four five"}, {"question", "six seven"}},
                             Answer::label(i % 2 ? "1" : "0")});
  return items;
}

std::string completion(const std::string& content, bool with_usage = true) {
  json doc{{"choices", json::array({json{{"message", json{{"role", "assistant"}, {"content", content}}}}})}};
  if (with_usage) doc["usage"] = json{{"prompt_tokens", 900}, {"completion_tokens", 140}};
  return doc.dump();
}

std::string label_lines(std::size_t n, std::size_t skip = static_cast<std::size_t>(-1)) {
  std::string out;
  for (std::size_t i = 0; i < n; ++i)
    if (i != skip) out += "Label for Input " + std::to_string(i) + ": [class 1] (confident)\n";
  return out;
}

class ScriptedTransport final : public HttpTransport {
 public:
  std::deque<HttpResponse> script;
  std::vector<std::string> bodies;
  std::vector<std::string> urls;
  std::vector<HttpHeaders> headers;

  HttpResponse post(const std::string& url, const std::string& body, const HttpHeaders& h,
                    std::chrono::seconds) override {
    urls.push_back(url);
    bodies.push_back(body);
    headers.push_back(h);
    REQUIRE_FALSE(script.empty());
    auto r = script.front();
    script.pop_front();
    return r;
  }
};

HttpBackendConfig fast_config() {
  HttpBackendConfig cfg;
  cfg.base_url = "http://mock.local/v1/";
  cfg.initial_backoff = std::chrono::milliseconds(1);
  cfg.api_key_env = "BATCHPROMPT_TEST_KEY";
  return cfg;
}

RenderedPrompt prompt_of(std::size_t n) {
  RenderedPrompt p;
  p.text = "Label these inputs.";
  p.declared_batch_size = n;
  for (std::size_t i = 0; i < n; ++i) p.order.push_back("it" + std::to_string(i));
  return p;
}

}  // namespace

TEST_CASE("oracle with p0=1 and full calibration is always gold and confident") {
  OracleModel m;
  m.p0 = 1.0;
  m.p_confident_if_correct = 1.0;
  OracleLabeler oracle(m, binary_task());
  auto items = gold_items(32);
  for (int round = 1; round <= 5; ++round) {
    auto res = oracle.label_batch(items, {0, round, Strategy::sw_mv});
    REQUIRE(res.answers.size() == 32);
    for (std::size_t j = 0; j < 32; ++j) {
      CHECK(res.answers[j].index == j);
      CHECK(res.answers[j].answer == items[j].gold);
      CHECK(res.answers[j].confidence == Confidence::confident);
    }
  }
}

TEST_CASE("oracle answers carry no confidence under mv") {
  OracleLabeler oracle({}, binary_task());
  auto res = oracle.label_batch(gold_items(8), {0, 1, Strategy::mv});
  for (const auto& a : res.answers) CHECK(a.confidence == Confidence::absent);
}

TEST_CASE("oracle accuracy at p0=0.7 over 20k item-rounds") {
  OracleModel m;
  m.p0 = 0.7;
  m.seed = 3;
  const auto task = binary_task();
  auto items = gold_items(4000);
  int correct = 0, total = 0;
  for (int round = 1; round <= 5; ++round)
    for (std::size_t i = 0; i < items.size(); ++i) {
      auto a = oracle_answer(m, task, items[i], round, i % 32, Strategy::sw_mv);
      correct += a.answer == items[i].gold;
      ++total;
    }
  REQUIRE(total == 20000);
  CHECK(std::abs(static_cast<double>(correct) / total - 0.7) <= 0.01);
}

TEST_CASE("oracle position slope: position 31 near 0.745") {
  OracleModel m;
  m.p0 = 0.9;
  m.position_slope = 0.005;
  m.seed = 11;
  CHECK(m.p_correct(31) == doctest::Approx(0.745));
  CHECK(m.p_correct(0) == doctest::Approx(0.9));
  const auto task = binary_task();
  auto items = gold_items(20000);
  int correct = 0;
  for (const auto& item : items) correct += oracle_answer(m, task, item, 1, 31, Strategy::mv).answer == item.gold;
  CHECK(std::abs(correct / 20000.0 - 0.745) <= 0.02);
}

TEST_CASE("oracle clamp and validation") {
  OracleModel m;
  m.p0 = 0.5;
  m.position_slope = 0.1;
  CHECK(m.p_correct(10) == 0.0);
  m.position_slope = -0.1;
  CHECK(m.p_correct(10) == 1.0);
  m = {};
  m.p0 = 1.2;
  CHECK_THROWS_AS(m.validate(), ConfigError);
  m = {};
  m.p_confident_if_wrong = -0.1;
  CHECK_THROWS_AS(m.validate(), ConfigError);
}

TEST_CASE("oracle confidence marginal near 0.9 with the default calibration") {
  OracleModel m;
  const auto task = binary_task();
  auto items = gold_items(20000);
  int confident = 0;
  for (const auto& item : items)
    confident += oracle_answer(m, task, item, 1, 0, Strategy::sw_mv).confidence == Confidence::confident;
  // 0.9 * 0.95 + 0.1 * 0.45 = 0.9
  CHECK(std::abs(confident / 20000.0 - 0.9) <= 0.01);
}

TEST_CASE("oracle wrong answers cover the other labels; numeric wrongs differ from gold") {
  OracleModel m;
  m.p0 = 0.0;
  TaskSpec three{"t", AnswerKind::class_label, {"a", "b", "c"}, {"x"}, "t"};
  std::set<std::string> seen;
  for (int i = 0; i < 200; ++i) {
    DataItem item{"i" + std::to_string(i), {{"x", "y"}}, Answer::label("a")};
    auto a = oracle_answer(m, three, item, 1, 0, Strategy::mv);
    REQUIRE(a.answer);
    CHECK(a.answer->value != "a");
    seen.insert(a.answer->value);
  }
  CHECK(seen == std::set<std::string>{"b", "c"});

  TaskSpec numeric{"gsm8k", AnswerKind::numeric, {}, {"question"}, "gsm8k"};
  DataItem q{"q", {{"question", "x"}}, Answer::numeric("11")};
  for (int r = 1; r < 50; ++r) CHECK(oracle_answer(m, numeric, q, r, 0, Strategy::mv).answer->value != "11");
}

TEST_CASE("oracle errors on items without gold") {
  OracleLabeler oracle({}, binary_task());
  std::vector<DataItem> items{DataItem{"x", {{"passage", "p"}, {"question", "q"}}, std::nullopt}};
  CHECK_THROWS_AS(oracle.label_batch(items, {0, 1, Strategy::mv}), ConfigError);
}

TEST_CASE("property: oracle draws depend only on (seed, item, round, position)") {
  OracleModel m;
  m.p0 = 0.6;
  m.position_slope = 0.01;
  m.seed = 77;
  OracleLabeler oracle(m, binary_task());
  auto items = gold_items(16);
  auto first = oracle.label_batch(items, {3, 2, Strategy::sw_mv});
  (void)oracle.label_batch(gold_items(16, "other"), {1, 1, Strategy::sw_mv});
  auto again = oracle.label_batch(items, {3, 2, Strategy::sw_mv});
  for (std::size_t j = 0; j < 16; ++j) {
    CHECK(first.answers[j].answer == again.answers[j].answer);
    CHECK(first.answers[j].confidence == again.answers[j].confidence);
    auto single = oracle_answer(m, binary_task(), items[j], 2, j, Strategy::sw_mv);
    CHECK(single.answer == first.answers[j].answer);
  }
  CHECK(first.usage.estimated);
  CHECK(first.usage.prompt_tokens == m.task_tokens + 16 * oracle.item_tokens(items[0]));
  CHECK(first.usage.completion_tokens == 16 * m.completion_tokens_per_item);
}

TEST_CASE("round-dependent oracle keeps one outcome per item") {
  OracleModel m;
  m.p0 = 0.5;
  m.round_independent = false;
  const auto task = binary_task();
  for (const auto& item : gold_items(50)) {
    const bool first = oracle_answer(m, task, item, 1, 0, Strategy::mv).answer == item.gold;
    for (int r = 2; r <= 5; ++r)
      CHECK((oracle_answer(m, task, item, r, static_cast<std::size_t>(r) * 3, Strategy::mv).answer == item.gold) ==
            first);
  }
}

TEST_CASE("token estimator") {
  TokenEstimator e;
  CHECK(e.count("") == 0);
  CHECK(e.count("one two three four five six seven eight nine ten") == 13);
  CHECK(e.count("one") == 2);
  TokenEstimator exact{1.0};
  CHECK(exact.count("  a\tb\nc  ") == 3);
}

TEST_CASE("chat request body") {
  auto body = json::parse(chat_request_body(HttpBackendConfig{}, "hello"));
  CHECK(body["model"] == "gpt-4");
  CHECK(body["temperature"] == 0.0);
  CHECK(body["messages"].size() == 1);
  CHECK(body["messages"][0]["role"] == "user");
  CHECK(body["messages"][0]["content"] == "hello");
}

TEST_CASE("16-label completion yields 16 answers and measured usage") {
  ScriptedTransport t;
  t.script.push_back({200, completion(label_lines(16)), {}, {}});
  auto res = http_label_batch(fast_config(), prompt_of(16), binary_task(), t);
  REQUIRE(res.answers.size() == 16);
  for (const auto& a : res.answers) CHECK(a.answer == Answer::label("1"));
  CHECK(res.usage.prompt_tokens == 900);
  CHECK(res.usage.completion_tokens == 140);
  CHECK_FALSE(res.usage.estimated);
  CHECK(res.attempts == 1);
  REQUIRE(t.urls.size() == 1);
  CHECK(t.urls[0] == "http://mock.local/v1/chat/completions");
}

TEST_CASE("429 twice then success makes three calls") {
  ScriptedTransport t;
  t.script.push_back({429, "slow down", {}, {}});
  t.script.push_back({429, "slow down", {}, {}});
  t.script.push_back({200, completion(label_lines(4)), {}, {}});
  auto res = http_label_batch(fast_config(), prompt_of(4), binary_task(), t);
  CHECK(t.bodies.size() == 3);
  CHECK(res.attempts == 3);
  CHECK(res.answers.size() == 4);
  CHECK(t.bodies[0] == t.bodies[2]);
}

TEST_CASE("15 of 16 labels propagate one abstention") {
  ScriptedTransport t;
  t.script.push_back({200, completion(label_lines(16, 4)), {}, {}});
  auto res = http_label_batch(fast_config(), prompt_of(16), binary_task(), t);
  REQUIRE(res.answers.size() == 16);
  CHECK(res.answers[4].abstained());
  int abstained = 0;
  for (const auto& a : res.answers) abstained += a.abstained();
  CHECK(abstained == 1);
}

TEST_CASE("missing usage falls back to estimates") {
  ScriptedTransport t;
  t.script.push_back({200, completion(label_lines(2), false), {}, {}});
  auto cfg = fast_config();
  auto res = http_label_batch(cfg, prompt_of(2), binary_task(), t);
  CHECK(res.usage.estimated);
  CHECK(res.usage.prompt_tokens == cfg.estimator.count(prompt_of(2).text));
  CHECK(res.usage.completion_tokens == cfg.estimator.count(label_lines(2)));
}

TEST_CASE("HTTP failure policy") {
  SUBCASE("5xx and transport errors are retried until exhausted") {
    ScriptedTransport t;
    for (int i = 0; i < 4; ++i) t.script.push_back({i % 2 ? 0 : 503, "", "down", {}});
    try {
      http_label_batch(fast_config(), prompt_of(1), binary_task(), t);
      FAIL("expected BackendError");
    } catch (const BackendError& e) {
      CHECK(e.retryable());
      CHECK(e.attempts() == 4);
    }
    CHECK(t.bodies.size() == 4);
  }
  SUBCASE("other 4xx fail immediately") {
    ScriptedTransport t;
    t.script.push_back({401, "{\"error\": {\"message\": \"bad key\"}}", {}, {}});
    CHECK_THROWS_AS(http_label_batch(fast_config(), prompt_of(1), binary_task(), t), BackendError);
    CHECK(t.bodies.size() == 1);
  }
  SUBCASE("context-length rejection is not retried") {
    ScriptedTransport t;
    t.script.push_back(
        {400, R"({"error": {"code": "context_length_exceeded", "message": "maximum context length"}})", {}, {}});
    try {
      http_label_batch(fast_config(), prompt_of(1), binary_task(), t);
      FAIL("expected ContextLengthError");
    } catch (const ContextLengthError& e) {
      CHECK_FALSE(e.retryable());
      CHECK(e.prompt_tokens() > 0);
    }
    CHECK(t.bodies.size() == 1);
  }
  SUBCASE("oversized prompts are rejected before sending") {
    ScriptedTransport t;
    auto cfg = fast_config();
    cfg.max_context_tokens = 3;
    CHECK_THROWS_AS(http_label_batch(cfg, prompt_of(1), binary_task(), t), ContextLengthError);
    CHECK(t.bodies.empty());
  }
  SUBCASE("malformed success bodies are retried") {
    ScriptedTransport t;
    t.script.push_back({200, "not json", {}, {}});
    t.script.push_back({200, completion(label_lines(1)), {}, {}});
    auto res = http_label_batch(fast_config(), prompt_of(1), binary_task(), t);
    CHECK(res.attempts == 2);
  }
}

TEST_CASE("API key is sent as a bearer token only when set") {
  ScriptedTransport t;
  t.script.push_back({200, completion(label_lines(1)), {}, {}});
  t.script.push_back({200, completion(label_lines(1)), {}, {}});
  ::unsetenv("BATCHPROMPT_TEST_KEY");
  http_label_batch(fast_config(), prompt_of(1), binary_task(), t);
  ::setenv("BATCHPROMPT_TEST_KEY", "sk-test", 1);
  http_label_batch(fast_config(), prompt_of(1), binary_task(), t);
  ::unsetenv("BATCHPROMPT_TEST_KEY");
  auto has_auth = [](const HttpHeaders& h, const std::string& value) {
    for (const auto& [k, v] : h)
      if (k == "Authorization") return v == value;
    return value.empty();
  };
  CHECK(has_auth(t.headers[0], ""));
  CHECK(has_auth(t.headers[1], "Bearer sk-test"));
}

TEST_CASE("HTTP labeler is render, request, parse") {
  auto tmpl = load_template("builtin:boolq");
  auto pool = load_fewshot(testing::fixture("boolq_fewshot.jsonl"), tmpl.task_spec());
  auto transport = std::make_shared<ScriptedTransport>();
  const std::string recorded =
      "Label for Input 0: [class 1] (confident)\nLabel for Input 2: [class 0]('not confident')\n"
      "Label for Input 1: [class 7]\n";
  transport->script.push_back({200, completion(recorded), {}, {}});
  HttpLabeler labeler(fast_config(), tmpl, pool, 2, transport);
  auto items = gold_items(3);
  auto res = labeler.label_batch(items, {0, 1, Strategy::sw_mv_neg});

  auto direct = parse_batch_response(recorded, 3, AnswerKind::class_label, tmpl.labels);
  REQUIRE(res.answers.size() == direct.answers.size());
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(res.answers[i].answer == direct.answers[i].answer);
    CHECK(res.answers[i].confidence == direct.answers[i].confidence);
    CHECK(res.answers[i].raw_line == direct.answers[i].raw_line);
  }
  CHECK(res.warnings == direct.warnings);

  const auto sent = json::parse(transport->bodies.at(0));
  CHECK(sent["messages"][0]["content"] == labeler.render(items, Strategy::sw_mv_neg).text);
  CHECK(labeler.task_tokens(Strategy::sw_mv_neg) > labeler.task_tokens(Strategy::sw_mv));
  CHECK(labeler.item_tokens(items[0]) > 0);
}

TEST_CASE("default transport against a local recorded endpoint") {
  testing::RecordedChatServer server(testing::fixture("smoke16_recorded.json"));
  auto tmpl = load_template("builtin:boolq");
  auto items = load_dataset(testing::fixture("smoke16.jsonl"), DatasetFormat::jsonl, tmpl.task_spec());
  auto cfg = fast_config();
  cfg.base_url = server.base_url();
  HttpLabeler labeler(cfg, tmpl, {});
  auto res = labeler.label_batch(std::span(items).subspan(8, 4), {1, 1, Strategy::sw_mv});
  REQUIRE(res.answers.size() == 4);
  CHECK(res.answers[0].answer == items[8].gold);
  CHECK(res.answers[2].abstained());  // smoke-10 has no recorded answer
  CHECK(res.usage.prompt_tokens == 160);
  CHECK_FALSE(res.usage.estimated);
  CHECK(server.requests() == 1);

  auto dead = fast_config();
  dead.base_url = "http://127.0.0.1:1/v1";
  dead.max_retries = 1;
  dead.timeout = std::chrono::seconds(2);
  HttpLabeler unreachable(dead, tmpl, {});
  CHECK_THROWS_AS(unreachable.label_batch(std::span(items).subspan(0, 1), {0, 1, Strategy::mv}), BackendError);
}
