#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "crl/judge.hpp"

using namespace crl;
using nlohmann::json;

namespace {

struct MockJudge {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> hits{0};
  std::atomic<int> in_flight{0};
  std::atomic<int> max_in_flight{0};
  int fail_first_n = 0;  // respond 500 to this many requests
  std::string reply_text = "<choice>[[A]]</choice>";
  int delay_ms = 0;

  MockJudge() {
    server.Post("/v1/chat/completions", [this](const httplib::Request&, httplib::Response& res) {
      const int now = ++in_flight;
      int seen = max_in_flight.load();
      while (now > seen && !max_in_flight.compare_exchange_weak(seen, now)) {
      }
      if (delay_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
      const int n = ++hits;
      if (n <= fail_first_n) {
        res.status = 500;
      } else {
        json reply = {{"choices",
                       json::array({{{"message", {{"role", "assistant"},
                                                  {"content", reply_text}}}}})}};
        res.set_content(reply.dump(), "application/json");
      }
      --in_flight;
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~MockJudge() {
    server.stop();
    thread.join();
  }

  JudgeConfig config(const std::string& cache_dir) const {
    JudgeConfig c;
    c.endpoint = "http://127.0.0.1:" + std::to_string(port);
    c.model = "mock-judge";
    c.cache_dir = cache_dir;
    c.backoff_base_ms = 1;
    return c;
  }
};

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() / ("crl_judge_" + tag);
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("render_prompt substitutes bindings byte-exactly") {
  const std::string prompt = render_prompt(TemplateId::Grm, {{"conv_his", "the question"},
                                                             {"response_A", "answer one"},
                                                             {"response_B", "answer two"}});
  CHECK(prompt.find("the question") != std::string::npos);
  CHECK(prompt.find("answer one") != std::string::npos);
  CHECK(prompt.find("answer two") != std::string::npos);
  CHECK(prompt.find("{conv_his}") == std::string::npos);
  CHECK(prompt.find("{response_A}") == std::string::npos);
}

TEST_CASE("render_prompt: missing binding raises an error naming the placeholder") {
  try {
    render_prompt(TemplateId::Grm, {{"conv_his", "q"}, {"response_A", "a"}});
    FAIL("expected RenderError");
  } catch (const RenderError& ex) {
    CHECK(std::string(ex.what()).find("response_B") != std::string::npos);
  }
}

TEST_CASE("render_prompt: substituted content is not re-scanned") {
  const std::string prompt = render_prompt(
      TemplateId::Grm,
      {{"conv_his", "contains {response_A} literally"}, {"response_A", "X"}, {"response_B", "Y"}});
  CHECK(prompt.find("contains {response_A} literally") != std::string::npos);
}

TEST_CASE("render_prompt: edit template distinguishes {critique} from {critiques}") {
  const std::string prompt = render_prompt(TemplateId::Edit, {{"conv_his", "q"},
                                                              {"response_A", "a"},
                                                              {"response_B", "b"},
                                                              {"critique", "fix the date"}});
  CHECK(prompt.find("fix the date") != std::string::npos);
  CHECK(prompt.find("{critique}") == std::string::npos);
}

TEST_CASE("parse_scores reads the last block and validates ranges") {
  const std::string raw =
      "thinking...\n<scores><critique_f1>0.2</critique_f1>"
      "<critique_precision>0.2</critique_precision><critique_recall>0.2</critique_recall>"
      "</scores>\nrevised:\n<scores>\n  <critique_f1>0.75</critique_f1>\n"
      "  <critique_precision>1.0</critique_precision>\n"
      "  <critique_recall>0.6</critique_recall>\n</scores>";
  const SimilarityScores s = parse_scores(raw);
  CHECK(s.f1 == doctest::Approx(0.75));
  CHECK(s.precision == doctest::Approx(1.0));
  CHECK(s.recall == doctest::Approx(0.6));

  CHECK_THROWS_AS(parse_scores("no block here"), JudgeParseError);
  CHECK_THROWS_AS(
      parse_scores("<scores><critique_f1>1.2</critique_f1>"
                   "<critique_precision>1</critique_precision>"
                   "<critique_recall>1</critique_recall></scores>"),
      JudgeParseError);
  try {
    parse_scores("garbage");
    FAIL("expected JudgeParseError");
  } catch (const JudgeParseError& ex) {
    CHECK(ex.raw == "garbage");  // raw text preserved for retry decisions
  }
}

TEST_CASE("parse_choice: last block wins; ambiguous output is format-invalid") {
  CHECK(parse_choice("<choice>[[A]]</choice>") == Side::A);
  CHECK(parse_choice("<choice>[[B]]</choice>") == Side::B);
  CHECK(parse_choice("<choice>[[A]]</choice> wait <choice>[[B]]</choice>") == Side::B);
  CHECK_FALSE(parse_choice("<choice>neither</choice>").has_value());
  CHECK_FALSE(parse_choice("<choice>[[A]] or [[B]]</choice>").has_value());
  CHECK_FALSE(parse_choice("no block").has_value());
}

TEST_CASE("extract_critique takes the critics block when present") {
  CHECK(extract_critique("pre <critics>the critique body</critics> post") ==
        "the critique body");
  CHECK(extract_critique("bare text") == "bare text");
}

TEST_CASE("cache keys are stable 64-hex digests sensitive to every input") {
  TempDir tmp("keys");
  MockJudge mock;
  JudgeClient client(mock.config(tmp.path.string()));
  const std::string k1 = client.cache_key(TemplateId::Grm, "prompt");
  const std::string k2 = client.cache_key(TemplateId::Grm, "prompt");
  const std::string k3 = client.cache_key(TemplateId::Edit, "prompt");
  const std::string k4 = client.cache_key(TemplateId::Grm, "other prompt");
  CHECK(k1 == k2);
  CHECK(k1 != k3);
  CHECK(k1 != k4);
  CHECK(k1.size() == 64);
  CHECK(k1.find_first_not_of("0123456789abcdef") == std::string::npos);
}

TEST_CASE("second identical call is served from the cache") {
  TempDir tmp("cache");
  MockJudge mock;
  JudgeClient client(mock.config(tmp.path.string()));
  const std::map<std::string, std::string> bindings{
      {"conv_his", "q"}, {"response_A", "a"}, {"response_B", "b"}};
  const JudgeResponse first = client.call(TemplateId::Grm, bindings);
  CHECK_FALSE(first.from_cache);
  CHECK(client.requests_made() == 1);
  const JudgeResponse second = client.call(TemplateId::Grm, bindings);
  CHECK(second.from_cache);
  CHECK(second.raw == first.raw);
  CHECK(client.requests_made() == 1);
}

TEST_CASE("transient failures are retried with backoff") {
  TempDir tmp("retry");
  MockJudge mock;
  mock.fail_first_n = 2;
  JudgeConfig config = mock.config(tmp.path.string());
  config.max_retries = 2;
  JudgeClient client(config);
  const JudgeResponse r = client.call(
      TemplateId::Grm, {{"conv_his", "q"}, {"response_A", "a"}, {"response_B", "b"}});
  CHECK(r.raw == "<choice>[[A]]</choice>");
  CHECK(mock.hits.load() == 3);

  // With fewer retries than failures the error propagates.
  MockJudge flaky;
  flaky.fail_first_n = 100;
  JudgeConfig strict = flaky.config(tmp.path.string() + "_b");
  strict.max_retries = 1;
  JudgeClient failing(strict);
  CHECK_THROWS_AS(failing.call(TemplateId::Grm, {{"conv_his", "q"},
                                                 {"response_A", "a"},
                                                 {"response_B", "b"}}),
                  TransportError);
  CHECK(flaky.hits.load() == 2);
}

TEST_CASE("cache replay works with the network disabled, byte-identical") {
  TempDir tmp("replay");
  std::string live_raw;
  {
    MockJudge mock;
    mock.reply_text = "<critics>detailed critique</critics><choice>[[B]]</choice>";
    JudgeClient online(mock.config(tmp.path.string()));
    live_raw = online
                   .call(TemplateId::Grm,
                         {{"conv_his", "q"}, {"response_A", "a"}, {"response_B", "b"}})
                   .raw;
  }
  JudgeConfig offline_config;
  offline_config.endpoint = "http://127.0.0.1:1";  // unreachable on purpose
  offline_config.model = "mock-judge";
  offline_config.cache_dir = tmp.path.string();
  offline_config.network_enabled = false;
  JudgeClient offline(offline_config);
  const JudgeResponse replayed = offline.call(
      TemplateId::Grm, {{"conv_his", "q"}, {"response_A", "a"}, {"response_B", "b"}});
  CHECK(replayed.from_cache);
  CHECK(replayed.raw == live_raw);
  CHECK(offline.requests_made() == 0);
  // A cold prompt cannot be answered offline.
  CHECK_THROWS_AS(offline.call(TemplateId::Grm, {{"conv_his", "different"},
                                                 {"response_A", "a"},
                                                 {"response_B", "b"}}),
                  TransportError);
}

TEST_CASE("concurrency is bounded by max_concurrency") {
  TempDir tmp("conc");
  MockJudge mock;
  mock.delay_ms = 40;
  JudgeConfig config = mock.config(tmp.path.string());
  config.max_concurrency = 2;
  JudgeClient client(config);
  std::vector<std::thread> workers;
  for (int i = 0; i < 6; ++i) {
    workers.emplace_back([&client, i] {
      client.call(TemplateId::Grm, {{"conv_his", "q" + std::to_string(i)},
                                    {"response_A", "a"},
                                    {"response_B", "b"}});
    });
  }
  for (std::thread& w : workers) w.join();
  CHECK(mock.hits.load() == 6);
  CHECK(mock.max_in_flight.load() <= 2);
}

TEST_CASE("meta judge replicates one scalar into all three fields") {
  TempDir tmp("meta");
  MockJudge mock;
  mock.reply_text =
      "<scores><critique_f1>0.8</critique_f1><critique_precision>0.8</critique_precision>"
      "<critique_recall>0.8</critique_recall></scores>";
  JudgeClient client(mock.config(tmp.path.string()));
  PreferenceSample s;
  s.query = "q";
  s.response_a = "a";
  s.response_b = "b";
  s.human_critique_text = "reference critique";
  const SimilarityScores scores = meta_judge_score(s, "generated critique", client);
  CHECK(scores.f1 == doctest::Approx(0.8));
  CHECK(scores.precision == scores.f1);
  CHECK(scores.recall == scores.f1);
}
