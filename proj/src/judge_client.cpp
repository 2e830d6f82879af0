#include "crl/judge.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <shared_mutex>
#include <thread>

#include <httplib.h>
#include <json.hpp>
#include <openssl/evp.h>

namespace crl {

using nlohmann::json;

namespace {

std::string last_block(const std::string& raw, const std::string& tag) {
  const std::string open = "<" + tag + ">";
  const std::string close = "</" + tag + ">";
  const std::size_t start = raw.rfind(open);
  if (start == std::string::npos) return {};
  const std::size_t end = raw.find(close, start + open.size());
  if (end == std::string::npos) return {};
  return raw.substr(start + open.size(), end - (start + open.size()));
}

double parse_score_tag(const std::string& block, const std::string& tag, const std::string& raw) {
  const std::string open = "<" + tag + ">";
  const std::string close = "</" + tag + ">";
  const std::size_t start = block.find(open);
  if (start == std::string::npos) {
    throw JudgeParseError("missing <" + tag + "> tag", raw);
  }
  const std::size_t end = block.find(close, start + open.size());
  if (end == std::string::npos) {
    throw JudgeParseError("unterminated <" + tag + "> tag", raw);
  }
  std::string value = block.substr(start + open.size(), end - (start + open.size()));
  const auto first = value.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) throw JudgeParseError("empty <" + tag + "> value", raw);
  const auto last = value.find_last_not_of(" \t\r\n");
  value = value.substr(first, last - first + 1);
  char* end_ptr = nullptr;
  const double parsed = std::strtod(value.c_str(), &end_ptr);
  if (end_ptr == value.c_str() || *end_ptr != '\0') {
    throw JudgeParseError("non-numeric <" + tag + "> value: " + value, raw);
  }
  if (!(parsed >= 0.0 && parsed <= 1.0)) {
    throw JudgeParseError("<" + tag + "> value outside [0, 1]: " + value, raw);
  }
  return parsed;
}

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

}  // namespace

SimilarityScores parse_scores(const std::string& raw) {
  const std::string block = last_block(raw, "scores");
  if (block.empty()) throw JudgeParseError("no <scores> block found", raw);
  SimilarityScores scores;
  scores.f1 = parse_score_tag(block, "critique_f1", raw);
  scores.precision = parse_score_tag(block, "critique_precision", raw);
  scores.recall = parse_score_tag(block, "critique_recall", raw);
  return scores;
}

std::optional<Side> parse_choice(const std::string& raw) {
  const std::string block = last_block(raw, "choice");
  if (block.empty()) return std::nullopt;
  const bool has_a = block.find("[[A]]") != std::string::npos;
  const bool has_b = block.find("[[B]]") != std::string::npos;
  if (has_a == has_b) return std::nullopt;
  return has_a ? Side::A : Side::B;
}

std::string extract_critique(const std::string& raw) {
  const std::string block = last_block(raw, "critics");
  return block.empty() ? raw : block;
}

JudgeConfig JudgeConfig::from_environment() { return from_environment(JudgeConfig{}); }

JudgeConfig JudgeConfig::from_environment(JudgeConfig base) {
  if (base.endpoint.empty()) {
    if (const char* v = std::getenv("JUDGE_ENDPOINT")) base.endpoint = v;
  }
  if (base.model.empty()) {
    if (const char* v = std::getenv("JUDGE_MODEL")) base.model = v;
  }
  if (base.api_key.empty()) {
    if (const char* v = std::getenv("JUDGE_API_KEY")) base.api_key = v;
  }
  return base;
}

struct JudgeClient::Impl {
  JudgeConfig config;
  std::string host_port;   // scheme://host:port
  std::string path_prefix; // leading path, possibly empty

  std::shared_mutex cache_mutex;
  std::mutex slots_mutex;
  std::condition_variable slots_cv;
  int in_flight = 0;
  std::atomic<int> requests{0};

  explicit Impl(JudgeConfig cfg) : config(std::move(cfg)) {
    if (!config.cache_dir.empty()) {
      std::filesystem::create_directories(config.cache_dir);
    }
    std::string url = config.endpoint;
    const std::size_t scheme = url.find("://");
    const std::size_t path = scheme == std::string::npos
                                 ? url.find('/')
                                 : url.find('/', scheme + 3);
    if (path == std::string::npos) {
      host_port = url;
    } else {
      host_port = url.substr(0, path);
      path_prefix = url.substr(path);
      if (!path_prefix.empty() && path_prefix.back() == '/') path_prefix.pop_back();
    }
  }

  std::filesystem::path cache_path(const std::string& key) const {
    return std::filesystem::path(config.cache_dir) / (key + ".json");
  }

  std::optional<std::string> cache_lookup(const std::string& key) {
    if (config.cache_dir.empty()) return std::nullopt;
    std::shared_lock lock(cache_mutex);
    const auto path = cache_path(key);
    std::ifstream in(path);
    if (!in) return std::nullopt;
    json obj;
    try {
      in >> obj;
      return obj.at("response").get<std::string>();
    } catch (const json::exception&) {
      return std::nullopt;
    }
  }

  void cache_store(const std::string& key, TemplateId id, const std::string& prompt,
                   const std::string& response) {
    if (config.cache_dir.empty()) return;
    std::unique_lock lock(cache_mutex);
    json obj = {{"template", template_name(id)},
                {"model", config.model},
                {"prompt", prompt},
                {"response", response}};
    std::ofstream out(cache_path(key));
    out << obj.dump(2) << "\n";
  }

  std::string perform_request(const std::string& prompt) {
    if (!config.network_enabled) {
      throw TransportError("network disabled and response not cached");
    }
    json payload = {{"model", config.model},
                    {"messages", json::array({{{"role", "user"}, {"content", prompt}}})},
                    {"temperature", config.temperature}};
    const std::string body = payload.dump();
    const std::string path = path_prefix + "/v1/chat/completions";

    {
      std::unique_lock lock(slots_mutex);
      slots_cv.wait(lock, [&] { return in_flight < config.max_concurrency; });
      ++in_flight;
    }
    struct SlotRelease {
      Impl* impl;
      ~SlotRelease() {
        std::lock_guard lock(impl->slots_mutex);
        --impl->in_flight;
        impl->slots_cv.notify_one();
      }
    } release{this};

    std::string last_error;
    for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(
            std::chrono::milliseconds(config.backoff_base_ms << (attempt - 1)));
      }
      httplib::Client client(host_port);
      client.set_read_timeout(60, 0);
      httplib::Headers headers;
      if (!config.api_key.empty()) {
        headers.emplace("Authorization", "Bearer " + config.api_key);
      }
      ++requests;
      httplib::Result res = client.Post(path, headers, body, "application/json");
      if (!res) {
        last_error = "connection failure: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status < 200 || res->status >= 300) {
        last_error = "HTTP status " + std::to_string(res->status);
        continue;
      }
      try {
        json reply = json::parse(res->body);
        return reply.at("choices").at(0).at("message").at("content").get<std::string>();
      } catch (const json::exception& ex) {
        throw JudgeParseError(std::string("malformed completion payload: ") + ex.what(),
                              res->body);
      }
    }
    throw TransportError("judge request failed after " +
                         std::to_string(config.max_retries + 1) + " attempts: " + last_error);
  }
};

JudgeClient::JudgeClient(JudgeConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

JudgeClient::~JudgeClient() = default;

std::string JudgeClient::cache_key(TemplateId id, const std::string& prompt) const {
  return sha256_hex(std::string(template_name(id)) + "\n" + impl_->config.model + "\n" + prompt);
}

JudgeResponse JudgeClient::call(TemplateId id, const std::map<std::string, std::string>& bindings) {
  const std::string prompt = render_prompt(id, bindings);
  const std::string key = cache_key(id, prompt);
  if (auto cached = impl_->cache_lookup(key)) {
    return {*cached, true};
  }
  const std::string response = impl_->perform_request(prompt);
  impl_->cache_store(key, id, prompt, response);
  return {response, false};
}

int JudgeClient::requests_made() const { return impl_->requests.load(); }

SimilarityScores meta_judge_score(const PreferenceSample& sample, const std::string& gen_text,
                                  JudgeClient& judge) {
  const JudgeResponse response = judge.call(TemplateId::MetaJudge,
                                            {{"conv_his", sample.query},
                                             {"response_A", sample.response_a},
                                             {"response_B", sample.response_b},
                                             {"critiques", gen_text}});
  const SimilarityScores parsed = parse_scores(response.raw);
  SimilarityScores scores;
  scores.f1 = scores.precision = scores.recall = parsed.f1;
  return scores;
}

}  // namespace crl
