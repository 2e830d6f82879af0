#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>

#include "crl/data.hpp"
#include "crl/similarity.hpp"

namespace crl {

enum class TemplateId { Grm, SimilarityCore, SimilarityAll, MetaJudge, Edit };

const char* template_name(TemplateId id);

struct RenderError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct JudgeParseError : std::runtime_error {
  JudgeParseError(const std::string& message, std::string raw_text)
      : std::runtime_error(message), raw(std::move(raw_text)) {}
  std::string raw;
};
struct TransportError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Byte-exact placeholder substitution into the stored template bodies.
std::string render_prompt(TemplateId id, const std::map<std::string, std::string>& bindings);

// Extracts the three tagged scores from the last <scores> block.
SimilarityScores parse_scores(const std::string& raw);

// Last <choice> block; nullopt signals format-invalid output (no token, or
// both tokens present).
std::optional<Side> parse_choice(const std::string& raw);

// Extracts the <critics> block from a GRM response, or the whole text when
// no block is present.
std::string extract_critique(const std::string& raw);

struct JudgeConfig {
  std::string endpoint;  // http://host:port[/path-prefix]
  std::string model;
  std::string api_key;
  std::string cache_dir;
  double temperature = 0.0;
  int max_retries = 2;
  int backoff_base_ms = 100;
  int max_concurrency = 4;
  bool network_enabled = true;

  // Fills endpoint/model/key from JUDGE_ENDPOINT, JUDGE_MODEL and
  // JUDGE_API_KEY when unset.
  static JudgeConfig from_environment(JudgeConfig base);
  static JudgeConfig from_environment();
};

struct JudgeResponse {
  std::string raw;
  bool from_cache = false;
};

class JudgeClient {
 public:
  explicit JudgeClient(JudgeConfig config);
  ~JudgeClient();

  JudgeClient(const JudgeClient&) = delete;
  JudgeClient& operator=(const JudgeClient&) = delete;

  // Renders, consults the content-addressed cache, and performs the HTTP
  // request with bounded retries on a miss. Thread-safe.
  JudgeResponse call(TemplateId id, const std::map<std::string, std::string>& bindings);

  // SHA-256 of (template name, model, rendered prompt); the cache filename.
  std::string cache_key(TemplateId id, const std::string& prompt) const;

  int requests_made() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Scores a generated critique text with the external meta-judge; the one
// returned scalar is replicated into all three fields.
SimilarityScores meta_judge_score(const PreferenceSample& sample, const std::string& gen_text,
                                  JudgeClient& judge);

}  // namespace crl
