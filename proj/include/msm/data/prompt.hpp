#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "msm/core/config.hpp"
#include "msm/core/error.hpp"

namespace msm::data {

enum class PromptRole { dataset_augmenter, inference_rewriter };
std::string role_name(PromptRole r);
PromptRole role_from_name(const std::string& name);

struct PromptExample {
  std::string input;
  std::string output;
};

/// Text file layout:
///
///   ---
///   role: inference_rewriter
///   ---
///   instruction paragraphs
///   ## example
///   input: ...
///   output: ...
///
/// Front matter keys other than role are kept in `meta`.
struct PromptTemplate {
  PromptRole role = PromptRole::inference_rewriter;
  std::string instruction;
  std::vector<PromptExample> examples;
  std::vector<std::pair<std::string, std::string>> meta;

  void validate() const;
  static PromptTemplate parse(const std::string& text);
  static PromptTemplate load(const std::filesystem::path& path);
};

inline constexpr double kDefaultDuration = 8.0;
inline constexpr double kMinDuration = 4.0;
inline constexpr double kMaxDuration = 12.0;

struct LlmConfig {
  bool offline = true;
  std::string endpoint;  // full URL, e.g. http://host:port/v1/chat/completions
  std::string model;
  std::string api_key_env = "MSM_LLM_API_KEY";
  double timeout_s = 30.0;
  int max_retries = 2;
  int max_concurrency = 4;
  std::string template_path;

  void read(ConfigReader& r);
  nlohmann::json to_json() const;
};

struct RewriteResult {
  std::string text;
  double duration_s = kDefaultDuration;
  bool offline = false;
  std::string raw;  // response body as received
};

/// Response body that could not be interpreted; the payload travels along.
class ResponseError : public Error {
 public:
  ResponseError(const std::string& what, std::string raw)
      : Error(ErrorKind::parse, what + "; raw response: " + raw), raw_(std::move(raw)) {}
  const std::string& raw() const noexcept { return raw_; }

 private:
  std::string raw_;
};

/// Network failures (timeouts, refused connections, non-2xx status) are the
/// retriable ones.
inline bool is_retriable(const Error& e) { return e.kind() == ErrorKind::network; }

/// Chat-style request body: the instruction as the system message, examples
/// as alternating user/assistant turns, then the user text.
nlohmann::json build_request(const PromptTemplate& tmpl, const std::string& user_text, const std::string& model);

/// Extracts {text, duration} from a response body. Accepts the object at top
/// level or as a JSON string in choices[0].message.content (code fences
/// allowed). Duration is clamped to [4, 12]; a missing one falls back to 8.
RewriteResult parse_response(const std::string& body);

/// Offline: returns the input unchanged with the default duration.
RewriteResult rewrite_prompt(const PromptTemplate& tmpl, const std::string& user_text, const LlmConfig& cfg);

/// Runs up to cfg.max_concurrency requests at a time; results keep input order.
std::vector<RewriteResult> rewrite_prompts(const PromptTemplate& tmpl, const std::vector<std::string>& texts,
                                           const LlmConfig& cfg);

}  // namespace msm::data
