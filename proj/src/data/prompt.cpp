#include "msm/data/prompt.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <thread>

#include "msm/core/io.hpp"
#include "msm/core/log.hpp"

// After Eigen: resolv.h defines a _res macro that clashes with Eigen internals.
#include <httplib.h>

namespace msm::data {

std::string role_name(PromptRole r) {
  return r == PromptRole::dataset_augmenter ? "dataset_augmenter" : "inference_rewriter";
}

PromptRole role_from_name(const std::string& name) {
  if (name == "dataset_augmenter") return PromptRole::dataset_augmenter;
  if (name == "inference_rewriter") return PromptRole::inference_rewriter;
  fail(ErrorKind::parse, "unknown prompt role '" + name + "'");
}

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) return s.substr(1, s.size() - 2);
  return s;
}

}  // namespace

void PromptTemplate::validate() const {
  require(!trim(instruction).empty(), "prompt template has an empty instruction", ErrorKind::parse);
  for (const auto& e : examples) {
    require(!e.input.empty() && !e.output.empty(), "prompt example needs both input and output", ErrorKind::parse);
  }
}

PromptTemplate PromptTemplate::parse(const std::string& text) {
  std::vector<std::string> lines;
  {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      lines.push_back(line);
    }
  }
  std::size_t i = 0;
  while (i < lines.size() && trim(lines[i]).empty()) ++i;
  if (i == lines.size() || trim(lines[i]) != "---") throw ParseError(i + 1, "prompt template must start with front matter");
  PromptTemplate t;
  bool has_role = false, closed = false;
  for (++i; i < lines.size(); ++i) {
    const std::string l = trim(lines[i]);
    if (l == "---") {
      closed = true;
      ++i;
      break;
    }
    if (l.empty() || l[0] == '#') continue;
    const auto colon = l.find(':');
    if (colon == std::string::npos) throw ParseError(i + 1, "front matter line is not 'key: value'");
    const std::string key = trim(l.substr(0, colon));
    const std::string value = unquote(trim(l.substr(colon + 1)));
    if (key == "role") {
      t.role = role_from_name(value);
      has_role = true;
    } else {
      t.meta.emplace_back(key, value);
    }
  }
  if (!closed) throw ParseError(lines.size(), "unterminated front matter");
  if (!has_role) throw ParseError(1, "front matter has no role");

  std::string instruction;
  PromptExample* current = nullptr;
  std::string* field = nullptr;
  for (; i < lines.size(); ++i) {
    const std::string& raw = lines[i];
    const std::string l = trim(raw);
    if (l == "## example") {
      t.examples.emplace_back();
      current = &t.examples.back();
      field = nullptr;
      continue;
    }
    if (!current) {
      instruction += raw + "\n";
      continue;
    }
    if (l.starts_with("input:")) {
      current->input = trim(l.substr(6));
      field = &current->input;
    } else if (l.starts_with("output:")) {
      current->output = trim(l.substr(7));
      field = &current->output;
    } else if (!l.empty()) {
      if (!field) throw ParseError(i + 1, "example text before 'input:' or 'output:'");
      *field += "\n" + l;
    }
  }
  t.instruction = trim(instruction);
  t.validate();
  return t;
}

PromptTemplate PromptTemplate::load(const std::filesystem::path& path) {
  try {
    return parse(io::read_file(path));
  } catch (const ParseError& e) {
    fail(ErrorKind::parse, path.string() + ": " + e.what());
  }
}

void LlmConfig::read(ConfigReader& r) {
  r.get("offline", offline);
  r.get("endpoint", endpoint);
  r.get("model", model);
  r.get("api_key_env", api_key_env);
  r.get("timeout_s", timeout_s);
  r.get("max_retries", max_retries);
  r.get("max_concurrency", max_concurrency);
  r.get("template", template_path);
  r.finish();
  r.check(timeout_s > 0, "timeout_s", "must be positive");
  r.check(max_retries >= 0, "max_retries", "must be non-negative");
  r.check(max_concurrency >= 1, "max_concurrency", "must be at least 1");
  r.check(offline || !endpoint.empty(), "endpoint", "is required unless offline");
}

nlohmann::json LlmConfig::to_json() const {
  return {{"offline", offline},         {"endpoint", endpoint},       {"model", model},
          {"api_key_env", api_key_env}, {"timeout_s", timeout_s},     {"max_retries", max_retries},
          {"max_concurrency", max_concurrency}, {"template", template_path}};
}

nlohmann::json build_request(const PromptTemplate& tmpl, const std::string& user_text, const std::string& model) {
  nlohmann::json messages = nlohmann::json::array();
  messages.push_back({{"role", "system"}, {"content", tmpl.instruction}});
  for (const auto& e : tmpl.examples) {
    messages.push_back({{"role", "user"}, {"content", e.input}});
    messages.push_back({{"role", "assistant"}, {"content", e.output}});
  }
  messages.push_back({{"role", "user"}, {"content", user_text}});
  nlohmann::json body = {{"messages", messages}};
  if (!model.empty()) body["model"] = model;
  return body;
}

namespace {

std::string strip_fences(const std::string& s) {
  std::string t = trim(s);
  if (!t.starts_with("```")) return t;
  const auto first_nl = t.find('\n');
  const auto last = t.rfind("```");
  if (first_nl == std::string::npos || last <= first_nl) return t;
  return trim(t.substr(first_nl + 1, last - first_nl - 1));
}

const nlohmann::json* find_payload(const nlohmann::json& j, nlohmann::json& scratch) {
  if (j.is_object() && j.contains("text")) return &j;
  if (j.is_object() && j.contains("choices") && j["choices"].is_array() && !j["choices"].empty()) {
    const auto& choice = j["choices"][0];
    const nlohmann::json* content = nullptr;
    if (choice.contains("message") && choice["message"].contains("content")) content = &choice["message"]["content"];
    if (choice.contains("text")) content = &choice["text"];
    if (content && content->is_string()) {
      scratch = nlohmann::json::parse(strip_fences(content->get<std::string>()), nullptr, false);
      if (scratch.is_object() && scratch.contains("text")) return &scratch;
    }
  }
  return nullptr;
}

}  // namespace

RewriteResult parse_response(const std::string& body) {
  const auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded()) throw ResponseError("response is not JSON", body);
  nlohmann::json scratch;
  const nlohmann::json* p = find_payload(j, scratch);
  if (!p) throw ResponseError("response has no rewrite text", body);
  const auto& text = (*p)["text"];
  if (!text.is_string() || trim(text.get<std::string>()).empty()) {
    throw ResponseError("rewrite text is not a non-empty string", body);
  }
  RewriteResult r;
  r.text = trim(text.get<std::string>());
  r.raw = body;
  if (p->contains("duration")) {
    const auto& d = (*p)["duration"];
    if (!d.is_number() || !std::isfinite(d.get<double>())) throw ResponseError("duration is not a finite number", body);
    r.duration_s = std::clamp(d.get<double>(), kMinDuration, kMaxDuration);
  } else {
    log::warn("rewrite response has no duration; using the default");
  }
  return r;
}

namespace {

struct Url {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Url split_url(const std::string& url) {
  const auto scheme = url.find("://");
  require(scheme != std::string::npos, "endpoint '" + url + "' has no scheme", ErrorKind::config);
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

RewriteResult request_once(const PromptTemplate& tmpl, const std::string& user_text, const LlmConfig& cfg) {
  const Url url = split_url(cfg.endpoint);
  httplib::Client client(url.origin);
  const auto whole = static_cast<time_t>(cfg.timeout_s);
  const auto micro = static_cast<time_t>((cfg.timeout_s - static_cast<double>(whole)) * 1e6);
  client.set_connection_timeout(whole, micro);
  client.set_read_timeout(whole, micro);
  client.set_write_timeout(whole, micro);
  httplib::Headers headers;
  if (const char* key = std::getenv(cfg.api_key_env.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  const std::string body = build_request(tmpl, user_text, cfg.model).dump();
  auto res = client.Post(url.path, headers, body, "application/json");
  if (!res) {
    fail(ErrorKind::network, "request to " + cfg.endpoint + " failed: " + httplib::to_string(res.error()));
  }
  if (res->status < 200 || res->status >= 300) {
    fail(ErrorKind::network, "request to " + cfg.endpoint + " returned HTTP " + std::to_string(res->status));
  }
  return parse_response(res->body);
}

}  // namespace

RewriteResult rewrite_prompt(const PromptTemplate& tmpl, const std::string& user_text, const LlmConfig& cfg) {
  tmpl.validate();
  if (cfg.offline) {
    RewriteResult r;
    r.text = user_text;
    r.offline = true;
    return r;
  }
  require(!cfg.endpoint.empty(), "llm.endpoint is not configured", ErrorKind::config);
  for (int attempt = 0;; ++attempt) {
    try {
      return request_once(tmpl, user_text, cfg);
    } catch (const Error& e) {
      if (!is_retriable(e) || attempt >= cfg.max_retries) throw;
      log::warn(std::string(e.what()) + "; retrying");
      std::this_thread::sleep_for(std::chrono::milliseconds(100 << attempt));
    }
  }
}

std::vector<RewriteResult> rewrite_prompts(const PromptTemplate& tmpl, const std::vector<std::string>& texts,
                                           const LlmConfig& cfg) {
  std::vector<RewriteResult> out(texts.size());
  std::vector<std::exception_ptr> errors(texts.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < texts.size(); i = next++) {
      try {
        out[i] = rewrite_prompt(tmpl, texts[i], cfg);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(std::max(cfg.max_concurrency, 1)), texts.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace msm::data
