#include "msm/cli/run_config.hpp"

#include "msm/core/io.hpp"

namespace msm::cli {

void DataConfig::read(ConfigReader& r) {
  r.get("root", root);
  r.get("mirror", mirror);
  r.get("text_source", text_source);
  r.get("text_features", text_features);
  r.get("val_ratio", val_ratio);
  r.get("test_ratio", test_ratio);
  r.finish();
  r.check(text_source == "toy" || text_source == "precomputed", "text_source", "must be toy or precomputed");
  r.check(text_source != "precomputed" || !text_features.empty(), "text_features",
          "is required when text_source is precomputed");
  r.check(val_ratio >= 0 && test_ratio >= 0 && val_ratio + test_ratio <= 1, "val_ratio",
          "and test_ratio must be non-negative and sum to at most 1");
}

nlohmann::json DataConfig::to_json() const {
  return {{"root", root},
          {"mirror", mirror},
          {"text_source", text_source},
          {"text_features", text_features},
          {"val_ratio", val_ratio},
          {"test_ratio", test_ratio}};
}

void SamplingConfig::read(ConfigReader& r) {
  r.get("iterations", iterations);
  r.get("cfg_scale", cfg_scale);
  r.get("temperature", temperature);
  r.get("default_seconds", default_seconds);
  r.finish();
  r.check(iterations >= 1, "iterations", "must be at least 1");
  r.check(temperature >= 0, "temperature", "must be non-negative");
  r.check(default_seconds > 0, "default_seconds", "must be positive");
}

nlohmann::json SamplingConfig::to_json() const {
  return {{"iterations", iterations},
          {"cfg_scale", cfg_scale},
          {"temperature", temperature},
          {"default_seconds", default_seconds}};
}

namespace {

void reject_seed(ConfigReader& r, const std::string& key) {
  auto sub = r.section(key);
  sub.check(!sub.has("seed"), "seed", "is set by the top-level seed");
}

template <typename T>
void read_section(ConfigReader& parent, const std::string& key, T& out) {
  auto sub = parent.section(key);
  try {
    out.read(sub);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::config) throw;
    // Module validation speaks in invalid_argument; here it is a config fault.
    fail(ErrorKind::config, parent.field(key) + ": " + e.what());
  }
}

}  // namespace

void EvalSection::read(ConfigReader& r) {
  reject_seed(r, "train");
  read_section(r, "model", model);
  read_section(r, "train", train);
  r.get("split", split);
  r.get("pool_size", pool_size);
  r.get("top_k", top_k);
  r.get("repeats", repeats);
  r.get("diversity_pairs", diversity_pairs);
  r.get("mmodality_pairs", mmodality_pairs);
  r.finish();
  r.check(split == "train" || split == "val" || split == "test", "split", "must be train, val or test");
  r.check(pool_size >= 2, "pool_size", "must be at least 2");
  r.check(top_k >= 1 && top_k <= pool_size, "top_k", "must be in [1, pool_size]");
  r.check(repeats >= 2, "repeats", "must be at least 2");
  r.check(diversity_pairs >= 1, "diversity_pairs", "must be positive");
  r.check(mmodality_pairs >= 1, "mmodality_pairs", "must be positive");
}

nlohmann::json EvalSection::to_json() const {
  return {{"model", model.to_json()},         {"train", train.to_json()},
          {"split", split},                   {"pool_size", pool_size},
          {"top_k", top_k},                   {"repeats", repeats},
          {"diversity_pairs", diversity_pairs}, {"mmodality_pairs", mmodality_pairs}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  ConfigReader r(j, "");
  r.get("seed", c.seed);
  r.get("threads", c.threads);
  r.check(c.threads >= 0, "threads", "must be non-negative");
  read_section(r, "data", c.data);
  {
    auto vq = r.section("vq");
    reject_seed(vq, "train");
    read_section(vq, "model", c.vq);
    read_section(vq, "train", c.vq_train);
    vq.finish();
  }
  {
    auto t = r.section("t2m");
    reject_seed(t, "train");
    read_section(t, "model", c.t2m);
    read_section(t, "train", c.t2m_train);
    t.finish();
  }
  read_section(r, "eval", c.eval);
  read_section(r, "sampling", c.sampling);
  {
    auto s = r.section("segmenter");
    s.get("sigma", c.segmenter.sigma);
    s.get("accept_scale", c.segmenter.accept_scale);
    s.get("min_len_s", c.segmenter.min_len_s);
    s.get("max_len_s", c.segmenter.max_len_s);
    s.get("rng_seed", c.segmenter.rng_seed);
    s.finish();
    try {
      c.segmenter.validate();
    } catch (const Error& e) {
      fail(ErrorKind::config, std::string("segmenter: ") + e.what());
    }
  }
  read_section(r, "llm", c.llm);
  r.finish();

  c.vq_train.seed = c.seed;
  c.t2m_train.seed = c.seed + 1;
  c.eval.train.seed = c.seed + 2;
  if (c.t2m.codebook_size != c.vq.codebook_size) {
    fail(ErrorKind::config, "t2m.model.codebook_size (" + std::to_string(c.t2m.codebook_size) +
                                ") must equal vq.model.codebook_size (" + std::to_string(c.vq.codebook_size) + ")");
  }
  if (c.vq.extra_layers + 1 > c.t2m.max_scales) {
    fail(ErrorKind::config, "t2m.model.max_scales is smaller than the number of quantization layers");
  }
  return c;
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json vq_train_json = vq_train.to_json();
  vq_train_json.erase("seed");
  nlohmann::json t2m_train_json = t2m_train.to_json();
  t2m_train_json.erase("seed");
  nlohmann::json eval_json = eval.to_json();
  eval_json["train"].erase("seed");
  return {{"seed", seed},
          {"threads", threads},
          {"data", data.to_json()},
          {"vq", {{"model", vq.to_json()}, {"train", vq_train_json}}},
          {"t2m", {{"model", t2m.to_json()}, {"train", t2m_train_json}}},
          {"eval", eval_json},
          {"sampling", sampling.to_json()},
          {"segmenter", segment::to_json(segmenter)},
          {"llm", llm.to_json()}};
}

std::string RunConfig::hash() const {
  nlohmann::json j = to_json();
  j.erase("threads");
  return io::sha1_hex(j.dump());
}

void apply_override(nlohmann::json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) fail(ErrorKind::config, "override '" + assignment + "' is not key=value");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  nlohmann::json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) fail(ErrorKind::config, "override '" + assignment + "' has an empty path segment");
    if (!node->is_object()) fail(ErrorKind::config, "override '" + assignment + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    if (node->is_null()) *node = nlohmann::json::object();
    start = dot + 1;
  }
}

RunConfig load_run_config(const std::optional<std::filesystem::path>& path, const std::vector<std::string>& overrides) {
  nlohmann::json j = nlohmann::json::object();
  if (path) {
    if (!std::filesystem::exists(*path)) fail(ErrorKind::config, "config file " + path->string() + " not found");
    try {
      j = io::read_json(*path);
    } catch (const Error& e) {
      fail(ErrorKind::config, e.what());
    }
  }
  for (const auto& o : overrides) apply_override(j, o);
  return RunConfig::from_json(j);
}

}  // namespace msm::cli
