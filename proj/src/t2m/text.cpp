#include "msm/t2m/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "msm/core/error.hpp"
#include "msm/core/io.hpp"
#include "msm/core/log.hpp"
#include "msm/core/rng.hpp"

namespace msm::t2m {

namespace fs = std::filesystem;

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

ToyTextEmbedder::ToyTextEmbedder(const std::vector<std::string>& captions, int dim, std::uint64_t seed) {
  require(dim >= 1, "text embedding width must be positive");
  std::set<std::string> words;
  for (const auto& c : captions)
    for (auto& w : split_words(c)) words.insert(std::move(w));
  vocab_.assign(words.begin(), words.end());
  table_.resize(static_cast<Eigen::Index>(vocab_.size()) + 1, dim);
  Rng rng(seed);
  const double sc = 1.0 / std::sqrt(static_cast<double>(dim));
  for (Eigen::Index i = 0; i < table_.size(); ++i) table_.data()[i] = sc * rng.normal();
}

ToyTextEmbedder::ToyTextEmbedder(std::vector<std::string> vocabulary, Matrix table)
    : vocab_(std::move(vocabulary)), table_(std::move(table)) {
  require(std::is_sorted(vocab_.begin(), vocab_.end()), "embedder vocabulary must be sorted");
  require(table_.rows() == static_cast<Eigen::Index>(vocab_.size()) + 1, "embedder table size mismatch");
}

bool ToyTextEmbedder::knows(const std::string& word) const {
  return std::binary_search(vocab_.begin(), vocab_.end(), word);
}

TextEmbeddingSequence ToyTextEmbedder::embed(const std::string& text, const std::string& caption_id) const {
  require(table_.size() > 0, "text embedder is empty");
  const auto words = split_words(text);
  require(!words.empty(), "text has no words");
  TextEmbeddingSequence out;
  out.tokens.resize(static_cast<Eigen::Index>(words.size()), table_.cols());
  out.source = "trainable_toy_embedder";
  out.caption_id = caption_id;
  for (std::size_t i = 0; i < words.size(); ++i) {
    auto it = std::lower_bound(vocab_.begin(), vocab_.end(), words[i]);
    Eigen::Index row = static_cast<Eigen::Index>(vocab_.size());
    if (it != vocab_.end() && *it == words[i]) row = it - vocab_.begin();
    else log::warn("word '" + words[i] + "' is outside the embedder vocabulary");
    out.tokens.row(static_cast<Eigen::Index>(i)) = table_.row(row);
  }
  return out;
}

namespace {

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

std::vector<std::string> nearest_ids(const std::string& query, const std::vector<std::string>& pool,
                                     std::size_t count) {
  std::vector<std::pair<std::size_t, std::string>> scored;
  for (const auto& id : pool) scored.emplace_back(edit_distance(query, id), id);
  std::sort(scored.begin(), scored.end());
  std::vector<std::string> out;
  for (std::size_t i = 0; i < scored.size() && i < count; ++i) out.push_back(scored[i].second);
  return out;
}

TextStore TextStore::create(const fs::path& dir, int width) {
  require(width >= 1, "text store width must be positive");
  TextStore s;
  s.dir_ = dir;
  s.width_ = width;
  fs::create_directories(dir / "blobs");
  s.write_manifest();
  return s;
}

TextStore TextStore::open(const fs::path& dir) {
  if (!fs::exists(dir / "manifest.json")) fail(ErrorKind::missing_artifact, "no text store at " + dir.string());
  const auto j = io::read_json(dir / "manifest.json");
  TextStore s;
  s.dir_ = dir;
  try {
    s.width_ = j.at("width").get<int>();
    for (auto it = j.at("entries").begin(); it != j.at("entries").end(); ++it)
      s.entries_[it.key()] = Entry{it->at("file").get<std::string>(), it->at("rows").get<int>()};
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, "malformed text store manifest: " + std::string(e.what()));
  }
  return s;
}

void TextStore::put(const std::string& caption_id, const Matrix& features) {
  require(!caption_id.empty(), "caption id is empty");
  if (features.cols() != width_)
    fail(ErrorKind::data_validation, "caption '" + caption_id + "' has feature width " +
                                         std::to_string(features.cols()) + ", store expects " +
                                         std::to_string(width_));
  require(features.rows() >= 1, "caption '" + caption_id + "' has no feature rows", ErrorKind::data_validation);
  auto it = entries_.find(caption_id);
  const std::string file =
      it != entries_.end() ? it->second.file : "blobs/" + std::to_string(entries_.size()) + ".f32";
  io::write_file_atomic(dir_ / file, io::encode_f32(features));
  entries_[caption_id] = Entry{file, static_cast<int>(features.rows())};
  write_manifest();
}

TextEmbeddingSequence TextStore::get(const std::string& caption_id) const {
  auto it = entries_.find(caption_id);
  if (it == entries_.end()) {
    std::string msg = "unknown caption id '" + caption_id + "'";
    const auto near = nearest_ids(caption_id, ids());
    if (!near.empty()) {
      msg += "; nearest:";
      for (const auto& n : near) msg += " " + n;
    }
    fail(ErrorKind::missing_artifact, msg);
  }
  TextEmbeddingSequence out;
  out.tokens = io::decode_f32(io::read_file(dir_ / it->second.file), it->second.rows, width_);
  out.source = "precomputed_file";
  out.caption_id = caption_id;
  return out;
}

std::vector<std::string> TextStore::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, e] : entries_) out.push_back(id);
  return out;
}

void TextStore::write_manifest() const {
  nlohmann::json entries = nlohmann::json::object();
  for (const auto& [id, e] : entries_) entries[id] = {{"file", e.file}, {"rows", e.rows}};
  io::write_json(dir_ / "manifest.json", {{"schema_version", 1}, {"width", width_}, {"entries", entries}});
}

}  // namespace msm::t2m
