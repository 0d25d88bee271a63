#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "msm/core/types.hpp"

namespace msm::t2m {

/// Word-level text features: one row per word.
struct TextEmbeddingSequence {
  Matrix tokens;
  std::string source;  // "precomputed_file" or "trainable_toy_embedder"
  std::string caption_id;

  int width() const { return static_cast<int>(tokens.cols()); }
  int length() const { return static_cast<int>(tokens.rows()); }
};

/// Lower-cased alphanumeric words of `text`.
std::vector<std::string> split_words(const std::string& text);

/// Lookup embedder over a closed vocabulary collected from captions. Words
/// outside the vocabulary share one extra row and trigger a warning.
class ToyTextEmbedder {
 public:
  ToyTextEmbedder() = default;
  ToyTextEmbedder(const std::vector<std::string>& captions, int dim, std::uint64_t seed);
  ToyTextEmbedder(std::vector<std::string> vocabulary, Matrix table);

  TextEmbeddingSequence embed(const std::string& text, const std::string& caption_id = "") const;
  int dim() const { return static_cast<int>(table_.cols()); }
  const std::vector<std::string>& vocabulary() const { return vocab_; }
  const Matrix& table() const { return table_; }
  bool knows(const std::string& word) const;

 private:
  std::vector<std::string> vocab_;  // sorted
  Matrix table_;                    // vocab rows + one unknown row
};

/// Directory of per-caption float32 feature blobs with a JSON manifest
/// {schema_version, width, entries: {caption_id: {file, rows}}}.
class TextStore {
 public:
  static TextStore create(const std::filesystem::path& dir, int width);
  static TextStore open(const std::filesystem::path& dir);

  void put(const std::string& caption_id, const Matrix& features);
  TextEmbeddingSequence get(const std::string& caption_id) const;
  bool contains(const std::string& caption_id) const { return entries_.count(caption_id) != 0; }
  std::size_t size() const { return entries_.size(); }
  int width() const { return width_; }
  std::vector<std::string> ids() const;
  const std::filesystem::path& dir() const { return dir_; }

 private:
  struct Entry {
    std::string file;
    int rows = 0;
  };
  void write_manifest() const;

  std::filesystem::path dir_;
  int width_ = 0;
  std::map<std::string, Entry> entries_;
};

/// Up to `count` ids from `pool` closest to `query` by edit distance.
std::vector<std::string> nearest_ids(const std::string& query, const std::vector<std::string>& pool,
                                     std::size_t count = 3);

}  // namespace msm::t2m
