#include "msm/data/text_features.hpp"

#include "msm/core/error.hpp"
#include "msm/core/io.hpp"

namespace msm::data {

t2m::TextStore populate_text_store(const DatasetManifest& m, const std::filesystem::path& features_dir,
                                   const std::filesystem::path& store_dir) {
  std::vector<std::pair<std::string, std::filesystem::path>> files;
  std::string missing;
  std::size_t missing_count = 0;
  for (const auto& [clip, caps] : m.captions) {
    for (const auto& c : caps) {
      const auto path = features_dir / (c.id + ".tensor");
      if (!std::filesystem::exists(path)) {
        if (++missing_count <= 10) missing += "\n  " + path.string();
        continue;
      }
      files.emplace_back(c.id, path);
    }
  }
  if (missing_count > 0) {
    fail(ErrorKind::missing_artifact,
         std::to_string(missing_count) + " caption feature file(s) missing, e.g.:" + missing);
  }
  require(!files.empty(), "manifest has no captions", ErrorKind::data_validation);
  int width = -1;
  for (const auto& [id, path] : files) {
    const auto meta = io::read_json(io::sidecar_path(path));
    const int w = meta.at("shape").at(1).get<int>();
    if (width < 0) width = w;
    if (w != width) {
      fail(ErrorKind::data_validation, "text features for '" + id + "' have width " + std::to_string(w) +
                                           ", expected " + std::to_string(width));
    }
  }
  auto store = t2m::TextStore::create(store_dir, width);
  for (const auto& [id, path] : files) store.put(id, io::read_tensor(path));
  return store;
}

t2m::TextStore populate_text_store(const DatasetManifest& m, const t2m::ToyTextEmbedder& embedder,
                                   const std::filesystem::path& store_dir) {
  auto store = t2m::TextStore::create(store_dir, embedder.dim());
  for (const auto& [clip, caps] : m.captions) {
    for (const auto& c : caps) store.put(c.id, embedder.embed(c.text, c.id).tokens);
  }
  return store;
}

}  // namespace msm::data
