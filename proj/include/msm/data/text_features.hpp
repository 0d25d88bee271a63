#pragma once

#include <filesystem>

#include "msm/data/manifest.hpp"
#include "msm/t2m/text.hpp"

namespace msm::data {

/// Copies precomputed word features, one `<caption_id>.tensor` per caption in
/// `features_dir`, into a new store at `store_dir`. Every caption of the
/// manifest must have a file and all widths must agree.
t2m::TextStore populate_text_store(const DatasetManifest& m, const std::filesystem::path& features_dir,
                                   const std::filesystem::path& store_dir);

/// Same, with features computed by the toy embedder.
t2m::TextStore populate_text_store(const DatasetManifest& m, const t2m::ToyTextEmbedder& embedder,
                                   const std::filesystem::path& store_dir);

}  // namespace msm::data
