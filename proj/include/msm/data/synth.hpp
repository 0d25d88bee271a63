#pragma once

#include <cstdint>
#include <filesystem>

#include "msm/data/manifest.hpp"

namespace msm::data {

struct ToyCorpusOptions {
  int clips_per_action = 10;
  int frames = 65;
  double fps = 30.0;
  int long_takes = 2;          // written to takes/ for the segmentation step
  double take_seconds = 120.0;
  SplitRatios ratios;
  std::uint64_t seed = 0;
};

/// Writes a procedural dataset tree: motions/<action>_<k>.bvh with one
/// template caption per action, scenarios.tsv tagging each clip with its
/// action, scenario-stratified splits and a few unsegmented long takes.
/// Existing files under those names are replaced.
void write_toy_corpus(const std::filesystem::path& root, const ToyCorpusOptions& opt);

}  // namespace msm::data
