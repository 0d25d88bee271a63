#pragma once

#include <filesystem>
#include <vector>

#include "msm/motion/features.hpp"

namespace msm::motion {

struct NormalizationStats {
  RowVector mean;
  RowVector std;
  double epsilon = 1e-6;
  std::string layout_tag;

  int width() const { return static_cast<int>(mean.size()); }
  void save(const std::filesystem::path& path) const;
  static NormalizationStats load(const std::filesystem::path& path);
};

/// Per-column mean and population std over every frame of the corpus.
/// Columns with std below epsilon are clamped to epsilon (with a warning).
NormalizationStats fit_normalization(const std::vector<FeatureSequence>& corpus, double epsilon = 1e-6);

FeatureSequence normalize(const FeatureSequence& feat, const NormalizationStats& stats);
FeatureSequence denormalize(const FeatureSequence& feat, const NormalizationStats& stats);
Matrix normalize_rows(const Matrix& x, const NormalizationStats& stats);
Matrix denormalize_rows(const Matrix& x, const NormalizationStats& stats);

}  // namespace msm::motion
