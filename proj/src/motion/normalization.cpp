#include "msm/motion/normalization.hpp"

#include <cmath>

#include "msm/core/error.hpp"
#include "msm/core/io.hpp"
#include "msm/core/log.hpp"

namespace msm::motion {

namespace {

nlohmann::json to_json(const RowVector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

RowVector from_json(const nlohmann::json& j) {
  auto v = j.get<std::vector<double>>();
  return Eigen::Map<RowVector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

void NormalizationStats::save(const std::filesystem::path& path) const {
  io::write_json(path, {{"mean", to_json(mean)}, {"std", to_json(std)}, {"epsilon", epsilon}, {"layout", layout_tag}});
}

NormalizationStats NormalizationStats::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::missing_artifact, "normalization stats not found: " + path.string());
  const auto j = io::read_json(path);
  NormalizationStats s;
  try {
    s.mean = from_json(j.at("mean"));
    s.std = from_json(j.at("std"));
    s.epsilon = j.at("epsilon").get<double>();
    s.layout_tag = j.value("layout", "");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::data_validation, "malformed normalization stats " + path.string() + ": " + e.what());
  }
  require(s.mean.size() == s.std.size(), "normalization stats width mismatch", ErrorKind::data_validation);
  return s;
}

NormalizationStats fit_normalization(const std::vector<FeatureSequence>& corpus, double epsilon) {
  require(!corpus.empty(), "normalization corpus is empty");
  require(epsilon > 0.0, "normalization epsilon must be positive");
  const Eigen::Index D = corpus.front().data.cols();
  double count = 0;
  RowVector sum = RowVector::Zero(D);
  for (const auto& f : corpus) {
    require(f.data.cols() == D, "normalization corpus has mixed widths");
    require(!f.normalized, "normalization corpus must be unnormalized");
    sum += f.data.colwise().sum();
    count += static_cast<double>(f.data.rows());
  }
  require(count > 0, "normalization corpus has no frames");
  NormalizationStats s;
  s.epsilon = epsilon;
  s.layout_tag = corpus.front().layout.tag();
  s.mean = sum / count;
  RowVector sq = RowVector::Zero(D);
  for (const auto& f : corpus) sq += (f.data.rowwise() - s.mean).array().square().colwise().sum().matrix();
  s.std = (sq / count).array().sqrt().matrix();
  int clamped = 0;
  for (Eigen::Index c = 0; c < D; ++c) {
    if (s.std(c) < epsilon) {
      s.std(c) = epsilon;
      ++clamped;
    }
  }
  if (clamped > 0) log::warn(std::to_string(clamped) + " zero-variance feature columns clamped to epsilon");
  return s;
}

Matrix normalize_rows(const Matrix& x, const NormalizationStats& stats) {
  require(x.cols() == stats.width(), "feature width does not match normalization stats");
  return ((x.rowwise() - stats.mean).array().rowwise() / stats.std.array()).matrix();
}

Matrix denormalize_rows(const Matrix& x, const NormalizationStats& stats) {
  require(x.cols() == stats.width(), "feature width does not match normalization stats");
  return ((x.array().rowwise() * stats.std.array()).rowwise() + stats.mean.array()).matrix();
}

FeatureSequence normalize(const FeatureSequence& feat, const NormalizationStats& stats) {
  require(!feat.normalized, "features are already normalized");
  FeatureSequence out = feat;
  out.data = normalize_rows(feat.data, stats);
  out.normalized = true;
  return out;
}

FeatureSequence denormalize(const FeatureSequence& feat, const NormalizationStats& stats) {
  require(feat.normalized, "features are not normalized");
  FeatureSequence out = feat;
  out.data = denormalize_rows(feat.data, stats);
  out.normalized = false;
  return out;
}

}  // namespace msm::motion
