#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "msm/motion/bvh.hpp"
#include "msm/motion/features.hpp"
#include "msm/motion/pose.hpp"

namespace msm::data {

namespace fs = std::filesystem;

inline constexpr const char* kMirrorPrefix = "M_";
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr int kManifestSchema = 1;

enum class Split { train, val, test };
inline constexpr Split kSplits[] = {Split::train, Split::val, Split::test};
std::string split_name(Split s);

struct ClipRecord {
  std::string motion_file;  // relative to the dataset root
  double fps = 0.0;
  int frames = 0;           // pose frames for .bvh, feature rows for .tensor
  bool mirrored = false;
  std::string source;       // original clip id of a mirrored clip
  std::string scenario;     // optional stratification tag
};

struct Caption {
  std::string id;  // <clip_id>#<index>
  std::string text;
};

struct DatasetManifest {
  fs::path root;
  std::map<std::string, ClipRecord> clips;
  std::map<std::string, std::vector<Caption>> captions;
  std::map<Split, std::vector<std::string>> splits;

  std::size_t caption_count() const;
  std::vector<std::string> clip_ids() const;
  /// Clip ids of one split, in file order.
  const std::vector<std::string>& split(Split s) const;
  std::optional<Split> split_of(const std::string& clip_id) const;
  std::vector<Caption> captions_of_split(Split s) const;
  /// Caption text by caption id; throws missing_artifact when unknown.
  const Caption& caption(const std::string& caption_id) const;

  nlohmann::json to_json() const;
  static DatasetManifest from_json(const nlohmann::json& j, const fs::path& root);
  /// Serialized form written to <root>/manifest.json.
  std::string serialize() const;
  void save() const;
  static DatasetManifest load(const fs::path& root);
};

/// One problem found while validating a dataset tree or manifest.
struct ValidationIssue {
  std::string code;  // orphan_caption, missing_motion, overlapping_splits, ...
  std::string message;
  bool fatal = true;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;

  bool ok() const;
  std::size_t error_count() const;
  /// One line per issue, errors first.
  std::string itemized() const;
  nlohmann::json to_json() const;
  /// Throws data_validation with the itemized text unless ok().
  void raise_if_failed(const std::string& what) const;
};

/// Checks the manifest invariants: disjoint splits, unique caption ids,
/// every clip captioned, split entries naming known clips.
ValidationReport validate_manifest(const DatasetManifest& m);

/// Scans motions/, texts/ and splits/ under `root` without writing anything.
/// `threads` caps the parallel header reads (0 = hardware concurrency).
DatasetManifest scan_dataset(const fs::path& root, ValidationReport& report, int threads = 0);

/// scan_dataset + validation; throws data_validation on any fatal issue,
/// otherwise writes <root>/manifest.json and returns the manifest.
DatasetManifest build_manifest(const fs::path& root, int threads = 0);

/// "x" <-> "M_x". Original clip ids may not start with the prefix, which
/// keeps this an involution on every id a manifest can hold.
std::string mirror_id(const std::string& clip_id);

/// Word-boundary swap of left and right, keeping the case pattern.
std::string mirror_caption(const std::string& text);

/// Adds "M_<id>" for every original clip that lacks one. Mirrors join the
/// split of their source and reuse its motion file with mirrored = true.
DatasetManifest augment_with_mirrors(const DatasetManifest& m);

struct SplitRatios {
  double val = 0.05;
  double test = 0.10;
};

/// Assigns ids to train/val/test. With scenario tags, each tag is split on
/// its own so every scenario appears in proportion; untagged ids form one
/// group. Per group of n shuffled ids, test takes round(test * n), val takes
/// round(val * n) and train keeps the rest (halves round away from zero).
std::map<Split, std::vector<std::string>> make_splits(const std::vector<std::string>& ids,
                                                      const std::map<std::string, std::string>& scenario,
                                                      const SplitRatios& ratios, std::uint64_t seed);

/// Reads splits/*.txt-style lists (one id per line, blank lines ignored).
std::vector<std::string> read_id_list(const fs::path& path);
void write_id_list(const fs::path& path, const std::vector<std::string>& ids);

/// Pose of a .bvh clip, mirrored when the record says so.
motion::BvhData load_clip_pose(const DatasetManifest& m, const std::string& clip_id);

/// Unnormalized features of a clip (.bvh is converted, .tensor read as is);
/// mirrored clips are reflected in feature space.
motion::FeatureSequence load_clip_features(const DatasetManifest& m, const std::string& clip_id,
                                           const motion::SkeletonSpec& skel);

}  // namespace msm::data
