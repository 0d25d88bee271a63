#include "msm/data/manifest.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <functional>
#include <set>
#include <sstream>
#include <thread>

#include "msm/core/error.hpp"
#include "msm/core/io.hpp"
#include "msm/core/log.hpp"
#include "msm/core/rng.hpp"
#include "msm/motion/mirror.hpp"

namespace msm::data {

std::string split_name(Split s) {
  switch (s) {
    case Split::train:
      return "train";
    case Split::val:
      return "val";
    case Split::test:
      return "test";
  }
  return "?";
}

namespace {

Split split_from_name(const std::string& name) {
  for (Split s : kSplits) {
    if (split_name(s) == name) return s;
  }
  fail(ErrorKind::parse, "unknown split '" + name + "'");
}

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

const std::vector<std::string> kNoIds;

void run_parallel(std::size_t count, int threads, const std::function<void(std::size_t)>& job) {
  unsigned n = threads > 0 ? static_cast<unsigned>(threads) : std::max(1u, std::thread::hardware_concurrency());
  n = std::min<unsigned>(n, static_cast<unsigned>(std::max<std::size_t>(count, 1)));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) job(i);
  };
  if (n <= 1) {
    worker();
    return;
  }
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

}  // namespace

// ---------------------------------------------------------------------------
// DatasetManifest

std::size_t DatasetManifest::caption_count() const {
  std::size_t n = 0;
  for (const auto& [id, caps] : captions) n += caps.size();
  return n;
}

std::vector<std::string> DatasetManifest::clip_ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, rec] : clips) ids.push_back(id);
  return ids;
}

const std::vector<std::string>& DatasetManifest::split(Split s) const {
  auto it = splits.find(s);
  return it == splits.end() ? kNoIds : it->second;
}

std::optional<Split> DatasetManifest::split_of(const std::string& clip_id) const {
  for (const auto& [s, ids] : splits) {
    if (std::find(ids.begin(), ids.end(), clip_id) != ids.end()) return s;
  }
  return std::nullopt;
}

std::vector<Caption> DatasetManifest::captions_of_split(Split s) const {
  std::vector<Caption> out;
  for (const auto& id : split(s)) {
    auto it = captions.find(id);
    if (it != captions.end()) out.insert(out.end(), it->second.begin(), it->second.end());
  }
  return out;
}

const Caption& DatasetManifest::caption(const std::string& caption_id) const {
  const auto hash = caption_id.rfind('#');
  if (hash != std::string::npos) {
    auto it = captions.find(caption_id.substr(0, hash));
    if (it != captions.end()) {
      for (const auto& c : it->second) {
        if (c.id == caption_id) return c;
      }
    }
  }
  fail(ErrorKind::missing_artifact, "unknown caption id '" + caption_id + "'");
}

nlohmann::json DatasetManifest::to_json() const {
  nlohmann::json j;
  j["schema_version"] = kManifestSchema;
  nlohmann::json jc = nlohmann::json::object();
  for (const auto& [id, r] : clips) {
    nlohmann::json e = {{"motion_file", r.motion_file}, {"fps", r.fps}, {"frames", r.frames}, {"mirrored", r.mirrored}};
    if (!r.source.empty()) e["source"] = r.source;
    if (!r.scenario.empty()) e["scenario"] = r.scenario;
    jc[id] = e;
  }
  j["clips"] = jc;
  nlohmann::json jt = nlohmann::json::object();
  for (const auto& [id, caps] : captions) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : caps) arr.push_back({{"id", c.id}, {"text", c.text}});
    jt[id] = arr;
  }
  j["captions"] = jt;
  nlohmann::json js = nlohmann::json::object();
  for (Split s : kSplits) js[split_name(s)] = split(s);
  j["splits"] = js;
  return j;
}

DatasetManifest DatasetManifest::from_json(const nlohmann::json& j, const fs::path& root) {
  DatasetManifest m;
  m.root = root;
  try {
    require(j.at("schema_version").get<int>() == kManifestSchema, "unsupported manifest schema version",
            ErrorKind::parse);
    for (const auto& [id, e] : j.at("clips").items()) {
      ClipRecord r;
      r.motion_file = e.at("motion_file").get<std::string>();
      r.fps = e.at("fps").get<double>();
      r.frames = e.at("frames").get<int>();
      r.mirrored = e.at("mirrored").get<bool>();
      r.source = e.value("source", "");
      r.scenario = e.value("scenario", "");
      m.clips[id] = r;
    }
    for (const auto& [id, arr] : j.at("captions").items()) {
      auto& caps = m.captions[id];
      for (const auto& c : arr) caps.push_back({c.at("id").get<std::string>(), c.at("text").get<std::string>()});
    }
    for (const auto& [name, ids] : j.at("splits").items()) {
      m.splits[split_from_name(name)] = ids.get<std::vector<std::string>>();
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, std::string("malformed manifest: ") + e.what());
  }
  return m;
}

std::string DatasetManifest::serialize() const { return to_json().dump(2) + "\n"; }

void DatasetManifest::save() const { io::write_file_atomic(root / kManifestFile, serialize()); }

DatasetManifest DatasetManifest::load(const fs::path& root) {
  const fs::path path = root / kManifestFile;
  if (!fs::exists(path)) fail(ErrorKind::missing_artifact, "no manifest at " + path.string());
  DatasetManifest m = from_json(io::read_json(path), root);
  validate_manifest(m).raise_if_failed("manifest " + path.string());
  return m;
}

// ---------------------------------------------------------------------------
// Validation

bool ValidationReport::ok() const { return error_count() == 0; }

std::size_t ValidationReport::error_count() const {
  return static_cast<std::size_t>(std::count_if(issues.begin(), issues.end(), [](const auto& i) { return i.fatal; }));
}

std::string ValidationReport::itemized() const {
  std::string out;
  for (bool fatal : {true, false}) {
    for (const auto& i : issues) {
      if (i.fatal != fatal) continue;
      out += std::string(fatal ? "  error " : "  warning ") + "[" + i.code + "] " + i.message + "\n";
    }
  }
  return out;
}

nlohmann::json ValidationReport::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& i : issues) arr.push_back({{"code", i.code}, {"message", i.message}, {"fatal", i.fatal}});
  return {{"ok", ok()}, {"errors", error_count()}, {"issues", arr}};
}

void ValidationReport::raise_if_failed(const std::string& what) const {
  if (ok()) return;
  fail(ErrorKind::data_validation,
       what + " failed validation with " + std::to_string(error_count()) + " error(s):\n" + itemized());
}

ValidationReport validate_manifest(const DatasetManifest& m) {
  ValidationReport rep;
  auto error = [&](const std::string& code, const std::string& msg) { rep.issues.push_back({code, msg, true}); };

  std::map<std::string, Split> owner;
  for (Split s : kSplits) {
    std::set<std::string> seen;
    for (const auto& id : m.split(s)) {
      if (!seen.insert(id).second) error("duplicate_split_entry", "'" + id + "' listed twice in " + split_name(s));
      if (!m.clips.count(id)) error("missing_motion", split_name(s) + " lists '" + id + "' but it has no motion file");
      auto [it, fresh] = owner.emplace(id, s);
      if (!fresh && it->second != s) {
        error("overlapping_splits", "'" + id + "' appears in both " + split_name(it->second) + " and " + split_name(s));
      }
    }
  }
  std::set<std::string> caption_ids;
  for (const auto& [id, caps] : m.captions) {
    if (!m.clips.count(id)) error("orphan_caption", "captions for '" + id + "' have no motion file");
    for (const auto& c : caps) {
      if (!caption_ids.insert(c.id).second) error("duplicate_caption", "caption id '" + c.id + "' is not unique");
    }
  }
  for (const auto& [id, r] : m.clips) {
    auto it = m.captions.find(id);
    if (it == m.captions.end() || it->second.empty()) error("uncaptioned_clip", "clip '" + id + "' has no caption");
    if (r.mirrored && !m.clips.count(r.source)) {
      error("mirror_source", "mirrored clip '" + id + "' refers to unknown source '" + r.source + "'");
    }
    if (r.mirrored && m.clips.count(r.source) && m.split_of(id) != m.split_of(r.source)) {
      error("mirror_split", "mirrored clip '" + id + "' is not in the split of '" + r.source + "'");
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Scanning

std::vector<std::string> read_id_list(const fs::path& path) {
  std::vector<std::string> ids;
  for (const auto& line : lines_of(io::read_file(path))) {
    const std::string id = trim(line);
    if (!id.empty()) ids.push_back(id);
  }
  return ids;
}

void write_id_list(const fs::path& path, const std::vector<std::string>& ids) {
  std::string text;
  for (const auto& id : ids) text += id + "\n";
  io::write_file_atomic(path, text);
}

DatasetManifest scan_dataset(const fs::path& root, ValidationReport& report, int threads) {
  auto error = [&](const std::string& code, const std::string& msg) { report.issues.push_back({code, msg, true}); };
  auto warning = [&](const std::string& code, const std::string& msg) {
    report.issues.push_back({code, msg, false});
  };

  if (!fs::is_directory(root)) fail(ErrorKind::data_validation, "dataset root " + root.string() + " is not a directory");
  const fs::path motions = root / "motions";
  std::vector<fs::path> files;
  if (fs::is_directory(motions)) {
    for (const auto& e : fs::directory_iterator(motions)) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());

  DatasetManifest m;
  m.root = root;
  std::map<std::string, std::vector<fs::path>> by_id;
  for (const auto& f : files) {
    const std::string name = f.filename().string();
    if (name.size() > 12 && name.ends_with(".tensor.json")) continue;
    const std::string ext = f.extension().string();
    if (ext != ".bvh" && ext != ".tensor") {
      warning("unknown_file", "ignoring motions/" + name);
      continue;
    }
    by_id[f.stem().string()].push_back(f);
  }
  if (by_id.empty()) {
    fail(ErrorKind::data_validation, "dataset root " + root.string() + " has no motion files under motions/");
  }

  std::vector<std::pair<std::string, fs::path>> todo;
  for (const auto& [id, paths] : by_id) {
    if (id.starts_with(kMirrorPrefix)) {
      error("reserved_prefix", "clip id '" + id + "' uses the prefix reserved for mirrored clips");
      continue;
    }
    if (paths.size() > 1) {
      std::string names;
      for (const auto& p : paths) names += " motions/" + p.filename().string();
      error("duplicate_clip", "clip id '" + id + "' has more than one motion file:" + names);
      continue;
    }
    todo.emplace_back(id, paths[0]);
  }

  std::vector<ClipRecord> records(todo.size());
  std::vector<std::string> problems(todo.size());
  run_parallel(todo.size(), threads, [&](std::size_t i) {
    const auto& [id, path] = todo[i];
    ClipRecord& r = records[i];
    r.motion_file = fs::relative(path, root).generic_string();
    try {
      if (path.extension() == ".bvh") {
        const auto bvh = motion::import_bvh(path);
        r.fps = bvh.pose.fps();
        r.frames = bvh.pose.frames();
      } else {
        const auto meta = io::read_json(io::sidecar_path(path));
        r.frames = meta.at("shape").at(0).get<int>();
        r.fps = meta.value("fps", 0.0);
        require(r.fps > 0.0, "tensor sidecar has no fps", ErrorKind::data_validation);
      }
    } catch (const std::exception& e) {
      problems[i] = e.what();
    }
  });
  for (std::size_t i = 0; i < todo.size(); ++i) {
    if (!problems[i].empty()) {
      error("unreadable_motion", records[i].motion_file + ": " + problems[i]);
    } else {
      m.clips[todo[i].first] = records[i];
    }
  }

  const fs::path texts = root / "texts";
  std::vector<fs::path> text_files;
  if (fs::is_directory(texts)) {
    for (const auto& e : fs::directory_iterator(texts)) {
      if (e.is_regular_file() && e.path().extension() == ".txt") text_files.push_back(e.path());
    }
  }
  std::sort(text_files.begin(), text_files.end());
  for (const auto& f : text_files) {
    const std::string id = f.stem().string();
    if (!by_id.count(id)) {
      error("orphan_caption", "texts/" + f.filename().string() + " has no matching motion file");
      continue;
    }
    const auto lines = lines_of(io::read_file(f));
    auto& caps = m.captions[id];
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const std::string text = trim(lines[i]);
      if (!text.empty()) caps.push_back({id + "#" + std::to_string(i), text});
    }
  }

  for (Split s : kSplits) {
    const fs::path p = root / "splits" / (split_name(s) + ".txt");
    if (!fs::exists(p)) {
      warning("missing_split_file", "splits/" + split_name(s) + ".txt not found; treated as empty");
      m.splits[s] = {};
      continue;
    }
    m.splits[s] = read_id_list(p);
  }

  const fs::path tags = root / "scenarios.tsv";
  if (fs::exists(tags)) {
    for (const auto& line : lines_of(io::read_file(tags))) {
      const std::string t = trim(line);
      if (t.empty()) continue;
      const auto tab = t.find('\t');
      if (tab == std::string::npos) {
        warning("bad_scenario_line", "scenarios.tsv line without a tab: '" + t + "'");
        continue;
      }
      const std::string id = trim(t.substr(0, tab));
      auto it = m.clips.find(id);
      if (it == m.clips.end()) {
        warning("unknown_scenario_clip", "scenarios.tsv names unknown clip '" + id + "'");
      } else {
        it->second.scenario = trim(t.substr(tab + 1));
      }
    }
  }

  // Duplicates already reported above would otherwise surface again as
  // missing motions in the split lists.
  ValidationReport structural = validate_manifest(m);
  for (auto& issue : structural.issues) {
    if (issue.code == "orphan_caption") continue;
    if (issue.code == "missing_motion") {
      const auto q1 = issue.message.find('\''), q2 = issue.message.find('\'', q1 + 1);
      if (by_id.count(issue.message.substr(q1 + 1, q2 - q1 - 1))) continue;
    }
    report.issues.push_back(std::move(issue));
  }
  for (const auto& [id, r] : m.clips) {
    if (!m.split_of(id)) warning("unassigned_clip", "clip '" + id + "' is in no split");
  }
  return m;
}

DatasetManifest build_manifest(const fs::path& root, int threads) {
  ValidationReport report;
  DatasetManifest m = scan_dataset(root, report, threads);
  for (const auto& i : report.issues) {
    if (!i.fatal) log::warn(i.message);
  }
  report.raise_if_failed("dataset " + root.string());
  m.save();
  return m;
}

// ---------------------------------------------------------------------------
// Mirroring

std::string mirror_id(const std::string& clip_id) {
  const std::string prefix = kMirrorPrefix;
  if (clip_id.starts_with(prefix)) return clip_id.substr(prefix.size());
  return prefix + clip_id;
}

namespace {

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

std::string match_case(const std::string& like, const std::string& word) {
  const bool all_upper = std::all_of(like.begin(), like.end(), [](char c) { return std::isupper(static_cast<unsigned char>(c)); });
  std::string out = word;
  if (all_upper) {
    for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  } else if (std::isupper(static_cast<unsigned char>(like[0]))) {
    out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
  }
  return out;
}

}  // namespace

std::string mirror_caption(const std::string& text) {
  std::string out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_word_char(text[i])) {
      out += text[i++];
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && is_word_char(text[j])) ++j;
    const std::string word = text.substr(i, j - i);
    std::string lower = word;
    for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (lower == "left") {
      out += match_case(word, "right");
    } else if (lower == "right") {
      out += match_case(word, "left");
    } else {
      out += word;
    }
    i = j;
  }
  return out;
}

DatasetManifest augment_with_mirrors(const DatasetManifest& m) {
  validate_manifest(m).raise_if_failed("manifest");
  DatasetManifest out = m;
  for (const auto& [id, r] : m.clips) {
    if (r.mirrored) continue;
    const std::string mid = mirror_id(id);
    if (out.clips.count(mid)) continue;
    ClipRecord mr = r;
    mr.mirrored = true;
    mr.source = id;
    out.clips[mid] = mr;
    auto& caps = out.captions[mid];
    for (const auto& c : m.captions.at(id)) {
      caps.push_back({mid + c.id.substr(id.size()), mirror_caption(c.text)});
    }
    if (auto s = m.split_of(id)) out.splits[*s].push_back(mid);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Splits

std::map<Split, std::vector<std::string>> make_splits(const std::vector<std::string>& ids,
                                                      const std::map<std::string, std::string>& scenario,
                                                      const SplitRatios& ratios, std::uint64_t seed) {
  require(ratios.val >= 0 && ratios.test >= 0 && ratios.val + ratios.test <= 1.0, "split ratios must be in [0, 1]");
  std::map<std::string, std::vector<std::string>> groups;
  for (const auto& id : ids) {
    auto it = scenario.find(id);
    groups[it == scenario.end() ? std::string() : it->second].push_back(id);
  }
  std::map<Split, std::vector<std::string>> out{{Split::train, {}}, {Split::val, {}}, {Split::test, {}}};
  Rng rng(seed);
  for (auto& [tag, members] : groups) {
    std::sort(members.begin(), members.end());
    rng.shuffle(members);
    const double n = static_cast<double>(members.size());
    const auto n_test = static_cast<std::size_t>(std::lround(ratios.test * n));
    const auto n_val = std::min(members.size() - n_test, static_cast<std::size_t>(std::lround(ratios.val * n)));
    for (std::size_t i = 0; i < members.size(); ++i) {
      const Split s = i < n_test ? Split::test : i < n_test + n_val ? Split::val : Split::train;
      out[s].push_back(members[i]);
    }
  }
  for (auto& [s, v] : out) std::sort(v.begin(), v.end());
  return out;
}

// ---------------------------------------------------------------------------
// Loading

namespace {

const ClipRecord& record_of(const DatasetManifest& m, const std::string& clip_id) {
  auto it = m.clips.find(clip_id);
  if (it == m.clips.end()) fail(ErrorKind::missing_artifact, "unknown clip id '" + clip_id + "'");
  return it->second;
}

}  // namespace

motion::BvhData load_clip_pose(const DatasetManifest& m, const std::string& clip_id) {
  const ClipRecord& r = record_of(m, clip_id);
  require(r.motion_file.ends_with(".bvh"), "clip '" + clip_id + "' is not stored as BVH", ErrorKind::data_validation);
  auto bvh = motion::import_bvh(m.root / r.motion_file);
  if (r.mirrored) bvh.pose = motion::mirror(bvh.pose, bvh.skeleton);
  return bvh;
}

motion::FeatureSequence load_clip_features(const DatasetManifest& m, const std::string& clip_id,
                                           const motion::SkeletonSpec& skel) {
  const ClipRecord& r = record_of(m, clip_id);
  if (r.motion_file.ends_with(".bvh")) {
    const auto bvh = load_clip_pose(m, clip_id);
    return motion::extract_features(bvh.pose, bvh.skeleton);
  }
  io::TensorMeta meta;
  motion::FeatureSequence f;
  f.data = io::read_tensor(m.root / r.motion_file, &meta);
  f.layout = motion::FeatureLayout::for_width(static_cast<int>(f.data.cols()), skel.joint_count());
  f.fps = meta.fps > 0 ? meta.fps : r.fps;
  if (r.mirrored) f = motion::mirror_features(f, skel);
  return f;
}

}  // namespace msm::data
