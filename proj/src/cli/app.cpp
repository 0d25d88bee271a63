#include "msm/cli/app.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <set>

#include <CLI11.hpp>

#include "msm/cli/run_config.hpp"
#include "msm/core/io.hpp"
#include "msm/core/log.hpp"
#include "msm/data/manifest.hpp"
#include "msm/data/prompt.hpp"
#include "msm/data/synth.hpp"
#include "msm/data/text_features.hpp"
#include "msm/eval/metrics.hpp"
#include "msm/eval/tmr.hpp"
#include "msm/motion/bvh.hpp"
#include "msm/motion/normalization.hpp"
#include "msm/nn/checkpoint.hpp"
#include "msm/segment/segmenter.hpp"
#include "msm/t2m/sampler.hpp"
#include "msm/t2m/train.hpp"
#include "msm/vq/train.hpp"

#ifndef MSM_TEMPLATE_DIR
#define MSM_TEMPLATE_DIR "templates"
#endif

namespace msm::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config:
      return kExitConfig;
    case ErrorKind::missing_artifact:
      return kExitMissingArtifact;
    case ErrorKind::data_validation:
      return kExitDataValidation;
    case ErrorKind::numeric:
      return kExitNumeric;
    default:
      return kExitOther;
  }
}

namespace {

constexpr int kSummarySchema = 1;

// ---------------------------------------------------------------------------
// Run directory layout

struct Paths {
  fs::path run;
  fs::path features() const { return run / "features"; }
  fs::path norm() const { return run / "norm.json"; }
  fs::path vq() const { return run / "vq"; }
  fs::path tokens() const { return run / "tokens.json"; }
  fs::path text_store() const { return run / "text_store"; }
  fs::path text_embedder() const { return run / "text_embedder"; }
  fs::path t2m() const { return run / "t2m"; }
  fs::path tmr() const { return run / "tmr"; }
  fs::path generated() const { return run / "generated"; }
  fs::path segments() const { return run / "segments"; }
  fs::path reports() const { return run / "reports"; }
  fs::path summaries() const { return run / "summaries"; }
};

struct Session {
  std::string command;
  RunConfig cfg;
  Paths paths;
  std::vector<fs::path> inputs;
  std::vector<std::string> outputs;
  json results = json::object();

  void input(const fs::path& p) { inputs.push_back(p); }
  void output(const fs::path& p) { outputs.push_back(p.generic_string()); }
};

std::string hash_path(const fs::path& p) {
  if (fs::is_regular_file(p)) return io::git_blob_hash(io::read_file(p));
  if (!fs::is_directory(p)) fail(ErrorKind::missing_artifact, "input " + p.string() + " does not exist");
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(p)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::string listing;
  for (const auto& f : files) {
    listing += fs::relative(f, p).generic_string() + " " + io::git_blob_hash(io::read_file(f)) + "\n";
  }
  return io::git_blob_hash(listing);
}

std::string inputs_hash(const std::vector<fs::path>& inputs) {
  std::string listing;
  for (const auto& p : inputs) listing += hash_path(p) + "\n";
  return io::git_blob_hash(listing);
}

void require_artifact(const fs::path& p, const std::string& producer) {
  if (!fs::exists(p)) fail(ErrorKind::missing_artifact, p.string() + " not found; run `msm " + producer + "` first");
}

// ---------------------------------------------------------------------------
// Shared loaders

data::DatasetManifest open_manifest(Session& s) {
  const fs::path root = s.cfg.data.root;
  if (!fs::is_directory(root)) fail(ErrorKind::missing_artifact, "dataset root " + root.string() + " not found");
  auto m = fs::exists(root / data::kManifestFile) ? data::DatasetManifest::load(root)
                                                   : data::build_manifest(root, s.cfg.threads);
  s.input(root / data::kManifestFile);
  if (s.cfg.data.mirror) m = data::augment_with_mirrors(m);
  return m;
}

data::Split split_named(const std::string& name) {
  for (auto sp : data::kSplits) {
    if (data::split_name(sp) == name) return sp;
  }
  fail(ErrorKind::config, "unknown split '" + name + "'");
}

fs::path feature_file(const Session& s, const std::string& clip_id) {
  return s.paths.features() / (clip_id + ".tensor");
}

motion::FeatureSequence read_features(const Session& s, const std::string& clip_id) {
  const fs::path p = feature_file(s, clip_id);
  require_artifact(p, "extract-features");
  io::TensorMeta meta;
  motion::FeatureSequence f;
  f.data = io::read_tensor(p, &meta);
  f.layout = motion::FeatureLayout::from_tag(meta.layout);
  f.fps = meta.fps;
  return f;
}

motion::NormalizationStats read_norm(Session& s) {
  require_artifact(s.paths.norm(), "fit-norm");
  s.input(s.paths.norm());
  return motion::NormalizationStats::load(s.paths.norm());
}

std::unique_ptr<vq::VqModel> read_vq(Session& s, motion::NormalizationStats* norm = nullptr, json* stats = nullptr) {
  require_artifact(s.paths.vq(), "train-vq");
  s.input(s.paths.vq());
  return vq::VqModel::load(s.paths.vq(), norm, stats);
}

std::map<std::string, vq::QuantizedMotion> read_tokens(Session& s) {
  require_artifact(s.paths.tokens(), "tokenize");
  s.input(s.paths.tokens());
  const json j = io::read_json(s.paths.tokens());
  std::map<std::string, vq::QuantizedMotion> out;
  for (const auto& [id, e] : j.at("clips").items()) out[id] = vq::QuantizedMotion::from_json(e.at("tokens"));
  return out;
}

void save_embedder(const t2m::ToyTextEmbedder& emb, const fs::path& dir) {
  nn::Checkpoint ck;
  ck.kind = "toy_text_embedder";
  ck.put("table", emb.table());
  ck.stats["vocabulary"] = emb.vocabulary();
  nn::save_checkpoint(dir, ck);
}

t2m::ToyTextEmbedder load_embedder(const fs::path& dir) {
  const auto ck = nn::load_checkpoint(dir, "toy_text_embedder");
  return t2m::ToyTextEmbedder(ck.stats.at("vocabulary").get<std::vector<std::string>>(), ck.get("table"));
}

/// Builds the caption feature store for every caption of the manifest, or
/// reuses it when it already covers them. Toy text uses an embedder fitted to
/// the training captions only.
t2m::TextStore ensure_text_store(Session& s, const data::DatasetManifest& m, int width) {
  const fs::path dir = s.paths.text_store();
  if (fs::exists(dir / "manifest.json")) {
    auto store = t2m::TextStore::open(dir);
    bool complete = store.width() == width;
    for (const auto& [clip, caps] : m.captions) {
      for (const auto& c : caps) complete = complete && store.contains(c.id);
    }
    if (complete) {
      s.input(dir);
      return store;
    }
    log::info("rebuilding text store at " + dir.string());
  }
  fs::remove_all(dir);
  if (s.cfg.data.text_source == "toy") {
    std::vector<std::string> texts;
    for (const auto& c : m.captions_of_split(data::Split::train)) texts.push_back(c.text);
    require(!texts.empty(), "training split has no captions", ErrorKind::data_validation);
    const t2m::ToyTextEmbedder emb(texts, width, s.cfg.seed + 7);
    save_embedder(emb, s.paths.text_embedder());
    s.output(s.paths.text_embedder());
    auto store = data::populate_text_store(m, emb, dir);
    s.output(dir);
    return store;
  }
  s.input(s.cfg.data.text_features);
  auto store = data::populate_text_store(m, s.cfg.data.text_features, dir);
  if (store.width() != width) {
    fail(ErrorKind::config, "precomputed text features have width " + std::to_string(store.width()) +
                                " but the model expects " + std::to_string(width));
  }
  s.output(dir);
  return store;
}

Matrix essential_normalized(const motion::FeatureSequence& f, const motion::NormalizationStats& norm) {
  const Matrix full = motion::normalize_rows(f.data, norm);
  return full.leftCols(motion::FeatureLayout::essential_width(f.layout.joints));
}

void write_features(const fs::path& p, const motion::FeatureSequence& f) {
  io::write_tensor(p, f.data, {f.layout.tag(), f.fps});
}

void export_features_bvh(const motion::FeatureSequence& f, const fs::path& p) {
  const auto& skel = motion::default_skeleton();
  require(f.layout.joints == skel.joint_count(), "features do not match the default skeleton",
          ErrorKind::data_validation);
  auto pose = motion::recover_pose(f, skel);
  pose.set_fps(f.fps > 0 ? f.fps : 30.0);
  motion::export_bvh(pose, skel, p);
}

std::string slug(const std::string& text) {
  std::string out;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!out.empty() && out.back() != '_') {
      out += '_';
    }
    if (out.size() >= 48) break;
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out.empty() ? "sample" : out;
}

json lr_log(double loss, int epoch) { return {{"epoch", epoch}, {"loss", loss}}; }

bool log_epoch(int epoch, int epochs) { return epoch == 0 || epoch + 1 == epochs || (epoch + 1) % 10 == 0; }

// ---------------------------------------------------------------------------
// Commands

struct Options {
  std::string output;
  std::string input;
  std::string text;
  std::string text_features;
  std::string split;
  std::string clip;
  std::string template_path;
  int frames = 0;
  int repeats = 1;
  bool rewrite = false;
  bool write_clips = false;
  bool ground_truth = false;
  bool normalized = false;
  // synth-data
  int clips_per_action = 10;
  int clip_frames = 65;
  int long_takes = 2;
  double take_seconds = 120.0;
};

void cmd_synth_data(Session& s, const Options& o) {
  const fs::path root = o.output.empty() ? fs::path(s.cfg.data.root) : fs::path(o.output);
  data::ToyCorpusOptions opt;
  opt.clips_per_action = o.clips_per_action;
  opt.frames = o.clip_frames;
  opt.long_takes = o.long_takes;
  opt.take_seconds = o.take_seconds;
  opt.ratios = {s.cfg.data.val_ratio, s.cfg.data.test_ratio};
  opt.seed = s.cfg.seed;
  data::write_toy_corpus(root, opt);
  const auto m = data::build_manifest(root, s.cfg.threads);
  s.output(root);
  s.results = {{"root", root.generic_string()},
               {"clips", m.clips.size()},
               {"captions", m.caption_count()},
               {"train", m.split(data::Split::train).size()},
               {"val", m.split(data::Split::val).size()},
               {"test", m.split(data::Split::test).size()}};
}

void cmd_validate_data(Session& s, const Options&) {
  const fs::path root = s.cfg.data.root;
  data::ValidationReport report;
  auto m = data::scan_dataset(root, report, s.cfg.threads);
  for (const char* sub : {"motions", "texts", "splits", "scenarios.tsv"}) {
    if (fs::exists(root / sub)) s.input(root / sub);
  }
  for (const auto& i : report.issues) {
    if (!i.fatal) log::warn(i.message);
  }
  io::write_json(s.paths.reports() / "validate-data.json", report.to_json());
  s.output(s.paths.reports() / "validate-data.json");
  report.raise_if_failed("dataset " + root.string());
  m.save();
  s.output(root / data::kManifestFile);
  json r = {{"clips", m.clips.size()}, {"captions", m.caption_count()}, {"warnings", report.issues.size()}};
  if (s.cfg.data.mirror) {
    const auto aug = data::augment_with_mirrors(m);
    data::validate_manifest(aug).raise_if_failed("mirrored dataset");
    r["mirrored_clips"] = aug.clips.size();
    r["mirrored_captions"] = aug.caption_count();
  }
  for (auto sp : data::kSplits) r[data::split_name(sp)] = m.split(sp).size();
  s.results = r;
}

void cmd_segment(Session& s, const Options& o) {
  const fs::path in = o.input.empty() ? fs::path(s.cfg.data.root) / "takes" : fs::path(o.input);
  std::vector<fs::path> files;
  if (fs::is_directory(in)) {
    for (const auto& e : fs::directory_iterator(in)) {
      if (e.path().extension() == ".bvh") files.push_back(e.path());
    }
  } else if (fs::exists(in)) {
    files.push_back(in);
  }
  if (files.empty()) fail(ErrorKind::missing_artifact, "no .bvh takes found at " + in.string());
  std::sort(files.begin(), files.end());
  const fs::path out_dir = o.output.empty() ? s.paths.segments() : fs::path(o.output);
  double total_s = 0;
  int count = 0, flagged = 0;
  json per_take = json::object();
  for (const auto& f : files) {
    s.input(f);
    const auto bvh = motion::import_bvh(f);
    const auto segs = segment::segment(bvh.pose, bvh.skeleton, s.cfg.segmenter);
    json arr = json::array();
    const std::string stem = f.stem().string();
    for (std::size_t i = 0; i < segs.size(); ++i) {
      const auto& g = segs[i];
      arr.push_back({{"start", g.start}, {"end", g.end}, {"flagged", g.flagged}});
      total_s += g.length() / bvh.pose.fps();
      ++count;
      flagged += g.flagged;
      if (o.write_clips) {
        char name[32];
        std::snprintf(name, sizeof name, "_s%03zu.bvh", i);
        motion::export_bvh(bvh.pose.slice(g.start, g.length()), bvh.skeleton, out_dir / stem / (stem + name));
      }
    }
    const json doc = {{"take", f.filename().string()},
                      {"frames", bvh.pose.frames()},
                      {"fps", bvh.pose.fps()},
                      {"params", segment::to_json(s.cfg.segmenter)},
                      {"segments", arr}};
    io::write_json(out_dir / (stem + ".json"), doc);
    s.output(out_dir / (stem + ".json"));
    per_take[stem] = segs.size();
  }
  s.results = {{"takes", files.size()},
               {"segments", count},
               {"flagged", flagged},
               {"mean_length_s", count ? total_s / count : 0.0},
               {"per_take", per_take}};
}

void cmd_extract_features(Session& s, const Options&) {
  const auto m = open_manifest(s);
  const auto& skel = motion::default_skeleton();
  int rows = 0;
  for (const auto& [id, rec] : m.clips) {
    if (!rec.mirrored) s.input(m.root / rec.motion_file);
    const auto f = data::load_clip_features(m, id, skel);
    write_features(feature_file(s, id), f);
    rows += f.frames();
  }
  s.output(s.paths.features());
  s.results = {{"clips", m.clips.size()}, {"feature_rows", rows}};
}

void cmd_fit_norm(Session& s, const Options&) {
  const auto m = open_manifest(s);
  std::vector<motion::FeatureSequence> corpus;
  for (const auto& id : m.split(data::Split::train)) {
    s.input(feature_file(s, id));
    corpus.push_back(read_features(s, id));
  }
  require(!corpus.empty(), "training split is empty", ErrorKind::data_validation);
  const auto stats = motion::fit_normalization(corpus);
  stats.save(s.paths.norm());
  s.output(s.paths.norm());
  s.results = {{"clips", corpus.size()}, {"width", stats.width()}, {"layout", stats.layout_tag}};
}

std::vector<Matrix> normalized_split(Session& s, const data::DatasetManifest& m, data::Split sp,
                                     const motion::NormalizationStats& norm, std::vector<std::string>* ids = nullptr) {
  std::vector<Matrix> out;
  for (const auto& id : m.split(sp)) {
    s.input(feature_file(s, id));
    out.push_back(motion::normalize_rows(read_features(s, id).data, norm));
    if (ids) ids->push_back(id);
  }
  return out;
}

void cmd_train_vq(Session& s, const Options&) {
  const auto m = open_manifest(s);
  const auto norm = read_norm(s);
  const auto corpus = normalized_split(s, m, data::Split::train, norm);
  require(!corpus.empty(), "training split is empty", ErrorKind::data_validation);
  if (corpus[0].cols() != s.cfg.vq.input_dim) {
    fail(ErrorKind::config, "vq.model.input_dim is " + std::to_string(s.cfg.vq.input_dim) + " but features have " +
                                std::to_string(corpus[0].cols()) + " columns");
  }
  vq::VqModel model(s.cfg.vq, s.cfg.seed);
  const auto t0 = std::chrono::steady_clock::now();
  const auto report = vq::train_vq(model, corpus, s.cfg.vq_train, [&](const vq::VqEpochLog& e) {
    if (!log_epoch(e.epoch, s.cfg.vq_train.epochs)) return;
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    char buf[160];
    std::snprintf(buf, sizeof buf, "vq epoch %d loss %.5f rec %.5f ppl %.1f reset %d (%.0fs)", e.epoch, e.loss,
                  e.reconstruction, e.perplexity, e.dead_codes_reset, sec);
    log::info(buf);
  });
  const double mse = vq::reconstruction_mse(model, corpus);
  json results = {{"train_mse", mse}, {"steps", report.steps}};
  const auto val = normalized_split(s, m, data::Split::val, norm);
  if (!val.empty()) results["val_mse"] = vq::reconstruction_mse(model, val);
  results["tokens_per_clip"] = s.cfg.vq.schedule(s.cfg.vq.latent_length(static_cast<int>(corpus[0].rows())))
                                   .total_tokens();
  if (!report.epochs.empty()) results["final_loss"] = report.epochs.back().loss;
  model.save(s.paths.vq(), &norm, {{"config_hash", s.cfg.hash()}, {"train", report.to_json()}, {"results", results}});
  s.output(s.paths.vq());
  s.results = results;
}

void cmd_tokenize(Session& s, const Options&) {
  const auto m = open_manifest(s);
  motion::NormalizationStats norm;
  auto model = read_vq(s, &norm);
  json clips = json::object();
  long tokens = 0;
  for (const auto& id : m.clip_ids()) {
    s.input(feature_file(s, id));
    const auto f = read_features(s, id);
    const auto q = model->tokenize(motion::normalize_rows(f.data, norm));
    tokens += q.total_tokens();
    clips[id] = {{"frames", f.frames()}, {"tokens", q.to_json()}};
  }
  io::write_json(s.paths.tokens(), {{"schema_version", 1}, {"config_hash", s.cfg.hash()}, {"clips", clips}});
  s.output(s.paths.tokens());
  s.results = {{"clips", m.clips.size()}, {"mean_tokens", m.clips.empty() ? 0.0 : double(tokens) / m.clips.size()}};
}

void cmd_reconstruct(Session& s, const Options& o) {
  const auto m = open_manifest(s);
  motion::NormalizationStats norm;
  auto model = read_vq(s, &norm);
  if (!o.clip.empty()) {
    s.input(feature_file(s, o.clip));
    auto f = read_features(s, o.clip);
    const Matrix rec = model->reconstruct(motion::normalize_rows(f.data, norm));
    const double mse = (rec - motion::normalize_rows(f.data, norm)).squaredNorm() / static_cast<double>(rec.size());
    f.data = motion::denormalize_rows(rec, norm);
    const fs::path prefix = o.output.empty() ? s.paths.reports() / ("reconstruct_" + o.clip) : fs::path(o.output);
    write_features(fs::path(prefix.string() + ".tensor"), f);
    export_features_bvh(f, fs::path(prefix.string() + ".bvh"));
    s.output(prefix.string() + ".tensor");
    s.output(prefix.string() + ".bvh");
    s.results = {{"clip", o.clip}, {"mse", mse}};
    return;
  }
  const std::string split = o.split.empty() ? "test" : o.split;
  const auto corpus = normalized_split(s, m, split_named(split), norm);
  require(!corpus.empty(), "split " + split + " is empty", ErrorKind::data_validation);
  s.results = {{"split", split}, {"clips", corpus.size()}, {"mse", vq::reconstruction_mse(*model, corpus)}};
  io::write_json(s.paths.reports() / "reconstruct.json", s.results);
  s.output(s.paths.reports() / "reconstruct.json");
}

void cmd_capacity_probe(Session& s, const Options& o) {
  const auto m = open_manifest(s);
  motion::NormalizationStats norm;
  auto model = read_vq(s, &norm);
  const std::string split = o.split.empty() ? "test" : o.split;
  const auto corpus = normalized_split(s, m, split_named(split), norm);
  require(!corpus.empty(), "split " + split + " is empty", ErrorKind::data_validation);
  const auto curve = vq::capacity_probe(*model, corpus);
  const auto schedule = model->config().schedule(model->config().latent_length(static_cast<int>(corpus[0].rows())));
  io::write_file_atomic(s.paths.reports() / "capacity_probe.csv", vq::capacity_probe_csv(curve, schedule));
  s.output(s.paths.reports() / "capacity_probe.csv");
  bool monotone = true;
  for (std::size_t v = 1; v < curve.size(); ++v) monotone = monotone && curve[v] <= curve[v - 1];
  s.results = {{"split", split}, {"curve", curve}, {"scales", schedule.lengths}, {"non_increasing", monotone}};
}

std::vector<t2m::T2mExample> t2m_examples(const data::DatasetManifest& m, data::Split sp,
                                          const std::map<std::string, vq::QuantizedMotion>& tokens,
                                          const t2m::TextStore& store) {
  std::vector<t2m::T2mExample> out;
  for (const auto& id : m.split(sp)) {
    auto it = tokens.find(id);
    if (it == tokens.end()) fail(ErrorKind::missing_artifact, "no tokens for clip '" + id + "'; rerun tokenize");
    for (const auto& c : m.captions.at(id)) {
      out.push_back({t2m::FlatTokenSequence::from_quantized(it->second), store.get(c.id).tokens, c.id});
    }
  }
  return out;
}

void cmd_train_t2m(Session& s, const Options&) {
  const auto m = open_manifest(s);
  const auto tokens = read_tokens(s);
  const auto store = ensure_text_store(s, m, s.cfg.t2m.text_dim);
  const auto data = t2m_examples(m, data::Split::train, tokens, store);
  require(!data.empty(), "training split is empty", ErrorKind::data_validation);
  t2m::T2mModel model(s.cfg.t2m, s.cfg.seed + 3);
  const auto report = t2m::train_t2m(model, data, s.cfg.t2m_train, [&](const t2m::T2mEpochLog& e) {
    if (!log_epoch(e.epoch, s.cfg.t2m_train.epochs)) return;
    char buf[96];
    std::snprintf(buf, sizeof buf, "t2m epoch %d loss %.4f", e.epoch, e.loss);
    log::info(buf);
  });
  std::optional<t2m::ToyTextEmbedder> emb;
  if (s.cfg.data.text_source == "toy") emb = load_embedder(s.paths.text_embedder());
  const double fps = m.clips.begin()->second.fps;
  json stats = {{"config_hash", s.cfg.hash()}, {"train", report.to_json()}, {"fps", fps}};
  model.save(s.paths.t2m(), emb ? &*emb : nullptr, stats);
  s.output(s.paths.t2m());
  s.results = {{"examples", data.size()},
               {"steps", report.steps},
               {"final_loss", report.epochs.empty() ? 0.0 : report.epochs.back().loss},
               {"latent_min", report.latent_range.min},
               {"latent_max", report.latent_range.max}};
}

struct Generator {
  std::unique_ptr<t2m::T2mModel> t2m;
  std::unique_ptr<vq::VqModel> vq;
  motion::NormalizationStats norm;
  t2m::ToyTextEmbedder embedder;
  bool has_embedder = false;
  t2m::LatentRange range;
  double fps = 30.0;
};

Generator open_generator(Session& s) {
  Generator g;
  g.vq = read_vq(s, &g.norm);
  require_artifact(s.paths.t2m(), "train-t2m");
  s.input(s.paths.t2m());
  json stats;
  g.t2m = t2m::T2mModel::load(s.paths.t2m(), &g.embedder, &stats);
  g.has_embedder = !g.embedder.vocabulary().empty();
  const auto& tr = stats.at("train");
  g.range = {tr.at("latent_min").get<int>(), tr.at("latent_max").get<int>()};
  g.fps = stats.value("fps", 30.0);
  return g;
}

json write_generation(const t2m::GenerateResult& r, const fs::path& prefix, Session& s, bool bvh) {
  write_features(fs::path(prefix.string() + ".tensor"), r.features);
  s.output(prefix.string() + ".tensor");
  if (bvh) {
    export_features_bvh(r.features, fs::path(prefix.string() + ".bvh"));
    s.output(prefix.string() + ".bvh");
  }
  return {{"frames", r.frames}, {"tokens", r.sample.quantized.to_json()}, {"trace", r.sample.trace.to_json()}};
}

void cmd_generate(Session& s, const Options& o) {
  auto g = open_generator(s);
  const auto opt = s.cfg.sampling.options();
  if (!o.split.empty()) {
    const auto m = open_manifest(s);
    const auto store = ensure_text_store(s, m, g.t2m->config().text_dim);
    const fs::path dir = o.output.empty() ? s.paths.generated() / o.split : fs::path(o.output);
    json index = json::object();
    int done = 0;
    for (const auto& id : m.split(split_named(o.split))) {
      const int frames = read_features(s, id).frames();
      for (const auto& c : m.captions.at(id)) {
        const Matrix text = store.get(c.id).tokens;
        json files = json::array();
        for (int r = 0; r < o.repeats; ++r) {
          Rng rng(s.cfg.seed * 1000003ULL + static_cast<std::uint64_t>(done) * 1009ULL + static_cast<std::uint64_t>(r));
          const auto res = t2m::generate(*g.t2m, *g.vq, g.norm, text, frames, opt, rng, g.range, g.fps);
          const std::string name = c.id + "_r" + std::to_string(r);
          write_features(dir / (name + ".tensor"), res.features);
          files.push_back(name + ".tensor");
        }
        index[c.id] = {{"clip", id}, {"text", c.text}, {"files", files}};
        ++done;
      }
    }
    io::write_json(dir / "index.json", {{"split", o.split}, {"repeats", o.repeats}, {"captions", index}});
    s.output(dir);
    s.results = {{"split", o.split}, {"captions", done}, {"repeats", o.repeats}};
    return;
  }

  require(!o.text.empty(), "generate needs --text or --split", ErrorKind::config);
  std::string prompt = o.text;
  double seconds = s.cfg.sampling.default_seconds;
  json rewrite = nullptr;
  if (o.rewrite) {
    const fs::path tpath = s.cfg.llm.template_path.empty()
                               ? fs::path(MSM_TEMPLATE_DIR) / "inference_rewriter.txt"
                               : fs::path(s.cfg.llm.template_path);
    const auto r = data::rewrite_prompt(data::PromptTemplate::load(tpath), o.text, s.cfg.llm);
    prompt = r.text;
    seconds = r.duration_s;
    rewrite = {{"text", r.text}, {"duration_s", r.duration_s}, {"offline", r.offline}};
  }
  const int frames = o.frames > 0 ? o.frames : static_cast<int>(std::lround(seconds * g.fps));
  Matrix text;
  if (!o.text_features.empty()) {
    s.input(o.text_features);
    text = io::read_tensor(o.text_features);
  } else {
    if (!g.has_embedder) {
      fail(ErrorKind::config, "this model uses precomputed text features; pass --text-features");
    }
    text = g.embedder.embed(prompt).tokens;
  }
  Rng rng(s.cfg.seed);
  const auto res = t2m::generate(*g.t2m, *g.vq, g.norm, text, frames, opt, rng, g.range, g.fps);
  const fs::path prefix = o.output.empty() ? s.paths.generated() / slug(prompt) : fs::path(o.output);
  json doc = write_generation(res, prefix, s, true);
  doc["prompt"] = prompt;
  doc["seed"] = s.cfg.seed;
  if (!rewrite.is_null()) doc["rewrite"] = rewrite;
  io::write_json(fs::path(prefix.string() + ".json"), doc);
  s.output(prefix.string() + ".json");
  s.results = {{"prompt", prompt}, {"frames", res.frames}, {"tokens", res.sample.quantized.total_tokens()},
               {"output", prefix.generic_string()}};
}

void cmd_train_eval(Session& s, const Options&) {
  const auto m = open_manifest(s);
  const auto norm = read_norm(s);
  const auto store = ensure_text_store(s, m, s.cfg.eval.model.text_dim);
  std::map<std::string, int> groups;
  std::vector<eval::TmrExample> data;
  for (const auto& id : m.split(data::Split::train)) {
    s.input(feature_file(s, id));
    const Matrix motion = essential_normalized(read_features(s, id), norm);
    if (motion.cols() != s.cfg.eval.model.motion_dim) {
      fail(ErrorKind::config, "eval.model.motion_dim must be " + std::to_string(motion.cols()));
    }
    for (const auto& c : m.captions.at(id)) {
      const int group = groups.emplace(c.text, static_cast<int>(groups.size())).first->second;
      data.push_back({motion, store.get(c.id).tokens, group});
    }
  }
  require(data.size() >= 2, "evaluator training needs at least two pairs", ErrorKind::data_validation);
  eval::TmrModel model(s.cfg.eval.model, s.cfg.seed + 5);
  const auto report = eval::train_tmr(model, data, s.cfg.eval.train, [&](const eval::TmrEpochLog& e) {
    if (!log_epoch(e.epoch, s.cfg.eval.train.epochs)) return;
    char buf[128];
    std::snprintf(buf, sizeof buf, "tmr epoch %d loss %.4f rec %.4f nce %.4f", e.epoch, e.loss, e.reconstruction,
                  e.nce);
    log::info(buf);
  });
  model.save(s.paths.tmr(), &norm, {{"config_hash", s.cfg.hash()}, {"train", report.to_json()}});
  s.output(s.paths.tmr());
  s.results = {{"pairs", data.size()},
               {"steps", report.steps},
               {"final_loss", report.epochs.empty() ? 0.0 : report.epochs.back().loss}};
}

Matrix stack_means(const std::vector<eval::EvalEmbedding>& e) {
  Matrix out(static_cast<Eigen::Index>(e.size()), e.empty() ? 0 : e[0].mean.size());
  for (std::size_t i = 0; i < e.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = e[i].mean;
  return out;
}

void cmd_evaluate(Session& s, const Options& o) {
  const auto m = open_manifest(s);
  require_artifact(s.paths.tmr(), "train-eval");
  s.input(s.paths.tmr());
  motion::NormalizationStats norm;
  auto tmr = eval::TmrModel::load(s.paths.tmr(), &norm);
  const auto store = ensure_text_store(s, m, tmr->config().text_dim);
  const std::string split = o.split.empty() ? s.cfg.eval.split : o.split;
  const auto sp = split_named(split);

  std::vector<std::string> clip_ids = m.split(sp);
  require(!clip_ids.empty(), "split " + split + " is empty", ErrorKind::data_validation);
  std::map<std::string, int> clip_row;
  std::vector<Matrix> real;
  for (const auto& id : clip_ids) {
    s.input(feature_file(s, id));
    clip_row[id] = static_cast<int>(real.size());
    real.push_back(essential_normalized(read_features(s, id), norm));
  }
  const Matrix real_emb = stack_means(tmr->embed_motions(real));

  // One query per distinct caption text, so a retrieval pool never holds two
  // identical candidates.
  std::vector<data::Caption> captions;
  std::set<std::string> seen_text;
  for (const auto& c : m.captions_of_split(sp)) {
    if (seen_text.insert(c.text).second) captions.push_back(c);
  }
  const auto n = static_cast<Eigen::Index>(captions.size());
  Matrix text_emb(n, real_emb.cols());
  for (Eigen::Index i = 0; i < n; ++i) text_emb.row(i) = tmr->embed_text(store.get(captions[i].id).tokens).mean;

  // gen[r] holds one motion embedding per caption for generation repeat r.
  std::vector<Matrix> gen;
  if (o.ground_truth) {
    Matrix g(n, real_emb.cols());
    for (Eigen::Index i = 0; i < n; ++i) g.row(i) = real_emb.row(clip_row.at(captions[i].id.substr(0, captions[i].id.rfind('#'))));
    gen.push_back(g);
  } else {
    const fs::path dir = o.input.empty() ? s.paths.generated() / split : fs::path(o.input);
    require_artifact(dir / "index.json", "generate --split " + split);
    s.input(dir);
    const json index = io::read_json(dir / "index.json").at("captions");
    int per_caption = -1;
    std::vector<std::vector<Matrix>> motions;  // [repeat][caption]
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!index.contains(captions[i].id)) {
        fail(ErrorKind::missing_artifact, "no generations for caption '" + captions[i].id + "'");
      }
      const auto files = index.at(captions[i].id).at("files").get<std::vector<std::string>>();
      if (per_caption < 0) {
        per_caption = static_cast<int>(files.size());
        motions.resize(static_cast<std::size_t>(per_caption));
      }
      require(static_cast<int>(files.size()) == per_caption, "generation counts differ between captions",
              ErrorKind::data_validation);
      for (int r = 0; r < per_caption; ++r) {
        io::TensorMeta meta;
        motion::FeatureSequence f;
        f.data = io::read_tensor(dir / files[static_cast<std::size_t>(r)], &meta);
        f.layout = motion::FeatureLayout::from_tag(meta.layout);
        motions[static_cast<std::size_t>(r)].push_back(essential_normalized(f, norm));
      }
    }
    for (const auto& set : motions) gen.push_back(stack_means(tmr->embed_motions(set)));
  }

  const auto& ec = s.cfg.eval;
  if (ec.pool_size > n) {
    fail(ErrorKind::config, "eval.pool_size (" + std::to_string(ec.pool_size) + ") exceeds the " +
                                std::to_string(n) + " captions of split " + split);
  }
  std::map<std::string, std::vector<double>> samples;
  const int repeats = ec.repeats;
  for (int r = 0; r < repeats; ++r) {
    Rng rng(s.cfg.seed * 7919ULL + static_cast<std::uint64_t>(r));
    const Matrix& g = gen[static_cast<std::size_t>(r) % gen.size()];
    samples["fid"].push_back(eval::fid(real_emb, g));
    const auto rp = eval::r_precision_once(g, text_emb, ec.pool_size, ec.top_k, rng);
    for (int k = 0; k < ec.top_k; ++k) samples["r_precision_top" + std::to_string(k + 1)].push_back(rp[k]);
    samples["mm_dist"].push_back(eval::mm_dist(g, text_emb));
    samples["clip_score"].push_back(eval::clip_score(g, text_emb));
    samples["diversity"].push_back(eval::diversity(g, ec.diversity_pairs, rng));
    if (gen.size() >= 2) {
      std::vector<Matrix> per_caption(static_cast<std::size_t>(n), Matrix(static_cast<Eigen::Index>(gen.size()), g.cols()));
      for (Eigen::Index i = 0; i < n; ++i) {
        for (std::size_t q = 0; q < gen.size(); ++q) per_caption[static_cast<std::size_t>(i)].row(static_cast<Eigen::Index>(q)) = gen[q].row(i);
      }
      const int pairs = std::min(ec.mmodality_pairs, static_cast<int>(gen.size()) / 2);
      samples["mmodality"].push_back(eval::mmodality(per_caption, pairs, rng));
    }
  }
  json metrics = json::array();
  for (const auto& [name, xs] : samples) {
    const auto [mean, ci] = eval::mean_ci95(xs);
    metrics.push_back(eval::MetricValue{name, mean, ci, s.cfg.seed, static_cast<int>(xs.size())}.to_json());
  }
  // Rank of the true text among every query text, averaged over generations.
  json queries = json::array();
  for (Eigen::Index i = 0; i < n; ++i) {
    double rank = 0;
    Vector mean_d = Vector::Zero(n);
    for (const auto& g : gen) {
      const Vector d = (text_emb.rowwise() - g.row(i)).rowwise().norm();
      mean_d += d;
      for (Eigen::Index j = 0; j < n; ++j) rank += j != i && d(j) < d(i);
    }
    mean_d(i) = std::numeric_limits<double>::infinity();
    Eigen::Index rival = 0;
    mean_d.minCoeff(&rival);
    queries.push_back({{"caption", captions[static_cast<std::size_t>(i)].id},
                       {"text", captions[static_cast<std::size_t>(i)].text},
                       {"mean_rank", rank / static_cast<double>(gen.size())},
                       {"nearest_other", captions[static_cast<std::size_t>(rival)].text}});
  }
  json report = {{"schema_version", 1},
                 {"mode", o.ground_truth ? "ground_truth" : "generated"},
                 {"split", split},
                 {"captions", n},
                 {"generations_per_caption", gen.size()},
                 {"pool_size", ec.pool_size},
                 {"config_hash", s.cfg.hash()},
                 {"metrics", metrics},
                 {"queries", queries}};
  eval::validate_report(report);
  const fs::path out = o.output.empty() ? s.paths.reports() / "evaluate.json" : fs::path(o.output);
  io::write_json(out, report);
  s.output(out);
  json flat = json::object();
  for (const auto& mv : metrics) flat[mv["metric"].get<std::string>()] = {{"value", mv["value"]}, {"ci95", mv["ci95"]}};
  s.results = {{"report", out.generic_string()}, {"metrics", flat}};
}

void cmd_export_bvh(Session& s, const Options& o) {
  require(!o.input.empty(), "export-bvh needs --features", ErrorKind::config);
  s.input(o.input);
  io::TensorMeta meta;
  motion::FeatureSequence f;
  f.data = io::read_tensor(o.input, &meta);
  f.layout = meta.layout == "raw" ? motion::FeatureLayout::for_width(static_cast<int>(f.data.cols()))
                                  : motion::FeatureLayout::from_tag(meta.layout);
  f.fps = meta.fps > 0 ? meta.fps : 30.0;
  if (o.normalized) f.data = motion::denormalize_rows(f.data, read_norm(s));
  fs::path out = o.output.empty() ? fs::path(o.input).replace_extension(".bvh") : fs::path(o.output);
  export_features_bvh(f, out);
  s.output(out);
  s.results = {{"frames", f.frames()}, {"output", out.generic_string()}};
}

void cmd_rewrite_prompt(Session& s, const Options& o) {
  require(!o.text.empty(), "rewrite-prompt needs --text", ErrorKind::config);
  fs::path tpath = o.template_path.empty() ? fs::path(s.cfg.llm.template_path) : fs::path(o.template_path);
  if (tpath.empty()) tpath = fs::path(MSM_TEMPLATE_DIR) / "inference_rewriter.txt";
  s.input(tpath);
  const auto r = data::rewrite_prompt(data::PromptTemplate::load(tpath), o.text, s.cfg.llm);
  s.results = {{"input", o.text}, {"text", r.text}, {"duration_s", r.duration_s}, {"offline", r.offline}};
}

using Handler = std::function<void(Session&, const Options&)>;

}  // namespace

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

int run(int argc, const char* const* argv) {
  CLI::App app{"Multi-scale motion tokenizer, text-to-motion generator and evaluator"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_help_all_flag("--help-all", "Show help for every command");

  std::string config_path, run_dir = "runs/default";
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  bool json_logs = false;
  app.add_option("-c,--config", config_path, "JSON run configuration");
  app.add_option("-r,--run", run_dir, "Run directory for artifacts")->capture_default_str();
  app.add_option("--set", overrides, "Override a config value: dotted.path=value (repeatable)");
  app.add_option("--seed", seed, "Seed for every random choice (overrides the config)");
  app.add_option("--threads", threads, "Worker cap for parallel steps (0 = all cores)");
  app.add_flag("--json", json_logs, "Emit logs as NDJSON records");

  Options o;
  std::map<CLI::App*, std::pair<std::string, Handler>> handlers;
  auto add = [&](const std::string& name, const std::string& help, Handler h) {
    CLI::App* sub = app.add_subcommand(name, help);
    handlers[sub] = {name, std::move(h)};
    return sub;
  };

  auto* synth = add("synth-data", "Write the procedural toy dataset", cmd_synth_data);
  synth->add_option("--out", o.output, "Dataset root (default: data.root)");
  synth->add_option("--clips-per-action", o.clips_per_action)->capture_default_str();
  synth->add_option("--frames", o.clip_frames, "Pose frames per clip")->capture_default_str();
  synth->add_option("--long-takes", o.long_takes)->capture_default_str();
  synth->add_option("--take-seconds", o.take_seconds)->capture_default_str();

  add("validate-data", "Scan the dataset tree, report problems and write the manifest", cmd_validate_data);

  auto* seg = add("segment", "Cut long takes at velocity troughs", cmd_segment);
  seg->add_option("--input", o.input, "A .bvh take or a directory of takes (default: data.root/takes)");
  seg->add_option("--out", o.output, "Output directory");
  seg->add_flag("--write-clips", o.write_clips, "Also write every segment as a BVH clip");

  add("extract-features", "Convert every clip to feature rows", cmd_extract_features);
  add("fit-norm", "Fit per-column normalization on the training split", cmd_fit_norm);
  add("train-vq", "Train the motion tokenizer", cmd_train_vq);
  add("tokenize", "Tokenize every clip with the trained tokenizer", cmd_tokenize);

  auto* rec = add("reconstruct", "Round-trip clips through the tokenizer", cmd_reconstruct);
  rec->add_option("--split", o.split, "Split to score (default: test)");
  rec->add_option("--clip", o.clip, "Reconstruct one clip and write it out");
  rec->add_option("--out", o.output, "Output prefix for --clip");

  auto* cap = add("capacity-probe", "Reconstruction error per number of scales", cmd_capacity_probe);
  cap->add_option("--split", o.split, "Split to probe (default: test)");

  add("train-t2m", "Train the masked text-to-motion transformer", cmd_train_t2m);

  auto* gen = add("generate", "Sample motion for a text prompt", cmd_generate);
  gen->add_option("--text", o.text, "Prompt");
  gen->add_option("--text-features", o.text_features, "Precomputed word features (.tensor) for the prompt");
  gen->add_option("--frames", o.frames, "Target length in frames");
  gen->add_flag("--rewrite", o.rewrite, "Rewrite the prompt through the configured LLM endpoint first");
  gen->add_option("--split", o.split, "Generate for every caption of a split instead");
  gen->add_option("--repeats", o.repeats, "Generations per caption with --split")->capture_default_str();
  gen->add_option("--out", o.output, "Output prefix (single prompt) or directory (--split)");

  add("train-eval", "Train the retrieval evaluator", cmd_train_eval);

  auto* ev = add("evaluate", "Score generations against a split", cmd_evaluate);
  ev->add_option("--generated", o.input, "Directory written by generate --split");
  ev->add_option("--split", o.split, "Split to score (default: eval.split)");
  ev->add_flag("--ground-truth", o.ground_truth, "Score the real clips against themselves");
  ev->add_option("--out", o.output, "Report path");

  auto* ex = add("export-bvh", "Convert a feature tensor to BVH", cmd_export_bvh);
  ex->add_option("--features", o.input, "Feature tensor")->required();
  ex->add_option("--out", o.output, "BVH path");
  ex->add_flag("--normalized", o.normalized, "Input is normalized; undo it with the run's statistics");

  auto* rw = add("rewrite-prompt", "Rewrite a prompt and suggest a duration", cmd_rewrite_prompt);
  rw->add_option("--text", o.text, "Prompt")->required();
  rw->add_option("--template", o.template_path, "Prompt template file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  log::set_json(json_logs);
  std::string command = "?";
  try {
    CLI::App* chosen = app.get_subcommands().at(0);
    const auto& [name, handler] = handlers.at(chosen);
    command = name;
    if (seed) overrides.push_back("seed=" + std::to_string(*seed));
    if (threads) overrides.push_back("threads=" + std::to_string(*threads));
    Session s;
    s.command = name;
    s.cfg = load_run_config(config_path.empty() ? std::nullopt : std::optional<fs::path>(config_path), overrides);
    s.paths.run = run_dir;
    const auto t0 = std::chrono::steady_clock::now();
    handler(s, o);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    json summary = {{"schema_version", kSummarySchema},
                    {"command", name},
                    {"config_hash", s.cfg.hash()},
                    {"input_hash", inputs_hash(s.inputs)},
                    {"seed", s.cfg.seed},
                    {"threads", s.cfg.threads},
                    {"wall_time_s", wall},
                    {"outputs", s.outputs},
                    {"results", s.results}};
    io::write_json(s.paths.summaries() / (name + ".json"), summary);
    std::cout << (json_logs ? summary.dump() : summary.dump(2)) << std::endl;
    return kExitOk;
  } catch (const Error& e) {
    if (json_logs) {
      std::cerr << json{{"level", "error"}, {"command", command}, {"kind", exit_code(e.kind())}, {"msg", e.what()}}.dump()
                << std::endl;
    } else {
      log::error(command + ": " + e.what());
    }
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    log::error(command + ": " + e.what());
    return kExitOther;
  }
}

}  // namespace msm::cli
