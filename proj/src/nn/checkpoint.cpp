#include "msm/nn/checkpoint.hpp"

#include <cctype>

#include "msm/core/error.hpp"
#include "msm/core/io.hpp"

namespace msm::nn {

namespace fs = std::filesystem;

const Matrix& Checkpoint::get(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) fail(ErrorKind::missing_artifact, "checkpoint has no tensor '" + name + "'");
  return it->second;
}

void Checkpoint::put_params(const std::vector<Parameter*>& params) {
  for (const Parameter* p : params) put(p->name, p->value);
}

void Checkpoint::load_params(const std::vector<Parameter*>& params) const {
  for (Parameter* p : params) {
    const Matrix& m = get(p->name);
    if (m.rows() != p->value.rows() || m.cols() != p->value.cols()) {
      fail(ErrorKind::config, "checkpoint tensor '" + p->name + "' has an incompatible shape");
    }
    p->value = m;
  }
}

namespace {

std::string blob_name(const std::string& name) {
  std::string out;
  for (char c : name) out.push_back((std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_') ? c : '_');
  return out + ".f32";
}

}  // namespace

void save_checkpoint(const fs::path& dir, const Checkpoint& ckpt) {
  fs::path tmp = dir;
  tmp += ".tmp";
  fs::remove_all(tmp);
  fs::create_directories(tmp / "tensors");
  nlohmann::json manifest{{"schema_version", kCheckpointSchemaVersion},
                          {"kind", ckpt.kind},
                          {"config", ckpt.config},
                          {"stats", ckpt.stats},
                          {"tensors", nlohmann::json::object()}};
  for (const auto& [name, m] : ckpt.tensors) {
    const std::string file = "tensors/" + blob_name(name);
    io::write_file_atomic(tmp / file, io::encode_f32(m));
    manifest["tensors"][name] = {{"file", file}, {"shape", {m.rows(), m.cols()}}};
  }
  io::write_json(tmp / "manifest.json", manifest);
  fs::remove_all(dir);
  fs::rename(tmp, dir);
}

Checkpoint load_checkpoint(const fs::path& dir, const std::string& expected_kind) {
  if (!fs::exists(dir / "manifest.json")) fail(ErrorKind::missing_artifact, "no checkpoint at " + dir.string());
  const nlohmann::json manifest = io::read_json(dir / "manifest.json");
  if (manifest.value("schema_version", 0) != kCheckpointSchemaVersion) {
    fail(ErrorKind::config, dir.string() + ": unsupported checkpoint schema version");
  }
  Checkpoint ckpt;
  ckpt.kind = manifest.value("kind", "");
  if (!expected_kind.empty() && ckpt.kind != expected_kind) {
    fail(ErrorKind::config, dir.string() + ": expected a '" + expected_kind + "' checkpoint, found '" + ckpt.kind + "'");
  }
  ckpt.config = manifest.value("config", nlohmann::json::object());
  ckpt.stats = manifest.value("stats", nlohmann::json::object());
  for (const auto& [name, entry] : manifest["tensors"].items()) {
    const auto rows = entry["shape"][0].get<Eigen::Index>();
    const auto cols = entry["shape"][1].get<Eigen::Index>();
    ckpt.tensors[name] = io::decode_f32(io::read_file(dir / entry["file"].get<std::string>()), rows, cols);
  }
  return ckpt;
}

}  // namespace msm::nn
