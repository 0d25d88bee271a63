#include "msm/core/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>

#include "msm/core/error.hpp"

namespace msm::io {

static_assert(std::endian::native == std::endian::little, "tensor files assume a little-endian host");

void write_file_atomic(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot open for writing: " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::io, "write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::missing_artifact, "cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

nlohmann::json read_json(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::parse, path.string() + ": " + e.what());
  }
}

fs::path sidecar_path(const fs::path& tensor_path) {
  fs::path p = tensor_path;
  p += ".json";
  return p;
}

std::string encode_f32(const Matrix& m) {
  std::string bytes(static_cast<std::size_t>(m.size()) * sizeof(float), '\0');
  char* dst = bytes.data();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const float v = static_cast<float>(m(r, c));
      std::memcpy(dst, &v, sizeof(float));
      dst += sizeof(float);
    }
  }
  return bytes;
}

Matrix decode_f32(std::string_view bytes, Eigen::Index rows, Eigen::Index cols) {
  const std::size_t expected = static_cast<std::size_t>(rows * cols) * sizeof(float);
  if (bytes.size() != expected) {
    fail(ErrorKind::parse, "tensor blob has " + std::to_string(bytes.size()) + " bytes, expected " +
                               std::to_string(expected));
  }
  Matrix m(rows, cols);
  const char* src = bytes.data();
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      float v;
      std::memcpy(&v, src, sizeof(float));
      m(r, c) = v;
      src += sizeof(float);
    }
  }
  return m;
}

void write_tensor(const fs::path& path, const Matrix& m, const TensorMeta& meta) {
  write_file_atomic(path, encode_f32(m));
  nlohmann::json side{{"shape", {m.rows(), m.cols()}}, {"dtype", "f32"}, {"layout", meta.layout}, {"fps", meta.fps}};
  write_json(sidecar_path(path), side);
}

Matrix read_tensor(const fs::path& path, TensorMeta* meta) {
  const nlohmann::json side = read_json(sidecar_path(path));
  if (!side.contains("shape") || !side["shape"].is_array() || side["shape"].size() != 2) {
    fail(ErrorKind::parse, sidecar_path(path).string() + ": shape must be [rows, cols]");
  }
  if (side.value("dtype", "") != "f32") fail(ErrorKind::parse, sidecar_path(path).string() + ": dtype must be f32");
  const auto rows = side["shape"][0].get<Eigen::Index>();
  const auto cols = side["shape"][1].get<Eigen::Index>();
  if (meta) {
    meta->layout = side.value("layout", "raw");
    meta->fps = side.value("fps", 0.0);
  }
  return decode_f32(read_file(path), rows, cols);
}

std::string sha1_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha1(), nullptr) != 1) {
    fail(ErrorKind::io, "sha1 digest failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

std::string git_blob_hash(std::string_view bytes) {
  std::string framed = "blob " + std::to_string(bytes.size());
  framed.push_back('\0');
  framed.append(bytes);
  return sha1_hex(framed);
}

}  // namespace msm::io
