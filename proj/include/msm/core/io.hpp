#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "msm/core/types.hpp"

namespace msm::io {

namespace fs = std::filesystem;

/// Writes via a sibling temporary file and rename, so readers never observe
/// half-written content.
void write_file_atomic(const fs::path& path, std::string_view bytes);
std::string read_file(const fs::path& path);

void write_json(const fs::path& path, const nlohmann::json& j);
nlohmann::json read_json(const fs::path& path);

/// Metadata carried by the tensor sidecar.
struct TensorMeta {
  std::string layout = "raw";
  double fps = 0.0;  // 0 when not a time series
};

/// Tensor container: `path` holds little-endian float32 row-major data and
/// `path + ".json"` holds {shape, dtype: "f32", layout, fps}.
void write_tensor(const fs::path& path, const Matrix& m, const TensorMeta& meta = {});
Matrix read_tensor(const fs::path& path, TensorMeta* meta = nullptr);

fs::path sidecar_path(const fs::path& tensor_path);

std::string encode_f32(const Matrix& m);
Matrix decode_f32(std::string_view bytes, Eigen::Index rows, Eigen::Index cols);

/// Hex SHA-1 of `bytes` framed the way git hashes blobs.
std::string git_blob_hash(std::string_view bytes);
std::string sha1_hex(std::string_view bytes);

}  // namespace msm::io
