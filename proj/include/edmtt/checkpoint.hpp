// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "edmtt/config.hpp"
#include "edmtt/error.hpp"
#include "edmtt/model.hpp"
#include "edmtt/parameters.hpp"

namespace edmtt {

// Layout:
//   "EDMTTCKP" | u32 format_version | u64 header_bytes | header JSON | payload
// The header holds the config, free-form metadata, the tensor manifest
// (name, rows, cols, dtype, byte offset) and an FNV-1a 64 checksum of the
// payload. The payload is the tensors back to back, little-endian,
// column-major.
inline constexpr char kCheckpointMagic[8] = {'E', 'D', 'M', 'T', 'T', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct ArrayRecord {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  std::string dtype;  // "f32" or "f64"
  std::vector<std::byte> bytes;
};

struct CheckpointData {
  nlohmann::json config;
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<ArrayRecord> arrays;

  const ArrayRecord& array(const std::string& name) const {
    for (const auto& a : arrays)
      if (a.name == name) return a;
    fail(ErrorKind::CorruptCheckpoint, "checkpoint has no tensor '" + name + "'");
  }
  bool has_array(const std::string& name) const {
    for (const auto& a : arrays)
      if (a.name == name) return true;
    return false;
  }
};

namespace detail {

inline std::uint64_t fnv1a64(const std::byte* data, std::size_t size) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    hash ^= static_cast<std::uint64_t>(data[i]);
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

template <typename T>
void append_le(std::vector<std::byte>& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::byte raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
  out.insert(out.end(), raw, raw + sizeof(T));
}

template <typename T>
T read_le(const std::byte* src) {
  std::byte raw[sizeof(T)];
  std::memcpy(raw, src, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
  T value;
  std::memcpy(&value, raw, sizeof(T));
  return value;
}

template <typename Scalar>
constexpr const char* dtype_name() {
  static_assert(std::is_same_v<Scalar, float> || std::is_same_v<Scalar, double>);
  return std::is_same_v<Scalar, float> ? "f32" : "f64";
}

inline std::size_t dtype_size(const std::string& dtype) {
  if (dtype == "f32") return 4;
  if (dtype == "f64") return 8;
  fail(ErrorKind::CorruptCheckpoint, "unknown dtype '" + dtype + "'");
}

}  // namespace detail

template <typename Scalar, typename Derived>
ArrayRecord make_array(std::string name, const Eigen::MatrixBase<Derived>& values) {
  ArrayRecord rec{std::move(name), values.rows(), values.cols(), detail::dtype_name<Scalar>(), {}};
  rec.bytes.reserve(static_cast<std::size_t>(values.size()) * sizeof(Scalar));
  for (Eigen::Index j = 0; j < values.cols(); ++j)
    for (Eigen::Index i = 0; i < values.rows(); ++i)
      detail::append_le<Scalar>(rec.bytes, static_cast<Scalar>(values(i, j)));
  return rec;
}

template <typename Scalar>
MatrixX<Scalar> array_values(const ArrayRecord& rec) {
  const std::size_t width = detail::dtype_size(rec.dtype);
  require(rec.bytes.size() == static_cast<std::size_t>(rec.rows * rec.cols) * width,
          ErrorKind::CorruptCheckpoint, "tensor '" + rec.name + "' has the wrong byte count");
  MatrixX<Scalar> out(rec.rows, rec.cols);
  const std::byte* src = rec.bytes.data();
  for (Eigen::Index j = 0; j < rec.cols; ++j) {
    for (Eigen::Index i = 0; i < rec.rows; ++i, src += width) {
      out(i, j) = rec.dtype == "f32" ? static_cast<Scalar>(detail::read_le<float>(src))
                                     : static_cast<Scalar>(detail::read_le<double>(src));
    }
  }
  return out;
}

inline void write_checkpoint(const std::filesystem::path& path, const CheckpointData& data,
                             std::uint32_t format_version = kCheckpointVersion) {
  std::vector<std::byte> payload;
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& a : data.arrays) {
    tensors.push_back({{"name", a.name},
                       {"rows", a.rows},
                       {"cols", a.cols},
                       {"dtype", a.dtype},
                       {"offset", payload.size()}});
    payload.insert(payload.end(), a.bytes.begin(), a.bytes.end());
  }
  std::ostringstream checksum;
  checksum << std::hex << detail::fnv1a64(payload.data(), payload.size());
  const nlohmann::json header = {{"format_version", format_version},
                                 {"config", data.config},
                                 {"metadata", data.metadata},
                                 {"tensors", tensors},
                                 {"payload_bytes", payload.size()},
                                 {"payload_fnv1a64", checksum.str()}};
  const std::string header_text = header.dump();

  std::vector<std::byte> out(reinterpret_cast<const std::byte*>(kCheckpointMagic),
                             reinterpret_cast<const std::byte*>(kCheckpointMagic) + 8);
  detail::append_le<std::uint32_t>(out, format_version);
  detail::append_le<std::uint64_t>(out, header_text.size());
  out.insert(out.end(), reinterpret_cast<const std::byte*>(header_text.data()),
             reinterpret_cast<const std::byte*>(header_text.data()) + header_text.size());
  out.insert(out.end(), payload.begin(), payload.end());

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream file(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(file), ErrorKind::Io, "cannot write checkpoint " + tmp.string());
    file.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    require(static_cast<bool>(file), ErrorKind::Io, "failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline CheckpointData read_checkpoint(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  require(static_cast<bool>(file), ErrorKind::Io, "cannot open checkpoint " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
  const auto* bytes = reinterpret_cast<const std::byte*>(raw.data());
  const std::string where = path.string() + ": ";

  require(raw.size() >= 20 && std::memcmp(raw.data(), kCheckpointMagic, 8) == 0,
          ErrorKind::CorruptCheckpoint, where + "not a checkpoint (bad magic or truncated)");
  const auto version = detail::read_le<std::uint32_t>(bytes + 8);
  require(version == kCheckpointVersion, ErrorKind::UnsupportedVersion,
          where + "format_version " + std::to_string(version) + " is not supported (expected " +
              std::to_string(kCheckpointVersion) + ")");
  const auto header_bytes = detail::read_le<std::uint64_t>(bytes + 12);
  require(header_bytes <= raw.size() - 20, ErrorKind::CorruptCheckpoint, where + "truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(raw.begin() + 20, raw.begin() + 20 + static_cast<std::ptrdiff_t>(header_bytes));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::CorruptCheckpoint, where + "unreadable header: " + e.what());
  }

  CheckpointData data;
  try {
    require(header.at("format_version").get<std::uint32_t>() == version,
            ErrorKind::CorruptCheckpoint, where + "header version disagrees with preamble");
    const std::size_t payload_offset = 20 + header_bytes;
    const auto payload_size = header.at("payload_bytes").get<std::size_t>();
    require(raw.size() == payload_offset + payload_size, ErrorKind::CorruptCheckpoint,
            where + "payload is " + std::to_string(raw.size() - payload_offset) +
                " bytes, header declares " + std::to_string(payload_size));
    std::ostringstream checksum;
    checksum << std::hex << detail::fnv1a64(bytes + payload_offset, payload_size);
    require(checksum.str() == header.at("payload_fnv1a64").get<std::string>(),
            ErrorKind::CorruptCheckpoint, where + "payload checksum mismatch");

    data.config = header.at("config");
    data.metadata = header.at("metadata");
    for (const auto& t : header.at("tensors")) {
      ArrayRecord rec;
      rec.name = t.at("name").get<std::string>();
      rec.rows = t.at("rows").get<Eigen::Index>();
      rec.cols = t.at("cols").get<Eigen::Index>();
      rec.dtype = t.at("dtype").get<std::string>();
      const auto offset = t.at("offset").get<std::size_t>();
      const std::size_t size = static_cast<std::size_t>(rec.rows * rec.cols) * detail::dtype_size(rec.dtype);
      require(offset + size <= payload_size, ErrorKind::CorruptCheckpoint,
              where + "tensor '" + rec.name + "' extends past the payload");
      rec.bytes.assign(bytes + payload_offset + offset, bytes + payload_offset + offset + size);
      data.arrays.push_back(std::move(rec));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::CorruptCheckpoint, where + "malformed header: " + e.what());
  }
  return data;
}

/// Trainable tensors plus the normaliser's running statistics.
template <typename Scalar>
void append_model_arrays(const EdmttModel<Scalar>& model, CheckpointData& data) {
  to_json(data.config, model.config());
  for (const auto& info : model.manifest().entries())
    data.arrays.push_back(make_array<Scalar>(info.name, tensor_view(model.parameters(), info)));
  data.arrays.push_back(make_array<Scalar>("norm.running_mean", model.running_mean()));
  data.arrays.push_back(make_array<Scalar>("norm.running_var", model.running_var()));
}

template <typename Scalar>
EdmttModel<Scalar> model_from_checkpoint(const CheckpointData& data) {
  ModelConfig config;
  from_json(data.config, config);
  EdmttModel<Scalar> model(config);
  for (const auto& info : model.manifest().entries()) {
    const auto& rec = data.array(info.name);
    require(rec.rows == info.rows && rec.cols == info.cols, ErrorKind::CorruptCheckpoint,
            "tensor '" + info.name + "' shape does not match the stored config");
    tensor_view(model.parameters(), info) = array_values<Scalar>(rec);
  }
  model.running_mean() = array_values<Scalar>(data.array("norm.running_mean")).col(0);
  model.running_var() = array_values<Scalar>(data.array("norm.running_var")).col(0);
  return model;
}

template <typename Scalar>
void save_model(const EdmttModel<Scalar>& model, const std::filesystem::path& path,
                const nlohmann::json& metadata = nlohmann::json::object()) {
  CheckpointData data;
  data.metadata = metadata;
  append_model_arrays(model, data);
  write_checkpoint(path, data);
}

template <typename Scalar>
EdmttModel<Scalar> load_model(const std::filesystem::path& path, nlohmann::json* metadata = nullptr) {
  const CheckpointData data = read_checkpoint(path);
  if (metadata != nullptr) *metadata = data.metadata;
  return model_from_checkpoint<Scalar>(data);
}

}  // namespace edmtt
