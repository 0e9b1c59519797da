// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "edmtt/error.hpp"

namespace edmtt {

// Canonical order; also the column order of every parsed sequence.
enum class FeatureGroup : std::uint8_t { EyeGaze = 0, HeadPose = 1, HeadRotation = 2, ActionUnits = 3 };

inline constexpr std::array<FeatureGroup, 4> kAllGroups = {
    FeatureGroup::EyeGaze, FeatureGroup::HeadPose, FeatureGroup::HeadRotation,
    FeatureGroup::ActionUnits};

inline constexpr std::array<std::string_view, 6> kEyeGazeColumns = {
    "gaze_0_x", "gaze_0_y", "gaze_0_z", "gaze_1_x", "gaze_1_y", "gaze_1_z"};
inline constexpr std::array<std::string_view, 3> kHeadPoseColumns = {"pose_Tx", "pose_Ty",
                                                                     "pose_Tz"};
inline constexpr std::array<std::string_view, 3> kHeadRotationColumns = {"pose_Rx", "pose_Ry",
                                                                         "pose_Rz"};
inline constexpr std::array<std::string_view, 17> kActionUnitColumns = {
    "AU01_r", "AU02_r", "AU04_r", "AU05_r", "AU06_r", "AU07_r", "AU09_r", "AU10_r", "AU12_r",
    "AU14_r", "AU15_r", "AU17_r", "AU20_r", "AU23_r", "AU25_r", "AU26_r", "AU45_r"};

inline std::span<const std::string_view> group_columns(FeatureGroup group) {
  switch (group) {
    case FeatureGroup::EyeGaze: return kEyeGazeColumns;
    case FeatureGroup::HeadPose: return kHeadPoseColumns;
    case FeatureGroup::HeadRotation: return kHeadRotationColumns;
    case FeatureGroup::ActionUnits: return kActionUnitColumns;
  }
  return {};
}

/// Short names used on the command line and in ablation tables.
inline constexpr std::string_view group_key(FeatureGroup group) {
  switch (group) {
    case FeatureGroup::EyeGaze: return "gaze";
    case FeatureGroup::HeadPose: return "pose";
    case FeatureGroup::HeadRotation: return "rotation";
    case FeatureGroup::ActionUnits: return "aus";
  }
  return "";
}

/// A subset of the four feature groups, stored as a 4-bit mask
/// (bit 0 = gaze, 1 = pose, 2 = rotation, 3 = action units).
class GroupSet {
 public:
  constexpr GroupSet() = default;
  constexpr explicit GroupSet(std::uint8_t bits) : bits_(bits & 0x0F) {}
  constexpr GroupSet(std::initializer_list<FeatureGroup> groups) {
    for (auto g : groups) bits_ |= bit(g);
  }

  static constexpr GroupSet all() { return GroupSet(0x0F); }

  constexpr bool contains(FeatureGroup g) const { return (bits_ & bit(g)) != 0; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr std::uint8_t bits() const { return bits_; }
  constexpr bool operator==(const GroupSet&) const = default;

  std::vector<FeatureGroup> groups() const {
    std::vector<FeatureGroup> out;
    for (auto g : kAllGroups)
      if (contains(g)) out.push_back(g);
    return out;
  }

  std::vector<std::string> columns() const {
    std::vector<std::string> out;
    for (auto g : groups())
      for (auto c : group_columns(g)) out.emplace_back(c);
    return out;
  }

  std::size_t column_count() const { return columns().size(); }

  std::string to_string() const {
    std::string out;
    for (auto g : groups()) {
      if (!out.empty()) out += ',';
      out += group_key(g);
    }
    return out;
  }

  /// Parses a comma list such as "gaze,pose,aus".
  static GroupSet parse(std::string_view text) {
    GroupSet out;
    std::size_t start = 0;
    while (start <= text.size()) {
      std::size_t end = text.find(',', start);
      if (end == std::string_view::npos) end = text.size();
      std::string_view token = text.substr(start, end - start);
      while (!token.empty() && token.front() == ' ') token.remove_prefix(1);
      while (!token.empty() && token.back() == ' ') token.remove_suffix(1);
      if (!token.empty()) {
        bool matched = false;
        for (auto g : kAllGroups) {
          if (token == group_key(g)) {
            out.bits_ |= bit(g);
            matched = true;
          }
        }
        require(matched, ErrorKind::InvalidArgument,
                "unknown feature group '" + std::string(token) +
                    "' (expected gaze, pose, rotation or aus)");
      }
      start = end + 1;
    }
    require(!out.empty(), ErrorKind::InvalidArgument, "feature group list is empty");
    return out;
  }

 private:
  static constexpr std::uint8_t bit(FeatureGroup g) {
    return static_cast<std::uint8_t>(1u << static_cast<unsigned>(g));
  }
  std::uint8_t bits_ = 0;
};

/// One sample: m frames by n named features, optionally labelled.
struct FrameFeatureSequence {
  std::string sample_id;
  Eigen::MatrixXd values;  // m x n, row = frame
  std::vector<std::string> feature_names;
  std::optional<double> label;

  Eigen::Index frames() const { return values.rows(); }
  Eigen::Index features() const { return values.cols(); }
};

/// Raw annotation (0..3) to engagement level; exact thirds.
inline double map_raw_label(int raw) {
  require(raw >= 0 && raw <= 3, ErrorKind::OutOfRangeLabel,
          "raw label " + std::to_string(raw) + " is outside {0,1,2,3}");
  return static_cast<double>(raw) / 3.0;
}

/// Inverse of map_raw_label for labels that are exact thirds (nearest class).
inline int raw_class_of(double label) {
  require(label >= 0.0 && label <= 1.0, ErrorKind::OutOfRangeLabel,
          "label " + std::to_string(label) + " is outside [0,1]");
  return static_cast<int>(std::lround(label * 3.0));
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (;;) {
    std::size_t end = line.find(',', start);
    if (end == std::string_view::npos) {
      fields.push_back(trim(line.substr(start)));
      break;
    }
    fields.push_back(trim(line.substr(start, end - start)));
    start = end + 1;
  }
  return fields;
}

inline std::optional<double> parse_double(std::string_view text) {
  double value = 0.0;
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

inline std::string format_double(double value) {
  char buffer[64];
  auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, ptr);
}

}  // namespace detail

/// Reads an OpenFace frame CSV and keeps the columns of `groups` in canonical
/// order. Frames with success == 0 or confidence < min_confidence are dropped.
inline FrameFeatureSequence parse_openface_csv(const std::filesystem::path& path, GroupSet groups,
                                               double min_confidence = 0.75) {
  require(!groups.empty(), ErrorKind::InvalidArgument, "no feature groups requested");
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());

  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::MissingColumn,
          path.string() + ": missing header row");
  const auto header = detail::split_csv_line(line);
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < header.size(); ++i) index.emplace(std::string(header[i]), i);

  auto locate = [&](std::string_view name) {
    auto it = index.find(std::string(name));
    require(it != index.end(), ErrorKind::MissingColumn,
            path.string() + ": column '" + std::string(name) + "' not in header");
    return it->second;
  };
  const std::size_t success_col = locate("success");
  const std::size_t confidence_col = locate("confidence");
  const auto names = groups.columns();
  std::vector<std::size_t> cols;
  cols.reserve(names.size());
  for (const auto& name : names) cols.push_back(locate(name));

  std::vector<double> flat;
  std::size_t kept = 0;
  std::size_t line_no = 1;
  auto field_value = [&](const std::vector<std::string_view>& fields, std::size_t col,
                         std::string_view name) {
    require(col < fields.size(), ErrorKind::InvalidArgument,
            path.string() + ":" + std::to_string(line_no) + ": row has too few fields");
    auto value = detail::parse_double(fields[col]);
    require(value.has_value(), ErrorKind::InvalidArgument,
            path.string() + ":" + std::to_string(line_no) + ": column '" + std::string(name) +
                "' value '" + std::string(fields[col]) + "' is not a number");
    return *value;
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_csv_line(line);
    const double success = field_value(fields, success_col, "success");
    const double confidence = field_value(fields, confidence_col, "confidence");
    if (success == 0.0 || !(confidence >= min_confidence)) continue;
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const double v = field_value(fields, cols[k], names[k]);
      require(std::isfinite(v), ErrorKind::NonFiniteValue,
              path.string() + ":" + std::to_string(line_no) + ": column '" + names[k] +
                  "' is not finite");
      flat.push_back(v);
    }
    ++kept;
  }
  require(kept > 0, ErrorKind::EmptySequence, path.string() + ": no frames survive filtering");

  FrameFeatureSequence seq;
  seq.sample_id = path.stem().string();
  seq.feature_names = names;
  seq.values = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      flat.data(), static_cast<Eigen::Index>(kept), static_cast<Eigen::Index>(names.size()));
  return seq;
}

/// Writes a sequence in OpenFace layout (frame, success, confidence, features).
/// Values use the shortest round-trip representation.
inline void write_openface_csv(const FrameFeatureSequence& seq, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out << "frame, success, confidence";
  for (const auto& name : seq.feature_names) out << ", " << name;
  out << '\n';
  for (Eigen::Index r = 0; r < seq.values.rows(); ++r) {
    out << (r + 1) << ", 1, 1";
    for (Eigen::Index c = 0; c < seq.values.cols(); ++c)
      out << ", " << detail::format_double(seq.values(r, c));
    out << '\n';
  }
  require(static_cast<bool>(out), ErrorKind::Io, "failed writing " + path.string());
}

struct LabelEntry {
  std::string sample_id;
  int raw_label = 0;
};

/// Reads `sample_id,raw_label` rows. A header row is accepted and skipped.
inline std::vector<LabelEntry> read_labels_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open labels file " + path.string());
  std::vector<LabelEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_csv_line(line);
    require(fields.size() == 2, ErrorKind::InvalidArgument,
            path.string() + ":" + std::to_string(line_no) + ": expected 2 fields");
    if (line_no == 1 && fields[1] == "raw_label") continue;
    int raw = 0;
    auto [ptr, ec] = std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), raw);
    require(ec == std::errc() && ptr == fields[1].data() + fields[1].size(),
            ErrorKind::OutOfRangeLabel,
            path.string() + ":" + std::to_string(line_no) + ": raw_label '" +
                std::string(fields[1]) + "' is not an integer");
    require(raw >= 0 && raw <= 3, ErrorKind::OutOfRangeLabel,
            path.string() + ":" + std::to_string(line_no) + ": raw_label " +
                std::to_string(raw) + " outside {0,1,2,3}");
    entries.push_back({std::string(fields[0]), raw});
  }
  return entries;
}

inline void write_labels_csv(std::span<const LabelEntry> entries,
                             const std::filesystem::path& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out << "sample_id,raw_label\n";
  for (const auto& e : entries) out << e.sample_id << ',' << e.raw_label << '\n';
}

/// Loads `<features_dir>/<sample_id>.csv` for every labels entry.
inline std::vector<FrameFeatureSequence> load_labelled_sequences(
    const std::filesystem::path& features_dir, std::span<const LabelEntry> labels,
    GroupSet groups, double min_confidence = 0.75) {
  std::vector<FrameFeatureSequence> out;
  out.reserve(labels.size());
  for (const auto& entry : labels) {
    auto seq = parse_openface_csv(features_dir / (entry.sample_id + ".csv"), groups, min_confidence);
    seq.sample_id = entry.sample_id;
    seq.label = map_raw_label(entry.raw_label);
    out.push_back(std::move(seq));
  }
  return out;
}

}  // namespace edmtt
