#pragma once

// On-disk dataset: a JSON manifest ("bx-dataset/1") plus one raw signal file
// per recording (little-endian float32, channel-major). See
// docs/dataset_format.md.

#include "brantx/checkpoint.hpp"
#include "brantx/sigcore.hpp"

#include <bit>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

namespace brantx {

inline constexpr std::string_view kDatasetFormat = "bx-dataset/1";
inline constexpr std::string_view kManifestName = "manifest.json";

class DatasetError : public ValidationError {
 public:
  enum class Kind { SizeMismatch, UnknownModality, UnsupportedVersion, InvalidRecording, Malformed };

  DatasetError(Kind kind, const std::string& msg) : ValidationError(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

namespace detail {

inline std::string encode_f32(const Matrix& data) {
  std::string out;
  out.reserve(static_cast<std::size_t>(data.size()) * 4);
  for (Index c = 0; c < data.rows(); ++c)
    for (Index n = 0; n < data.cols(); ++n) put_le(out, static_cast<float>(data(c, n)));
  return out;
}

inline Json recording_entry(const Recording& rec, const std::string& rel_path) {
  return {{"subject_id", rec.subject_id},
          {"modality", std::string(to_string(rec.modality))},
          {"rate_hz", rec.rate_hz},
          {"channels", rec.channels()},
          {"channel_names", rec.channel_names},
          {"samples", rec.samples()},
          {"path", rel_path},
          {"dtype", "float32"},
          {"byte_order", "little"},
          {"layout", "channel-major"}};
}

inline Recording read_recording(const Json& e, const std::filesystem::path& root) {
  Recording rec;
  std::string path_str, modality, byte_order, dtype;
  Index channels = 0, samples = 0;
  try {
    rec.subject_id = e.at("subject_id").get<std::string>();
    modality = e.at("modality").get<std::string>();
    rec.rate_hz = e.at("rate_hz").get<double>();
    channels = e.at("channels").get<Index>();
    samples = e.at("samples").get<Index>();
    rec.channel_names = e.value("channel_names", std::vector<std::string>{});
    path_str = e.at("path").get<std::string>();
    byte_order = e.value("byte_order", std::string("little"));
    dtype = e.value("dtype", std::string("float32"));
  } catch (const Json::exception& ex) {
    throw DatasetError(DatasetError::Kind::Malformed, std::string("malformed recording entry: ") + ex.what());
  }
  auto mod = parse_modality(modality);
  if (!mod) throw DatasetError(DatasetError::Kind::UnknownModality, "unknown modality tag '" + modality + "'");
  rec.modality = *mod;
  if (byte_order != "little" || dtype != "float32")
    throw DatasetError(DatasetError::Kind::Malformed,
                       "unsupported sample encoding " + dtype + "/" + byte_order + " in " + path_str);
  if (channels < 1 || samples < 1 || !(rec.rate_hz > 0))
    throw DatasetError(DatasetError::Kind::InvalidRecording,
                       "recording " + path_str + " declares an empty shape or non-positive rate");

  const auto file = root / path_str;
  std::error_code ec;
  const auto actual = std::filesystem::file_size(file, ec);
  if (ec) throw IoError("cannot stat " + file.string() + ": " + ec.message());
  const auto expected = static_cast<std::uintmax_t>(channels) * static_cast<std::uintmax_t>(samples) * 4;
  if (actual != expected)
    throw DatasetError(DatasetError::Kind::SizeMismatch, "size mismatch: " + file.string() + " has " +
                                                             std::to_string(actual) + " bytes, expected " +
                                                             std::to_string(expected));
  const std::string bytes = read_file(file);
  rec.data.resize(channels, samples);
  const char* p = bytes.data();
  for (Index c = 0; c < channels; ++c)
    for (Index n = 0; n < samples; ++n, p += 4) rec.data(c, n) = get_le<float>(p);
  try {
    rec.validate();
  } catch (const ValidationError& ex) {
    throw DatasetError(DatasetError::Kind::InvalidRecording, file.string() + ": " + ex.what());
  }
  return rec;
}

}  // namespace detail

// Writes <dir>/manifest.json and <dir>/signals/*.f32. Returns the manifest
// path. Output is canonical: saving a loaded dataset reproduces it byte for
// byte.
inline std::filesystem::path save_dataset(const std::vector<LabeledPair>& pairs, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "signals", ec);
  if (ec) throw IoError("cannot create " + (dir / "signals").string() + ": " + ec.message());
  Json manifest;
  manifest["format"] = kDatasetFormat;
  manifest["pairs"] = Json::array();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const LabeledPair& p = pairs[i];
    char stem[32];
    std::snprintf(stem, sizeof stem, "%06zu", i);
    const std::string eeg_rel = std::string("signals/") + stem + "_eeg.f32";
    const std::string exg_rel = std::string("signals/") + stem + "_exg.f32";
    detail::write_file(dir / eeg_rel, detail::encode_f32(p.eeg.data));
    detail::write_file(dir / exg_rel, detail::encode_f32(p.exg.data));
    Json entry;
    entry["pair_id"] = p.pair_id;
    entry["label"] = p.label ? Json(*p.label) : Json(nullptr);
    entry["eeg"] = detail::recording_entry(p.eeg, eeg_rel);
    entry["exg"] = detail::recording_entry(p.exg, exg_rel);
    manifest["pairs"].push_back(std::move(entry));
  }
  const auto path = dir / kManifestName;
  detail::write_file(path, manifest.dump(2) + "\n");
  return path;
}

// Accepts the manifest file or the directory holding it.
inline std::vector<LabeledPair> load_dataset(const std::filesystem::path& manifest_or_dir) {
  const auto path = std::filesystem::is_directory(manifest_or_dir) ? manifest_or_dir / kManifestName : manifest_or_dir;
  const auto root = path.parent_path();
  Json manifest;
  try {
    manifest = Json::parse(detail::read_file(path));
  } catch (const Json::exception& e) {
    throw DatasetError(DatasetError::Kind::Malformed, path.string() + ": malformed manifest: " + e.what());
  }
  const std::string format = manifest.value("format", std::string());
  if (format != kDatasetFormat)
    throw DatasetError(DatasetError::Kind::UnsupportedVersion,
                       "unsupported version '" + format + "' in " + path.string() + " (expected " +
                           std::string(kDatasetFormat) + ")");
  if (!manifest.contains("pairs") || !manifest["pairs"].is_array())
    throw DatasetError(DatasetError::Kind::Malformed, path.string() + ": manifest has no pairs array");
  std::vector<LabeledPair> out;
  for (const auto& e : manifest["pairs"]) {
    LabeledPair p;
    try {
      p.pair_id = e.at("pair_id").get<std::string>();
      if (e.contains("label") && !e.at("label").is_null()) p.label = e.at("label").get<int>();
    } catch (const Json::exception& ex) {
      throw DatasetError(DatasetError::Kind::Malformed, std::string("malformed pair entry: ") + ex.what());
    }
    if (!e.contains("eeg") || !e.contains("exg"))
      throw DatasetError(DatasetError::Kind::Malformed, "pair " + p.pair_id + " lacks an eeg or exg entry");
    p.eeg = detail::read_recording(e["eeg"], root);
    p.exg = detail::read_recording(e["exg"], root);
    try {
      p.validate();
    } catch (const ValidationError& ex) {
      throw DatasetError(DatasetError::Kind::InvalidRecording, ex.what());
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace brantx
