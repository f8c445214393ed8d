#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "crownflow/raster.hpp"

namespace crownflow::io {

namespace fs = std::filesystem;

enum class DType { kFloat32, kUInt16, kUInt8 };

struct NpyHeader {
  DType dtype = DType::kFloat32;
  bool fortran_order = false;
  std::vector<std::size_t> shape;

  std::size_t element_count() const;
};

/// Typed C-order array as stored in an NPY file.
struct NpyArray {
  NpyHeader header;
  std::variant<std::vector<float>, std::vector<std::uint16_t>, std::vector<std::uint8_t>> data;
};

/// Reads an NPY 1.0 file. Error ids: npy.io, npy.magic, npy.version,
/// npy.header, npy.dtype, npy.fortran_order, npy.size.
NpyArray read_npy(const fs::path& path);

/// Writes NPY 1.0 with the header padded so the data starts on a 64-byte
/// boundary.
void write_npy(const fs::path& path, const NpyArray& array);

/// Serializes a header exactly as write_npy does (magic and length included).
std::string encode_npy_header(const NpyHeader& header);

/// Flow stack of shape [2, H, W]: index 0 is dy, 1 is dx.
void write_flows_npy(const fs::path& path, const FlowField& flow);
FlowField read_flows_npy(const fs::path& path);

void write_prob_npy(const fs::path& path, const ProbabilityMap& prob);
ProbabilityMap read_prob_npy(const fs::path& path);

/// 16-bit single-channel grayscale PNG. Error ids: png.io, png.bit_depth,
/// png.channels.
void write_labels_png(const fs::path& path, const LabelMap& labels);
LabelMap read_labels_png(const fs::path& path);

/// 8-bit single-channel PNG. Written as {0, 255}; any nonzero value loads as 1.
void write_mask_png(const fs::path& path, const SemanticMask& mask);
SemanticMask read_mask_png(const fs::path& path);

/// Three [0, 1] bands written as an 8-bit RGB PNG.
void write_rgb_png(const fs::path& path, const std::vector<Grid2D<float>>& bands);

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const fs::path& path);

/// Run manifest. Paths are stored relative to the manifest's directory.
struct Manifest {
  std::map<std::string, std::string> files;      // role -> relative path
  std::map<std::string, std::string> checksums;  // role -> sha256
  std::string scene_spec_json = "null";          // raw JSON echo
  std::string settings_json = "null";

  /// Absolute path of a role; nullopt if the role is absent.
  std::optional<fs::path> path_of(const std::string& role, const fs::path& manifest_dir) const;
};

/// Checksums every listed file and writes manifest JSON.
void write_manifest(const fs::path& path, Manifest manifest);

/// Loads a manifest and verifies that referenced files exist and match their
/// checksums. Error ids: manifest.io, manifest.missing_file, manifest.checksum.
Manifest read_manifest(const fs::path& path);

}  // namespace crownflow::io
