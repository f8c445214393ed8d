#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "crownflow/io.hpp"

namespace crownflow::io {

namespace {

using nlohmann::json;

// Roles always present in the JSON document (null when unused).
constexpr std::array<const char*, 5> kRoles = {"image", "flows", "prob", "semantic", "labels"};

json parse_or_null(const std::string& text) {
  if (text.empty()) return nullptr;
  return json::parse(text);
}

}  // namespace

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("manifest.io", "cannot open " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    throw InvariantViolation("hash.init", "SHA-256 initialisation failed");
  }
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest.data(), &len);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return hex.str();
}

std::optional<fs::path> Manifest::path_of(const std::string& role,
                                          const fs::path& manifest_dir) const {
  auto it = files.find(role);
  if (it == files.end()) return std::nullopt;
  return manifest_dir / it->second;
}

void write_manifest(const fs::path& path, Manifest manifest) {
  const fs::path dir = path.parent_path();
  json doc;
  json checksums = json::object();
  for (const char* role : kRoles) doc[role] = nullptr;
  for (const auto& [role, rel] : manifest.files) {
    doc[role] = rel;
    checksums[role] = sha256_file(dir / rel);
  }
  doc["scene_spec"] = parse_or_null(manifest.scene_spec_json);
  doc["settings"] = parse_or_null(manifest.settings_json);
  doc["checksums"] = checksums;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("manifest.io", "cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

Manifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("manifest.io", "cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error("manifest.parse", path.string() + ": " + e.what());
  }
  const fs::path dir = path.parent_path();
  Manifest m;
  for (const char* role : kRoles) {
    if (!doc.contains(role) || doc[role].is_null()) continue;
    const auto rel = doc[role].get<std::string>();
    const fs::path file = dir / rel;
    if (!fs::exists(file)) {
      throw Error("manifest.missing_file", "manifest references missing file " + file.string());
    }
    const auto expected = doc.at("checksums").value(role, std::string{});
    if (sha256_file(file) != expected) {
      throw Error("manifest.checksum", "checksum mismatch for " + file.string());
    }
    m.files[role] = rel;
    m.checksums[role] = expected;
  }
  m.scene_spec_json = doc.value("scene_spec", json(nullptr)).dump();
  m.settings_json = doc.value("settings", json(nullptr)).dump();
  return m;
}

}  // namespace crownflow::io
