#include "lmc/results.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <memory>
#include <stdexcept>

#include <json.hpp>

#include "lmc/csv.hpp"
#include "lmc/dataset.hpp"

namespace lmc {

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), md, &len) != 1)
    throw std::runtime_error("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 0xF];
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file_bytes(path)); }

Manifest Manifest::load(const std::filesystem::path& root) {
  Manifest m;
  const auto path = root / kFileName;
  if (!std::filesystem::exists(path)) return m;
  std::ifstream in(path);
  nlohmann::json j;
  try {
    in >> j;
    for (const auto& [k, v] : j.at("files").items()) m.files_[k] = v.get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("corrupt manifest " + path.string() + ": " + e.what());
  }
  return m;
}

void Manifest::record(const std::filesystem::path& root, const std::filesystem::path& file) {
  const auto rel = std::filesystem::relative(file, root);
  if (rel.empty() || *rel.begin() == "..")
    throw std::invalid_argument(file.string() + " lies outside " + root.string());
  files_[rel.generic_string()] = sha256_file(file);
}

void Manifest::save(const std::filesystem::path& root) const {
  nlohmann::json j{{"schema_version", 1}, {"files", files_}};
  csv::write_atomic(root / kFileName, j.dump(2) + "\n");
}

std::vector<std::string> Manifest::verify(const std::filesystem::path& root) const {
  std::vector<std::string> problems;
  for (const auto& [rel, hash] : files_) {
    const auto path = root / rel;
    if (!std::filesystem::exists(path)) {
      problems.push_back("missing: " + rel);
      continue;
    }
    if (sha256_file(path) != hash) problems.push_back("hash mismatch: " + rel);
  }
  return problems;
}

}  // namespace lmc
