#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace lmc {

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Content hashes of produced files, keyed by path relative to the results root.
/// Saved as manifest.json via write-then-rename; holds no timestamps.
class Manifest {
 public:
  static constexpr const char* kFileName = "manifest.json";

  static Manifest load(const std::filesystem::path& root);
  void record(const std::filesystem::path& root, const std::filesystem::path& file);
  void save(const std::filesystem::path& root) const;
  /// Missing files and hash mismatches, one message each.
  std::vector<std::string> verify(const std::filesystem::path& root) const;

  const std::map<std::string, std::string>& files() const { return files_; }

 private:
  std::map<std::string, std::string> files_;
};

}  // namespace lmc
