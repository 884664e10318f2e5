#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lmc/network.hpp"

namespace lmc {

struct DatasetInfo {
  std::string name;
  std::size_t size = 0;
  int channels = 1;
  int height = 1;
  int width = 1;
  int classes = 0;
  std::vector<std::size_t> class_counts;

  int dim() const { return channels * height * width; }
};

/// Samples stored one per row, channel-major (C x H x W) within a row.
struct Dataset {
  DatasetInfo info;
  Tensor inputs;
  std::vector<int> labels;
  // Nominal value range of the stored representation (0..255 for raw bytes).
  float value_min = 0.0f;
  float value_max = 255.0f;

  std::size_t size() const { return labels.size(); }
  /// Recomputes `info.size` and `info.class_counts` from the labels.
  void refresh_counts();
  void validate() const;
};

/// A decoded IDX container.
struct IdxArray {
  std::uint8_t type_code = 0x08;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> data;
};

IdxArray decode_idx(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_idx(const IdxArray& array);
IdxArray read_idx(const std::filesystem::path& path);
void write_idx(const IdxArray& array, const std::filesystem::path& path);

/// Pairs an IDX image file (N x H x W, ubyte) with an IDX label file (N, ubyte).
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 int classes = 10);

/// Reads `train-*` or `t10k-*` MNIST IDX files from `dir`.
Dataset load_mnist(const std::filesystem::path& dir, bool train);

inline constexpr std::size_t kCifarRecordBytes = 3073;

/// Decodes CIFAR-10 binary records (1 label byte + 3072 channel-major pixels).
Dataset decode_cifar_binary(const std::vector<std::uint8_t>& bytes, const std::string& name = "cifar10");
Dataset load_cifar_binary(const std::vector<std::filesystem::path>& paths);
/// data_batch_1..5.bin (train) or test_batch.bin from `dir`.
Dataset load_cifar10(const std::filesystem::path& dir, bool train);

/// Gaussian class blobs. Class k < 2D sits at radius * (+/- e_{k/2}); further classes
/// at seeded random directions on the same sphere.
Dataset make_synthetic(int classes, int per_class, int dim, std::uint64_t seed,
                       double spread = 0.1, double radius = 1.0);

/// Keeps the first `per_class` samples of each class, in source order.
Dataset subsample_per_class(const Dataset& data, std::size_t per_class);

Dataset select_rows(const Dataset& data, const std::vector<std::size_t>& rows);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace lmc
