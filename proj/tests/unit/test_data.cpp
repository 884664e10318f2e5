#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "lmc/dataset.hpp"
#include "lmc/errors.hpp"
#include "lmc/normalization.hpp"
#include "lmc/partition.hpp"
#include "support.hpp"

using namespace lmc;
namespace fs = std::filesystem;

namespace {

const fs::path kDataDir = LMC_DATA_DIR;

std::vector<std::uint8_t> idx_bytes(std::vector<std::uint32_t> dims, std::vector<std::uint8_t> data) {
  IdxArray a;
  a.dims = std::move(dims);
  a.data = std::move(data);
  return encode_idx(a);
}

std::uint64_t parse_offset(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_idx(bytes);
  } catch (const ParseError& e) {
    return e.offset();
  }
  FAIL("no parse error");
  return 0;
}

std::uint64_t cifar_offset(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_cifar_binary(bytes);
  } catch (const ParseError& e) {
    return e.offset();
  }
  FAIL("no parse error");
  return 0;
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

Dataset small_images(int classes, int per_class, int channels, int side) {
  Dataset d;
  d.info.name = "toy";
  d.info.channels = channels;
  d.info.height = d.info.width = side;
  d.info.classes = classes;
  const int n = classes * per_class;
  d.inputs.resize(n, channels * side * side);
  for (int i = 0; i < n; ++i) {
    d.labels.push_back(i % classes);
    for (int j = 0; j < d.inputs.cols(); ++j) d.inputs(i, j) = static_cast<float>((i * 7 + j * 13) % 256);
  }
  d.refresh_counts();
  return d;
}

}  // namespace

TEST_CASE("IDX write-then-read of three images is the identity") {
  std::vector<std::uint8_t> pixels(3 * 2 * 4);
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = static_cast<std::uint8_t>(i * 9);
  const auto bytes = idx_bytes({3, 2, 4}, pixels);
  CHECK(bytes.size() == 4 + 3 * 4 + pixels.size());
  CHECK(bytes[2] == 0x08);
  CHECK(bytes[3] == 3);
  CHECK(bytes[7] == 3);  // big-endian first dimension
  const IdxArray back = decode_idx(bytes);
  CHECK(back.dims == std::vector<std::uint32_t>{3, 2, 4});
  CHECK(back.data == pixels);

  testing::TempDir dir("idx");
  write_bytes(dir / "img", bytes);
  write_bytes(dir / "lab", idx_bytes({3}, {2, 0, 1}));
  const Dataset ds = load_idx(dir / "img", dir / "lab", 3);
  CHECK(ds.size() == 3);
  CHECK(ds.info.dim() == 8);
  CHECK(ds.labels == std::vector<int>{2, 0, 1});
  CHECK(ds.inputs(1, 0) == doctest::Approx(pixels[8]));
  CHECK(ds.info.class_counts == std::vector<std::size_t>{1, 1, 1});
}

TEST_CASE("IDX decoder rejects malformed files with byte offsets") {
  const auto good = idx_bytes({2, 2, 2}, std::vector<std::uint8_t>(8, 1));
  auto magic = good;
  magic[0] = 1;
  CHECK(parse_offset(magic) == 0);
  auto type = good;
  type[2] = 0x42;
  CHECK(parse_offset(type) == 2);
  auto truncated = good;
  truncated.resize(good.size() - 2);
  CHECK(parse_offset(truncated) == truncated.size());
  auto header = good;
  header.resize(9);
  CHECK(parse_offset(header) == 9);
  auto trailing = good;
  trailing.push_back(0);
  CHECK(parse_offset(trailing) == good.size());
  CHECK_THROWS_AS(decode_idx({0, 0}), ParseError);
}

TEST_CASE("IDX image and label counts must agree") {
  testing::TempDir dir("idx-mismatch");
  write_bytes(dir / "img", idx_bytes({2, 1, 1}, {0, 1}));
  write_bytes(dir / "lab", idx_bytes({3}, {0, 1, 0}));
  try {
    load_idx(dir / "img", dir / "lab", 10);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.offset() == 4);
  }
  write_bytes(dir / "lab", idx_bytes({2}, {0, 11}));
  try {
    load_idx(dir / "img", dir / "lab", 10);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.offset() == 9);
  }
}

TEST_CASE("CIFAR binary records") {
  std::vector<std::uint8_t> bytes(2 * kCifarRecordBytes);
  bytes[0] = 3;
  bytes[kCifarRecordBytes] = 9;
  bytes[1] = 255;                      // record 0, red plane, pixel 0
  bytes[1 + 1024] = 128;               // green plane
  bytes[kCifarRecordBytes + 3072] = 7; // record 1, last blue pixel
  const Dataset ds = decode_cifar_binary(bytes);
  CHECK(ds.size() == 2);
  CHECK(ds.labels == std::vector<int>{3, 9});
  CHECK(ds.info.channels == 3);
  CHECK(ds.inputs(0, 0) == 255.0f);
  CHECK(ds.inputs(0, 1024) == 128.0f);
  CHECK(ds.inputs(1, 3071) == 7.0f);

  const Dataset unit = apply_normalizer(fit_normalizer(ds, NormKind::unit_range), ds);
  CHECK(unit.inputs(0, 0) == 1.0f);
  CHECK(unit.inputs(0, 1024) == 128.0f / 255.0f);
  CHECK(unit.inputs(1, 3071) == 7.0f / 255.0f);

  auto partial = bytes;
  partial.resize(bytes.size() - 10);
  CHECK(cifar_offset(partial) == kCifarRecordBytes);
  auto label = bytes;
  label[kCifarRecordBytes] = 10;
  CHECK(cifar_offset(label) == kCifarRecordBytes);
  CHECK(cifar_offset({}) == 0);
}

TEST_CASE("standard MNIST and CIFAR-10 files") {
  if (!fs::exists(kDataDir / "mnist") || !fs::exists(kDataDir / "cifar-10-batches-bin")) {
    MESSAGE("dataset files not found under " << kDataDir.string() << "; skipping");
    return;
  }
  const Dataset train = load_mnist(kDataDir / "mnist", true);
  CHECK(train.size() == 60000);
  CHECK(train.info.dim() == 784);
  CHECK(train.info.classes == 10);
  CHECK(load_mnist(kDataDir / "mnist", false).size() == 10000);

  const NormalizationScheme s = fit_normalizer(train, NormKind::center);
  const Dataset test = apply_normalizer(s, load_mnist(kDataDir / "mnist", false));
  const double test_mean = channel_means(test)[0];
  CHECK(std::abs(test_mean) < 0.05);
  CHECK(test_mean != 0.0);
  CHECK(std::abs(channel_means(apply_normalizer(s, train))[0]) < 1e-6);

  const Dataset cifar = load_cifar10(kDataDir / "cifar-10-batches-bin", true);
  CHECK(cifar.size() == 50000);
  CHECK(cifar.info.classes == 10);
  CHECK(std::vector<int>(cifar.labels.begin(), cifar.labels.begin() + 5) == std::vector<int>{6, 9, 9, 4, 1});
  CHECK(load_cifar10(kDataDir / "cifar-10-batches-bin", false).size() == 10000);
}

TEST_CASE("synthetic blobs") {
  const Dataset a = make_synthetic(10, 10, 5, 3);
  CHECK(a.size() == 100);
  CHECK(a.info.class_counts == std::vector<std::size_t>(10, 10));
  const Dataset b = make_synthetic(10, 10, 5, 3);
  CHECK(a.inputs == b.inputs);
  CHECK(a.labels == b.labels);
  CHECK_FALSE(make_synthetic(10, 10, 5, 4).inputs == a.inputs);
  CHECK_THROWS(make_synthetic(0, 10, 5, 3));
}

TEST_CASE("subsampling keeps the first n of each class") {
  const Dataset d = small_images(3, 5, 1, 2);
  const Dataset s = subsample_per_class(d, 2);
  CHECK(s.size() == 6);
  CHECK(s.labels == std::vector<int>{0, 1, 2, 0, 1, 2});
  CHECK(s.inputs.row(4) == d.inputs.row(4));
}

TEST_CASE("covariate 50/50 split") {
  Dataset d = small_images(4, 0, 1, 2);
  // Odd class sizes: 7, 8, 9, 10.
  d.inputs.resize(34, 4);
  d.labels.clear();
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < 7 + c; ++i) d.labels.push_back(c);
  d.inputs.setRandom();
  d.refresh_counts();
  ShiftSpec spec;
  spec.split_seed = 5;
  const Partition p = partition(d, spec);
  CHECK(p.a.size() + p.b.size() == d.size());
  std::set<std::size_t> all(p.rows_a.begin(), p.rows_a.end());
  for (auto r : p.rows_b) CHECK(all.insert(r).second);
  CHECK(all.size() == d.size());
  CHECK(p.a.info.class_counts == std::vector<std::size_t>{4, 4, 5, 5});
  CHECK(p.b.info.class_counts == std::vector<std::size_t>{3, 4, 4, 5});
  for (std::size_t i = 0; i < p.rows_a.size(); ++i) CHECK(p.a.inputs.row(static_cast<Eigen::Index>(i)) == d.inputs.row(static_cast<Eigen::Index>(p.rows_a[i])));

  const Partition again = partition(d, spec);
  CHECK(again.rows_a == p.rows_a);
  spec.split_seed = 6;
  CHECK_FALSE(partition(d, spec).rows_a == p.rows_a);
}

TEST_CASE("label-imbalance split") {
  const Dataset d = small_images(10, 50, 1, 2);
  ShiftSpec spec;
  spec.kind = ShiftKind::label_imbalance;
  spec.x = 20;
  spec.low_classes = {0, 1, 2, 3, 4};
  spec.high_classes = {5, 6, 7, 8, 9};
  const Partition p = partition(d, spec);
  for (int c = 0; c < 10; ++c) {
    CHECK(p.a.info.class_counts[static_cast<std::size_t>(c)] == (c < 5 ? 10u : 40u));
    CHECK(p.b.info.class_counts[static_cast<std::size_t>(c)] == (c < 5 ? 40u : 10u));
  }
  spec.x = 50;
  const Partition even = partition(d, spec);
  CHECK(even.a.info.class_counts == even.b.info.class_counts);

  spec.x = 100;
  CHECK_THROWS(partition(d, spec));
  spec.x = 20;
  spec.high_classes = {4, 5, 6, 7, 8, 9};
  CHECK_THROWS(partition(d, spec));
  spec.high_classes = {5, 6, 7, 8};
  CHECK_THROWS(partition(d, spec));
}

TEST_CASE("channel-domain split keeps scenes and zeroes the other channels") {
  const Dataset d = small_images(2, 3, 3, 2);
  ShiftSpec spec;
  spec.kind = ShiftKind::channel_domain;
  spec.channels_a = {0};
  spec.channels_b = {1};
  const Partition p = partition(d, spec);
  CHECK(p.a.labels == d.labels);
  CHECK(p.b.labels == d.labels);
  CHECK(p.a.inputs.middleCols(0, 4) == d.inputs.middleCols(0, 4));
  CHECK(p.a.inputs.middleCols(4, 8).isZero());
  CHECK(p.b.inputs.middleCols(4, 4) == d.inputs.middleCols(4, 4));
  CHECK(p.b.inputs.middleCols(0, 4).isZero());
  CHECK(p.b.inputs.middleCols(8, 4).isZero());
  spec.channels_b = {3};
  CHECK_THROWS(partition(d, spec));
}

TEST_CASE("partition manifest CSV") {
  const Dataset d = small_images(2, 2, 1, 1);
  const Partition p = partition(d, ShiftSpec{});
  testing::TempDir dir("manifest");
  write_partition_manifest(p, dir / "p.csv");
  std::ifstream in(dir / "p.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "index,subset,class");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 4);
}

TEST_CASE("normalization") {
  Dataset d = small_images(2, 20, 3, 3);
  d.inputs.middleCols(9, 9).setConstant(17.0f);  // constant green channel
  const NormalizationScheme s = fit_normalizer(d, NormKind::center);
  CHECK(s.constant_channel == std::vector<bool>{false, true, false});
  const Dataset c = apply_normalizer(s, d);
  for (double m : channel_means(c)) CHECK(std::abs(m) < 1e-6);
  CHECK(c.inputs.middleCols(9, 9).isZero());
  // Unit variance per non-constant channel.
  double ss = 0;
  for (Eigen::Index i = 0; i < c.inputs.rows(); ++i)
    for (int j = 0; j < 9; ++j) ss += c.inputs(i, j) * c.inputs(i, j);
  CHECK(ss / (c.inputs.rows() * 9.0) == doctest::Approx(1.0).epsilon(1e-5));

  const Dataset u = apply_normalizer(fit_normalizer(d, NormKind::unit_range), d);
  CHECK(u.inputs.minCoeff() >= 0.0f);
  CHECK(u.inputs.maxCoeff() <= 1.0f);
  const Dataset uu = apply_normalizer(fit_normalizer(u, NormKind::unit_range), u);
  CHECK(uu.inputs == u.inputs);

  Dataset other = small_images(2, 2, 1, 3);
  CHECK_THROWS(apply_normalizer(s, other));
}
