#include "lmc/dataset.hpp"

#include <cmath>
#include <fstream>

#include "lmc/errors.hpp"
#include "lmc/rng.hpp"

namespace lmc {

void Dataset::refresh_counts() {
  info.size = labels.size();
  info.class_counts.assign(static_cast<std::size_t>(info.classes), 0);
  for (int y : labels) ++info.class_counts[static_cast<std::size_t>(y)];
}

void Dataset::validate() const {
  if (info.size != labels.size() || static_cast<std::size_t>(inputs.rows()) != labels.size())
    throw ShapeError("dataset " + info.name + ": sample count mismatch");
  if (inputs.cols() != info.dim())
    throw ShapeError("dataset " + info.name + ": feature count mismatch");
  if (info.classes <= 0 || info.dim() <= 0) throw ShapeError("dataset " + info.name + ": empty shape");
  std::size_t total = 0;
  for (std::size_t c : info.class_counts) total += c;
  if (total != info.size) throw ShapeError("dataset " + info.name + ": class counts do not sum to N");
  for (int y : labels)
    if (y < 0 || y >= info.classes) throw ShapeError("dataset " + info.name + ": label out of range");
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
}

namespace {

std::size_t idx_element_size(std::uint8_t type) {
  switch (type) {
    case 0x08:
    case 0x09: return 1;
    case 0x0B: return 2;
    case 0x0C:
    case 0x0D: return 4;
    case 0x0E: return 8;
    default: return 0;
  }
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t pos) {
  return (static_cast<std::uint32_t>(b[pos]) << 24) | (static_cast<std::uint32_t>(b[pos + 1]) << 16) |
         (static_cast<std::uint32_t>(b[pos + 2]) << 8) | static_cast<std::uint32_t>(b[pos + 3]);
}

}  // namespace

IdxArray decode_idx(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4) throw ParseError("IDX header truncated", bytes.size());
  if (bytes[0] != 0 || bytes[1] != 0) throw ParseError("bad IDX magic", 0);
  IdxArray out;
  out.type_code = bytes[2];
  const std::size_t elem = idx_element_size(out.type_code);
  if (elem == 0) throw ParseError("unknown IDX element type", 2);
  const std::size_t ndims = bytes[3];
  if (ndims == 0) throw ParseError("IDX file declares zero dimensions", 3);
  const std::size_t header = 4 + 4 * ndims;
  if (bytes.size() < header) throw ParseError("IDX dimension table truncated", bytes.size());
  std::size_t count = 1;
  for (std::size_t d = 0; d < ndims; ++d) {
    out.dims.push_back(read_be32(bytes, 4 + 4 * d));
    count *= out.dims.back();
  }
  const std::size_t payload = count * elem;
  if (bytes.size() < header + payload)
    throw ParseError("IDX payload truncated: expected " + std::to_string(payload) + " bytes", bytes.size());
  if (bytes.size() > header + payload) throw ParseError("trailing bytes after IDX payload", header + payload);
  out.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
  return out;
}

std::vector<std::uint8_t> encode_idx(const IdxArray& array) {
  std::vector<std::uint8_t> out{0, 0, array.type_code, static_cast<std::uint8_t>(array.dims.size())};
  for (std::uint32_t d : array.dims)
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(d >> s));
  out.insert(out.end(), array.data.begin(), array.data.end());
  return out;
}

IdxArray read_idx(const std::filesystem::path& path) { return decode_idx(read_file_bytes(path)); }

void write_idx(const IdxArray& array, const std::filesystem::path& path) {
  const auto bytes = encode_idx(array);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 int classes) {
  const IdxArray img = read_idx(images);
  const IdxArray lab = read_idx(labels);
  if (img.type_code != 0x08 || img.dims.size() != 3)
    throw ParseError(images.string() + ": expected a 3-d unsigned byte image array", 2);
  if (lab.type_code != 0x08 || lab.dims.size() != 1)
    throw ParseError(labels.string() + ": expected a 1-d unsigned byte label array", 2);
  if (img.dims[0] != lab.dims[0])
    throw ParseError("image count " + std::to_string(img.dims[0]) + " does not match label count " +
                         std::to_string(lab.dims[0]),
                     4);
  Dataset ds;
  ds.info.name = images.filename().string();
  ds.info.channels = 1;
  ds.info.height = static_cast<int>(img.dims[1]);
  ds.info.width = static_cast<int>(img.dims[2]);
  ds.info.classes = classes;
  const std::size_t n = img.dims[0];
  const auto d = static_cast<std::size_t>(ds.info.dim());
  ds.inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = lab.data[i];
    if (y >= classes) throw ParseError(labels.string() + ": label " + std::to_string(y) + " out of range", 8 + i);
    ds.labels[i] = y;
    float* row = ds.inputs.row(static_cast<Eigen::Index>(i)).data();
    const std::uint8_t* src = img.data.data() + i * d;
    for (std::size_t k = 0; k < d; ++k) row[k] = static_cast<float>(src[k]);
  }
  ds.refresh_counts();
  return ds;
}

Dataset load_mnist(const std::filesystem::path& dir, bool train) {
  const std::string prefix = train ? "train" : "t10k";
  Dataset ds = load_idx(dir / (prefix + "-images-idx3-ubyte"), dir / (prefix + "-labels-idx1-ubyte"));
  ds.info.name = train ? "mnist-train" : "mnist-test";
  return ds;
}

Dataset decode_cifar_binary(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  if (bytes.empty()) throw ParseError("empty CIFAR batch", 0);
  if (bytes.size() % kCifarRecordBytes != 0) {
    const std::size_t complete = bytes.size() / kCifarRecordBytes;
    throw ParseError("record length is not " + std::to_string(kCifarRecordBytes) +
                         " bytes: trailing partial record of " +
                         std::to_string(bytes.size() - complete * kCifarRecordBytes) + " bytes",
                     complete * kCifarRecordBytes);
  }
  const std::size_t n = bytes.size() / kCifarRecordBytes;
  Dataset ds;
  ds.info.name = name;
  ds.info.channels = 3;
  ds.info.height = 32;
  ds.info.width = 32;
  ds.info.classes = 10;
  ds.inputs.resize(static_cast<Eigen::Index>(n), 3072);
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* rec = bytes.data() + i * kCifarRecordBytes;
    if (rec[0] >= 10)
      throw ParseError("CIFAR label " + std::to_string(rec[0]) + " out of range", i * kCifarRecordBytes);
    ds.labels[i] = rec[0];
    float* row = ds.inputs.row(static_cast<Eigen::Index>(i)).data();
    for (std::size_t k = 0; k < 3072; ++k) row[k] = static_cast<float>(rec[1 + k]);
  }
  ds.refresh_counts();
  return ds;
}

Dataset load_cifar_binary(const std::vector<std::filesystem::path>& paths) {
  if (paths.empty()) throw std::invalid_argument("no CIFAR batch files given");
  std::vector<Dataset> parts;
  std::size_t total = 0;
  for (const auto& p : paths) {
    try {
      parts.push_back(decode_cifar_binary(read_file_bytes(p), p.filename().string()));
    } catch (const ParseError& e) {
      throw ParseError(p.string() + ": " + e.what(), e.offset());
    }
    total += parts.back().size();
  }
  Tensor all(static_cast<Eigen::Index>(total), 3072);
  std::vector<int> labels;
  labels.reserve(total);
  Eigen::Index r = 0;
  for (const Dataset& part : parts) {
    all.middleRows(r, part.inputs.rows()) = part.inputs;
    r += part.inputs.rows();
    labels.insert(labels.end(), part.labels.begin(), part.labels.end());
  }
  Dataset ds = std::move(parts.front());
  ds.inputs = std::move(all);
  ds.labels = std::move(labels);
  ds.refresh_counts();
  return ds;
}

Dataset load_cifar10(const std::filesystem::path& dir, bool train) {
  std::vector<std::filesystem::path> paths;
  if (train) {
    for (int i = 1; i <= 5; ++i) paths.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
  } else {
    paths.push_back(dir / "test_batch.bin");
  }
  Dataset ds = load_cifar_binary(paths);
  ds.info.name = train ? "cifar10-train" : "cifar10-test";
  return ds;
}

Dataset make_synthetic(int classes, int per_class, int dim, std::uint64_t seed, double spread,
                       double radius) {
  if (classes <= 0 || per_class <= 0 || dim <= 0)
    throw std::invalid_argument("synthetic dataset sizes must be positive");
  if (!(spread >= 0.0)) throw std::invalid_argument("spread must be non-negative");
  Rng rng(derive_seed(seed, 0x5EED));
  std::vector<std::vector<double>> means(static_cast<std::size_t>(classes),
                                         std::vector<double>(static_cast<std::size_t>(dim), 0.0));
  for (int k = 0; k < classes; ++k) {
    auto& m = means[static_cast<std::size_t>(k)];
    if (k < 2 * dim) {
      m[static_cast<std::size_t>(k / 2)] = (k % 2 == 0 ? radius : -radius);
    } else {
      double norm = 0.0;
      for (auto& v : m) {
        v = rng.normal();
        norm += v * v;
      }
      norm = std::sqrt(norm);
      for (auto& v : m) v *= radius / norm;
    }
  }
  Dataset ds;
  ds.info.name = "synthetic";
  ds.info.channels = dim;
  ds.info.classes = classes;
  const std::size_t n = static_cast<std::size_t>(classes) * static_cast<std::size_t>(per_class);
  ds.inputs.resize(static_cast<Eigen::Index>(n), dim);
  ds.labels.resize(n);
  std::size_t i = 0;
  // Interleave classes so that the natural order is class-balanced.
  for (int s = 0; s < per_class; ++s) {
    for (int k = 0; k < classes; ++k, ++i) {
      ds.labels[i] = k;
      for (int d = 0; d < dim; ++d)
        ds.inputs(static_cast<Eigen::Index>(i), d) = static_cast<float>(
            means[static_cast<std::size_t>(k)][static_cast<std::size_t>(d)] + spread * rng.normal());
    }
  }
  ds.value_min = ds.inputs.minCoeff();
  ds.value_max = ds.inputs.maxCoeff();
  ds.refresh_counts();
  return ds;
}

Dataset select_rows(const Dataset& data, const std::vector<std::size_t>& rows) {
  Dataset out;
  out.info = data.info;
  out.value_min = data.value_min;
  out.value_max = data.value_max;
  out.inputs.resize(static_cast<Eigen::Index>(rows.size()), data.inputs.cols());
  out.labels.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.inputs.row(static_cast<Eigen::Index>(i)) = data.inputs.row(static_cast<Eigen::Index>(rows[i]));
    out.labels[i] = data.labels[rows[i]];
  }
  out.refresh_counts();
  return out;
}

Dataset subsample_per_class(const Dataset& data, std::size_t per_class) {
  std::vector<std::size_t> taken(static_cast<std::size_t>(data.info.classes), 0);
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto& t = taken[static_cast<std::size_t>(data.labels[i])];
    if (t < per_class) {
      rows.push_back(i);
      ++t;
    }
  }
  Dataset out = select_rows(data, rows);
  out.info.name = data.info.name + "-sub" + std::to_string(per_class);
  return out;
}

}  // namespace lmc
