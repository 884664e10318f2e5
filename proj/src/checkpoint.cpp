#include "lmc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "lmc/checkpoint_io.hpp"
#include "lmc/errors.hpp"

namespace lmc {

void to_json(nlohmann::json& j, const TrainingMeta& meta) {
  j = nlohmann::json{{"init_seed", meta.init_seed},
                     {"noise_seed", meta.noise_seed},
                     {"subset", meta.subset},
                     {"epoch", meta.epoch},
                     {"batch_size", meta.batch_size},
                     {"learning_rate", meta.learning_rate},
                     {"dataset_size", meta.dataset_size},
                     {"provenance", meta.provenance}};
}

void from_json(const nlohmann::json& j, TrainingMeta& meta) {
  meta.init_seed = j.at("init_seed").get<std::uint64_t>();
  meta.noise_seed = j.at("noise_seed").get<std::uint64_t>();
  meta.subset = j.at("subset").get<std::string>();
  meta.epoch = j.at("epoch").get<int>();
  meta.batch_size = j.at("batch_size").get<int>();
  meta.learning_rate = j.at("learning_rate").get<double>();
  meta.dataset_size = j.at("dataset_size").get<std::size_t>();
  meta.provenance = j.value("provenance", nlohmann::json::object());
}

void Checkpoint::validate() const {
  spec.validate();
  if (params.size() != spec.param_count())
    throw ShapeError("checkpoint holds " + std::to_string(params.size()) +
                     " parameters, spec implies " + std::to_string(spec.param_count()));
  if (bn_stats.size() != static_cast<std::size_t>(spec.bn_layer_count()))
    throw ShapeError("checkpoint BN statistics do not match the spec's BN layers");
  std::size_t l = 0;
  for (int b = 0; b < spec.depth(); ++b) {
    if (!spec.has_bn(b)) continue;
    const auto width = static_cast<std::size_t>(spec.widths[static_cast<std::size_t>(b)]);
    const BnStats& st = bn_stats[l++];
    if (st.mean.size() != width || st.var.size() != width)
      throw ShapeError("BN statistics width mismatch at block " + std::to_string(b));
    for (float v : st.var)
      if (!(v > 0.0f)) throw ShapeError("BN running variance must be strictly positive");
  }
}

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n)
      throw ParseError(std::string("truncated checkpoint while reading ") + what, pos_);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  ckpt.validate();
  nlohmann::json meta{{"spec", ckpt.spec}, {"meta", ckpt.meta}};
  const std::string text = meta.dump();
  std::vector<std::uint8_t> out;
  out.reserve(12 + text.size() + 4 * ckpt.params.size());
  for (char c : std::string_view("LMCK")) out.push_back(static_cast<std::uint8_t>(c));
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (float v : ckpt.params.values()) put_f32(out, v);
  for (const BnStats& st : ckpt.bn_stats) {
    for (float v : st.mean) put_f32(out, v);
    for (float v : st.var) put_f32(out, v);
  }
  return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader in(bytes);
  if (in.str(4, "magic") != "LMCK") throw ParseError("bad checkpoint magic", 0);
  const std::uint32_t version = in.u32("version");
  if (version != kCheckpointVersion)
    throw ParseError("unsupported checkpoint version " + std::to_string(version), 4);
  const std::uint32_t meta_len = in.u32("metadata length");
  const std::size_t meta_pos = in.pos();
  const std::string text = in.str(meta_len, "metadata");
  Checkpoint ckpt;
  try {
    const auto meta = nlohmann::json::parse(text);
    ckpt.spec = meta.at("spec").get<ModelSpec>();
    ckpt.meta = meta.at("meta").get<TrainingMeta>();
    ckpt.spec.validate();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid checkpoint metadata: ") + e.what(), meta_pos);
  } catch (const SpecError& e) {
    throw ParseError(std::string("invalid model spec in checkpoint: ") + e.what(), meta_pos);
  }
  const std::size_t p = ckpt.spec.param_count();
  in.need(4 * p, "parameters");
  std::vector<float> values(p);
  for (std::size_t i = 0; i < p; ++i) values[i] = in.f32("parameters");
  ckpt.params = ParamVector(std::move(values));
  for (int b = 0; b < ckpt.spec.depth(); ++b) {
    if (!ckpt.spec.has_bn(b)) continue;
    const auto width = static_cast<std::size_t>(ckpt.spec.widths[static_cast<std::size_t>(b)]);
    BnStats st;
    st.mean.resize(width);
    st.var.resize(width);
    for (auto& v : st.mean) v = in.f32("BN running mean");
    for (auto& v : st.var) v = in.f32("BN running variance");
    ckpt.bn_stats.push_back(std::move(st));
  }
  if (in.remaining() != 0) throw ParseError("trailing bytes after checkpoint payload", in.pos());
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(ckpt);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out.flush()) throw std::runtime_error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace lmc
