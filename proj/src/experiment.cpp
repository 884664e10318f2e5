#include "lmc/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "lmc/csv.hpp"
#include "lmc/errors.hpp"
#include "lmc/network.hpp"
#include "lmc/rng.hpp"

namespace lmc {

using nlohmann::json;

namespace {

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

// Read access to one JSON object that rejects keys outside `allowed`.
class Fields {
 public:
  Fields(const json& j, std::string path, std::initializer_list<const char*> allowed)
      : j_(j), path_(std::move(path)) {
    if (!j.is_object()) throw ConfigError(path_, "expected an object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, value] : j.items())
      if (!ok.count(key)) throw ConfigError(join(path_, key), "unknown key");
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  const json& at(const std::string& key) const {
    if (!j_.contains(key)) throw ConfigError(join(path_, key), "required key missing");
    return j_.at(key);
  }
  std::string path(const std::string& key) const { return join(path_, key); }

  template <typename T>
  T get(const std::string& key, T fallback) const {
    if (!j_.contains(key)) return fallback;
    return as<T>(key);
  }

  template <typename T>
  T as(const std::string& key) const {
    try {
      return at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(join(path_, key), std::string("wrong type (") + e.what() + ")");
    }
  }

 private:
  const json& j_;
  std::string path_;
};

template <typename Fn>
auto field(const std::string& path, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(path, e.what());
  }
}

DatasetInfo nominal_info(const DatasetConfig& d) {
  DatasetInfo info;
  info.name = d.name;
  if (d.name == "mnist") {
    info.channels = 1;
    info.height = info.width = 28;
    info.classes = 10;
  } else if (d.name == "cifar10") {
    info.channels = 3;
    info.height = info.width = 32;
    info.classes = 10;
  } else {
    info.channels = d.synthetic.dim;
    info.height = info.width = 1;
    info.classes = d.synthetic.classes;
  }
  return info;
}

bool contains_unit_endpoints(const std::vector<double>& g) {
  return !g.empty() && g.front() == 0.0 && g.back() == 1.0;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (schema_version != kConfigSchemaVersion)
    throw ConfigError("schema_version", "unsupported schema version " + std::to_string(schema_version));
  if (name.empty() || name.find('/') != std::string::npos || name == "." || name == "..")
    throw ConfigError("name", "must be a non-empty single path component");
  if (dataset.name != "mnist" && dataset.name != "cifar10" && dataset.name != "synthetic")
    throw ConfigError("dataset.name", "unknown dataset '" + dataset.name + "'");
  if (dataset.name != "synthetic") {
    if (dataset.path.empty()) throw ConfigError("dataset.path", "required for " + dataset.name);
    if (!std::filesystem::is_directory(dataset.path))
      throw ConfigError("dataset.path", "directory does not exist: " + dataset.path);
  } else {
    const auto& s = dataset.synthetic;
    if (s.classes < 2 || s.per_class <= 0 || s.test_per_class <= 0 || s.dim <= 0 || !(s.spread >= 0.0))
      throw ConfigError("dataset.synthetic", "invalid synthetic dataset parameters");
  }
  if (seeds.empty()) throw ConfigError("seeds", "at least one seed is required");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
    throw ConfigError("seeds", "duplicate seed");
  const DatasetInfo info = nominal_info(dataset);
  field("shift", [&] { shift.validate(info.classes, info.channels); });
  field("model", [&] { model_spec(info).validate(); });
  if (train.batch_size <= 0) throw ConfigError("train.batch_size", "must be positive");
  if (!(train.learning_rate > 0.0)) throw ConfigError("train.learning_rate", "must be positive");
  if (train.epochs < 0) throw ConfigError("train.epochs", "must be non-negative");
  if (train.eval_every < 0) throw ConfigError("train.eval_every", "must be non-negative");
  if (train.noise_mode != "auto") field("train.noise_mode", [&] { parse_noise_mode(train.noise_mode); });
  if (train.pairing == Pairing::shifted && shift.kind == ShiftKind::label_imbalance &&
      train.noise_mode == "fixed")
    throw ConfigError("train.noise_mode", "fixed noise needs equal per-class counts; label imbalance requires independent noise");
  const auto& ip = interpolation;
  if (!contains_unit_endpoints(ip.lambdas))
    throw ConfigError("interpolation.lambdas", "grid must start at 0 and end at 1");
  for (std::size_t i = 1; i < ip.lambdas.size(); ++i)
    if (!(ip.lambdas[i] > ip.lambdas[i - 1]))
      throw ConfigError("interpolation.lambdas", "grid must be strictly increasing");
  if (ip.variants.empty()) throw ConfigError("interpolation.variants", "at least one variant is required");
  if (ip.bn_passes < 1) throw ConfigError("interpolation.bn_passes", "must be at least 1");
  if (ip.sets.empty()) throw ConfigError("interpolation.sets", "at least one evaluation set is required");
  for (const auto& s : ip.sets)
    if (s != "test" && s != "train-a" && s != "train-b")
      throw ConfigError("interpolation.sets", "unknown evaluation set '" + s + "'");
  if (ensemble.lambdas.empty()) throw ConfigError("ensemble.lambdas", "at least one lambda is required");
  for (double l : ensemble.lambdas)
    if (!(l >= 0.0 && l <= 1.0)) throw ConfigError("ensemble.lambdas", "values must lie in [0,1]");
  if (ensemble.seed_models < 2) throw ConfigError("ensemble.seed_models", "must be at least 2");
  for (int b : sweep.batch_sizes)
    if (b <= 0) throw ConfigError("sweep.batch_sizes", "must be positive");
  for (double lr : sweep.learning_rates)
    if (!(lr > 0.0)) throw ConfigError("sweep.learning_rates", "must be positive");
  if (output.empty()) throw ConfigError("output", "must not be empty");
}

NoiseMode ExperimentConfig::resolved_noise_mode() const {
  if (train.noise_mode != "auto") return parse_noise_mode(train.noise_mode);
  if (train.pairing == Pairing::different_seeds || shift.kind == ShiftKind::label_imbalance)
    return NoiseMode::independent;
  return NoiseMode::fixed;
}

ModelSpec ExperimentConfig::model_spec(const DatasetInfo& data) const {
  ModelSpec s;
  s.arch = model.arch;
  s.widths = model.widths;
  s.batch_norm = model.batch_norm;
  s.strides = model.strides;
  s.classes = data.classes;
  if (model.arch == Architecture::mlp) {
    s.input_channels = data.dim();
    s.input_height = s.input_width = 1;
  } else {
    s.input_channels = data.channels;
    s.input_height = data.height;
    s.input_width = data.width;
  }
  return s;
}

namespace {

std::string pairing_name(Pairing p) { return p == Pairing::shifted ? "shifted" : "different-seeds"; }

Pairing parse_pairing(const std::string& s) {
  if (s == "shifted") return Pairing::shifted;
  if (s == "different-seeds") return Pairing::different_seeds;
  throw std::invalid_argument("unknown pairing '" + s + "'");
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
  ExperimentConfig c;
  const Fields top(j, "", {"schema_version", "name", "dataset", "normalization", "shift", "model", "train",
                           "interpolation", "ensemble", "sweep", "output", "seeds"});
  c.schema_version = top.as<int>("schema_version");
  if (c.schema_version != kConfigSchemaVersion)
    throw ConfigError("schema_version", "unsupported schema version " + std::to_string(c.schema_version));
  c.name = top.get<std::string>("name", c.name);
  {
    const Fields d(top.at("dataset"), "dataset", {"name", "path", "per_class", "test_per_class", "synthetic"});
    c.dataset.name = d.as<std::string>("name");
    c.dataset.path = d.get<std::string>("path", "");
    c.dataset.per_class = d.get<std::size_t>("per_class", 0);
    c.dataset.test_per_class = d.get<std::size_t>("test_per_class", 0);
    if (d.has("synthetic")) {
      const Fields s(d.at("synthetic"), "dataset.synthetic",
                     {"classes", "per_class", "test_per_class", "dim", "spread", "radius", "seed"});
      auto& sy = c.dataset.synthetic;
      sy.classes = s.get<int>("classes", sy.classes);
      sy.per_class = s.get<int>("per_class", sy.per_class);
      sy.test_per_class = s.get<int>("test_per_class", sy.test_per_class);
      sy.dim = s.get<int>("dim", sy.dim);
      sy.spread = s.get<double>("spread", sy.spread);
      sy.radius = s.get<double>("radius", sy.radius);
      sy.seed = s.get<std::uint64_t>("seed", sy.seed);
    }
  }
  if (top.has("normalization"))
    c.normalization = field("normalization", [&] { return parse_norm_kind(top.as<std::string>("normalization")); });
  if (top.has("shift")) {
    const Fields s(top.at("shift"), "shift",
                   {"kind", "x", "low_classes", "high_classes", "channels_a", "channels_b", "split_seed"});
    c.shift = field("shift", [&] { return top.at("shift").get<ShiftSpec>(); });
  }
  {
    const Fields m(top.at("model"), "model", {"arch", "widths", "batch_norm", "strides"});
    c.model.arch = field("model.arch", [&] { return parse_architecture(m.as<std::string>("arch")); });
    c.model.widths = m.as<std::vector<int>>("widths");
    c.model.batch_norm = m.get<std::vector<bool>>("batch_norm", {});
    c.model.strides = m.get<std::vector<int>>("strides", {});
  }
  if (top.has("train")) {
    const Fields t(top.at("train"), "train",
                   {"batch_size", "learning_rate", "epochs", "eval_every", "noise_mode", "pairing"});
    c.train.batch_size = t.get<int>("batch_size", c.train.batch_size);
    c.train.learning_rate = t.get<double>("learning_rate", c.train.learning_rate);
    c.train.epochs = t.get<int>("epochs", c.train.epochs);
    c.train.eval_every = t.get<int>("eval_every", c.train.eval_every);
    c.train.noise_mode = t.get<std::string>("noise_mode", c.train.noise_mode);
    if (t.has("pairing"))
      c.train.pairing = field("train.pairing", [&] { return parse_pairing(t.as<std::string>("pairing")); });
  }
  if (top.has("interpolation")) {
    const Fields ip(top.at("interpolation"), "interpolation",
                    {"lambdas", "grid_points", "variants", "bn_policy", "bn_passes", "sets"});
    auto& c_ip = c.interpolation;
    if (ip.has("lambdas") && ip.has("grid_points"))
      throw ConfigError("interpolation", "give either lambdas or grid_points, not both");
    if (ip.has("grid_points"))
      c_ip.lambdas = field("interpolation.grid_points", [&] { return uniform_grid(ip.as<int>("grid_points")); });
    c_ip.lambdas = ip.get<std::vector<double>>("lambdas", c_ip.lambdas);
    if (ip.has("variants")) {
      c_ip.variants.clear();
      for (const auto& v : ip.as<std::vector<std::string>>("variants"))
        c_ip.variants.push_back(field("interpolation.variants", [&] { return parse_barrier_variant(v); }));
    }
    if (ip.has("bn_policy"))
      c_ip.bn_policy = field("interpolation.bn_policy", [&] { return parse_bn_policy(ip.as<std::string>("bn_policy")); });
    c_ip.bn_passes = ip.get<int>("bn_passes", c_ip.bn_passes);
    c_ip.sets = ip.get<std::vector<std::string>>("sets", c_ip.sets);
  }
  if (top.has("ensemble")) {
    const Fields e(top.at("ensemble"), "ensemble", {"lambdas", "seed_models", "lmc_threshold"});
    c.ensemble.lambdas = e.get<std::vector<double>>("lambdas", c.ensemble.lambdas);
    c.ensemble.seed_models = e.get<int>("seed_models", c.ensemble.seed_models);
    c.ensemble.lmc_threshold = e.get<double>("lmc_threshold", c.ensemble.lmc_threshold);
  }
  if (top.has("sweep")) {
    const Fields s(top.at("sweep"), "sweep", {"batch_sizes", "learning_rates"});
    c.sweep.batch_sizes = s.get<std::vector<int>>("batch_sizes", {});
    c.sweep.learning_rates = s.get<std::vector<double>>("learning_rates", {});
  }
  c.output = top.get<std::string>("output", c.output);
  c.seeds = top.get<std::vector<std::uint64_t>>("seeds", c.seeds);
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("", "malformed config " + path.string() + ": " + e.what());
  }
  return parse_config(j);
}

json config_to_json(const ExperimentConfig& c) {
  json variants = json::array();
  for (auto v : c.interpolation.variants) variants.push_back(std::string(to_string(v)));
  const auto& s = c.dataset.synthetic;
  return json{
      {"schema_version", c.schema_version},
      {"name", c.name},
      {"dataset",
       {{"name", c.dataset.name},
        {"path", c.dataset.path},
        {"per_class", c.dataset.per_class},
        {"test_per_class", c.dataset.test_per_class},
        {"synthetic",
         {{"classes", s.classes},
          {"per_class", s.per_class},
          {"test_per_class", s.test_per_class},
          {"dim", s.dim},
          {"spread", s.spread},
          {"radius", s.radius},
          {"seed", s.seed}}}}},
      {"normalization", std::string(to_string(c.normalization))},
      {"shift", c.shift},
      {"model",
       {{"arch", std::string(to_string(c.model.arch))},
        {"widths", c.model.widths},
        {"batch_norm", c.model.batch_norm},
        {"strides", c.model.strides}}},
      {"train",
       {{"batch_size", c.train.batch_size},
        {"learning_rate", c.train.learning_rate},
        {"epochs", c.train.epochs},
        {"eval_every", c.train.eval_every},
        {"noise_mode", c.train.noise_mode},
        {"pairing", pairing_name(c.train.pairing)}}},
      {"interpolation",
       {{"lambdas", c.interpolation.lambdas},
        {"variants", variants},
        {"bn_policy", std::string(to_string(c.interpolation.bn_policy))},
        {"bn_passes", c.interpolation.bn_passes},
        {"sets", c.interpolation.sets}}},
      {"ensemble",
       {{"lambdas", c.ensemble.lambdas},
        {"seed_models", c.ensemble.seed_models},
        {"lmc_threshold", c.ensemble.lmc_threshold}}},
      {"sweep", {{"batch_sizes", c.sweep.batch_sizes}, {"learning_rates", c.sweep.learning_rates}}},
      {"output", c.output},
      {"seeds", c.seeds}};
}

const Dataset* PreparedData::set(std::string_view name) const {
  if (name == "test") return &test;
  if (name == "train-a") return &part.a;
  if (name == "train-b") return &part.b;
  throw std::invalid_argument("unknown evaluation set '" + std::string(name) + "'");
}

PreparedData prepare_data(const ExperimentConfig& config) {
  PreparedData d;
  const auto& dc = config.dataset;
  if (dc.name == "mnist") {
    d.train = load_mnist(dc.path, true);
    d.test = load_mnist(dc.path, false);
  } else if (dc.name == "cifar10") {
    d.train = load_cifar10(dc.path, true);
    d.test = load_cifar10(dc.path, false);
  } else {
    const auto& s = dc.synthetic;
    const Dataset all = make_synthetic(s.classes, s.per_class + s.test_per_class, s.dim, s.seed, s.spread, s.radius);
    std::vector<std::size_t> train_rows, test_rows;
    std::vector<int> seen(static_cast<std::size_t>(s.classes), 0);
    for (std::size_t i = 0; i < all.size(); ++i) {
      auto& n = seen[static_cast<std::size_t>(all.labels[i])];
      (n++ < s.per_class ? train_rows : test_rows).push_back(i);
    }
    d.train = select_rows(all, train_rows);
    d.test = select_rows(all, test_rows);
  }
  if (dc.per_class > 0) d.train = subsample_per_class(d.train, dc.per_class);
  if (dc.test_per_class > 0) d.test = subsample_per_class(d.test, dc.test_per_class);
  d.scheme = fit_normalizer(d.train, config.normalization);
  apply_normalizer_inplace(d.scheme, d.train);
  apply_normalizer_inplace(d.scheme, d.test);
  d.part = partition(d.train, config.shift);
  d.bn_union = concat_rows(d.part.a.inputs, d.part.b.inputs);
  return d;
}

SeedPlan seed_plan(const ExperimentConfig& config, std::uint64_t seed) {
  SeedPlan p;
  p.init_a = seed;
  p.init_b = config.train.pairing == Pairing::shifted ? seed : derive_seed(seed, 0xB);
  const std::uint64_t noise = derive_seed(seed, 0x401E);
  if (config.train.pairing == Pairing::shifted) {
    p.noise_a = p.noise_b = noise;
    p.subset_b = "B";
  } else {
    p.noise_a = derive_seed(noise, 0xA);
    p.noise_b = derive_seed(noise, 0xB);
    p.subset_b = "A-alt";
  }
  return p;
}

std::uint64_t ensemble_member_seed(std::uint64_t seed, int k) {
  return k == 0 ? seed : derive_seed(seed, 0xE000 + static_cast<std::uint64_t>(k));
}

std::string checkpoint_name(const ExperimentConfig& config, int batch_size, double learning_rate,
                            std::uint64_t init_seed, std::uint64_t noise_seed, const std::string& subset) {
  std::string shift(to_string(config.shift.kind));
  if (config.shift.kind == ShiftKind::label_imbalance) shift += "-x" + csv::format(config.shift.x);
  return config.dataset.name + "_" + shift + "_B" + std::to_string(batch_size) + "_lr" +
         csv::format(learning_rate) + "_init" + std::to_string(init_seed) + "_noise" +
         std::to_string(noise_seed) + "_" + subset + ".lmck";
}

namespace {

TrainConfig train_config(const ExperimentConfig& config, int batch_size, double learning_rate,
                         std::uint64_t init_seed, std::uint64_t noise_seed) {
  TrainConfig tc;
  tc.batch_size = batch_size;
  tc.learning_rate = learning_rate;
  tc.epochs = config.train.epochs;
  tc.eval_every = config.train.eval_every;
  tc.init_seed = init_seed;
  tc.noise_seed = noise_seed;
  tc.normalization = std::string(to_string(config.normalization));
  return tc;
}

}  // namespace

RunRecord run_training(const ExperimentConfig& config, const PreparedData& data, std::uint64_t seed,
                       int batch_size, double learning_rate) {
  const ModelSpec spec = config.model_spec(data.train.info);
  const SeedPlan plan = seed_plan(config, seed);
  const Checkpoint init_a = init_model(spec, plan.init_a);
  if (config.train.pairing == Pairing::shifted) {
    const TrainConfig tc = train_config(config, batch_size, learning_rate, plan.init_a, plan.noise_a);
    const NoiseSchedule schedule =
        build_noise_schedule(data.part.a.labels, data.part.b.labels, spec.classes, batch_size,
                             config.train.epochs, plan.noise_a, config.resolved_noise_mode());
    return train_pair(init_a, data.part.a, data.part.b, &data.test, tc, schedule);
  }
  const std::uint64_t noise_a = plan.noise_a, noise_b = plan.noise_b;
  RunRecord rec = train_single(init_a, data.part.a, &data.test,
                               train_config(config, batch_size, learning_rate, plan.init_a, noise_a), noise_a);
  RunRecord rb = train_single(init_model(spec, plan.init_b), data.part.a, &data.test,
                              train_config(config, batch_size, learning_rate, plan.init_b, noise_b), noise_b);
  for (auto row : rb.rows) {
    row.split = "b/" + row.split.substr(2);
    rec.rows.push_back(std::move(row));
  }
  std::stable_sort(rec.rows.begin(), rec.rows.end(),
                   [](const MetricRow& x, const MetricRow& y) { return x.epoch < y.epoch; });
  rec.final_b = std::move(rb.final_a);
  return rec;
}

std::pair<std::string, std::string> pair_checkpoint_names(const ExperimentConfig& config, std::uint64_t seed,
                                                          int batch_size, double learning_rate) {
  const SeedPlan p = seed_plan(config, seed);
  return {checkpoint_name(config, batch_size, learning_rate, p.init_a, p.noise_a, "A"),
          checkpoint_name(config, batch_size, learning_rate, p.init_b, p.noise_b, p.subset_b)};
}

RunRecord train_ensemble_member(const ExperimentConfig& config, const PreparedData& data, std::uint64_t seed,
                                int k, int batch_size, double learning_rate) {
  const ModelSpec spec = config.model_spec(data.train.info);
  const std::uint64_t init = ensemble_member_seed(seed, k);
  const std::uint64_t noise = derive_seed(init, 0x5EED);
  return train_single(init_model(spec, init), data.part.a, &data.test,
                      train_config(config, batch_size, learning_rate, init, noise), noise);
}

SweepOptions sweep_options(const ExperimentConfig& config, const PreparedData& data, int batch_size,
                           std::uint64_t seed) {
  SweepOptions o;
  o.bn = config.interpolation.bn_policy;
  o.bn_inputs = &data.bn_union;
  o.bn_batch = static_cast<std::size_t>(batch_size);
  o.bn_passes = config.interpolation.bn_passes;
  o.bn_seed = derive_seed(seed, 0xB17);
  return o;
}

std::vector<EvalSet> eval_sets(const ExperimentConfig& config, const PreparedData& data) {
  std::vector<EvalSet> out;
  for (const auto& s : config.interpolation.sets) out.push_back({s, data.set(s)});
  return out;
}

InterpolationCurve run_interpolation(const ExperimentConfig& config, const PreparedData& data,
                                     const Checkpoint& a, const Checkpoint& b, int batch_size,
                                     std::uint64_t seed) {
  const auto sets = eval_sets(config, data);
  return sweep(a, b, config.interpolation.lambdas, sets, sweep_options(config, data, batch_size, seed));
}

std::vector<BarrierResult> all_barriers(const ExperimentConfig& config, const InterpolationCurve& curve) {
  std::vector<BarrierResult> out;
  for (const auto& set : curve.sets())
    for (auto v : config.interpolation.variants) {
      try {
        out.push_back(barrier(curve, set, v));
      } catch (const std::invalid_argument&) {
        BarrierResult r;
        r.variant = v;
        r.set = set;
        r.value = std::numeric_limits<double>::quiet_NaN();
        r.lambda_star = std::numeric_limits<double>::quiet_NaN();
        r.delta = std::numeric_limits<double>::quiet_NaN();
        out.push_back(r);
      }
    }
  return out;
}

}  // namespace lmc
