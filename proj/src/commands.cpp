#include "lmc/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "lmc/checkpoint_io.hpp"
#include "lmc/csv.hpp"
#include "lmc/ensemble.hpp"
#include "lmc/errors.hpp"
#include "lmc/network.hpp"
#include "lmc/plot.hpp"
#include "lmc/results.hpp"

namespace lmc {

namespace fs = std::filesystem;

ExperimentConfig with_overrides(ExperimentConfig config, const CommandOptions& options) {
  if (options.seeds) config.seeds = *options.seeds;
  if (options.jobs < 1) throw ConfigError("--jobs", "must be at least 1");
  if (!options.axis.empty() && options.axis != "batch" && options.axis != "lr")
    throw ConfigError("--axis", "expected 'batch' or 'lr'");
  config.validate();
  return config;
}

fs::path results_root(const ExperimentConfig& config, const CommandOptions& options) {
  return options.out.empty() ? fs::path(config.output) : options.out;
}

namespace {

// Runs fn(i) for i in [0, n) on up to `jobs` threads; rethrows the first failure.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next++;
      if (i >= n) return;
      {
        std::lock_guard lock(mu);
        if (failure) return;
      }
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const auto threads = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, jobs)), n);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
}

// Single-writer manifest updates shared by worker threads.
class Recorder {
 public:
  explicit Recorder(fs::path root) : root_(std::move(root)), manifest_(Manifest::load(root_)) {}

  void commit(const std::vector<fs::path>& files) {
    std::lock_guard lock(mu_);
    for (const auto& f : files) manifest_.record(root_, f);
    manifest_.save(root_);
  }

 private:
  fs::path root_;
  Manifest manifest_;
  std::mutex mu_;
};

// Serializes log lines from worker threads.
class Log {
 public:
  explicit Log(std::ostream& os) : os_(os) {}
  void line(const std::string& s) {
    std::lock_guard lock(mu_);
    os_ << s << '\n';
    os_.flush();
  }

 private:
  std::ostream& os_;
  std::mutex mu_;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(digits);
  o << v;
  return o.str();
}

fs::path experiment_dir(const ExperimentConfig& c, const CommandOptions& o) { return results_root(c, o) / c.name; }

fs::path seed_dir(const fs::path& exp, std::uint64_t seed) { return exp / std::to_string(seed); }

std::vector<fs::path> write_experiment_header(const ExperimentConfig& config, const PreparedData& data,
                                              const fs::path& exp) {
  fs::create_directories(exp);
  csv::write_atomic(exp / "config.json", config_to_json(config).dump(2) + "\n");
  write_partition_manifest(data.part, exp / "partition.csv");
  return {exp / "config.json", exp / "partition.csv"};
}

struct Pair {
  Checkpoint a, b;
};

Pair load_pair(const ExperimentConfig& config, const fs::path& dir, std::uint64_t seed) {
  const auto [na, nb] = pair_checkpoint_names(config, seed, config.train.batch_size, config.train.learning_rate);
  for (const auto& n : {na, nb})
    if (!fs::exists(dir / n))
      throw std::runtime_error("missing checkpoint " + (dir / n).string() + " (run 'train' first)");
  return {load_checkpoint(dir / na), load_checkpoint(dir / nb)};
}

std::vector<fs::path> write_interpolation(const ExperimentConfig& config, const PreparedData& data,
                                          const Checkpoint& a, const Checkpoint& b, int batch_size,
                                          std::uint64_t seed, const fs::path& dir,
                                          std::vector<BarrierResult>* barriers_out = nullptr) {
  const InterpolationCurve curve = run_interpolation(config, data, a, b, batch_size, seed);
  const auto barriers = all_barriers(config, curve);
  fs::create_directories(dir);
  write_curve_csv(curve, dir / "curve.csv");
  write_barrier_csv(barriers, dir / "barriers.csv");
  const Similarity sim = similarity(a.params, b.params);
  std::ostringstream s;
  s << "cosine,angle_deg,manhattan,param_count\n"
    << csv::format(sim.cosine) << ',' << csv::format(sim.angle_deg) << ',' << csv::format(sim.manhattan) << ','
    << sim.param_count << '\n';
  csv::write_atomic(dir / "similarity.csv", s.str());
  if (barriers_out) *barriers_out = barriers;
  return {dir / "curve.csv", dir / "barriers.csv", dir / "similarity.csv"};
}

std::string barrier_summary(const std::vector<BarrierResult>& barriers) {
  std::string out;
  for (const auto& r : barriers)
    if (r.variant == BarrierVariant::local_min)
      out += " " + r.set + ": B=" + fmt(r.value) + " delta=" + fmt(r.delta);
  return out;
}

double median(std::vector<double> v) {
  std::erase_if(v, [](double x) { return std::isnan(x); });
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

void cmd_train(const ExperimentConfig& config, const CommandOptions& options, std::ostream& os) {
  Log log(os);
  const fs::path root = results_root(config, options), exp = experiment_dir(config, options);
  const PreparedData data = prepare_data(config);
  fs::create_directories(root);
  Recorder rec(root);
  rec.commit(write_experiment_header(config, data, exp));
  const int b = config.train.batch_size;
  const double lr = config.train.learning_rate;
  parallel_for(config.seeds.size(), options.jobs, [&](std::size_t i) {
    const std::uint64_t seed = config.seeds[i];
    const RunRecord run = run_training(config, data, seed, b, lr);
    const fs::path dir = seed_dir(exp, seed);
    fs::create_directories(dir);
    const auto [na, nb] = pair_checkpoint_names(config, seed, b, lr);
    save_checkpoint(run.final_a, dir / na);
    save_checkpoint(*run.final_b, dir / nb);
    write_run_record_csv(run, dir / "run.csv");
    rec.commit({dir / na, dir / nb, dir / "run.csv"});
    std::string msg = "seed " + std::to_string(seed) + ": trained";
    for (const auto& split : {"a/test", "b/test"}) {
      const auto s = run.series(split);
      if (!s.empty()) msg += std::string(" ") + split + " acc=" + fmt(s.back().accuracy);
    }
    log.line(msg);
  });
}

void cmd_interpolate(const ExperimentConfig& config, const CommandOptions& options, std::ostream& os) {
  Log log(os);
  const fs::path root = results_root(config, options), exp = experiment_dir(config, options);
  const PreparedData data = prepare_data(config);
  Recorder rec(root);
  parallel_for(config.seeds.size(), options.jobs, [&](std::size_t i) {
    const std::uint64_t seed = config.seeds[i];
    const fs::path dir = seed_dir(exp, seed);
    const Pair p = load_pair(config, dir, seed);
    std::vector<BarrierResult> barriers;
    rec.commit(write_interpolation(config, data, p.a, p.b, config.train.batch_size, seed, dir, &barriers));
    log.line("seed " + std::to_string(seed) + ": local-min barrier" + barrier_summary(barriers));
  });
}

void cmd_sweep(const ExperimentConfig& config, const CommandOptions& options, std::ostream& os) {
  Log log(os);
  const fs::path root = results_root(config, options), exp = experiment_dir(config, options);
  std::vector<int> batches{config.train.batch_size};
  std::vector<double> rates{config.train.learning_rate};
  if (options.axis != "lr" && !config.sweep.batch_sizes.empty()) batches = config.sweep.batch_sizes;
  if (options.axis != "batch" && !config.sweep.learning_rates.empty()) rates = config.sweep.learning_rates;
  const PreparedData data = prepare_data(config);
  const std::size_t n_train = std::min(data.part.a.size(), data.part.b.size());
  for (int b : batches)
    if (static_cast<std::size_t>(b) > n_train)
      throw ConfigError("sweep.batch_sizes", "batch size " + std::to_string(b) + " exceeds subset size");
  fs::create_directories(root);
  Recorder rec(root);
  rec.commit(write_experiment_header(config, data, exp));

  std::ostringstream table;
  table << "batch_size,learning_rate,noise_scale,variant,set,median_value,median_delta,seeds\n";
  std::map<double, std::vector<std::pair<double, double>>> by_rate;  // lr -> (B, median local-min test)
  for (int b : batches)
    for (double lr : rates) {
      const std::string cell = "B" + std::to_string(b) + "_lr" + csv::format(lr);
      std::vector<std::vector<BarrierResult>> per_seed(config.seeds.size());
      parallel_for(config.seeds.size(), options.jobs, [&](std::size_t i) {
        const std::uint64_t seed = config.seeds[i];
        const RunRecord run = run_training(config, data, seed, b, lr);
        const fs::path dir = exp / "sweep" / cell / std::to_string(seed);
        auto files = write_interpolation(config, data, run.final_a, *run.final_b, b, seed, dir, &per_seed[i]);
        write_run_record_csv(run, dir / "run.csv");
        files.push_back(dir / "run.csv");
        rec.commit(files);
        log.line(cell + " seed " + std::to_string(seed) + ":" + barrier_summary(per_seed[i]));
      });
      const double g = noise_scale(lr, n_train, static_cast<std::size_t>(b));
      for (std::size_t k = 0; k < per_seed.front().size(); ++k) {
        std::vector<double> values, deltas;
        for (const auto& s : per_seed) {
          values.push_back(s[k].value);
          deltas.push_back(s[k].delta);
        }
        const auto& r = per_seed.front()[k];
        table << b << ',' << csv::format(lr) << ',' << csv::format(g) << ',' << to_string(r.variant) << ','
              << r.set << ',' << csv::format(median(values)) << ',' << csv::format(median(deltas)) << ','
              << config.seeds.size() << '\n';
        if (r.variant == BarrierVariant::local_min && r.set == config.interpolation.sets.front())
          by_rate[lr].push_back({std::log2(static_cast<double>(b)), median(values)});
      }
    }
  csv::write_atomic(exp / "sweep.csv", table.str());
  std::vector<plot::Line> lines;
  for (const auto& [lr, pts] : by_rate) {
    plot::Line l{"lr " + csv::format(lr), {}, {}};
    for (const auto& [x, y] : pts) {
      l.x.push_back(x);
      l.y.push_back(y);
    }
    lines.push_back(std::move(l));
  }
  csv::write_atomic(exp / "sweep.svg",
                    plot::line_chart(config.name + ": median local-min barrier (" + config.interpolation.sets.front() + ")",
                                     "log2 batch size", "barrier", lines));
  rec.commit({exp / "sweep.csv", exp / "sweep.svg"});
}

void cmd_ensemble(const ExperimentConfig& config, const CommandOptions& options, std::ostream& os) {
  Log log(os);
  const fs::path root = results_root(config, options), exp = experiment_dir(config, options);
  const PreparedData data = prepare_data(config);
  Recorder rec(root);
  const int b = config.train.batch_size;
  const double lr = config.train.learning_rate;
  std::vector<EnsembleReport> lmc_reports(config.seeds.size()), seed_reports(config.seeds.size());
  parallel_for(config.seeds.size(), options.jobs, [&](std::size_t i) {
    const std::uint64_t seed = config.seeds[i];
    const fs::path dir = seed_dir(exp, seed);
    const Pair p = load_pair(config, dir, seed);
    if (fs::exists(dir / "barriers.csv")) {
      for (const auto& r : read_barrier_csv(dir / "barriers.csv"))
        if (r.variant == BarrierVariant::local_min && r.set == "test" && r.value > config.ensemble.lmc_threshold)
          log.line("warning: seed " + std::to_string(seed) + " pair has test barrier " + fmt(r.value) +
                   " above the LMC threshold");
    }
    const auto lmc_models = build_lmc_ensemble(p.a, p.b, config.ensemble.lambdas, sweep_options(config, data, b, seed));
    lmc_reports[i] = ensemble_metrics(collect_predictions(lmc_models, data.test), "lmc");
    std::vector<Checkpoint> members;
    std::vector<fs::path> files;
    fs::create_directories(dir / "members");
    for (int k = 0; k < config.ensemble.seed_models; ++k) {
      RunRecord r = train_ensemble_member(config, data, seed, k, b, lr);
      const fs::path path = dir / "members" / ("member" + std::to_string(k) + ".lmck");
      save_checkpoint(r.final_a, path);
      files.push_back(path);
      members.push_back(std::move(r.final_a));
    }
    seed_reports[i] = ensemble_metrics(collect_predictions(members, data.test), "different-seeds");
    write_ensemble_csv({lmc_reports[i], seed_reports[i]}, dir / "ensemble.csv");
    files.push_back(dir / "ensemble.csv");
    rec.commit(files);
    const auto c = compare_ensembles(lmc_reports[i], seed_reports[i]);
    log.line("seed " + std::to_string(seed) + ": dWA=" + fmt(c.d_wa) + " dWD=" + fmt(c.d_wd) +
             " dMajority=" + fmt(c.d_majority) + " dAvg=" + fmt(c.d_avgpred));
  });
  std::ostringstream cmp;
  cmp << "seed,d_wa,d_wd,d_majority,d_avgpred\n";
  for (std::size_t i = 0; i < config.seeds.size(); ++i) {
    const auto c = compare_ensembles(lmc_reports[i], seed_reports[i]);
    cmp << config.seeds[i] << ',' << csv::format(c.d_wa) << ',' << csv::format(c.d_wd) << ','
        << csv::format(c.d_majority) << ',' << csv::format(c.d_avgpred) << '\n';
  }
  csv::write_atomic(exp / "ensemble_comparison.csv", cmp.str());
  std::ostringstream agg;
  agg << "kind,ensembles,wa_mean_of_means,wd_mean_of_means,wa_pooled,wd_pooled,acc_majority,acc_avgpred\n";
  for (const auto* reports : {&lmc_reports, &seed_reports}) {
    const auto a = aggregate_reports(*reports);
    agg << a.kind << ',' << a.ensembles << ',' << csv::format(a.wa_mean_of_means) << ','
        << csv::format(a.wd_mean_of_means) << ',' << csv::format(a.wa_pooled) << ',' << csv::format(a.wd_pooled)
        << ',' << csv::format(a.acc_majority) << ',' << csv::format(a.acc_avgpred) << '\n';
  }
  csv::write_atomic(exp / "ensemble_aggregate.csv", agg.str());
  rec.commit({exp / "ensemble_comparison.csv", exp / "ensemble_aggregate.csv"});
}

namespace {

bool is_seed_dir(const fs::directory_entry& e) {
  const auto name = e.path().filename().string();
  return e.is_directory() && !name.empty() && std::all_of(name.begin(), name.end(), ::isdigit);
}

std::vector<fs::path> sorted_seed_dirs(const fs::path& exp) {
  std::vector<std::pair<unsigned long long, fs::path>> dirs;
  for (const auto& e : fs::directory_iterator(exp))
    if (is_seed_dir(e)) dirs.push_back({std::stoull(e.path().filename().string()), e.path()});
  std::sort(dirs.begin(), dirs.end());
  std::vector<fs::path> out;
  for (auto& d : dirs) out.push_back(std::move(d.second));
  return out;
}

void render_curve(const fs::path& curve_path, const std::string& tag, const fs::path& out_dir) {
  const InterpolationCurve curve = read_curve_csv(curve_path);
  std::vector<plot::Line> loss, acc;
  for (const auto& set : curve.sets()) {
    const Series s = curve.series(set);
    loss.push_back({set, s.lambdas, s.loss});
    acc.push_back({set, s.lambdas, s.accuracy});
  }
  csv::write_atomic(out_dir / (tag + "_loss.svg"), plot::line_chart(tag + ": loss", "lambda", "loss", loss));
  csv::write_atomic(out_dir / (tag + "_accuracy.svg"),
                    plot::line_chart(tag + ": accuracy", "lambda", "accuracy", acc));
  const auto sets = curve.sets();
  plot::PolarLine polar{sets.front(), {}, {}};
  for (const auto& r : curve.rows) {
    if (r.set != sets.front()) continue;
    polar.angle_deg.push_back(r.angle_deg);
    polar.radius.push_back(r.manhattan);
  }
  csv::write_atomic(out_dir / (tag + "_polar.svg"), plot::polar_chart(tag + ": polar trace", {polar}));
}

}  // namespace

void cmd_report(const fs::path& root, std::ostream& os) {
  if (!fs::is_directory(root)) throw std::runtime_error("results directory does not exist: " + root.string());
  if (fs::exists(root / Manifest::kFileName)) {
    const auto problems = Manifest::load(root).verify(root);
    if (!problems.empty())
      throw std::runtime_error("manifest does not match results (" + problems.front() + "); run verify");
  }
  const fs::path out = root / "report";
  std::vector<fs::path> experiments;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory() && e.path().filename() != "report" && fs::exists(e.path() / "config.json"))
      experiments.push_back(e.path());
  std::sort(experiments.begin(), experiments.end());
  fs::create_directories(out);
  std::ostringstream md;
  md << "# Results summary\n\n";
  if (experiments.empty()) md << "no runs\n";
  for (const auto& exp : experiments) {
    const std::string name = exp.filename().string();
    md << "## " << name << "\n\n";
    const auto seeds = sorted_seed_dirs(exp);
    std::vector<plot::Point> scatter;
    bool any = false;
    for (const auto& dir : seeds) {
      const std::string seed = dir.filename().string();
      if (fs::exists(dir / "barriers.csv")) {
        if (!any) md << "| seed | set | variant | barrier | lambda* | delta |\n|---|---|---|---|---|---|\n";
        any = true;
        for (const auto& r : read_barrier_csv(dir / "barriers.csv"))
          md << "| " << seed << " | " << r.set << " | " << to_string(r.variant) << " | " << fmt(r.value) << " | "
             << fmt(r.lambda_star, 2) << " | " << fmt(r.delta) << " |\n";
        if (fs::exists(dir / "similarity.csv")) {
          const auto sim = csv::read(dir / "similarity.csv");
          for (const auto& r : read_barrier_csv(dir / "barriers.csv"))
            if (r.variant == BarrierVariant::local_min)
              scatter.push_back({r.set, csv::to_double(sim.rows.at(0)[sim.column("angle_deg")]), r.value});
        }
      }
      if (fs::exists(dir / "curve.csv")) render_curve(dir / "curve.csv", name + "_" + seed, out);
    }
    if (!any) md << "no interpolation results\n";
    md << '\n';
    if (!scatter.empty())
      csv::write_atomic(out / (name + "_similarity.svg"),
                        plot::scatter_chart(name + ": barrier vs angle", "angle between endpoints (deg)",
                                            "local-min barrier", scatter));
    if (fs::exists(exp / "sweep.csv")) {
      const auto t = csv::read(exp / "sweep.csv");
      md << "### sweep\n\n| B | lr | g | variant | set | median barrier | median delta |\n|---|---|---|---|---|---|---|\n";
      for (const auto& r : t.rows)
        md << "| " << r[t.column("batch_size")] << " | " << r[t.column("learning_rate")] << " | "
           << fmt(csv::to_double(r[t.column("noise_scale")])) << " | " << r[t.column("variant")] << " | "
           << r[t.column("set")] << " | " << fmt(csv::to_double(r[t.column("median_value")])) << " | "
           << fmt(csv::to_double(r[t.column("median_delta")])) << " |\n";
      md << '\n';
    }
    if (fs::exists(exp / "ensemble_aggregate.csv")) {
      const auto t = csv::read(exp / "ensemble_aggregate.csv");
      md << "### ensembles\n\n| kind | ensembles | WA | WD | majority acc | averaged acc |\n|---|---|---|---|---|---|\n";
      for (const auto& r : t.rows)
        md << "| " << r[t.column("kind")] << " | " << r[t.column("ensembles")] << " | "
           << fmt(csv::to_double(r[t.column("wa_mean_of_means")])) << " | "
           << fmt(csv::to_double(r[t.column("wd_mean_of_means")])) << " | "
           << fmt(csv::to_double(r[t.column("acc_majority")])) << " | "
           << fmt(csv::to_double(r[t.column("acc_avgpred")])) << " |\n";
      md << '\n';
    }
  }
  csv::write_atomic(out / "summary.md", md.str());
  os << "report written to " << out.string() << '\n';
}

bool cmd_verify(const fs::path& root, std::ostream& os) {
  if (!fs::exists(root / Manifest::kFileName))
    throw std::runtime_error("no manifest in " + root.string());
  const Manifest m = Manifest::load(root);
  const auto problems = m.verify(root);
  for (const auto& p : problems) os << p << '\n';
  os << m.files().size() << " files checked, " << problems.size() << " problems\n";
  return problems.empty();
}

namespace {

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
  std::vector<std::uint64_t> out;
  for (const auto& f : csv::split(s)) {
    try {
      out.push_back(static_cast<std::uint64_t>(csv::to_int(f)));
    } catch (const std::exception&) {
      throw ConfigError("--seed-list", "not an integer: '" + f + "'");
    }
  }
  return out;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Linear mode connectivity experiments"};
  app.require_subcommand(1);
  std::string config_path, out_dir, seed_list, axis;
  int jobs = 1;
  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", config_path, "experiment config (JSON)");
    if (needs_config) c->required();
    sub->add_option("--out", out_dir, "results directory");
    sub->add_option("--jobs", jobs, "parallel seeds");
    sub->add_option("--seed-list", seed_list, "comma-separated seeds overriding the config");
  };
  auto* train = app.add_subcommand("train", "train model pairs for every seed");
  auto* interp = app.add_subcommand("interpolate", "interpolate trained pairs and compute barriers");
  auto* sweep = app.add_subcommand("sweep", "train and interpolate over batch sizes / learning rates");
  auto* ens = app.add_subcommand("ensemble", "compare LMC and different-seed ensembles");
  auto* report = app.add_subcommand("report", "render plots and summary tables from results");
  auto* verify = app.add_subcommand("verify", "recompute manifest hashes");
  for (auto* s : {train, interp, sweep, ens}) add_common(s, true);
  for (auto* s : {report, verify}) add_common(s, false);
  sweep->add_option("--axis", axis, "vary only 'batch' or 'lr'");

  std::vector<std::string> argv_store{"lmc"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (report->parsed() || verify->parsed()) {
      fs::path root = out_dir;
      if (root.empty()) root = config_path.empty() ? fs::path("results") : fs::path(load_config(config_path).output);
      if (report->parsed()) {
        cmd_report(root, out);
        return kExitOk;
      }
      return cmd_verify(root, out) ? kExitOk : kExitRuntime;
    }
    CommandOptions opts;
    opts.out = out_dir;
    opts.jobs = jobs;
    opts.axis = axis;
    if (!seed_list.empty()) opts.seeds = parse_seed_list(seed_list);
    const ExperimentConfig config = with_overrides(load_config(config_path), opts);
    if (train->parsed()) cmd_train(config, opts, out);
    if (interp->parsed()) cmd_interpolate(config, opts, out);
    if (sweep->parsed()) cmd_sweep(config, opts, out);
    if (ens->parsed()) cmd_ensemble(config, opts, out);
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace lmc
