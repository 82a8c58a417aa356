#include "rsts/cli.hpp"

#include "rsts/errors.hpp"
#include "rsts/io.hpp"
#include "rsts/parallel.hpp"
#include "rsts/recycle.hpp"
#include "rsts/simulate.hpp"
#include "rsts/sts.hpp"
#include "rsts/weights.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace rsts::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Input and configuration problems map to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::size_t resolve_threads(std::size_t requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("RECYCLED_STS_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    throw UsageError("RECYCLED_STS_THREADS must be a positive integer");
  }
  return default_thread_count();
}

ParamVector parse_vector(const std::string& text, const std::string& what) {
  std::vector<double> values;
  for (const auto& part : split(text, ',')) {
    try {
      std::size_t used = 0;
      const std::string t = trim(part);
      values.push_back(std::stod(t, &used));
      if (used != t.size()) throw std::invalid_argument(t);
    } catch (const std::exception&) {
      throw UsageError(what + " must be a comma-separated list of numbers");
    }
  }
  ParamVector v(static_cast<Eigen::Index>(values.size()));
  for (std::size_t k = 0; k < values.size(); ++k) v[static_cast<Eigen::Index>(k)] = values[k];
  return v;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write '" + path.string() + "'");
  out << content;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw UsageError("cannot create output directory '" + dir.string() + "'");
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

json matrix_json(const ParamMatrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

// ---- fit ---------------------------------------------------------------------

struct FitArgs {
  std::string dataset;
  std::string model = "biexp4";
  std::string init;
  std::string out_dir = "rsts_out";
  int max_iterations = 200;
};

struct LoadedFit {
  ModelPtr model;
  HierDataset data;
  StsFit fit;
};

LoadedFit load_and_fit(const FitArgs& args) {
  LoadedFit lf;
  try {
    lf.model = make_model(args.model);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  lf.data = read_dataset_csv(fs::path(args.dataset));
  const ParamVector init = parse_vector(args.init, "--init");
  if (init.size() != lf.model->parameter_count()) {
    throw UsageError("--init has " + std::to_string(init.size()) + " values; model '" +
                     args.model + "' needs " + std::to_string(lf.model->parameter_count()));
  }
  try {
    validate_dataset(lf.data, lf.model->parameter_count());
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (const auto bounds = lf.model->default_bounds(); bounds && !bounds->contains(init)) {
    throw UsageError("--init lies outside the model bounds");
  }
  FitOptions opts;
  opts.max_iterations = args.max_iterations;
  lf.fit = fit_sts(*lf.model, lf.data, std::span<const ParamVector>(&init, 1), opts);
  return lf;
}

std::string individuals_csv(const LoadedFit& lf) {
  const int p = lf.model->parameter_count();
  std::ostringstream os;
  os << "id,n,converged,q_min,iterations";
  for (int k = 1; k <= p; ++k) os << ",theta_" << k;
  os << '\n';
  for (std::size_t i = 0; i < lf.data.size(); ++i) {
    const auto& fit = lf.fit.fits[i];
    os << lf.data.individuals[i].id << ',' << lf.data.individuals[i].size() << ','
       << (fit.converged ? 1 : 0) << ',' << format_exact(fit.q_min) << ',' << fit.iterations;
    for (int k = 0; k < p; ++k) os << ',' << format_exact(fit.theta[k]);
    os << '\n';
  }
  return os.str();
}

void append_matrix_rows(std::ostringstream& os, const std::string& name, const ParamMatrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      os << name << ',' << r + 1 << ',' << c + 1 << ',' << format6(m(r, c)) << '\n';
}

std::string population_csv(const StsFit& fit) {
  std::ostringstream os;
  os << "quantity,row,col,value\n";
  for (Eigen::Index k = 0; k < fit.theta_sts.size(); ++k)
    os << "theta_sts," << k + 1 << ",1," << format6(fit.theta_sts[k]) << '\n';
  os << "sigma_sq_M,1,1," << format6(fit.sigma_sq_M) << '\n';
  os << "nu_hat,1,1," << format6(fit.nu_hat) << '\n';
  if (fit.lambda_hat_sq_uncorrected) {
    os << "lambda_hat_sq_uncorrected,1,1," << format6(*fit.lambda_hat_sq_uncorrected) << '\n';
  }
  append_matrix_rows(os, "S2", fit.S2);
  append_matrix_rows(os, "var_theta_sts", fit.var_theta_sts);
  append_matrix_rows(os, "Sigma_N_hat", fit.Sigma_N_hat);
  append_matrix_rows(os, "D_hat", fit.D_hat);
  return os.str();
}

std::string human_summary(const LoadedFit& lf) {
  const StsFit& fit = lf.fit;
  std::ostringstream os;
  os << "model " << lf.model->name() << ", " << lf.data.size() << " individuals, "
     << lf.data.total_observations() << " observations\n";
  os << "converged fits: " << fit.converged_count() << "  dropped: " << fit.dropped << '\n';
  os << "theta_STS:";
  for (Eigen::Index k = 0; k < fit.theta_sts.size(); ++k) os << ' ' << format6(fit.theta_sts[k]);
  os << "\nsigma^2_M: " << format6(fit.sigma_sq_M) << "\nnu_hat: " << format6(fit.nu_hat) << '\n';
  if (fit.lambda_hat_sq_uncorrected) {
    os << "lambda_hat^2 (uncorrected): " << format6(*fit.lambda_hat_sq_uncorrected) << '\n';
  }
  os << "D_hat diagonal:";
  for (Eigen::Index k = 0; k < fit.D_hat.rows(); ++k) os << ' ' << format6(fit.D_hat(k, k));
  os << '\n';
  return os.str();
}

json base_manifest(const std::string& command, const std::string& canonical, std::uint64_t seed) {
  json m;
  m["command"] = command;
  m["config_hash"] = hex64(config_hash(canonical));
  m["config"] = canonical;
  m["seed"] = seed;
  m["version"] = kVersion;
  return m;
}

std::string fit_canonical(const FitArgs& a) {
  std::ostringstream os;
  os << "dataset=" << a.dataset << "\ninit=" << a.init << "\nmax_iterations=" << a.max_iterations
     << "\nmodel=" << a.model << '\n';
  return os.str();
}

void write_fit_outputs(const LoadedFit& lf, const fs::path& dir) {
  write_file(dir / "individuals.csv", individuals_csv(lf));
  write_file(dir / "population.csv", population_csv(lf.fit));
  write_file(dir / "summary.txt", human_summary(lf));
}

int cmd_fit(const FitArgs& args, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  const LoadedFit lf = load_and_fit(args);
  const fs::path dir(args.out_dir);
  ensure_dir(dir);
  write_fit_outputs(lf, dir);
  json manifest = base_manifest("fit", fit_canonical(args), 0);
  manifest["drop_counts"] = {{"stage_one", lf.fit.dropped}};
  manifest["wall_time_seconds"] = seconds_since(start);
  manifest["population"] = {{"theta_sts", std::vector<double>(lf.fit.theta_sts.data(),
                                                              lf.fit.theta_sts.data() +
                                                                  lf.fit.theta_sts.size())},
                            {"S2", matrix_json(lf.fit.S2)},
                            {"D_hat", matrix_json(lf.fit.D_hat)}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  out << human_summary(lf);
  return kExitOk;
}

// ---- recycle -----------------------------------------------------------------

struct RecycleArgs {
  FitArgs fit;
  std::size_t B = 1000;
  std::string inner = "dirichlet";
  std::string outer = "dirichlet";
  double ci_level = 0.95;
  std::string ci_method = "basic_studentized";
  std::uint64_t seed = 1;
  bool debug_unit_weights = false;
  std::size_t threads = 0;
};

int cmd_recycle(const RecycleArgs& args, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  RecycleConfig cfg;
  try {
    cfg.B = args.B;
    cfg.inner_scheme = parse_weight_scheme(args.inner);
    cfg.outer_scheme = parse_weight_scheme(args.outer);
    cfg.ci_level = args.ci_level;
    cfg.ci_method = parse_ci_method(args.ci_method);
    cfg.unit_weights = args.debug_unit_weights;
    cfg.fit_options.max_iterations = args.fit.max_iterations;
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  cfg.threads = resolve_threads(args.threads);

  const LoadedFit lf = load_and_fit(args.fit);
  const RecycleRun run = recycle_bootstrap(*lf.model, lf.data, lf.fit, cfg, args.seed);
  if (run.intervals.empty()) {
    throw EstimationError("only " + std::to_string(run.replicates.rows()) +
                          " replicates survived; at least 100 are needed for intervals");
  }

  const fs::path dir(args.fit.out_dir);
  ensure_dir(dir);
  write_fit_outputs(lf, dir);

  const int p = lf.model->parameter_count();
  std::ostringstream reps;
  reps << "replicate";
  for (int k = 1; k <= p; ++k) reps << ",theta_" << k;
  reps << '\n';
  for (Eigen::Index b = 0; b < run.replicates.rows(); ++b) {
    reps << run.replicate_index[static_cast<std::size_t>(b)];
    for (int k = 0; k < p; ++k) reps << ',' << format_exact(run.replicates(b, k));
    reps << '\n';
  }
  write_file(dir / "replicates.csv", reps.str());

  const double n_used = static_cast<double>(lf.fit.converged_count());
  std::ostringstream iv;
  iv << "coordinate,theta_sts,lo,hi,length,lambda_hat,ks_to_normal\n";
  std::ostringstream human;
  human << "recycled " << run.replicates.rows() << " of " << cfg.B << " replicates ("
        << run.drop_count << " dropped, " << run.retry_count << " retries), tau_N = "
        << format6(run.tau_N) << '\n';
  if (run.unreliable) human << "warning: more than 20% of replicates dropped; run unreliable\n";
  for (int k = 0; k < p; ++k) {
    const double lambda_hat = std::sqrt(lf.fit.S2(k, k) / (n_used - 1.0));
    const double ks = lambda_hat > 0.0 ? ks_to_normal(run, lambda_hat, k)
                                       : std::numeric_limits<double>::quiet_NaN();
    const Interval& ci = run.intervals[static_cast<std::size_t>(k)];
    iv << k + 1 << ',' << format6(run.theta_sts[k]) << ',' << format6(ci.lo) << ','
       << format6(ci.hi) << ',' << format6(ci.length()) << ',' << format6(lambda_hat) << ','
       << format6(ks) << '\n';
    human << "theta_" << k + 1 << ": " << format6(run.theta_sts[k]) << "  "
          << format6(cfg.ci_level * 100.0) << "% CI [" << format6(ci.lo) << ", "
          << format6(ci.hi) << "]  KS(R*, N(0,1)) = " << format6(ks) << '\n';
  }
  write_file(dir / "intervals.csv", iv.str());
  write_file(dir / "recycle_summary.txt", human.str());

  std::ostringstream canonical;
  canonical << fit_canonical(args.fit) << "B=" << cfg.B << "\nci_level=" << format_exact(cfg.ci_level)
            << "\nci_method=" << args.ci_method << "\ndebug_unit_weights=" << args.debug_unit_weights
            << "\ninner_weights=" << args.inner << "\nouter_weights=" << args.outer << '\n';
  json manifest = base_manifest("recycle", canonical.str(), args.seed);
  manifest["drop_counts"] = {{"stage_one", lf.fit.dropped},
                             {"replicates", run.drop_count},
                             {"retries", run.retry_count}};
  manifest["unreliable"] = run.unreliable;
  manifest["wall_time_seconds"] = seconds_since(start);
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  out << human_summary(lf) << human.str();
  return kExitOk;
}

// ---- simulate ----------------------------------------------------------------

struct SimulateArgs {
  std::string config;
  std::string out_dir = "rsts_sim";
  bool paper_scale = false;
  std::size_t replications = 0;  // 0: keep config value
  std::size_t threads = 0;
};

const std::vector<std::string> kSimulateKeys = {
    "experiment",  "model",       "theta0",        "grid_N",   "grid_n",         "sigma",
    "lambda",      "error_noise", "effect_noise",  "t_range",  "replications",   "seed",
    "init_offset", "mode",        "B",             "inner_weights", "outer_weights", "ci_level",
    "ci_method",   "outer_combination", "title"};

fs::path resolve_config_path(const std::string& name) {
  fs::path path(name);
  if (fs::exists(path)) return path;
#ifdef RSTS_CONFIG_DIR
  for (const fs::path& candidate : {fs::path(RSTS_CONFIG_DIR) / name,
                                   fs::path(RSTS_CONFIG_DIR) / (name + ".cfg")}) {
    if (fs::exists(candidate)) return candidate;
  }
#endif
  throw UsageError("config '" + name + "' not found");
}

SimDesign design_from_config(const KeyValueConfig& cfg) {
  SimDesign d;
  d.model = cfg.get_string("model", "biexp4");
  ModelPtr model;
  try {
    model = make_model(d.model);
  } catch (const std::invalid_argument&) {
    throw ParseError("config key 'model': unknown model '" + d.model + "'");
  }
  const auto theta0 = cfg.get_doubles("theta0");
  d.theta0.resize(static_cast<Eigen::Index>(theta0.size()));
  for (std::size_t k = 0; k < theta0.size(); ++k) d.theta0[static_cast<Eigen::Index>(k)] = theta0[k];
  if (d.theta0.size() != model->parameter_count()) {
    throw ParseError("config key 'theta0' needs " + std::to_string(model->parameter_count()) +
                     " values for model '" + d.model + "'");
  }
  d.sigma = cfg.get_double("sigma");
  d.lambda = cfg.get_double("lambda");
  const auto noise = [&](const std::string& key) {
    try {
      return parse_noise_kind(cfg.get_string(key, "truncated_normal"));
    } catch (const std::invalid_argument& e) {
      throw ParseError("config key '" + key + "': " + e.what());
    }
  };
  d.error_noise = noise("error_noise");
  d.effect_noise = noise("effect_noise");
  if (cfg.has("t_range")) {
    const auto range = cfg.get_doubles("t_range");
    if (range.size() != 2) throw ParseError("config key 't_range' needs two values");
    d.t_lo = range[0];
    d.t_hi = range[1];
  }
  d.replications = cfg.get_uint("replications");
  d.seed = cfg.get_uint("seed");
  d.init_offset = cfg.get_double("init_offset", 0.1);
  return d;
}

RecycleConfig recycle_from_config(const KeyValueConfig& cfg) {
  RecycleConfig r;
  const auto wrap = [](const std::string& key, auto fn) {
    try {
      return fn();
    } catch (const std::invalid_argument& e) {
      throw ParseError("config key '" + key + "': " + e.what());
    }
  };
  r.B = cfg.get_uint("B", 500);
  r.inner_scheme = wrap("inner_weights",
                        [&] { return parse_weight_scheme(cfg.get_string("inner_weights", "dirichlet")); });
  r.outer_scheme = wrap("outer_weights",
                        [&] { return parse_weight_scheme(cfg.get_string("outer_weights", "dirichlet")); });
  r.ci_level = cfg.get_double("ci_level", 0.95);
  r.ci_method = wrap("ci_method", [&] {
    return parse_ci_method(cfg.get_string("ci_method", "basic_studentized"));
  });
  const std::string combination = cfg.get_string("outer_combination", "self_normalized");
  if (combination == "self_normalized") {
    r.combination = OuterCombination::self_normalized;
  } else if (combination == "literal") {
    r.combination = OuterCombination::literal;
  } else {
    throw ParseError("config key 'outer_combination' must be self_normalized or literal");
  }
  wrap("B", [&] {
    r.validate();
    return 0;
  });
  return r;
}

int cmd_simulate(const SimulateArgs& args, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  KeyValueConfig cfg = KeyValueConfig::load(resolve_config_path(args.config));
  cfg.require_known(kSimulateKeys);
  const std::string experiment = cfg.get_string("experiment");
  if (experiment != "mse" && experiment != "coverage" && experiment != "clt") {
    throw ParseError("config key 'experiment' must be mse, coverage or clt");
  }
  if (args.paper_scale) {
    cfg.set("replications", experiment == "mse" ? "1000" : "2000");
    if (cfg.has("B") || experiment != "mse") cfg.set("B", "1000");
  }
  if (args.replications > 0) cfg.set("replications", std::to_string(args.replications));

  const SimDesign base = design_from_config(cfg);
  const auto Ns = cfg.get_sizes("grid_N");
  const auto ns = cfg.get_sizes("grid_n");
  const auto grid = make_grid(Ns, ns);
  const std::size_t threads = resolve_threads(args.threads);
  const std::string title = cfg.get_string("title", args.config);

  const fs::path dir(args.out_dir);
  ensure_dir(dir);
  json manifest = base_manifest("simulate", cfg.canonical(), base.seed);
  manifest["experiment"] = experiment;
  manifest["replications"] = base.replications;
  manifest["paper_scale"] = args.paper_scale;
  manifest["init_rule"] = "theta0 + " + format6(base.init_offset) + " per coordinate";
  manifest["error_noise"] = std::string(to_string(base.error_noise));
  manifest["effect_noise"] = std::string(to_string(base.effect_noise));

  if (experiment == "clt") {
    const RecycleConfig rcfg = recycle_from_config(cfg);
    std::ostringstream csv;
    csv << "N,n,ks_sampling,ks_recycled,ks_two_sample,replicate_failures\n";
    json drops = json::array();
    for (const auto& cell : grid) {
      SimDesign d = base;
      d.N = cell.N;
      d.n = cell.n;
      const CltDiagnostics diag = diagnose_clt(d, base.replications, rcfg, threads);
      csv << cell.N << ',' << cell.n << ',' << format6(diag.ks_sampling) << ','
          << format6(diag.ks_recycled) << ',' << format6(diag.ks_two_sample) << ','
          << diag.replicate_failures << '\n';
      drops.push_back({{"N", cell.N}, {"n", cell.n}, {"replicate_failures", diag.replicate_failures}});
    }
    write_file(dir / "clt.csv", csv.str());
    manifest["B"] = rcfg.B;
    manifest["drop_counts"] = drops;
    manifest["wall_time_seconds"] = seconds_since(start);
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
    out << csv.str();
    return kExitOk;
  }

  SimReport report;
  if (experiment == "mse") {
    report = run_mse_experiment(base, grid, threads);
  } else {
    CoverageMode mode;
    try {
      mode = parse_coverage_mode(cfg.get_string("mode", "asymptotic"));
    } catch (const std::invalid_argument& e) {
      throw ParseError(std::string("config key 'mode': ") + e.what());
    }
    const RecycleConfig rcfg =
        mode == CoverageMode::recycled ? recycle_from_config(cfg) : RecycleConfig{};
    if (mode == CoverageMode::recycled) manifest["B"] = rcfg.B;
    report = run_coverage_experiment(base, grid, mode, rcfg, cfg.get_double("ci_level", 0.95),
                                     threads);
  }

  std::ostringstream csv;
  write_report_csv(csv, report);
  write_file(dir / "report.csv", csv.str());
  std::istringstream reread(csv.str());
  const auto rows = read_report_csv(reread);
  for (const std::string metric : {"mse", "coverage", "mean_ci_length"}) {
    const std::string svg = render_metric_svg(rows, metric, title + ": " + metric);
    if (!svg.empty()) write_file(dir / (metric + ".svg"), svg);
  }

  json drops = json::array();
  for (const auto& c : report.cells) {
    drops.push_back({{"N", c.N},
                     {"n", c.n},
                     {"stage_one_drops", c.stage_one_drops},
                     {"stage_one_fits", c.stage_one_fits},
                     {"replicate_failures", c.replicate_failures},
                     {"bootstrap_drops", c.bootstrap_drops},
                     {"bootstrap_replicates", c.bootstrap_replicates},
                     {"flagged", c.flagged}});
  }
  manifest["drop_counts"] = drops;
  manifest["wall_time_seconds"] = seconds_since(start);
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  out << csv.str();
  for (const auto& c : report.cells) {
    if (c.flagged) {
      out << "warning: cell N=" << c.N << " n=" << c.n << " dropped more than 20% of its work\n";
    }
  }
  return kExitOk;
}

// ---- check-weights -----------------------------------------------------------

struct CheckWeightsArgs {
  std::string scheme;
  std::size_t n = 50;
  std::size_t draws = 100000;
  std::uint64_t seed = 1;
};

int cmd_check_weights(const CheckWeightsArgs& args, std::ostream& out) {
  WeightScheme scheme;
  try {
    scheme = parse_weight_scheme(args.scheme);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  RandomStream rng = derive_stream(args.seed, {0x77ULL});
  AssumptionWReport report;
  try {
    report = check_assumption_w(scheme, args.n, args.draws, rng);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  out << "scheme " << report.scheme << ", n = " << report.n << ", draws = " << report.draws
      << ", tau^2 = " << format6(report.tau_sq) << '\n';
  out << std::left << std::setw(18) << "check" << std::setw(14) << "estimate" << std::setw(14)
      << "target" << std::setw(14) << "tolerance" << "result\n";
  for (const auto& c : report.checks) {
    out << std::setw(18) << c.name << std::setw(14) << format6(c.estimate) << std::setw(14)
        << format6(c.target) << std::setw(14) << format6(c.tolerance)
        << (c.pass ? "pass" : "FAIL") << '\n';
  }
  out << (report.all_pass() ? "all checks pass\n" : "some checks FAIL\n");
  return kExitOk;
}

void add_fit_options(CLI::App& cmd, FitArgs& a) {
  cmd.add_option("dataset", a.dataset, "CSV with header id,time,value")->required();
  cmd.add_option("--model", a.model, "Model name")->check(CLI::IsMember(model_names()));
  cmd.add_option("--init", a.init, "Comma-separated starting parameters")->required();
  cmd.add_option("--out", a.out_dir, "Output directory");
  cmd.add_option("--max-iter", a.max_iterations, "LM iteration cap")->check(CLI::PositiveNumber);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Two-stage estimation and recycled bootstrap for nonlinear mixed-effects models",
               "rsts"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  FitArgs fit_args;
  CLI::App* fit = app.add_subcommand("fit", "Fit the two-stage estimator to a dataset");
  add_fit_options(*fit, fit_args);

  RecycleArgs rec_args;
  CLI::App* rec = app.add_subcommand("recycle", "Fit, then run the recycled bootstrap");
  add_fit_options(*rec, rec_args.fit);
  rec->add_option("--B", rec_args.B, "Number of recycled replicates");
  rec->add_option("--inner-weights", rec_args.inner, "Stage I* weight scheme");
  rec->add_option("--outer-weights", rec_args.outer, "Stage II* weight scheme");
  rec->add_option("--ci-level", rec_args.ci_level, "Interval coverage target");
  rec->add_option("--ci-method", rec_args.ci_method, "basic_studentized or percentile");
  rec->add_option("--seed", rec_args.seed, "Base random seed");
  rec->add_flag("--debug-unit-weights", rec_args.debug_unit_weights,
                "Force every weight to 1 (testing)");
  rec->add_option("--threads", rec_args.threads, "Worker threads");

  SimulateArgs sim_args;
  CLI::App* sim = app.add_subcommand("simulate", "Run a Monte Carlo experiment from a config");
  sim->add_option("config", sim_args.config, "Config file or bundled config name")->required();
  sim->add_option("--out", sim_args.out_dir, "Output directory");
  sim->add_flag("--paper-scale", sim_args.paper_scale, "Use full replication counts");
  sim->add_option("--replications", sim_args.replications, "Override the replication count");
  sim->add_option("--threads", sim_args.threads, "Worker threads");

  CheckWeightsArgs cw_args;
  CLI::App* cw = app.add_subcommand("check-weights", "Moment diagnostics for a weight scheme");
  cw->add_option("--weights", cw_args.scheme, "multinomial, dirichlet or exponential")->required();
  cw->add_option("--n", cw_args.n, "Weight vector length");
  cw->add_option("--draws", cw_args.draws, "Monte Carlo draws");
  cw->add_option("--seed", cw_args.seed, "Random seed");

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }

  try {
    if (*fit) return cmd_fit(fit_args, out);
    if (*rec) return cmd_recycle(rec_args, out);
    if (*sim) return cmd_simulate(sim_args, out);
    if (*cw) return cmd_check_weights(cw_args, out);
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const EstimationError& e) {
    err << "estimation failed: " << e.what() << '\n';
    return kExitEstimation;
  } catch (const SingularDesignError& e) {
    err << "estimation failed: " << e.what() << '\n';
    return kExitEstimation;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    err << "estimation failed: " << e.what() << '\n';
    return kExitEstimation;
  }
  return kExitInput;
}

}  // namespace rsts::cli
