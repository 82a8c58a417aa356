#include "rsts/simulate.hpp"

#include "rsts/errors.hpp"
#include "rsts/parallel.hpp"
#include "rsts/stats.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>

namespace rsts {

NoiseKind parse_noise_kind(std::string_view name) {
  if (name == "truncated_normal") return NoiseKind::truncated_normal;
  if (name == "normal") return NoiseKind::normal;
  if (name == "laplace") return NoiseKind::laplace;
  throw std::invalid_argument("unknown noise kind '" + std::string(name) +
                              "' (expected truncated_normal, normal or laplace)");
}

std::string_view to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::truncated_normal: return "truncated_normal";
    case NoiseKind::normal: return "normal";
    case NoiseKind::laplace: return "laplace";
  }
  return "?";
}

std::string_view to_string(CoverageMode mode) {
  return mode == CoverageMode::asymptotic ? "asymptotic" : "recycled";
}

CoverageMode parse_coverage_mode(std::string_view name) {
  if (name == "asymptotic") return CoverageMode::asymptotic;
  if (name == "recycled") return CoverageMode::recycled;
  throw std::invalid_argument("unknown coverage mode '" + std::string(name) +
                              "' (expected asymptotic or recycled)");
}

double truncated_normal_sd() {
  const double a = kTruncationBound;
  const double density = std::exp(-0.5 * a * a) / std::sqrt(2.0 * std::numbers::pi);
  const double mass = std::erf(a / std::numbers::sqrt2);
  return std::sqrt(1.0 - 2.0 * a * density / mass);
}

void sample_noise(NoiseKind kind, double scale, std::span<double> out, RandomStream& rng) {
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw std::invalid_argument("noise scale must be positive");
  }
  switch (kind) {
    case NoiseKind::normal: {
      std::normal_distribution<double> dist(0.0, scale);
      for (double& v : out) v = dist(rng);
      return;
    }
    case NoiseKind::laplace: {
      const double b = scale / std::numbers::sqrt2;
      for (double& v : out) {
        const double u = rng.uniform01() - 0.5;
        v = -b * std::copysign(std::log1p(-2.0 * std::abs(u)), u);
      }
      return;
    }
    case NoiseKind::truncated_normal: {
      static const double kSd = truncated_normal_sd();
      std::normal_distribution<double> dist;
      const double factor = scale / kSd;
      for (double& v : out) {
        double z;
        do {
          z = dist(rng);
        } while (std::abs(z) > kTruncationBound);
        v = factor * z;
      }
      return;
    }
  }
}

std::vector<double> sample_noise(NoiseKind kind, double scale, std::size_t count,
                                 RandomStream& rng) {
  std::vector<double> out(count);
  sample_noise(kind, scale, out, rng);
  return out;
}

void SimDesign::validate(const Model& m) const {
  const auto p = static_cast<std::size_t>(m.parameter_count());
  if (theta0.size() != m.parameter_count()) {
    throw std::invalid_argument("theta0 has " + std::to_string(theta0.size()) +
                                " entries; model '" + std::string(m.name()) + "' needs " +
                                std::to_string(p));
  }
  if (N < 2) throw std::invalid_argument("design needs N >= 2");
  if (n <= p) throw std::invalid_argument("design needs n > p");
  if (!(sigma >= 0.0) || !(lambda >= 0.0)) {
    throw std::invalid_argument("sigma and lambda must be nonnegative");
  }
  if (!(t_hi > t_lo) || t_lo < 0.0) throw std::invalid_argument("time range must be 0 <= lo < hi");
  if (replications == 0) throw std::invalid_argument("replications must be positive");
}

SimulatedData gen_dataset(const Model& model, const SimDesign& design, RandomStream& rng) {
  design.validate(model);
  const int p = model.parameter_count();
  SimulatedData out;
  out.data.individuals.resize(design.N);
  out.effects.resize(design.N);
  out.theta.resize(design.N);
  std::uniform_real_distribution<double> time(design.t_lo, design.t_hi);
  std::vector<double> eps(design.n, 0.0);
  for (std::size_t i = 0; i < design.N; ++i) {
    IndividualData& ind = out.data.individuals[i];
    ind.id = std::to_string(i + 1);
    ind.x.resize(design.n);
    ind.y.resize(design.n);
    for (double& t : ind.x) t = time(rng);

    ParamVector b = ParamVector::Zero(p);
    if (design.lambda > 0.0) {
      sample_noise(design.effect_noise, design.lambda, std::span<double>(b.data(), p), rng);
    }
    out.effects[i] = b;
    out.theta[i] = design.theta0 + b;

    model.evaluate(out.theta[i], ind.x, ind.y, {});
    if (design.sigma > 0.0) {
      sample_noise(design.error_noise, design.sigma, eps, rng);
      for (std::size_t j = 0; j < design.n; ++j) ind.y[j] += eps[j];
    }
  }
  return out;
}

RandomStream replicate_stream(const SimDesign& design, std::size_t replicate) {
  return derive_stream(design.seed, {static_cast<std::uint64_t>(design.N),
                                     static_cast<std::uint64_t>(design.n),
                                     static_cast<std::uint64_t>(replicate)});
}

std::vector<GridCell> make_grid(std::span<const std::size_t> Ns, std::span<const std::size_t> ns) {
  std::vector<GridCell> grid;
  for (std::size_t N : Ns)
    for (std::size_t n : ns) grid.push_back({N, n});
  return grid;
}

namespace {

struct ReplicateOutcome {
  bool ok = false;
  double sq_error = 0.0;
  bool covered = false;
  double length = 0.0;
  std::size_t stage_one_drops = 0;
  std::size_t stage_one_fits = 0;
  std::size_t bootstrap_drops = 0;
  std::size_t bootstrap_replicates = 0;
};

struct ReplicateFit {
  SimulatedData sim;
  StsFit fit;
};

ReplicateFit fit_replicate(const Model& model, const SimDesign& design, std::size_t r) {
  RandomStream rng = replicate_stream(design, r);
  ReplicateFit out{gen_dataset(model, design, rng), {}};
  const ParamVector init =
      design.theta0 + ParamVector::Constant(design.theta0.size(), design.init_offset);
  const auto bounds = model.default_bounds();
  const ParamVector start = bounds ? bounds->clamp(init) : init;
  out.fit = fit_sts(model, out.sim.data, std::span<const ParamVector>(&start, 1),
                    design.fit_options);
  return out;
}

CellResult reduce_cell(const SimDesign& design, std::span<const ReplicateOutcome> outcomes,
                       bool with_intervals) {
  CellResult cell;
  cell.N = design.N;
  cell.n = design.n;
  double sq_sum = 0.0;
  double length_sum = 0.0;
  std::size_t covered = 0;
  for (const auto& o : outcomes) {
    cell.stage_one_drops += o.stage_one_drops;
    cell.stage_one_fits += o.stage_one_fits;
    cell.bootstrap_drops += o.bootstrap_drops;
    cell.bootstrap_replicates += o.bootstrap_replicates;
    if (!o.ok) {
      ++cell.replicate_failures;
      continue;
    }
    ++cell.replicates_used;
    sq_sum += o.sq_error;
    length_sum += o.length;
    if (o.covered) ++covered;
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double used = static_cast<double>(cell.replicates_used);
  cell.mse = cell.replicates_used > 0 ? sq_sum / used : nan;
  cell.coverage = with_intervals && cell.replicates_used > 0 ? covered / used : nan;
  cell.mean_ci_length = with_intervals && cell.replicates_used > 0 ? length_sum / used : nan;
  cell.drop_rate = cell.stage_one_fits > 0 ? static_cast<double>(cell.stage_one_drops) /
                                                 static_cast<double>(cell.stage_one_fits)
                                           : 0.0;
  const double boot_rate = cell.bootstrap_replicates > 0
                               ? static_cast<double>(cell.bootstrap_drops) /
                                     static_cast<double>(cell.bootstrap_replicates)
                               : 0.0;
  const double fail_rate =
      static_cast<double>(cell.replicate_failures) / static_cast<double>(outcomes.size());
  cell.flagged = cell.drop_rate > 0.2 || boot_rate > 0.2 || fail_rate > 0.2;
  return cell;
}

SimDesign cell_design(const SimDesign& base, const GridCell& cell) {
  SimDesign d = base;
  d.N = cell.N;
  d.n = cell.n;
  return d;
}

}  // namespace

SimReport run_mse_experiment(const SimDesign& base, std::span<const GridCell> grid,
                             std::size_t threads) {
  const ModelPtr model = make_model(base.model);
  SimReport report;
  report.experiment = "mse";
  report.base = base;
  for (const GridCell& gc : grid) {
    const SimDesign design = cell_design(base, gc);
    design.validate(*model);
    std::vector<ReplicateOutcome> outcomes(design.replications);
    parallel_for(design.replications, threads, [&](std::size_t r) {
      ReplicateOutcome& o = outcomes[r];
      o.stage_one_fits = design.N;
      try {
        const ReplicateFit rf = fit_replicate(*model, design, r);
        o.stage_one_drops = rf.fit.dropped;
        o.sq_error = (rf.fit.theta_sts - design.theta0).squaredNorm();
        o.ok = true;
      } catch (const EstimationError&) {
        o.stage_one_drops = design.N;
      } catch (const SingularDesignError&) {
      }
    });
    report.cells.push_back(reduce_cell(design, outcomes, false));
  }
  return report;
}

SimReport run_coverage_experiment(const SimDesign& base, std::span<const GridCell> grid,
                                  CoverageMode mode, const RecycleConfig& recycle, double level,
                                  std::size_t threads) {
  const ModelPtr model = make_model(base.model);
  if (model->parameter_count() != 1) {
    throw std::invalid_argument("coverage experiments need a one-parameter model");
  }
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("CI level must be in (0, 1)");
  if (mode == CoverageMode::recycled) recycle.validate();
  const double z = normal_quantile((1.0 + level) / 2.0);

  SimReport report;
  report.experiment = "coverage";
  report.mode = std::string(to_string(mode));
  report.base = base;
  for (const GridCell& gc : grid) {
    const SimDesign design = cell_design(base, gc);
    design.validate(*model);
    const double truth = design.theta0[0];
    std::vector<ReplicateOutcome> outcomes(design.replications);
    parallel_for(design.replications, threads, [&](std::size_t r) {
      ReplicateOutcome& o = outcomes[r];
      o.stage_one_fits = design.N;
      try {
        const ReplicateFit rf = fit_replicate(*model, design, r);
        o.stage_one_drops = rf.fit.dropped;
        const double estimate = rf.fit.theta_sts[0];
        o.sq_error = (estimate - truth) * (estimate - truth);
        Interval ci;
        if (mode == CoverageMode::asymptotic) {
          const double half = z * std::sqrt(*rf.fit.lambda_hat_sq_uncorrected /
                                            static_cast<double>(rf.fit.converged_count()));
          ci = {estimate - half, estimate + half};
        } else {
          RecycleConfig cfg = recycle;
          cfg.threads = 1;
          cfg.ci_level = level;
          const std::uint64_t seed = derive_stream(design.seed, {design.N, design.n, r, 0x72637963ULL})();
          const RecycleRun run = recycle_bootstrap(*model, rf.sim.data, rf.fit, cfg, seed);
          o.bootstrap_drops = run.drop_count;
          o.bootstrap_replicates = cfg.B;
          if (run.intervals.empty()) return;
          ci = run.intervals[0];
        }
        o.covered = ci.contains(truth);
        o.length = ci.length();
        o.ok = true;
      } catch (const EstimationError&) {
        o.stage_one_drops = design.N;
      } catch (const SingularDesignError&) {
      }
    });
    report.cells.push_back(reduce_cell(design, outcomes, true));
  }
  return report;
}

CltDiagnostics diagnose_clt(const SimDesign& design, std::size_t R, const RecycleConfig& recycle,
                            std::size_t threads) {
  const ModelPtr model = make_model(design.model);
  if (model->parameter_count() != 1) {
    throw std::invalid_argument("CLT diagnostics need a one-parameter model");
  }
  if (!(design.lambda > 0.0)) {
    throw std::invalid_argument("R_N divides by lambda; lambda must be positive");
  }
  if (R < 2) throw std::invalid_argument("CLT diagnostics need at least two replicates");
  design.validate(*model);
  recycle.validate();

  const double scale = std::sqrt(static_cast<double>(design.N)) / design.lambda;
  std::vector<std::optional<double>> values(R);
  parallel_for(R, threads, [&](std::size_t r) {
    try {
      const ReplicateFit rf = fit_replicate(*model, design, r);
      values[r] = scale * (rf.fit.theta_sts[0] - design.theta0[0]);
    } catch (const EstimationError&) {
    } catch (const SingularDesignError&) {
    }
  });
  CltDiagnostics out;
  for (const auto& v : values) {
    if (v) {
      out.sampling.push_back(*v);
    } else {
      ++out.replicate_failures;
    }
  }
  if (out.sampling.empty()) throw EstimationError("every CLT replicate failed");
  out.ks_sampling = ks_distance_to_normal(out.sampling);

  // The recycled side uses a dataset outside the R sampling replicates.
  const ReplicateFit base = fit_replicate(*model, design, R);
  RecycleConfig cfg = recycle;
  cfg.threads = threads;
  const std::uint64_t seed = derive_stream(design.seed, {design.N, design.n, R, 0x636c74ULL})();
  const RecycleRun run = recycle_bootstrap(*model, base.sim.data, base.fit, cfg, seed);
  out.recycled = studentized_replicates(run, design.lambda, 0);
  out.ks_recycled = ks_distance_to_normal(out.recycled);
  out.ks_two_sample = ks_distance_two_sample(out.recycled, out.sampling);
  return out;
}

}  // namespace rsts
