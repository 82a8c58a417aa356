#include "rsts/recycle.hpp"

#include "rsts/errors.hpp"
#include "rsts/parallel.hpp"
#include "rsts/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

namespace rsts {

std::size_t default_thread_count() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

CiMethod parse_ci_method(std::string_view name) {
  if (name == "basic_studentized") return CiMethod::basic_studentized;
  if (name == "percentile") return CiMethod::percentile;
  throw std::invalid_argument("unknown CI method '" + std::string(name) +
                              "' (expected basic_studentized or percentile)");
}

std::string_view to_string(CiMethod method) {
  return method == CiMethod::basic_studentized ? "basic_studentized" : "percentile";
}

void RecycleConfig::validate() const {
  if (B < 100) throw std::invalid_argument("recycling needs B >= 100");
  if (!(ci_level > 0.0 && ci_level < 1.0)) throw std::invalid_argument("ci_level must be in (0, 1)");
  if (max_retries < 0) throw std::invalid_argument("max_retries must be nonnegative");
}

ParamVector recycle_once(const Model& model, const HierDataset& data, const StsFit& base_fit,
                         const RecycleConfig& cfg, std::uint64_t seed, std::size_t replicate,
                         int attempt) {
  const std::size_t n_used = base_fit.included.size();
  if (n_used < 2 || base_fit.theta_hat_i.size() != n_used) {
    throw std::invalid_argument("base fit has fewer than two converged individuals");
  }
  const auto rep = static_cast<std::uint64_t>(replicate);
  const auto att = static_cast<std::uint64_t>(attempt);

  std::vector<ParamVector> refits;
  refits.reserve(n_used);
  std::vector<double> w;
  for (std::size_t k = 0; k < n_used; ++k) {
    const IndividualData& ind = data.individuals[base_fit.included[k]];
    w.resize(ind.size());
    if (cfg.unit_weights) {
      std::fill(w.begin(), w.end(), 1.0);
    } else {
      RandomStream rng = derive_stream(seed, {rep, att, hash_string(ind.id)});
      draw_weights(cfg.inner_scheme, w, rng);
    }
    FitResult fit;
    try {
      fit = fit_wls(model, ind, w, base_fit.theta_hat_i[k], cfg.fit_options);
    } catch (const RankDeficientError& e) {
      throw ReplicateFailure(e.what());
    } catch (const NumericDomainError& e) {
      throw ReplicateFailure(e.what());
    }
    if (!fit.converged) {
      throw ReplicateFailure("refit of individual '" + ind.id + "' did not converge");
    }
    refits.push_back(fit.theta);
  }

  std::vector<double> u(n_used, 1.0);
  if (!cfg.unit_weights) {
    RandomStream rng = derive_stream(seed, {rep, att, 0xfeedULL, static_cast<std::uint64_t>(n_used)});
    draw_weights(cfg.outer_scheme, u, rng);
  }
  // Outer weights go to individuals in id order, not storage order.
  std::vector<std::size_t> order(n_used);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return data.individuals[base_fit.included[a]].id < data.individuals[base_fit.included[b]].id;
  });
  ParamVector sum = ParamVector::Zero(base_fit.theta_sts.size());
  double total = 0.0;
  std::vector<std::size_t> rank(n_used);
  for (std::size_t r = 0; r < n_used; ++r) rank[order[r]] = r;
  for (std::size_t k = 0; k < n_used; ++k) {
    sum += u[rank[k]] * refits[k];
    total += u[rank[k]];
  }
  if (cfg.combination == OuterCombination::self_normalized) return sum / total;
  return sum / static_cast<double>(n_used);
}

RecycleRun recycle_bootstrap(const Model& model, const HierDataset& data, const StsFit& base_fit,
                             const RecycleConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const Eigen::Index p = base_fit.theta_sts.size();
  struct Slot {
    std::optional<ParamVector> value;
    std::size_t retries = 0;
  };
  std::vector<Slot> slots(cfg.B);
  parallel_for(cfg.B, cfg.threads, [&](std::size_t b) {
    for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
      try {
        slots[b].value = recycle_once(model, data, base_fit, cfg, seed, b, attempt);
        return;
      } catch (const ReplicateFailure&) {
        if (attempt < cfg.max_retries) ++slots[b].retries;
      }
    }
  });

  RecycleRun run;
  run.theta_sts = base_fit.theta_sts;
  run.N = base_fit.included.size();
  run.tau_N = std::sqrt(tau_sq(cfg.outer_scheme, run.N));
  std::size_t kept = 0;
  for (const auto& s : slots) {
    run.retry_count += s.retries;
    if (s.value) ++kept;
  }
  run.drop_count = cfg.B - kept;
  run.unreliable = static_cast<double>(run.drop_count) > 0.2 * static_cast<double>(cfg.B);
  run.replicates.resize(static_cast<Eigen::Index>(kept), p);
  Eigen::Index row = 0;
  for (std::size_t b = 0; b < slots.size(); ++b) {
    if (!slots[b].value) continue;
    run.replicates.row(row++) = slots[b].value->transpose();
    run.replicate_index.push_back(b);
  }
  if (kept >= 100) run.intervals = build_ci(run, cfg.ci_level, cfg.ci_method);
  return run;
}

std::vector<Interval> build_ci(const RecycleRun& run, double level, CiMethod method) {
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("CI level must be in (0, 1)");
  if (run.replicates.rows() < 100) {
    throw EstimationError("confidence intervals need at least 100 surviving replicates, have " +
                          std::to_string(run.replicates.rows()));
  }
  const double lo_prob = (1.0 - level) / 2.0;
  const double hi_prob = (1.0 + level) / 2.0;
  std::vector<Interval> out;
  std::vector<double> pivot(static_cast<std::size_t>(run.replicates.rows()));
  for (Eigen::Index k = 0; k < run.replicates.cols(); ++k) {
    const double center = run.theta_sts[k];
    for (Eigen::Index b = 0; b < run.replicates.rows(); ++b) {
      pivot[static_cast<std::size_t>(b)] = (run.replicates(b, k) - center) / run.tau_N;
    }
    std::sort(pivot.begin(), pivot.end());
    const double q_lo = quantile_sorted(pivot, lo_prob);
    const double q_hi = quantile_sorted(pivot, hi_prob);
    if (method == CiMethod::basic_studentized) {
      out.push_back({center - q_hi, center - q_lo});
    } else {
      out.push_back({center + q_lo, center + q_hi});
    }
  }
  return out;
}

std::vector<double> studentized_replicates(const RecycleRun& run, double lambda, int coordinate) {
  if (!(lambda > 0.0)) throw std::invalid_argument("studentization needs lambda > 0");
  if (coordinate < 0 || coordinate >= run.replicates.cols()) {
    throw std::invalid_argument("coordinate out of range");
  }
  const double scale = std::sqrt(static_cast<double>(run.N)) / (lambda * run.tau_N);
  std::vector<double> r(static_cast<std::size_t>(run.replicates.rows()));
  for (Eigen::Index b = 0; b < run.replicates.rows(); ++b) {
    r[static_cast<std::size_t>(b)] =
        scale * (run.replicates(b, coordinate) - run.theta_sts[coordinate]);
  }
  return r;
}

double ks_to_normal(const RecycleRun& run, double lambda_hat, int coordinate) {
  return ks_distance_to_normal(studentized_replicates(run, lambda_hat, coordinate));
}

}  // namespace rsts
