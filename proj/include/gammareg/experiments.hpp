#pragma once

// Seeded multi-instance sweeps over the guidance discount:
//   * bcq_noise       support-constrained learner vs. noise in the behavior support;
//   * plain_coverage  unconstrained learner vs. masked proportion;
//   * pevi_datasize   pessimistic value iteration vs. dataset size.
// Every instance draws from its own derived seed and writes into its own slot,
// so results are identical for any thread count.

#include "gammareg/analysis.hpp"
#include "gammareg/generators.hpp"
#include "gammareg/offline.hpp"
#include "gammareg/pevi.hpp"
#include "gammareg/random.hpp"

#include <atomic>
#include <cstdio>
#include <exception>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace gammareg {

enum class ExperimentKind { bcq_noise, plain_coverage, pevi_datasize };

/// How the learner treats pairs without data.
///   model   back them up through the learner's model (prior-resampled rows);
///   frozen  hold them at the optimistic table initialization r_max / (1 - gamma_e).
enum class Extrapolation { model, frozen };

inline const char* to_string(ExperimentKind k) {
    switch (k) {
    case ExperimentKind::bcq_noise: return "bcq_noise";
    case ExperimentKind::plain_coverage: return "plain_coverage";
    case ExperimentKind::pevi_datasize: return "pevi_datasize";
    }
    return "?";
}

inline const char* to_string(Extrapolation e) { return e == Extrapolation::model ? "model" : "frozen"; }

inline ExperimentKind parse_experiment_kind(const std::string& s) {
    if (s == "bcq_noise") return ExperimentKind::bcq_noise;
    if (s == "plain_coverage") return ExperimentKind::plain_coverage;
    if (s == "pevi_datasize") return ExperimentKind::pevi_datasize;
    throw ValidationError("unknown experiment kind '" + s + "'");
}

inline Extrapolation parse_extrapolation(const std::string& s) {
    if (s == "model") return Extrapolation::model;
    if (s == "frozen") return Extrapolation::frozen;
    throw ValidationError("unknown extrapolation mode '" + s + "'");
}

struct SweepConfig {
    ExperimentKind kind = ExperimentKind::bcq_noise;
    Index n_states = 100; // 900 for the full 30x30 protocol
    Index n_actions = 10;
    double gamma_e = 0.95;
    std::vector<double> gamma_grid = make_grid(0.80, 0.95, 0.01);
    std::vector<double> masked_proportions{0.5};
    std::vector<double> noise_ratios{0.04, 0.06, 0.08, 0.12};
    std::vector<std::size_t> dataset_sizes{100, 1000, 10000};
    std::size_t n_instances = 100;
    std::uint64_t base_seed = 0;
    double r_max = 1.0;
    SolveOptions solve;
    /// Unset: frozen for bcq_noise, model otherwise.
    std::optional<Extrapolation> extrapolation;
    // pevi_datasize only
    double beta_c = 1.0;
    double xi = 0.1;
    double lambda_reg = 1.0;
    unsigned threads = 1;

    Extrapolation resolved_extrapolation() const {
        if (extrapolation) return *extrapolation;
        return kind == ExperimentKind::bcq_noise ? Extrapolation::frozen : Extrapolation::model;
    }

    void validate() const {
        detail::require(n_states >= 1 && n_actions >= 1, "sweep needs n_states, n_actions >= 1");
        detail::require(n_instances >= 1, "sweep needs at least one instance");
        detail::require(gamma_e >= 0.0 && gamma_e < 1.0, "gamma_e must lie in [0, 1)");
        detail::require(!gamma_grid.empty(), "gamma grid is empty");
        for (std::size_t i = 0; i < gamma_grid.size(); ++i) {
            detail::require(gamma_grid[i] > 0.0 && gamma_grid[i] <= gamma_e, "gamma grid must lie in (0, gamma_e]");
            detail::require(i == 0 || gamma_grid[i] > gamma_grid[i - 1], "gamma grid must be ascending");
        }
        detail::require(!masked_proportions.empty(), "masked proportion list is empty");
        if (kind == ExperimentKind::bcq_noise) detail::require(!noise_ratios.empty(), "noise ratio list is empty");
        if (kind == ExperimentKind::pevi_datasize) detail::require(!dataset_sizes.empty(), "dataset size list is empty");
    }
};

struct SweepRecord {
    std::string experiment;
    Index n_states = 0;
    Index n_actions = 0;
    double mask_prop = 0.0;
    double noise_ratio = 0.0;
    std::size_t n = 0;
    double gamma = 0.0;
    std::string metric;
    double mean = 0.0;
    double std = 0.0;
    std::size_t n_instances = 0;
};

struct GammaStar {
    std::string experiment;
    std::string key;
    double gamma_star = 0.0;
    double metric_at_star = 0.0;
};

/// One group of the sweep (a fixed mask proportion / noise ratio / dataset size)
/// with its per-instance metric values, values[instance][gamma index].
struct SweepGroup {
    std::string key;
    double mask_prop = 0.0;
    double noise_ratio = 0.0;
    std::size_t n = 0;
    std::vector<std::vector<double>> values;
    std::vector<double> mean;
    std::vector<double> std;
};

struct SweepResult {
    SweepConfig config;
    std::string metric;
    std::vector<SweepGroup> groups;
    std::vector<SweepRecord> records;
    std::vector<GammaStar> gamma_stars;
};

// ---------------------------------------------------------------------------

/// Runs fn(i) for i in [0, n) on `threads` workers. The first exception is rethrown.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (std::size_t i; (i = next.fetch_add(1)) < n;) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                    next = n;
                }
            }
        });
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

/// Mean and (n-1)-denominator standard deviation, summed in index order.
inline std::pair<double, double> mean_std(const std::vector<double>& xs) {
    if (xs.empty()) return {0.0, 0.0};
    double sum = 0.0;
    for (double x : xs) sum += x;
    const double mean = sum / static_cast<double>(xs.size());
    if (xs.size() == 1) return {mean, 0.0};
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

/// Index of the smallest entry; ties go to the lowest index (the smallest gamma).
inline std::size_t argmin_first(const std::vector<double>& xs) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < xs.size(); ++i)
        if (xs[i] < xs[best]) best = i;
    return best;
}

namespace detail {

enum : std::uint64_t { kTagMdp = 1, kTagMask = 2, kTagEmpirical = 3, kTagNoise = 4, kTagData = 5 };

inline std::uint64_t tagged(std::uint64_t tag, std::size_t a = 0, std::size_t b = 0) {
    return (tag << 48) ^ (static_cast<std::uint64_t>(a) << 24) ^ static_cast<std::uint64_t>(b);
}

inline std::string format_key(const char* name, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s=%g", name, v);
    return buf;
}

inline void aggregate(SweepResult& result) {
    const auto& cfg = result.config;
    const auto& grid = cfg.gamma_grid;
    const std::string experiment = to_string(cfg.kind);
    for (auto& g : result.groups) {
        g.mean.assign(grid.size(), 0.0);
        g.std.assign(grid.size(), 0.0);
        for (std::size_t j = 0; j < grid.size(); ++j) {
            std::vector<double> column;
            column.reserve(g.values.size());
            for (const auto& row : g.values) column.push_back(row[j]);
            std::tie(g.mean[j], g.std[j]) = mean_std(column);
            result.records.push_back({experiment, cfg.n_states, cfg.n_actions, g.mask_prop, g.noise_ratio, g.n,
                                      grid[j], result.metric, g.mean[j], g.std[j], g.values.size()});
        }
        const std::size_t star = argmin_first(g.mean);
        result.gamma_stars.push_back({experiment, g.key, grid[star], g.mean[star]});
    }
}

} // namespace detail

/// Support-constrained learner on the empirical model; metric is the seen-pair
/// sup error against Q*_{gamma_e} of the true MDP.
inline SweepResult run_bcq_noise_sweep(const SweepConfig& cfg) {
    detail::require(cfg.kind == ExperimentKind::bcq_noise, "run_bcq_noise_sweep needs kind bcq_noise");
    cfg.validate();
    SweepResult result{cfg, "estimation_error_inf", {}, {}, {}};
    for (double p : cfg.masked_proportions)
        for (double nz : cfg.noise_ratios) {
            SweepGroup g;
            g.key = cfg.masked_proportions.size() > 1
                        ? detail::format_key("mask_prop", p) + ";" + detail::format_key("noise_ratio", nz)
                        : detail::format_key("noise_ratio", nz);
            g.mask_prop = p;
            g.noise_ratio = nz;
            g.values.assign(cfg.n_instances, {});
            result.groups.push_back(std::move(g));
        }
    const bool frozen = cfg.resolved_extrapolation() == Extrapolation::frozen;

    parallel_for(cfg.n_instances, cfg.threads, [&](std::size_t i) {
        const std::uint64_t seed = ExperimentSeed{cfg.base_seed, i}.instance_seed();
        const TabularMdp truth =
            random_tabular_mdp(cfg.n_states, cfg.n_actions, cfg.r_max, substream(seed, detail::kTagMdp));
        const Matrix q_star = value_iteration(truth, cfg.gamma_e, cfg.solve).q.values;
        std::size_t group = 0;
        for (std::size_t k = 0; k < cfg.masked_proportions.size(); ++k) {
            const Mask mask = random_mask(cfg.n_states, cfg.n_actions, cfg.masked_proportions[k],
                                          substream(seed, detail::tagged(detail::kTagMask, k)));
            const TabularMdp empirical =
                empirical_mdp(truth, mask, substream(seed, detail::tagged(detail::kTagEmpirical, k)));
            std::optional<UntrainedPairs> untrained;
            if (frozen) untrained = UntrainedPairs{mask, cfg.r_max / (1.0 - cfg.gamma_e)};
            for (std::size_t j = 0; j < cfg.noise_ratios.size(); ++j, ++group) {
                const Mask widened =
                    widen_mask(mask, cfg.noise_ratios[j], substream(seed, detail::tagged(detail::kTagNoise, k, j)));
                auto& row = result.groups[group].values[i];
                for (double gamma : cfg.gamma_grid) {
                    const auto learned = bcq_value_iteration(empirical, {widened}, gamma, cfg.solve, untrained);
                    row.push_back(estimation_error(learned.q.values, q_star, mask));
                }
            }
        }
    });
    detail::aggregate(result);
    return result;
}

/// Unconstrained learner on the empirical model, one group per masked proportion.
inline SweepResult run_plain_coverage_sweep(const SweepConfig& cfg) {
    detail::require(cfg.kind == ExperimentKind::plain_coverage, "run_plain_coverage_sweep needs kind plain_coverage");
    cfg.validate();
    SweepResult result{cfg, "estimation_error_inf", {}, {}, {}};
    for (double p : cfg.masked_proportions) {
        SweepGroup g;
        g.key = detail::format_key("mask_prop", p);
        g.mask_prop = p;
        g.values.assign(cfg.n_instances, {});
        result.groups.push_back(std::move(g));
    }
    const bool frozen = cfg.resolved_extrapolation() == Extrapolation::frozen;

    parallel_for(cfg.n_instances, cfg.threads, [&](std::size_t i) {
        const std::uint64_t seed = ExperimentSeed{cfg.base_seed, i}.instance_seed();
        const TabularMdp truth =
            random_tabular_mdp(cfg.n_states, cfg.n_actions, cfg.r_max, substream(seed, detail::kTagMdp));
        const Matrix q_star = value_iteration(truth, cfg.gamma_e, cfg.solve).q.values;
        for (std::size_t k = 0; k < cfg.masked_proportions.size(); ++k) {
            const Mask mask = random_mask(cfg.n_states, cfg.n_actions, cfg.masked_proportions[k],
                                          substream(seed, detail::tagged(detail::kTagMask, k)));
            const TabularMdp empirical =
                empirical_mdp(truth, mask, substream(seed, detail::tagged(detail::kTagEmpirical, k)));
            std::optional<UntrainedPairs> untrained;
            if (frozen) untrained = UntrainedPairs{mask, cfg.r_max / (1.0 - cfg.gamma_e)};
            auto& row = result.groups[k].values[i];
            for (double gamma : cfg.gamma_grid) {
                const auto learned = empirical_value_iteration(empirical, gamma, cfg.solve, untrained);
                row.push_back(estimation_error(learned.q.values, q_star, mask));
            }
        }
    });
    detail::aggregate(result);
    return result;
}

/// Per-run PEVI diagnostics kept alongside the sweep metric.
struct PeviRunStats {
    double max_weight_norm = 0.0;
    double weight_bound = 0.0;
};

/// PEVI with one-hot features and the theoretical beta; metric is SubOpt(pi_hat; gamma_e)
/// in the true MDP under mu0. Uses masked_proportions.front() for the behavior support.
inline SweepResult run_pevi_datasize_sweep(const SweepConfig& cfg, std::vector<PeviRunStats>* run_stats = nullptr) {
    detail::require(cfg.kind == ExperimentKind::pevi_datasize, "run_pevi_datasize_sweep needs kind pevi_datasize");
    cfg.validate();
    SweepResult result{cfg, "subopt_at_gamma_e", {}, {}, {}};
    const double mask_prop = cfg.masked_proportions.front();
    for (std::size_t n : cfg.dataset_sizes) {
        SweepGroup g;
        g.key = detail::format_key("N", static_cast<double>(n));
        g.mask_prop = mask_prop;
        g.n = n;
        g.values.assign(cfg.n_instances, {});
        result.groups.push_back(std::move(g));
    }
    const std::size_t per_instance = cfg.dataset_sizes.size() * cfg.gamma_grid.size();
    std::vector<PeviRunStats> stats(cfg.n_instances * per_instance);
    const FeatureMap features = FeatureMap::make_one_hot(cfg.n_states, cfg.n_actions);
    const double d = static_cast<double>(features.d());

    parallel_for(cfg.n_instances, cfg.threads, [&](std::size_t i) {
        const std::uint64_t seed = ExperimentSeed{cfg.base_seed, i}.instance_seed();
        const TabularMdp truth =
            random_tabular_mdp(cfg.n_states, cfg.n_actions, cfg.r_max, substream(seed, detail::kTagMdp));
        const auto star = value_iteration(truth, cfg.gamma_e, cfg.solve);
        const Mask mask = random_mask(cfg.n_states, cfg.n_actions, mask_prop,
                                      substream(seed, detail::tagged(detail::kTagMask, 0)));
        const Policy behavior = behavior_policy(star.q.values, mask);
        const double v_star = expected_value(truth, policy_evaluation_exact(truth, star.policy, cfg.gamma_e));
        for (std::size_t j = 0; j < cfg.dataset_sizes.size(); ++j) {
            const std::size_t n = cfg.dataset_sizes[j];
            const Dataset data =
                sample_dataset(truth, behavior, n, substream(seed, detail::tagged(detail::kTagData, j)));
            auto& row = result.groups[j].values[i];
            for (std::size_t g = 0; g < cfg.gamma_grid.size(); ++g) {
                const double gamma = cfg.gamma_grid[g];
                PeviConfig pc;
                pc.gamma = gamma;
                pc.lambda_reg = cfg.lambda_reg;
                pc.xi = cfg.xi;
                pc.r_max = cfg.r_max;
                pc.solve = cfg.solve;
                pc.beta = theoretical_beta(d, cfg.r_max, gamma, std::max<double>(1.0, static_cast<double>(n)),
                                           cfg.xi, cfg.beta_c)
                              .beta;
                const auto learned = pevi(data, features, pc);
                const double v_hat = expected_value(truth, policy_evaluation_exact(truth, learned.policy, cfg.gamma_e));
                row.push_back(v_star - v_hat);
                const double v_max = cfg.r_max / (1.0 - gamma);
                stats[i * per_instance + j * cfg.gamma_grid.size() + g] = {
                    learned.max_weight_norm,
                    v_max * std::sqrt(static_cast<double>(n) * d / cfg.lambda_reg)};
            }
        }
    });
    detail::aggregate(result);
    if (run_stats) *run_stats = std::move(stats);
    return result;
}

inline SweepResult run_sweep(const SweepConfig& cfg) {
    switch (cfg.kind) {
    case ExperimentKind::bcq_noise: return run_bcq_noise_sweep(cfg);
    case ExperimentKind::plain_coverage: return run_plain_coverage_sweep(cfg);
    case ExperimentKind::pevi_datasize: return run_pevi_datasize_sweep(cfg);
    }
    throw ValidationError("unknown experiment kind");
}

} // namespace gammareg
