// Acceptance suite: one PASS/FAIL line per criterion.
//   acceptance [--only N] [--threads K]

#include "gammareg/gammareg.hpp"

#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

using namespace gammareg;

namespace {

unsigned g_threads = 1;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
    char buf[1024];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

Policy random_policy(Index S, Index A, Rng& rng) {
    Policy pi;
    pi.probs = Matrix(S, A);
    for (Index s = 0; s < S; ++s) {
        for (Index a = 0; a < A; ++a) pi.probs(s, a) = rng.exponential();
        pi.probs.row(s) /= pi.probs.row(s).sum();
    }
    return pi;
}

bool contracts(const std::vector<double>& residuals, double gamma) {
    for (std::size_t k = 1; k < residuals.size(); ++k)
        if (residuals[k] > gamma * residuals[k - 1] + 1e-14) return false;
    return true;
}

// 1: robust fixed point = shifted lower-discount optimum.
Outcome lemma3_certificate() {
    SolveOptions opts;
    opts.tol = 1e-10;
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto m = random_tabular_mdp(15, 4, 1.0, ExperimentSeed{1, seed}.instance_seed());
        for (double gamma : {0.5, 0.9})
            for (double eps : {0.0, 0.1, 0.3}) worst = std::max(worst, check_lemma3(m, gamma, eps, opts).max_abs_gap);
    }
    return {worst <= 1e-6, fmt("300 checks, max gap %.3g (limit 1e-6)", worst)};
}

// 2: value sandwich between two discounts.
Outcome lemma1_suite() {
    SolveOptions opts;
    int failures = 0;
    double min_slack = kInfinity;
    Rng rng(substream(2, 0));
    for (std::uint64_t k = 0; k < 100; ++k) {
        const auto m = random_tabular_mdp(10, 3, 1.0, ExperimentSeed{2, k}.instance_seed());
        const double gamma_e = rng.uniform(0.0, 0.97);
        const double gamma = rng.uniform(0.0, gamma_e);
        const auto c = verify_lemma1(m, random_policy(10, 3, rng), gamma, gamma_e, opts);
        failures += !(c.lower_ok && c.upper_ok);
        min_slack = std::min(min_slack, c.slack);
    }
    TabularMdp one = TabularMdp::zeros(1, 1, 1.0);
    one.transition.setOnes();
    one.reward.setOnes();
    const auto tight = verify_lemma1(one, Policy::uniform(1, 1), 0.5, 0.9, opts);
    const bool tight_ok = tight.lower_ok && tight.upper_ok && std::abs(tight.slack) <= 1e-9;
    return {failures == 0 && tight_ok, fmt("%d/100 draws violate; min slack %.3g; single-state slack %.3g (limit 1e-9)",
                                           failures, min_slack, tight.slack)};
}

bool non_increasing(const std::vector<double>& xs) {
    for (std::size_t i = 1; i < xs.size(); ++i)
        if (xs[i] > xs[i - 1]) return false;
    return true;
}

std::string csv_of(const SweepResult& r) {
    std::ostringstream os;
    write_results_csv(os, r.records);
    write_gamma_star_csv(os, r.gamma_stars);
    write_instances_csv(os, r);
    return os.str();
}

// 3: support-constrained learner, gamma* vs. noise.
Outcome regularization_trend() {
    SweepConfig c;
    c.kind = ExperimentKind::bcq_noise;
    c.n_states = 100;
    c.n_actions = 10;
    c.gamma_e = 0.95;
    c.gamma_grid = make_grid(0.80, 0.95, 0.01);
    c.masked_proportions = {0.5};
    c.noise_ratios = {0.04, 0.06, 0.08, 0.12};
    c.n_instances = 100;
    c.base_seed = 3;
    c.threads = g_threads;
    const auto r = run_bcq_noise_sweep(c);

    std::vector<double> stars;
    bool improves = true;
    std::string detail;
    const double n = static_cast<double>(c.n_instances);
    for (std::size_t i = 0; i < r.groups.size(); ++i) {
        const auto& g = r.groups[i];
        const std::size_t star = argmin_first(g.mean), last = g.mean.size() - 1;
        stars.push_back(c.gamma_grid[star]);
        const double se = std::sqrt((g.std[star] * g.std[star] + g.std[last] * g.std[last]) / n);
        const double gain = g.mean[last] - g.mean[star];
        if (g.noise_ratio >= 0.06 - 1e-12 && !(gain >= se && gain > 0.0)) improves = false;
        detail += fmt("%s%g%%: g*=%.2f err %.4f vs %.4f at ge (se %.4f)", i ? "; " : "", 100 * g.noise_ratio,
                      stars.back(), g.mean[star], g.mean[last], se);
    }
    return {non_increasing(stars) && improves, detail};
}

// 4: unconstrained learner, gamma* vs. coverage.
Outcome pessimism_trend() {
    SweepConfig c;
    c.kind = ExperimentKind::plain_coverage;
    c.n_states = 100;
    c.n_actions = 10;
    c.gamma_e = 0.95;
    c.gamma_grid = make_grid(0.80, 0.95, 0.01);
    c.masked_proportions = {0.5, 0.7, 0.9};
    c.n_instances = 100;
    c.base_seed = 4;
    c.threads = g_threads;
    const auto r = run_plain_coverage_sweep(c);

    std::vector<double> stars, reductions;
    std::string detail;
    for (std::size_t i = 0; i < r.groups.size(); ++i) {
        const auto& g = r.groups[i];
        const std::size_t star = argmin_first(g.mean);
        stars.push_back(c.gamma_grid[star]);
        reductions.push_back(g.mean.back() - g.mean[star]);
        detail += fmt("%smask %.1f: g*=%.2f reduction %.4g", i ? "; " : "", g.mask_prop, stars.back(),
                      reductions.back());
    }
    bool reductions_ok = true;
    for (std::size_t i = 1; i < reductions.size(); ++i) reductions_ok &= reductions[i] >= reductions[i - 1];
    return {stars.back() <= stars.front() && reductions_ok, detail};
}

struct PeviRun {
    bool pessimistic = false;
    bool within_bound = false;
    double weight_norm = 0.0;
    double weight_bound = 0.0;
};

std::vector<PeviRun> pevi_runs() {
    const Index S = 25, A = 4;
    const std::size_t n = 2000;
    const double gamma = 0.9, gamma_e = 0.95, xi = 0.1, c = 1.0, lambda = 1.0;
    const auto features = FeatureMap::make_one_hot(S, A);
    const double d = static_cast<double>(features.d());
    std::vector<PeviRun> runs(100);
    parallel_for(runs.size(), g_threads, [&](std::size_t i) {
        const std::uint64_t seed = ExperimentSeed{5, i}.instance_seed();
        const auto truth = random_tabular_mdp(S, A, 1.0, substream(seed, 1));
        const auto behavior = behavior_policy(value_iteration(truth, gamma_e).q.values, Mask::all(S, A));
        const auto data = sample_dataset(truth, behavior, n, substream(seed, 2));
        PeviConfig cfg;
        cfg.gamma = gamma;
        cfg.xi = xi;
        cfg.lambda_reg = lambda;
        cfg.beta = theoretical_beta(d, 1.0, gamma, static_cast<double>(n), xi, c).beta;
        const auto out = pevi(data, features, cfg);
        const Vector v_pi = policy_evaluation_exact(truth, out.policy, gamma).values;
        PeviRun& run = runs[i];
        run.pessimistic = (out.v.values.array() <= v_pi.array() + 10 * cfg.solve.tol / (1 - gamma)).all();

        const auto star = value_iteration(truth, gamma);
        const Vector gap = policy_evaluation_exact(truth, star.policy, gamma).values - v_pi;
        BoundInputs in;
        in.c = c;
        in.d = d;
        in.n = static_cast<double>(n);
        in.xi = xi;
        in.gamma = gamma;
        in.gamma_e = gamma_e;
        in.coverage = per_state_coverage(truth, star.policy, gamma, pair_frequencies(data, S, A), features);
        run.within_bound = gap.maxCoeff() <= lemma2_bound(in);
        run.weight_norm = out.max_weight_norm;
        run.weight_bound = cfg.r_max / (1 - gamma) * std::sqrt(static_cast<double>(n) * d / lambda);
    });
    return runs;
}

// 5: pessimism of the pessimistic learner.
Outcome pevi_pessimism() {
    int good = 0, pessimistic = 0;
    for (const auto& r : pevi_runs()) {
        pessimistic += r.pessimistic;
        good += r.pessimistic && r.within_bound;
    }
    return {good >= 90, fmt("%d/100 runs pessimistic, %d/100 pessimistic and within the bound (need 90)", pessimistic,
                            good)};
}

// 6: interior optimum of the combined bound.
Outcome tradeoff_interiority() {
    const Index S = 25, A = 4;
    const double gamma_e = 0.95;
    const auto truth = random_tabular_mdp(S, A, 1.0, 6);
    const auto star = value_iteration(truth, gamma_e);
    const auto behavior = behavior_policy(star.q.values, Mask::all(S, A));
    const Matrix frequency = truth.init_dist.asDiagonal() * behavior.probs;
    const auto features = FeatureMap::make_one_hot(S, A);
    BoundInputs in;
    in.d = static_cast<double>(S * A);
    in.gamma_e = gamma_e;
    in.coverage = per_state_coverage(truth, star.policy, gamma_e, frequency, features);
    const auto grid = make_grid(0.0, gamma_e, 0.01);
    in.n = 50;
    const auto small = optimal_guidance_gamma(in, grid);
    in.n = 1e6;
    const auto large = optimal_guidance_gamma(in, grid);
    return {small.gamma_star < gamma_e && large.gamma_star == gamma_e,
            fmt("coverage %.4g; N=50: g*=%.2f (need < %.2f); N=1e6: g*=%.2f (need %.2f)", in.coverage, small.gamma_star,
                gamma_e, large.gamma_star, gamma_e)};
}

// 7: identities.
Outcome identity_suites() {
    Rng rng(substream(7, 0));
    double decomposition = 0.0;
    for (std::uint64_t k = 0; k < 20; ++k) {
        const auto m = random_tabular_mdp(8, 3, 1.0, ExperimentSeed{7, k}.instance_seed());
        Matrix q(8, 3);
        for (Index i = 0; i < q.size(); ++i) q(i) = rng.uniform(0.0, 10.0);
        const auto pi = random_policy(8, 3, rng);
        decomposition = std::max(decomposition,
                                 verify_subopt_decomposition(m, q, policy_average(pi, q), pi, 0.9).max_residual);
    }

    int weight_violations = 0;
    for (const auto& r : pevi_runs()) weight_violations += r.weight_norm > r.weight_bound + 1e-8;

    int traces = 0, slow = 0;
    double occupancy = 0.0;
    for (std::uint64_t k = 0; k < 30; ++k) {
        const auto m = random_tabular_mdp(12, 4, 1.0, ExperimentSeed{77, k}.instance_seed());
        const auto mask = random_mask(12, 4, 0.5, k);
        for (double gamma : {0.0, 0.5, 0.9, 0.95}) {
            ++traces, slow += !contracts(value_iteration(m, gamma).residuals, gamma);
            ++traces, slow += !contracts(robust_value_iteration({m, 0.2}, gamma).residuals, gamma);
            ++traces, slow += !contracts(bcq_value_iteration(m, {mask}, gamma).residuals, gamma);
            const auto pi = random_policy(12, 4, rng);
            occupancy = std::max(occupancy, std::abs(occupancy_measure(m, pi, gamma).sum() - 1.0));
            for (const auto& d : occupancy_from_each_state(m, pi, gamma))
                occupancy = std::max(occupancy, std::abs(d.sum() - 1.0));
        }
    }
    const bool ok = decomposition <= 1e-6 && weight_violations == 0 && slow == 0 && occupancy <= 1e-8;
    return {ok, fmt("decomposition residual %.3g; weight-bound violations %d/100; %d/%d traces contract; occupancy "
                    "error %.3g",
                    decomposition, weight_violations, traces - slow, traces, occupancy)};
}

// 8: byte-identical sweeps across reruns and thread counts.
Outcome determinism() {
    std::vector<SweepConfig> configs(3);
    configs[0].kind = ExperimentKind::bcq_noise;
    configs[1].kind = ExperimentKind::plain_coverage;
    configs[1].masked_proportions = {0.5, 0.9};
    configs[2].kind = ExperimentKind::pevi_datasize;
    configs[2].n_states = 25;
    configs[2].n_actions = 4;
    configs[2].masked_proportions = {0.0};
    int identical = 0;
    for (auto& c : configs) {
        if (c.kind != ExperimentKind::pevi_datasize) {
            c.n_states = 30;
            c.n_actions = 10;
        }
        c.n_instances = 8;
        c.base_seed = 8;
        c.threads = 1;
        const std::string a = csv_of(run_sweep(c));
        const std::string b = csv_of(run_sweep(c));
        c.threads = 4;
        const std::string d = csv_of(run_sweep(c));
        identical += a == b && a == d;
    }
    return {identical == 3, fmt("%d/3 sweeps byte-identical across reruns and 1 vs 4 threads", identical)};
}

} // namespace

int main(int argc, char** argv) {
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        if (!std::strcmp(argv[i], "--only") && i + 1 < argc) only = std::atoi(argv[++i]);
        else if (!std::strcmp(argv[i], "--threads") && i + 1 < argc) g_threads = static_cast<unsigned>(std::atoi(argv[++i]));
        else {
            std::fprintf(stderr, "usage: acceptance [--only N] [--threads K]\n");
            return 2;
        }
    }
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"robust/lower-discount equivalence", lemma3_certificate},
        {"discount sandwich", lemma1_suite},
        {"regularization trend under support noise", regularization_trend},
        {"pessimism trend under poor coverage", pessimism_trend},
        {"pessimistic value iteration", pevi_pessimism},
        {"bound trade-off interiority", tradeoff_interiority},
        {"numerical identities", identity_suites},
        {"determinism", determinism},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (only && only != id) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = criteria[i].second();
        } catch (const std::exception& e) {
            out = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("criterion %d %s: %s | %s (%.1fs)\n", id, out.pass ? "PASS" : "FAIL", criteria[i].first,
                    out.detail.c_str(), secs);
        std::fflush(stdout);
        failed += !out.pass;
    }
    return failed ? 1 : 0;
}
