#include "support.hpp"

#include <sstream>

using namespace gammareg;
using namespace gtest_support;

namespace {

SweepConfig small(ExperimentKind kind) {
    SweepConfig c;
    c.kind = kind;
    c.n_states = 12;
    c.n_actions = 4;
    c.n_instances = 5;
    c.base_seed = 11;
    c.gamma_grid = make_grid(0.85, 0.95, 0.05);
    if (kind == ExperimentKind::plain_coverage) c.masked_proportions = {0.5, 0.7};
    if (kind == ExperimentKind::pevi_datasize) {
        c.n_states = 5;
        c.n_actions = 2;
        c.masked_proportions = {0.0};
        c.dataset_sizes = {0, 50};
    }
    return c;
}

std::string results_text(const SweepResult& r) {
    std::ostringstream os;
    write_results_csv(os, r.records);
    write_gamma_star_csv(os, r.gamma_stars);
    write_instances_csv(os, r);
    return os.str();
}

} // namespace

TEST(ParallelFor, CoversEveryIndexOnce) {
    std::vector<int> hits(1000, 0);
    parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
    for (int h : hits) EXPECT_EQ(h, 1);
}

TEST(ParallelFor, RethrowsWorkerError) {
    EXPECT_THROW(parallel_for(50, 3,
                              [](std::size_t i) {
                                  if (i == 17) throw ConvergenceError("boom");
                              }),
                 ConvergenceError);
}

TEST(Stats, MeanStdAndArgmin) {
    const auto [m, s] = mean_std({1.0, 2.0, 3.0, 4.0});
    EXPECT_DOUBLE_EQ(m, 2.5);
    EXPECT_NEAR(s, std::sqrt(5.0 / 3.0), 1e-15);
    EXPECT_EQ(mean_std({7.0}).second, 0.0);
    EXPECT_EQ(argmin_first({3.0, 1.0, 1.0, 2.0}), 1u);
}

TEST(BcqSweep, ExactRecoveryWithoutMaskOrNoise) {
    SweepConfig c = small(ExperimentKind::bcq_noise);
    c.masked_proportions = {0.0};
    c.noise_ratios = {0.0};
    const auto r = run_bcq_noise_sweep(c);
    ASSERT_EQ(r.groups.size(), 1u);
    EXPECT_LE(r.groups[0].mean.back(), 1e-8);
    EXPECT_EQ(r.gamma_stars[0].gamma_star, 0.95);
}

TEST(BcqSweep, DeterministicAcrossRepeatsAndThreads) {
    SweepConfig c = small(ExperimentKind::bcq_noise);
    c.n_instances = 1;
    const std::string once = results_text(run_bcq_noise_sweep(c));
    EXPECT_EQ(once, results_text(run_bcq_noise_sweep(c)));
    c.n_instances = 6;
    c.threads = 1;
    const std::string serial = results_text(run_bcq_noise_sweep(c));
    c.threads = 3;
    EXPECT_EQ(serial, results_text(run_bcq_noise_sweep(c)));
}

TEST(BcqSweep, RecordsRecomputableFromInstances) {
    const auto r = run_bcq_noise_sweep(small(ExperimentKind::bcq_noise));
    ASSERT_EQ(r.records.size(), 4u * 3u);
    std::size_t k = 0;
    for (const auto& g : r.groups)
        for (std::size_t j = 0; j < r.config.gamma_grid.size(); ++j, ++k) {
            double sum = 0.0;
            for (const auto& row : g.values) sum += row[j];
            const double mean = sum / static_cast<double>(g.values.size());
            double ss = 0.0;
            for (const auto& row : g.values) ss += (row[j] - mean) * (row[j] - mean);
            EXPECT_NEAR(r.records[k].mean, mean, 1e-12);
            EXPECT_NEAR(r.records[k].std, std::sqrt(ss / static_cast<double>(g.values.size() - 1)), 1e-12);
            EXPECT_EQ(r.records[k].gamma, r.config.gamma_grid[j]);
        }
    for (std::size_t i = 0; i < r.groups.size(); ++i)
        EXPECT_EQ(r.gamma_stars[i].gamma_star, r.config.gamma_grid[argmin_first(r.groups[i].mean)]);
}

TEST(BcqSweep, ModelExtrapolationRuns) {
    SweepConfig c = small(ExperimentKind::bcq_noise);
    c.extrapolation = Extrapolation::model;
    const auto r = run_bcq_noise_sweep(c);
    EXPECT_EQ(r.gamma_stars.size(), 4u);
}

TEST(CoverageSweep, NoMaskRecoversAtGammaE) {
    SweepConfig c = small(ExperimentKind::plain_coverage);
    c.masked_proportions = {0.0};
    const auto r = run_plain_coverage_sweep(c);
    EXPECT_LE(r.groups[0].mean.back(), 1e-8);
}

TEST(CoverageSweep, Deterministic) {
    const auto c = small(ExperimentKind::plain_coverage);
    EXPECT_EQ(results_text(run_plain_coverage_sweep(c)), results_text(run_plain_coverage_sweep(c)));
}

TEST(PeviSweep, EmptyDatasetUsesLowestActions) {
    const auto c = small(ExperimentKind::pevi_datasize);
    const auto r = run_pevi_datasize_sweep(c);
    ASSERT_EQ(r.groups[0].n, 0u);
    for (std::size_t i = 0; i < c.n_instances; ++i) {
        const auto truth = random_tabular_mdp(c.n_states, c.n_actions, c.r_max,
                                              substream(ExperimentSeed{c.base_seed, i}.instance_seed(), 1));
        const auto lowest = Policy::from_actions(std::vector<Index>(5, 0), 2);
        const double expected = suboptimality(truth, lowest, c.gamma_e);
        for (double v : r.groups[0].values[i]) EXPECT_NEAR(v, expected, 1e-9);
    }
}

TEST(PeviSweep, SuboptimalityNonNegativeAndWeightsBounded) {
    const auto c = small(ExperimentKind::pevi_datasize);
    std::vector<PeviRunStats> stats;
    const auto r = run_pevi_datasize_sweep(c, &stats);
    for (const auto& g : r.groups)
        for (const auto& row : g.values)
            for (double v : row) EXPECT_GE(v, -2 * c.solve.tol / (1 - c.gamma_e));
    for (const auto& s : stats) EXPECT_LE(s.max_weight_norm, s.weight_bound + 1e-8);
}

TEST(SweepConfig, ValidationAndDefaults) {
    SweepConfig c;
    EXPECT_EQ(c.n_states, 100);
    EXPECT_EQ(c.gamma_grid.size(), 16u);
    EXPECT_EQ(c.resolved_extrapolation(), Extrapolation::frozen);
    c.kind = ExperimentKind::plain_coverage;
    EXPECT_EQ(c.resolved_extrapolation(), Extrapolation::model);
    c.gamma_grid = {0.9, 0.96};
    EXPECT_THROW(c.validate(), ValidationError);
    EXPECT_THROW(run_bcq_noise_sweep(c), ValidationError);
    EXPECT_THROW(parse_experiment_kind("nope"), ValidationError);
}
