#pragma once

// Seeded random-instance generation for the tabular experiments: random MDPs,
// support masks and their noisy widenings, masked-softmax behavior policies,
// empirical (learner-side) MDPs and i.i.d. transition datasets.

#include "gammareg/mdp.hpp"
#include "gammareg/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <cstdint>
#include <vector>

namespace gammareg {

/// Seen / in-support state-action pairs. Every state keeps at least one true bit.
struct Mask {
    BoolMatrix bits;

    Index n_states() const { return bits.rows(); }
    Index n_actions() const { return bits.cols(); }
    Index count() const { return static_cast<Index>(bits.count()); }
    bool operator()(Index s, Index a) const { return bits(s, a); }

    static Mask all(Index n_states, Index n_actions) {
        return {BoolMatrix::Constant(n_states, n_actions, true)};
    }

    bool every_state_nonempty() const {
        for (Index s = 0; s < bits.rows(); ++s)
            if (!bits.row(s).any()) return false;
        return true;
    }
};

struct Transition {
    Index s = 0;
    Index a = 0;
    double r = 0.0;
    Index s_next = 0;

    bool operator==(const Transition&) const = default;
};

struct Dataset {
    std::vector<Transition> transitions;

    std::size_t size() const { return transitions.size(); }
    bool empty() const { return transitions.empty(); }
};

inline ValidationReport validate_dataset(const Dataset& data, Index n_states, Index n_actions, double r_max) {
    ValidationReport report;
    for (std::size_t i = 0; i < data.transitions.size(); ++i) {
        const auto& t = data.transitions[i];
        if (t.s < 0 || t.s >= n_states || t.s_next < 0 || t.s_next >= n_states || t.a < 0 || t.a >= n_actions)
            report.push_back({"index", t.s, t.a, static_cast<double>(i), "transition index out of range"});
        if (!(t.r >= 0.0 && t.r <= r_max))
            report.push_back({"reward_bound", t.s, t.a, t.r, "transition reward outside [0, r_max]"});
    }
    return report;
}

/// Empirical (s,a) frequency table of a dataset (sums to 1 unless empty).
inline Matrix pair_frequencies(const Dataset& data, Index n_states, Index n_actions) {
    Matrix freq = Matrix::Zero(n_states, n_actions);
    for (const auto& t : data.transitions) freq(t.s, t.a) += 1.0;
    if (!data.empty()) freq /= static_cast<double>(data.size());
    return freq;
}

namespace detail {

template <class Row>
void draw_flat_dirichlet(Rng& rng, Row&& row) {
    double sum = 0.0;
    for (Index j = 0; j < row.size(); ++j) {
        row(j) = rng.exponential();
        sum += row(j);
    }
    if (sum > 0.0) row /= sum;
    else row.setConstant(1.0 / static_cast<double>(row.size()));
}

} // namespace detail

/// Rewards i.i.d. U[0, r_max]; transition rows flat Dirichlet; uniform mu0.
inline TabularMdp random_tabular_mdp(Index n_states, Index n_actions, double r_max, std::uint64_t seed) {
    detail::require(n_states >= 1 && n_actions >= 1, "n_states and n_actions must be >= 1");
    detail::require(r_max > 0.0, "r_max must be positive");
    TabularMdp m = TabularMdp::zeros(n_states, n_actions, r_max);
    Rng rng(seed);
    for (Index s = 0; s < n_states; ++s)
        for (Index a = 0; a < n_actions; ++a) m.reward(s, a) = rng.uniform() * r_max;
    for (Index i = 0; i < m.transition.rows(); ++i) detail::draw_flat_dirichlet(rng, m.transition.row(i));
    return m;
}

/// Masks exactly floor(p*S*A) pairs uniformly, then re-enables the lowest action
/// of any state left without a true bit.
inline Mask random_mask(Index n_states, Index n_actions, double masked_proportion, std::uint64_t seed) {
    detail::require(masked_proportion >= 0.0 && masked_proportion < 1.0,
                    "masked_proportion must lie in [0, 1)");
    const Index total = n_states * n_actions;
    const auto n_masked = static_cast<Index>(std::floor(masked_proportion * static_cast<double>(total)));
    detail::require(total - n_masked >= n_states,
                    "masked_proportion leaves fewer true bits than states");
    Mask mask = Mask::all(n_states, n_actions);
    std::vector<Index> pool(static_cast<std::size_t>(total));
    std::iota(pool.begin(), pool.end(), Index{0});
    Rng rng(seed);
    for (Index idx : rng.sample_without_replacement(std::move(pool), static_cast<std::size_t>(n_masked)))
        mask.bits(idx / n_actions, idx % n_actions) = false;
    for (Index s = 0; s < n_states; ++s)
        if (!mask.bits.row(s).any()) mask.bits(s, 0) = true;
    return mask;
}

/// Superset of `mask` with exactly round(noise_ratio * |mask|) extra true bits.
inline Mask widen_mask(const Mask& mask, double noise_ratio, std::uint64_t seed) {
    detail::require(noise_ratio >= 0.0, "noise_ratio must be nonnegative");
    const auto extra = static_cast<std::size_t>(std::llround(noise_ratio * static_cast<double>(mask.count())));
    std::vector<Index> pool;
    const Index A = mask.n_actions();
    for (Index s = 0; s < mask.n_states(); ++s)
        for (Index a = 0; a < A; ++a)
            if (!mask.bits(s, a)) pool.push_back(s * A + a);
    detail::require(extra <= pool.size(), "noise ratio requests more additions than there are unmasked pairs");
    Mask widened = mask;
    Rng rng(seed);
    for (Index idx : rng.sample_without_replacement(std::move(pool), extra)) widened.bits(idx / A, idx % A) = true;
    return widened;
}

/// pi(a|s) proportional to exp(Q*(s,a)) on masked-in actions.
inline Policy behavior_policy(const Matrix& q_star, const Mask& mask) {
    detail::require(q_star.rows() == mask.n_states() && q_star.cols() == mask.n_actions(),
                    "Q table and mask shapes differ");
    Policy pi;
    pi.probs = Matrix::Zero(q_star.rows(), q_star.cols());
    for (Index s = 0; s < q_star.rows(); ++s) {
        double top = -std::numeric_limits<double>::infinity();
        for (Index a = 0; a < q_star.cols(); ++a)
            if (mask(s, a)) top = std::max(top, q_star(s, a));
        detail::require(std::isfinite(top), "state " + std::to_string(s) + " has no in-support action");
        double z = 0.0;
        for (Index a = 0; a < q_star.cols(); ++a)
            if (mask(s, a)) z += pi.probs(s, a) = std::exp(q_star(s, a) - top);
        pi.probs.row(s) /= z;
    }
    pi.deterministic = (pi.probs.array() == 1.0).rowwise().any().all();
    return pi;
}

/// Learner-side model: seen pairs copy the true MDP, unseen pairs are redrawn from
/// the generative prior (reward U[0, r_max], flat-Dirichlet row).
inline TabularMdp empirical_mdp(const TabularMdp& truth, const Mask& mask, std::uint64_t seed) {
    detail::require(mask.n_states() == truth.n_states && mask.n_actions() == truth.n_actions,
                    "mask shape does not match the MDP");
    TabularMdp m = truth;
    Rng rng(seed);
    for (Index s = 0; s < truth.n_states; ++s)
        for (Index a = 0; a < truth.n_actions; ++a) {
            if (mask(s, a)) continue;
            m.reward(s, a) = rng.uniform() * truth.r_max;
            detail::draw_flat_dirichlet(rng, m.transition.row(truth.pair(s, a)));
        }
    return m;
}

/// n i.i.d. transitions: s ~ mu0, a ~ behavior(.|s), r = r(s,a), s' ~ P(.|s,a).
inline Dataset sample_dataset(const TabularMdp& mdp, const Policy& behavior, std::size_t n_transitions,
                              std::uint64_t seed) {
    detail::require(behavior.n_states() == mdp.n_states && behavior.n_actions() == mdp.n_actions,
                    "behavior policy shape does not match the MDP");
    Dataset data;
    if (n_transitions == 0) return data;
    auto cumsum = [](auto&& row) {
        std::vector<double> c(static_cast<std::size_t>(row.size()));
        double acc = 0.0;
        for (Index j = 0; j < row.size(); ++j) c[static_cast<std::size_t>(j)] = acc += row(j);
        return c;
    };
    const auto init_cdf = cumsum(mdp.init_dist);
    std::vector<std::vector<double>> action_cdf, next_cdf;
    for (Index s = 0; s < mdp.n_states; ++s) action_cdf.push_back(cumsum(behavior.probs.row(s)));
    for (Index i = 0; i < mdp.transition.rows(); ++i) next_cdf.push_back(cumsum(mdp.transition.row(i)));

    Rng rng(seed);
    data.transitions.reserve(n_transitions);
    for (std::size_t k = 0; k < n_transitions; ++k) {
        Transition t;
        t.s = static_cast<Index>(rng.categorical(init_cdf));
        t.a = static_cast<Index>(rng.categorical(action_cdf[static_cast<std::size_t>(t.s)]));
        t.r = mdp.reward(t.s, t.a);
        t.s_next = static_cast<Index>(rng.categorical(next_cdf[static_cast<std::size_t>(mdp.pair(t.s, t.a))]));
        data.transitions.push_back(t);
    }
    return data;
}

} // namespace gammareg
