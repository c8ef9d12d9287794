#pragma once

// Tabular offline learners: support-constrained (BCQ-style) value iteration,
// unconstrained empirical value iteration, robust value iteration over the
// epsilon-mixture model set, and the lower-discount learner.

#include "gammareg/generators.hpp"
#include "gammareg/solvers.hpp"

#include <optional>

namespace gammareg {

/// Actions the estimated behavior model deems in-support, per state.
struct SupportConstraint {
    Mask allowed;

    static SupportConstraint all(Index n_states, Index n_actions) { return {Mask::all(n_states, n_actions)}; }
};

/// Q-table entries without data. They are never backed up and keep `value`,
/// like a table entry that no update ever touches.
struct UntrainedPairs {
    Mask trained;
    double value = 0.0;
};

/// Transition models (1 - epsilon) P0 + epsilon P for arbitrary P.
struct MixtureModelSet {
    TabularMdp base;
    double epsilon = 0.0;
};

struct LearnerResult {
    QTable q;
    Policy policy;
    std::vector<double> residuals;
};

namespace detail {

inline Matrix freeze(Matrix q, const std::optional<UntrainedPairs>& untrained) {
    if (untrained) q = untrained->trained.bits.select(q, Matrix::Constant(q.rows(), q.cols(), untrained->value));
    return q;
}

inline double value_scale(const TabularMdp& mdp, double gamma, const std::optional<UntrainedPairs>& untrained) {
    double scale = mdp.r_max;
    if (untrained) scale = std::max(scale, std::abs(untrained->value) * (1.0 - gamma));
    return scale;
}

/// Greedy over allowed actions only, ties to the lowest index.
inline Policy constrained_greedy(const Matrix& q, const Mask& allowed) {
    std::vector<Index> actions(static_cast<std::size_t>(q.rows()));
    for (Index s = 0; s < q.rows(); ++s) {
        Index best = -1;
        for (Index a = 0; a < q.cols(); ++a)
            if (allowed(s, a) && (best < 0 || q(s, a) > q(s, best))) best = a;
        actions[static_cast<std::size_t>(s)] = best;
    }
    return Policy::from_actions(actions, q.cols());
}

} // namespace detail

/// Q(s,a) <- r(s,a) + gamma sum_s' P(s'|s,a) max_{a' allowed at s'} Q(s',a').
inline LearnerResult bcq_value_iteration(const TabularMdp& empirical, const SupportConstraint& support, double gamma,
                                         const SolveOptions& opts = {},
                                         const std::optional<UntrainedPairs>& untrained = std::nullopt) {
    detail::check_gamma(gamma);
    const Mask& allowed = support.allowed;
    detail::require(allowed.n_states() == empirical.n_states && allowed.n_actions() == empirical.n_actions,
                    "support shape does not match the MDP");
    detail::require(allowed.every_state_nonempty(), "support constraint leaves a state without actions");
    const Matrix lowest = Matrix::Constant(empirical.n_states, empirical.n_actions,
                                           -std::numeric_limits<double>::infinity());
    auto result = detail::fixed_point(
        empirical.n_states, gamma, detail::value_scale(empirical, gamma, untrained), opts,
        [&](const Vector& v) { return detail::freeze(bellman_operator(empirical, v, gamma).values, untrained); },
        [&](const Matrix& q) -> Vector { return allowed.bits.select(q, lowest).rowwise().maxCoeff(); },
        "bcq_value_iteration");
    Policy policy = detail::constrained_greedy(result.q.values, allowed);
    return {std::move(result.q), std::move(policy), std::move(result.residuals)};
}

/// Plain value iteration on the learner's model (no support constraint).
inline LearnerResult empirical_value_iteration(const TabularMdp& empirical, double gamma,
                                               const SolveOptions& opts = {},
                                               const std::optional<UntrainedPairs>& untrained = std::nullopt) {
    if (!untrained) {
        auto r = value_iteration(empirical, gamma, opts);
        return {std::move(r.q), std::move(r.policy), std::move(r.residuals)};
    }
    return bcq_value_iteration(empirical, SupportConstraint::all(empirical.n_states, empirical.n_actions), gamma,
                               opts, untrained);
}

/// max over pairs where `mask` is true of |q_hat - q_star_eval|.
inline double estimation_error(const Matrix& q_hat, const Matrix& q_star_eval, const Mask& mask) {
    detail::require(q_hat.rows() == q_star_eval.rows() && q_hat.cols() == q_star_eval.cols() &&
                        q_hat.rows() == mask.n_states() && q_hat.cols() == mask.n_actions(),
                    "estimation_error shapes differ");
    detail::require(mask.count() > 0, "estimation_error needs at least one seen pair");
    return mask.bits.select((q_hat - q_star_eval).cwiseAbs(), Matrix::Zero(q_hat.rows(), q_hat.cols())).maxCoeff();
}

/// Worst case over the epsilon-mixture set in closed form:
///   V_min <- min_s' V(s');  Q <- r + gamma (1-eps) P V + gamma eps V_min;  V <- max_a Q.
inline ValueIterationResult robust_value_iteration(const MixtureModelSet& set, double gamma,
                                                   const SolveOptions& opts = {}) {
    detail::check_gamma(gamma);
    const double eps = set.epsilon;
    detail::require(eps >= 0.0 && eps <= 1.0, "mixture radius must lie in [0, 1]");
    const TabularMdp& mdp = set.base;
    return detail::fixed_point(
        mdp.n_states, gamma, mdp.r_max, opts,
        [&](const Vector& v) -> Matrix {
            const double v_min = v.minCoeff();
            return (mdp.reward + (gamma * (1.0 - eps)) * expected_next(mdp, v)).array() + gamma * eps * v_min;
        },
        detail::row_max, "robust_value_iteration");
}

struct Lemma3Check {
    double delta = 0.0;
    double max_abs_gap = 0.0;
};

/// Compares the robust fixed point at gamma with the (1-eps) gamma optimum shifted by
///   delta = gamma eps min_s max_a Q_low(s,a) / (1 - gamma).
inline Lemma3Check check_lemma3(const TabularMdp& mdp, double gamma, double epsilon, const SolveOptions& opts = {}) {
    detail::check_gamma(gamma);
    detail::require(epsilon >= 0.0 && epsilon <= 1.0, "epsilon must lie in [0, 1]");
    const auto low = value_iteration(mdp, (1.0 - epsilon) * gamma, opts);
    const double delta = gamma * epsilon * low.q.values.rowwise().maxCoeff().minCoeff() / (1.0 - gamma);
    const auto rob = robust_value_iteration({mdp, epsilon}, gamma, opts);
    const double gap = (rob.q.values.array() - (low.q.values.array() + delta)).abs().maxCoeff();
    return {delta, gap};
}

/// Lower-guidance-discount learner with uniform e(s,a) = epsilon: value iteration at (1-eps) gamma.
inline LearnerResult generalized_value_iteration(const TabularMdp& empirical, double gamma, double epsilon,
                                                 const SolveOptions& opts = {}) {
    detail::check_gamma(gamma);
    detail::require(epsilon >= 0.0 && epsilon <= 1.0, "epsilon must lie in [0, 1]");
    auto r = value_iteration(empirical, (1.0 - epsilon) * gamma, opts);
    return {std::move(r.q), std::move(r.policy), std::move(r.residuals)};
}

} // namespace gammareg
