#pragma once

// Exact dynamic-programming solvers: value iteration, policy evaluation,
// discounted occupancy measures and suboptimality.

#include "gammareg/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <variant>

namespace gammareg {

struct SolveOptions {
    double tol = 1e-10;
    /// When unset, ceil(log(tol (1-gamma) / scale) / log gamma) + 100.
    std::optional<long> max_iters;

    long resolved_max_iters(double gamma, double scale) const {
        detail::require(tol > 0.0, "solver tolerance must be positive");
        if (max_iters) {
            detail::require(*max_iters >= 1, "max_iters must be at least 1");
            return *max_iters;
        }
        if (gamma <= 0.0) return 101;
        const double ratio = tol * (1.0 - gamma) / std::max(scale, tol);
        if (ratio >= 1.0) return 101;
        return static_cast<long>(std::ceil(std::log(ratio) / std::log(gamma))) + 100;
    }
};

struct ValueIterationResult {
    VTable v;
    QTable q;
    Policy policy;
    std::vector<double> residuals; ///< sup-norm change of V per sweep
};

namespace detail {

/// Runs v <- max-style update until the sup-norm change is <= tol.
/// `backup` maps V to the Q table; `reduce` maps the Q table to the next V.
template <class Backup, class Reduce>
ValueIterationResult fixed_point(Index n_states, double gamma, double scale, const SolveOptions& opts,
                                 Backup&& backup, Reduce&& reduce, const char* what) {
    const long max_iters = opts.resolved_max_iters(gamma, scale);
    Vector v = Vector::Zero(n_states);
    ValueIterationResult out;
    for (long k = 0; k < max_iters; ++k) {
        Matrix q = backup(v);
        Vector next = reduce(q);
        const double res = n_states > 0 ? (next - v).cwiseAbs().maxCoeff() : 0.0;
        out.residuals.push_back(res);
        v = std::move(next);
        if (res <= opts.tol) {
            out.policy = greedy_policy(q);
            out.q = {std::move(q), gamma};
            out.v = {std::move(v), gamma};
            return out;
        }
    }
    throw ConvergenceError(std::string(what) + " did not converge within " + std::to_string(max_iters) +
                           " iterations");
}

inline Vector row_max(const Matrix& q) { return q.rowwise().maxCoeff(); }

} // namespace detail

/// Bellman optimality fixed point. Ties in the greedy policy go to the lowest action.
inline ValueIterationResult value_iteration(const TabularMdp& mdp, double gamma,
                                            const SolveOptions& opts = {}) {
    detail::check_gamma(gamma);
    return detail::fixed_point(
        mdp.n_states, gamma, mdp.r_max, opts,
        [&](const Vector& v) { return bellman_operator(mdp, v, gamma).values; }, detail::row_max,
        "value_iteration");
}

/// Exact V^pi from (I - gamma P_pi) v = r_pi.
inline VTable policy_evaluation_exact(const TabularMdp& mdp, const Policy& pi, double gamma) {
    detail::check_gamma(gamma);
    const Matrix p_pi = policy_transition(mdp, pi);
    const Vector r_pi = policy_average(pi, mdp.reward);
    const Matrix lhs = Matrix::Identity(mdp.n_states, mdp.n_states) - gamma * p_pi;
    return {lhs.partialPivLu().solve(r_pi), gamma};
}

/// Iterative V^pi; agrees with policy_evaluation_exact to within tol/(1-gamma).
inline VTable policy_evaluation(const TabularMdp& mdp, const Policy& pi, double gamma,
                                const SolveOptions& opts = {}) {
    detail::check_gamma(gamma);
    detail::require(pi.n_states() == mdp.n_states && pi.n_actions() == mdp.n_actions,
                    "policy shape does not match the MDP");
    const Matrix p_pi = policy_transition(mdp, pi);
    const Vector r_pi = policy_average(pi, mdp.reward);
    const long max_iters = opts.resolved_max_iters(gamma, mdp.r_max);
    Vector v = Vector::Zero(mdp.n_states);
    for (long k = 0; k < max_iters; ++k) {
        Vector next = r_pi + gamma * p_pi * v;
        const double res = (next - v).cwiseAbs().maxCoeff();
        v = std::move(next);
        if (res <= opts.tol) return {v, gamma};
    }
    throw ConvergenceError("policy_evaluation did not converge");
}

/// sum_s mu0(s) v(s)
inline double expected_value(const TabularMdp& mdp, const Vector& v) {
    detail::require(v.size() == mdp.n_states, "value vector size does not match the MDP");
    return mdp.init_dist.dot(v);
}

inline double expected_value(const TabularMdp& mdp, const VTable& v) { return expected_value(mdp, v.values); }

/// V^{pi*_gamma}(s) - V^pi(s) for every state, with pi* recomputed at gamma.
inline Vector suboptimality_per_state(const TabularMdp& mdp, const Policy& pi, double gamma,
                                      const SolveOptions& opts = {}) {
    const auto star = value_iteration(mdp, gamma, opts);
    const Vector v_star = policy_evaluation_exact(mdp, star.policy, gamma).values;
    return v_star - policy_evaluation_exact(mdp, pi, gamma).values;
}

/// SubOpt(pi; gamma) = V_gamma(pi*_gamma) - V_gamma(pi) under mu0.
inline double suboptimality(const TabularMdp& mdp, const Policy& pi, double gamma,
                            const SolveOptions& opts = {}) {
    return expected_value(mdp, suboptimality_per_state(mdp, pi, gamma, opts));
}

// ---------------------------------------------------------------------------
// Occupancy measures

struct FromInitial {};
struct FromState {
    Index s;
};
using OccupancyStart = std::variant<FromInitial, FromState>;

/// (I - gamma P_pi)^{-1}: row s holds sum_t gamma^t Pr(s_t = . | s_0 = s).
inline Matrix discounted_visits(const TabularMdp& mdp, const Policy& pi, double gamma) {
    detail::check_gamma(gamma);
    const Matrix lhs = Matrix::Identity(mdp.n_states, mdp.n_states) - gamma * policy_transition(mdp, pi);
    return lhs.partialPivLu().inverse();
}

/// Normalized discounted occupancy d(s,a) = (1-gamma) sum_t gamma^t Pr(s_t=s, a_t=a).
inline Matrix occupancy_measure(const TabularMdp& mdp, const Policy& pi, double gamma,
                                OccupancyStart start = FromInitial{}) {
    detail::check_gamma(gamma);
    detail::require(pi.n_states() == mdp.n_states && pi.n_actions() == mdp.n_actions,
                    "policy shape does not match the MDP");
    Vector mu;
    if (const auto* fs = std::get_if<FromState>(&start)) {
        detail::require(fs->s >= 0 && fs->s < mdp.n_states, "start state out of range");
        mu = Vector::Unit(mdp.n_states, fs->s);
    } else {
        mu = mdp.init_dist;
    }
    const Matrix lhs = Matrix::Identity(mdp.n_states, mdp.n_states) -
                       gamma * policy_transition(mdp, pi).transpose();
    const Vector state_occ = (1.0 - gamma) * lhs.partialPivLu().solve(mu);
    return state_occ.asDiagonal() * pi.probs;
}

/// Occupancy from every start state at once; entry k is the S x A table for s_0 = k.
inline std::vector<Matrix> occupancy_from_each_state(const TabularMdp& mdp, const Policy& pi, double gamma) {
    const Matrix visits = discounted_visits(mdp, pi, gamma);
    std::vector<Matrix> out;
    out.reserve(static_cast<std::size_t>(mdp.n_states));
    for (Index s = 0; s < mdp.n_states; ++s) {
        const Vector d = (1.0 - gamma) * visits.row(s).transpose();
        out.push_back(d.asDiagonal() * pi.probs);
    }
    return out;
}

} // namespace gammareg
