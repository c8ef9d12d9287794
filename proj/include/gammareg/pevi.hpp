#pragma once

// Pessimistic value iteration for linear MDPs: ridge-regressed Bellman targets
// minus an elliptical uncertainty bonus, iterated to a fixed point.

#include "gammareg/generators.hpp"
#include "gammareg/solvers.hpp"

#include <Eigen/Cholesky>

#include <cmath>

namespace gammareg {

/// Feature map over the finite (s,a) domain; row s*A+a of `phi` is phi(s,a).
struct FeatureMap {
    Index n_states = 0;
    Index n_actions = 0;
    Eigen::MatrixXd phi; ///< (S*A) x d
    bool one_hot = false;

    Index d() const { return phi.cols(); }
    auto evaluate(Index s, Index a) const { return phi.row(s * n_actions + a); }

    static FeatureMap make_one_hot(Index n_states, Index n_actions) {
        return {n_states, n_actions, Eigen::MatrixXd::Identity(n_states * n_actions, n_states * n_actions), true};
    }

    static FeatureMap from_matrix(Index n_states, Index n_actions, Eigen::MatrixXd phi) {
        detail::require(phi.rows() == n_states * n_actions, "feature matrix must have S*A rows");
        detail::require(phi.size() == 0 || phi.cwiseAbs().maxCoeff() <= 1.0, "features must satisfy |phi|_inf <= 1");
        return {n_states, n_actions, std::move(phi), false};
    }
};

struct RidgeState {
    Eigen::MatrixXd lambda;       ///< lambda_reg I + sum phi phi^T
    Eigen::VectorXd target_accum; ///< sum phi (r + gamma V(s'))
    double lambda_reg = 1.0;
};

struct PeviConfig {
    double gamma = 0.9;
    double beta = 0.0;
    double lambda_reg = 1.0;
    double xi = 0.1;
    double r_max = 1.0;
    SolveOptions solve;
    bool clip_vmax = true;
};

namespace detail {

/// Per-pair sufficient statistics of a dataset: sample counts, reward sums,
/// and next-state counts (S*A x S).
struct PairStats {
    Eigen::VectorXd counts;
    Eigen::VectorXd reward_sums;
    Eigen::MatrixXd next_counts;

    PairStats(const Dataset& data, const FeatureMap& f)
        : counts(Eigen::VectorXd::Zero(f.n_states * f.n_actions)),
          reward_sums(Eigen::VectorXd::Zero(f.n_states * f.n_actions)),
          next_counts(Eigen::MatrixXd::Zero(f.n_states * f.n_actions, f.n_states)) {
        for (const auto& t : data.transitions) {
            require(t.s >= 0 && t.s < f.n_states && t.a >= 0 && t.a < f.n_actions && t.s_next >= 0 &&
                        t.s_next < f.n_states,
                    "dataset index out of the feature domain");
            const Index p = t.s * f.n_actions + t.a;
            counts(p) += 1.0;
            reward_sums(p) += t.r;
            next_counts(p, t.s_next) += 1.0;
        }
    }

    Eigen::VectorXd targets(const Eigen::VectorXd& v_hat, double gamma) const {
        return reward_sums + gamma * (next_counts * v_hat);
    }
};

inline Eigen::MatrixXd gram(const FeatureMap& f, const Eigen::VectorXd& counts, double lambda_reg) {
    if (f.one_hot) {
        Eigen::MatrixXd out = Eigen::MatrixXd::Zero(f.d(), f.d());
        out.diagonal() = counts.array() + lambda_reg;
        return out;
    }
    Eigen::MatrixXd out = f.phi.transpose() * counts.asDiagonal() * f.phi;
    out.diagonal().array() += lambda_reg;
    return out;
}

inline Matrix as_table(const Eigen::VectorXd& flat, Index n_states, Index n_actions) {
    return Eigen::Map<const Matrix>(flat.data(), n_states, n_actions);
}

inline Matrix bonus_from_factor(const FeatureMap& f, const Eigen::LLT<Eigen::MatrixXd>& llt, double beta) {
    const Eigen::MatrixXd whitened = llt.matrixL().solve(f.phi.transpose());
    const Eigen::VectorXd quad = whitened.colwise().squaredNorm().transpose();
    return as_table(beta * quad.cwiseSqrt(), f.n_states, f.n_actions);
}

inline Eigen::LLT<Eigen::MatrixXd> factor(const Eigen::MatrixXd& lambda) {
    Eigen::LLT<Eigen::MatrixXd> llt(lambda);
    if (llt.info() != Eigen::Success) throw ValidationError("design matrix is not positive definite");
    return llt;
}

} // namespace detail

struct BellmanFit {
    Eigen::VectorXd w_hat;
    RidgeState ridge;
};

/// Ridge solution w = Lambda^{-1} sum phi_t (r_t + gamma V(s'_t)), Lambda = lambda I + sum phi phi^T.
inline BellmanFit fit_bellman_target(const Dataset& data, const FeatureMap& features, const Vector& v_hat,
                                     double gamma, double lambda_reg) {
    detail::require(lambda_reg > 0.0, "lambda_reg must be positive");
    detail::require(v_hat.size() == features.n_states, "value vector size does not match the feature domain");
    const detail::PairStats stats(data, features);
    BellmanFit fit;
    fit.ridge.lambda_reg = lambda_reg;
    fit.ridge.lambda = detail::gram(features, stats.counts, lambda_reg);
    fit.ridge.target_accum = features.phi.transpose() * stats.targets(v_hat, gamma);
    fit.w_hat = detail::factor(fit.ridge.lambda).solve(fit.ridge.target_accum);
    return fit;
}

/// Empirical Bellman value phi(s,a)^T w for every pair.
inline Matrix linear_values(const FeatureMap& features, const Eigen::VectorXd& w) {
    return detail::as_table(features.phi * w, features.n_states, features.n_actions);
}

/// Gamma(s,a) = beta sqrt(phi^T Lambda^{-1} phi).
inline Matrix uncertainty_bonus(const FeatureMap& features, const Eigen::MatrixXd& lambda, double beta) {
    detail::require(beta >= 0.0, "beta must be nonnegative");
    return detail::bonus_from_factor(features, detail::factor(lambda), beta);
}

struct PeviResult {
    QTable q;
    VTable v;
    Policy policy;
    Eigen::VectorXd w_hat;
    Matrix bonus;
    RidgeState ridge;
    long iterations = 0;
    double max_weight_norm = 0.0; ///< largest |w|_2 over all refits
};

/// Iterates Q <- phi^T w(V) - Gamma (clipped to [0, V_max]), V <- max_a Q until the
/// sup-norm change of V is below tol. Lambda and Gamma depend on data only and
/// are factored once.
inline PeviResult pevi(const Dataset& data, const FeatureMap& features, const PeviConfig& cfg) {
    detail::check_gamma(cfg.gamma);
    detail::require(cfg.beta >= 0.0, "beta must be nonnegative");
    detail::require(cfg.lambda_reg > 0.0, "lambda_reg must be positive");
    const detail::PairStats stats(data, features);
    PeviResult out;
    out.ridge.lambda_reg = cfg.lambda_reg;
    out.ridge.lambda = detail::gram(features, stats.counts, cfg.lambda_reg);
    const auto llt = detail::factor(out.ridge.lambda);
    out.bonus = detail::bonus_from_factor(features, llt, cfg.beta);

    const double v_max = cfg.r_max / (1.0 - cfg.gamma);
    const long max_iters = cfg.solve.resolved_max_iters(cfg.gamma, cfg.r_max);
    Vector v = Vector::Zero(features.n_states);
    for (long k = 0; k < max_iters; ++k) {
        out.ridge.target_accum = features.phi.transpose() * stats.targets(v, cfg.gamma);
        out.w_hat = llt.solve(out.ridge.target_accum);
        out.max_weight_norm = std::max(out.max_weight_norm, out.w_hat.norm());
        Matrix q = linear_values(features, out.w_hat) - out.bonus;
        if (cfg.clip_vmax) q = q.cwiseMax(0.0).cwiseMin(v_max);
        Vector next = q.rowwise().maxCoeff();
        const double res = (next - v).cwiseAbs().maxCoeff();
        v = std::move(next);
        out.iterations = k + 1;
        if (res <= cfg.solve.tol) {
            out.policy = greedy_policy(q);
            out.q = {std::move(q), cfg.gamma};
            out.v = {std::move(v), cfg.gamma};
            return out;
        }
    }
    throw ConvergenceError("pevi did not converge within " + std::to_string(max_iters) + " iterations");
}

struct BetaChoice {
    double beta = 0.0;
    double zeta = 0.0;
};

/// zeta = log(4 d N / ((1-gamma) xi)), beta = c d r_max sqrt(zeta) / (1-gamma).
inline BetaChoice theoretical_beta(double d, double r_max, double gamma, double n, double xi, double c) {
    detail::check_gamma(gamma);
    detail::require(n >= 1.0, "N must be at least 1");
    detail::require(xi > 0.0 && xi < 1.0, "xi must lie in (0, 1)");
    detail::require(c > 0.0 && d > 0.0, "c and d must be positive");
    const double arg = 4.0 * d * n / ((1.0 - gamma) * xi);
    detail::require(arg > 0.0, "nonpositive log argument");
    const double zeta = std::log(arg);
    return {c * d * r_max * std::sqrt(zeta) / (1.0 - gamma), zeta};
}

/// Fraction of pairs with |(B_hat V)(s,a) - (B V)(s,a)| <= Gamma(s,a) + slack, where the
/// exact operator is applied in `truth`.
inline double quantifier_validity(const Dataset& data, const FeatureMap& features, const Vector& v_hat,
                                  double gamma, double lambda_reg, double beta, const TabularMdp& truth,
                                  double slack = 0.0) {
    detail::require(truth.n_states == features.n_states && truth.n_actions == features.n_actions,
                    "feature domain does not match the MDP");
    const auto fit = fit_bellman_target(data, features, v_hat, gamma, lambda_reg);
    const Matrix estimate = linear_values(features, fit.w_hat);
    const Matrix exact = bellman_operator(truth, v_hat, gamma).values;
    const Matrix bonus = uncertainty_bonus(features, fit.ridge.lambda, beta);
    const auto ok = ((estimate - exact).cwiseAbs().array() <= bonus.array() + slack).count();
    return static_cast<double>(ok) / static_cast<double>(estimate.size());
}

struct SubOptDecomposition {
    Vector lhs;          ///< V^{pi*}(s) - V^{pi_hat}(s)
    Vector rhs;          ///< sum of the three discounted terms
    Vector hat_delta;    ///< -E_{pi_hat}[sum gamma^t delta]
    Vector star_delta;   ///< E_{pi*}[sum gamma^t delta]
    Vector policy_gap;   ///< E_{pi*}[sum gamma^t <Q_hat, pi* - pi_hat>]
    double max_residual = 0.0;
};

/// Evaluates both sides of the suboptimality decomposition with
/// delta = B_gamma V_hat - Q_hat computed in the true MDP. Requires V_hat = E_{pi_hat}[Q_hat].
inline SubOptDecomposition verify_subopt_decomposition(const TabularMdp& truth, const Matrix& q_hat,
                                                       const Vector& v_hat, const Policy& pi_hat, double gamma,
                                                       const SolveOptions& opts = {}) {
    detail::check_gamma(gamma);
    detail::require(q_hat.rows() == truth.n_states && q_hat.cols() == truth.n_actions, "Q table shape mismatch");
    detail::require((policy_average(pi_hat, q_hat) - v_hat).cwiseAbs().maxCoeff() <=
                        1e-9 * std::max(1.0, v_hat.cwiseAbs().maxCoeff()),
                    "decomposition requires V_hat = E_pi_hat[Q_hat]");
    const Policy pi_star = value_iteration(truth, gamma, opts).policy;
    const Matrix delta = bellman_operator(truth, v_hat, gamma).values - q_hat;

    SubOptDecomposition out;
    out.lhs = policy_evaluation_exact(truth, pi_star, gamma).values -
              policy_evaluation_exact(truth, pi_hat, gamma).values;
    const Matrix visits_hat = discounted_visits(truth, pi_hat, gamma);
    const Matrix visits_star = discounted_visits(truth, pi_star, gamma);
    out.hat_delta = -visits_hat * policy_average(pi_hat, delta);
    out.star_delta = visits_star * policy_average(pi_star, delta);
    const Matrix gap = pi_star.probs - pi_hat.probs;
    out.policy_gap = visits_star * gap.cwiseProduct(q_hat).rowwise().sum();
    out.rhs = out.hat_delta + out.star_delta + out.policy_gap;
    out.max_residual = (out.lhs - out.rhs).cwiseAbs().maxCoeff();
    return out;
}

} // namespace gammareg
