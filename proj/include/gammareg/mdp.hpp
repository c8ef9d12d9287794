#pragma once

// Core tabular / linear MDP types and the exact Bellman operators.
//
// Layout conventions used throughout the library:
//   * transitions are stored as a dense (S*A) x S row-major matrix; row s*A+a
//     is the next-state distribution of the pair (s, a);
//   * state-action tables are S x A row-major matrices, so a product
//     `transition * v` can be viewed in place as an S x A table.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gammareg {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kStoredProbTol = 1e-12;
inline constexpr double kDerivedProbTol = 1e-10;

/// Thrown when inputs violate a documented precondition.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown when an iterative solver exhausts its iteration budget.
class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool cond, const std::string& what) {
    if (!cond) throw ValidationError(what);
}

inline void check_gamma(double gamma) {
    require(gamma >= 0.0 && gamma < 1.0,
            "discount must lie in [0, 1), got " + std::to_string(gamma));
}

} // namespace detail

/// Finite MDP with a dense transition tensor and deterministic rewards.
/// The discount is deliberately not stored: every solver takes it as an argument.
struct TabularMdp {
    Index n_states = 0;
    Index n_actions = 0;
    Matrix transition; ///< (S*A) x S
    Matrix reward;     ///< S x A
    double r_max = 1.0;
    Vector init_dist;  ///< S

    Index pair(Index s, Index a) const { return s * n_actions + a; }
    double p(Index s, Index a, Index next) const { return transition(pair(s, a), next); }
    auto row(Index s, Index a) const { return transition.row(pair(s, a)); }
    double v_max(double gamma) const { return r_max / (1.0 - gamma); }

    static TabularMdp zeros(Index n_states, Index n_actions, double r_max = 1.0) {
        TabularMdp m;
        m.n_states = n_states;
        m.n_actions = n_actions;
        m.r_max = r_max;
        m.transition = Matrix::Zero(n_states * n_actions, n_states);
        m.reward = Matrix::Zero(n_states, n_actions);
        m.init_dist = Vector::Constant(n_states, 1.0 / static_cast<double>(n_states));
        return m;
    }
};

/// Row-stochastic S x A action distribution.
struct Policy {
    Matrix probs;
    bool deterministic = false;

    Index n_states() const { return probs.rows(); }
    Index n_actions() const { return probs.cols(); }

    static Policy from_actions(const std::vector<Index>& actions, Index n_actions) {
        Policy pi;
        pi.probs = Matrix::Zero(static_cast<Index>(actions.size()), n_actions);
        for (std::size_t s = 0; s < actions.size(); ++s)
            pi.probs(static_cast<Index>(s), actions[s]) = 1.0;
        pi.deterministic = true;
        return pi;
    }

    static Policy uniform(Index n_states, Index n_actions) {
        Policy pi;
        pi.probs = Matrix::Constant(n_states, n_actions, 1.0 / static_cast<double>(n_actions));
        pi.deterministic = n_actions == 1;
        return pi;
    }

    /// Action chosen in state s; only meaningful for deterministic policies.
    Index action(Index s) const {
        Index a = 0;
        probs.row(s).maxCoeff(&a);
        return a;
    }
};

struct QTable {
    Matrix values; ///< S x A
    double gamma_used = 0.0;
};

struct VTable {
    Vector values; ///< S
    double gamma_used = 0.0;
};

/// Greedy deterministic policy, ties to the lowest action index.
inline Policy greedy_policy(const Matrix& q) {
    std::vector<Index> actions(static_cast<std::size_t>(q.rows()));
    for (Index s = 0; s < q.rows(); ++s) {
        Index best = 0;
        for (Index a = 1; a < q.cols(); ++a)
            if (q(s, a) > q(s, best)) best = a;
        actions[static_cast<std::size_t>(s)] = best;
    }
    return Policy::from_actions(actions, q.cols());
}

// ---------------------------------------------------------------------------
// Validation

struct Violation {
    std::string kind;
    Index s = -1;
    Index a = -1;
    double magnitude = 0.0;
    std::string message;
};

using ValidationReport = std::vector<Violation>;

inline ValidationReport validate_mdp(const TabularMdp& mdp) {
    ValidationReport report;
    auto add = [&](std::string kind, Index s, Index a, double mag, const std::string& msg) {
        report.push_back({std::move(kind), s, a, mag, msg});
    };
    const Index S = mdp.n_states, A = mdp.n_actions;
    if (S < 1 || A < 1) {
        add("shape", -1, -1, 0.0, "n_states and n_actions must be positive");
        return report;
    }
    if (mdp.transition.rows() != S * A || mdp.transition.cols() != S)
        add("shape", -1, -1, 0.0, "transition must be (S*A) x S");
    if (mdp.reward.rows() != S || mdp.reward.cols() != A)
        add("shape", -1, -1, 0.0, "reward must be S x A");
    if (mdp.init_dist.size() != S)
        add("shape", -1, -1, 0.0, "init_dist must have S entries");
    if (!report.empty()) return report;
    if (!(mdp.r_max > 0.0) || !std::isfinite(mdp.r_max))
        add("r_max", -1, -1, mdp.r_max, "r_max must be positive and finite");

    for (Index s = 0; s < S; ++s) {
        for (Index a = 0; a < A; ++a) {
            const auto row = mdp.row(s, a);
            const double mn = row.minCoeff();
            if (!(mn >= 0.0))
                add("transition_negative", s, a, -mn, "negative transition probability");
            const double sum = row.sum();
            if (!(std::abs(sum - 1.0) <= kStoredProbTol)) {
                std::ostringstream os;
                os << "transition row (" << s << "," << a << ") sums to " << sum;
                add("transition_sum", s, a, 1.0 - sum, os.str());
            }
            const double r = mdp.reward(s, a);
            if (!(r >= 0.0 && r <= mdp.r_max)) {
                const double mag = r < 0.0 ? -r : r - mdp.r_max;
                add("reward_bound", s, a, std::isfinite(mag) ? mag : std::numeric_limits<double>::infinity(),
                    "reward outside [0, r_max]");
            }
        }
    }
    const double mn = mdp.init_dist.minCoeff();
    if (!(mn >= 0.0)) add("init_negative", -1, -1, -mn, "negative initial probability");
    const double sum = mdp.init_dist.sum();
    if (!(std::abs(sum - 1.0) <= kStoredProbTol))
        add("init_sum", -1, -1, 1.0 - sum, "init_dist does not sum to 1");
    return report;
}

inline void require_valid(const TabularMdp& mdp) {
    const auto report = validate_mdp(mdp);
    if (!report.empty()) throw ValidationError("invalid MDP: " + report.front().message);
}

inline ValidationReport validate_policy(const Policy& pi, Index n_states, Index n_actions) {
    ValidationReport report;
    if (pi.probs.rows() != n_states || pi.probs.cols() != n_actions) {
        report.push_back({"shape", -1, -1, 0.0, "policy shape mismatch"});
        return report;
    }
    for (Index s = 0; s < n_states; ++s) {
        const auto row = pi.probs.row(s);
        if (!(row.minCoeff() >= 0.0))
            report.push_back({"policy_negative", s, -1, -row.minCoeff(), "negative action probability"});
        if (!(std::abs(row.sum() - 1.0) <= kStoredProbTol))
            report.push_back({"policy_sum", s, -1, 1.0 - row.sum(), "action distribution does not sum to 1"});
        if (pi.deterministic && (row.array() == 1.0).count() != 1)
            report.push_back({"policy_deterministic", s, -1, 0.0, "deterministic row without a unit entry"});
    }
    return report;
}

// ---------------------------------------------------------------------------
// Bellman operators

/// Expected next-state value P(.|s,a) . v, viewed as an S x A table.
inline Matrix expected_next(const TabularMdp& mdp, const Vector& v) {
    detail::require(v.size() == mdp.n_states, "value vector size does not match the MDP");
    const Vector pv = mdp.transition * v;
    return Eigen::Map<const Matrix>(pv.data(), mdp.n_states, mdp.n_actions);
}

/// (B_gamma v)(s,a) = r(s,a) + gamma * sum_s' P(s'|s,a) v(s').
inline QTable bellman_operator(const TabularMdp& mdp, const Vector& v, double gamma) {
    detail::check_gamma(gamma);
    if (gamma == 0.0) {
        detail::require(v.size() == mdp.n_states, "value vector size does not match the MDP");
        return {mdp.reward, gamma};
    }
    return {mdp.reward + gamma * expected_next(mdp, v), gamma};
}

inline QTable bellman_operator(const TabularMdp& mdp, const VTable& v, double gamma) {
    return bellman_operator(mdp, v.values, gamma);
}

/// Row-wise expectation sum_a pi(a|s) q(s,a).
inline Vector policy_average(const Policy& pi, const Matrix& q) {
    detail::require(pi.probs.rows() == q.rows() && pi.probs.cols() == q.cols(),
                    "policy and table shapes differ");
    return pi.probs.cwiseProduct(q).rowwise().sum();
}

/// (T_pi v)(s) = sum_a pi(a|s) [ r(s,a) + gamma sum_s' P(s'|s,a) v(s') ].
inline VTable policy_bellman_operator(const TabularMdp& mdp, const Policy& pi, const Vector& v,
                                      double gamma) {
    detail::require(pi.probs.rows() == mdp.n_states && pi.probs.cols() == mdp.n_actions,
                    "policy shape does not match the MDP");
    return {policy_average(pi, bellman_operator(mdp, v, gamma).values), gamma};
}

/// State-to-state kernel P_pi(s, s') = sum_a pi(a|s) P(s'|s,a).
inline Matrix policy_transition(const TabularMdp& mdp, const Policy& pi) {
    const Index S = mdp.n_states, A = mdp.n_actions;
    Matrix out = Matrix::Zero(S, S);
    for (Index s = 0; s < S; ++s)
        for (Index a = 0; a < A; ++a) {
            const double w = pi.probs(s, a);
            if (w != 0.0) out.row(s) += w * mdp.transition.row(s * A + a);
        }
    return out;
}

// ---------------------------------------------------------------------------
// Linear MDP (feature-map) model

/// Linear MDP: P(s'|s,a) = phi(s,a)^T M psi(s'), r(s,a) = phi(s,a)^T theta.
/// Features are enumerated over the finite domain: phi is (S*A) x d, psi is S x l.
struct LinearMdp {
    Index n_states = 0;
    Index n_actions = 0;
    Matrix phi;      ///< (S*A) x d
    Matrix psi;      ///< S x l
    Matrix m;        ///< d x l
    Vector theta;    ///< d
    double r_max = 1.0;
    Vector init_dist;

    Index d() const { return phi.cols(); }
    Index l() const { return psi.cols(); }
};

inline ValidationReport validate_linear_mdp(const LinearMdp& lin) {
    ValidationReport report;
    const Index S = lin.n_states, A = lin.n_actions;
    if (lin.phi.rows() != S * A || lin.psi.rows() != S || lin.m.rows() != lin.d() ||
        lin.m.cols() != lin.l() || lin.theta.size() != lin.d()) {
        report.push_back({"shape", -1, -1, 0.0, "linear MDP component shapes disagree"});
        return report;
    }
    const double sqrt_d = std::sqrt(static_cast<double>(lin.d()));
    if (lin.phi.size() > 0 && lin.phi.cwiseAbs().maxCoeff() > 1.0)
        report.push_back({"phi_bound", -1, -1, lin.phi.cwiseAbs().maxCoeff() - 1.0, "|phi|_inf > 1"});
    if (lin.psi.size() > 0 && lin.psi.cwiseAbs().maxCoeff() > 1.0)
        report.push_back({"psi_bound", -1, -1, lin.psi.cwiseAbs().maxCoeff() - 1.0, "|psi|_inf > 1"});
    const double m_norm = Eigen::JacobiSVD<Eigen::MatrixXd>(lin.m).singularValues()(0);
    if (m_norm > sqrt_d + 1e-12)
        report.push_back({"m_norm", -1, -1, m_norm - sqrt_d, "spectral norm of M exceeds sqrt(d)"});
    if (lin.theta.norm() > sqrt_d + 1e-12)
        report.push_back({"theta_norm", -1, -1, lin.theta.norm() - sqrt_d, "|theta|_2 exceeds sqrt(d)"});
    const Matrix induced = lin.phi * lin.m * lin.psi.transpose();
    for (Index i = 0; i < induced.rows(); ++i) {
        const double mn = induced.row(i).minCoeff();
        const double sum = induced.row(i).sum();
        if (mn < -kDerivedProbTol || std::abs(sum - 1.0) > kDerivedProbTol)
            report.push_back({"induced_transition", i / A, i % A, std::max(-mn, std::abs(sum - 1.0)),
                              "induced transition is not a distribution"});
    }
    return report;
}

/// Materialize the tabular MDP induced by a linear MDP.
inline TabularMdp to_tabular(const LinearMdp& lin) {
    const auto report = validate_linear_mdp(lin);
    if (!report.empty()) throw ValidationError("invalid linear MDP: " + report.front().message);
    TabularMdp m = TabularMdp::zeros(lin.n_states, lin.n_actions, lin.r_max);
    m.transition = (lin.phi * lin.m * lin.psi.transpose()).cwiseMax(0.0);
    for (Index i = 0; i < m.transition.rows(); ++i) m.transition.row(i) /= m.transition.row(i).sum();
    const Vector r = lin.phi * lin.theta;
    m.reward = Eigen::Map<const Matrix>(r.data(), lin.n_states, lin.n_actions);
    if (lin.init_dist.size() == lin.n_states) m.init_dist = lin.init_dist;
    return m;
}

/// One-hot linear representation of a tabular MDP (d = S*A, l = S).
inline LinearMdp one_hot_linear(const TabularMdp& mdp) {
    LinearMdp lin;
    lin.n_states = mdp.n_states;
    lin.n_actions = mdp.n_actions;
    const Index d = mdp.n_states * mdp.n_actions;
    lin.phi = Matrix::Identity(d, d);
    lin.psi = Matrix::Identity(mdp.n_states, mdp.n_states);
    lin.m = mdp.transition;
    lin.theta = Eigen::Map<const Vector>(mdp.reward.data(), d);
    lin.r_max = mdp.r_max;
    lin.init_dist = mdp.init_dist;
    return lin;
}

} // namespace gammareg
