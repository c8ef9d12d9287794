#pragma once

// Coverage coefficients and closed-form suboptimality bounds for learning
// with a guidance discount lower than the evaluation discount.

#include "gammareg/pevi.hpp"
#include "gammareg/solvers.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <vector>

namespace gammareg {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Inclusive grid lo, lo+step, ..., hi, snapped to 1e-12 so decimal steps stay clean.
inline std::vector<double> make_grid(double lo, double hi, double step) {
    detail::require(step > 0.0 && hi >= lo, "grid needs step > 0 and hi >= lo");
    const auto n = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
    std::vector<double> grid;
    for (long k = 0; k <= n; ++k) grid.push_back(std::round((lo + static_cast<double>(k) * step) * 1e12) / 1e12);
    return grid;
}

// ---------------------------------------------------------------------------
// Coverage

namespace detail {

inline void require_distribution(const Matrix& m, const char* name) {
    require(m.size() > 0 && m.minCoeff() >= 0.0 && std::abs(m.sum() - 1.0) <= 1e-8,
            std::string(name) + " must be a probability distribution over (s,a)");
}

} // namespace detail

/// sup_x x^T S_target x / x^T S_data x with S_w = sum_{s,a} w(s,a) phi phi^T, restricted
/// to the range of S_data. Returns +inf if S_target has mass outside that range.
inline double coverage_coefficient(const Matrix& frequency, const Matrix& target, const FeatureMap& features) {
    detail::require(frequency.rows() == features.n_states && frequency.cols() == features.n_actions &&
                        target.rows() == frequency.rows() && target.cols() == frequency.cols(),
                    "coverage inputs must be S x A tables over the feature domain");
    detail::require_distribution(frequency, "frequency");
    detail::require_distribution(target, "target occupancy");
    constexpr double kResidualTol = 1e-10;

    if (features.one_hot) {
        double outside = 0.0, ratio = 0.0;
        for (Index s = 0; s < target.rows(); ++s)
            for (Index a = 0; a < target.cols(); ++a) {
                if (frequency(s, a) > 0.0) ratio = std::max(ratio, target(s, a) / frequency(s, a));
                else outside += target(s, a);
            }
        return outside > kResidualTol ? kInfinity : ratio;
    }

    const Eigen::Map<const Eigen::VectorXd> f(frequency.data(), frequency.size());
    const Eigen::Map<const Eigen::VectorXd> t(target.data(), target.size());
    const Eigen::MatrixXd sigma_data = features.phi.transpose() * f.asDiagonal() * features.phi;
    const Eigen::MatrixXd sigma_target = features.phi.transpose() * t.asDiagonal() * features.phi;

    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma_data);
    const Eigen::VectorXd& lam = eig.eigenvalues();
    const double cutoff = 1e-12 * std::max(1.0, lam.cwiseAbs().maxCoeff());
    std::vector<Index> range, null;
    for (Index i = 0; i < lam.size(); ++i) (lam(i) > cutoff ? range : null).push_back(i);
    if (range.empty()) return kInfinity;

    const Eigen::MatrixXd u_range = eig.eigenvectors()(Eigen::all, range);
    if (!null.empty()) {
        const Eigen::MatrixXd u_null = eig.eigenvectors()(Eigen::all, null);
        if ((u_null.transpose() * sigma_target * u_null).trace() > kResidualTol) return kInfinity;
    }
    const Eigen::VectorXd inv_sqrt = lam(range).cwiseSqrt().cwiseInverse();
    const Eigen::MatrixXd whitened =
        inv_sqrt.asDiagonal() * (u_range.transpose() * sigma_target * u_range) * inv_sqrt.asDiagonal();
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(whitened, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
}

/// max over start states s of the coverage of the discounted occupancy of `target_policy`
/// started at s (per-state coefficient).
inline double per_state_coverage(const TabularMdp& mdp, const Policy& target_policy, double gamma,
                                 const Matrix& frequency, const FeatureMap& features) {
    double worst = 0.0;
    for (const auto& occ : occupancy_from_each_state(mdp, target_policy, gamma)) {
        worst = std::max(worst, coverage_coefficient(frequency, occ, features));
        if (std::isinf(worst)) break;
    }
    return worst;
}

/// Coverage of the occupancy started from mu0 (distribution-level coefficient).
inline double initial_coverage(const TabularMdp& mdp, const Policy& target_policy, double gamma,
                               const Matrix& frequency, const FeatureMap& features) {
    return coverage_coefficient(frequency, occupancy_measure(mdp, target_policy, gamma), features);
}

// ---------------------------------------------------------------------------
// Bounds

/// Inputs shared by the bound calculators. The absolute constants are never
/// fixed by the theory and default to 1.
struct BoundInputs {
    double c = 1.0;
    double c1 = 1.0;
    double c2 = 1.0;
    double c3 = 1.0;
    double d = 1.0;
    double n = 1.0;
    double xi = 0.1;
    double r_max = 1.0;
    double gamma = 0.9;
    double gamma_e = 0.95;
    double coverage = 1.0; ///< may be +inf
};

/// (gamma_e - gamma) / ((1 - gamma)(1 - gamma_e)) * r_max
inline double lemma1_gap(double gamma, double gamma_e, double r_max) {
    detail::require(gamma >= 0.0 && gamma <= gamma_e && gamma_e < 1.0, "need 0 <= gamma <= gamma_e < 1");
    return (gamma_e - gamma) / ((1.0 - gamma) * (1.0 - gamma_e)) * r_max;
}

struct Lemma1Check {
    bool lower_ok = false;
    bool upper_ok = false;
    double slack = 0.0; ///< min over states of (gap bound - actual gap)
};

/// Checks V_gamma(pi) <= V_gamma_e(pi) <= V_gamma(pi) + lemma1_gap at every state, within 4 tol / (1 - gamma_e).
inline Lemma1Check verify_lemma1(const TabularMdp& mdp, const Policy& pi, double gamma, double gamma_e,
                                 const SolveOptions& opts = {}) {
    const double bound = lemma1_gap(gamma, gamma_e, mdp.r_max);
    const double tol = 4.0 * opts.tol / (1.0 - gamma_e);
    const Vector low = policy_evaluation_exact(mdp, pi, gamma).values;
    const Vector high = policy_evaluation_exact(mdp, pi, gamma_e).values;
    const Vector gap = high - low;
    Lemma1Check out;
    out.lower_ok = gap.minCoeff() >= -tol;
    out.slack = bound - gap.maxCoeff();
    out.upper_ok = out.slack >= -tol;
    return out;
}

inline double lemma2_zeta(const BoundInputs& in) {
    detail::check_gamma(in.gamma);
    detail::require(in.n >= 1.0 && in.xi > 0.0 && in.xi < 1.0 && in.d > 0.0, "need N >= 1, xi in (0,1), d > 0");
    return std::log(4.0 * in.d * in.n / ((1.0 - in.gamma) * in.xi));
}

/// 2 c r_max / (1-gamma)^2 * sqrt(c_dagger d^3 zeta / N), zeta = log(4 d N / ((1-gamma) xi)).
inline double lemma2_bound(const BoundInputs& in) {
    const double zeta = lemma2_zeta(in);
    if (std::isinf(in.coverage)) return kInfinity;
    detail::require(in.coverage >= 0.0, "coverage coefficient must be nonnegative");
    const double g = 1.0 - in.gamma;
    return 2.0 * in.c * in.r_max / (g * g) * std::sqrt(in.coverage * in.d * in.d * in.d * zeta / in.n);
}

inline double theorem1_bound(const BoundInputs& in) {
    return lemma2_bound(in) + lemma1_gap(in.gamma, in.gamma_e, in.r_max);
}

struct GuidanceChoice {
    double gamma_star = 0.0;
    double bound = 0.0;
};

/// Grid argmin of theorem1_bound over the guidance discount; ties go to the smallest gamma.
inline GuidanceChoice optimal_guidance_gamma(BoundInputs in, const std::vector<double>& grid) {
    detail::require(!grid.empty(), "guidance grid is empty");
    GuidanceChoice best{0.0, kInfinity};
    bool first = true;
    for (double g : grid) {
        detail::require(g >= 0.0 && g <= in.gamma_e, "grid points must lie in [0, gamma_e]");
        in.gamma = g;
        const double b = theorem1_bound(in);
        if (first || b < best.bound) best = {g, b};
        first = false;
    }
    return best;
}

struct BoundRow {
    double gamma = 0.0;
    double lemma2_term = 0.0;
    double lemma1_term = 0.0;
    double theorem1_total = 0.0;
};

inline std::vector<BoundRow> bound_report(BoundInputs in, const std::vector<double>& grid) {
    std::vector<BoundRow> rows;
    for (double g : grid) {
        in.gamma = g;
        const double l2 = lemma2_bound(in);
        const double l1 = lemma1_gap(g, in.gamma_e, in.r_max);
        rows.push_back({g, l2, l1, l2 + l1});
    }
    return rows;
}

struct LowDiscountBound {
    double bound = 0.0;
    double epsilon = 0.0;
    double guidance_gamma = 0.0; ///< (1 - epsilon) gamma_e
    double zeta = 0.0;
};

/// epsilon = c1 sqrt(d zeta / N), zeta = log^2(c2 N d / xi);
/// bound = c3 / (1-gamma_e)^2 * sqrt(c_ddagger d^2 zeta / N) * r_max.
inline LowDiscountBound theorem2_bound(const BoundInputs& in) {
    detail::require(in.gamma_e >= 0.0 && in.gamma_e < 1.0, "gamma_e must lie in [0, 1)");
    detail::require(in.n >= 1.0 && in.xi > 0.0 && in.xi < 1.0 && in.d > 0.0, "need N >= 1, xi in (0,1), d > 0");
    const double l = std::log(in.c2 * in.n * in.d / in.xi);
    LowDiscountBound out;
    out.zeta = l * l;
    out.epsilon = in.c1 * std::sqrt(in.d * out.zeta / in.n);
    if (!(out.epsilon < 1.0))
        throw ValidationError("dataset too small for the lower-discount regime: epsilon = " +
                              std::to_string(out.epsilon) + " >= 1");
    out.guidance_gamma = (1.0 - out.epsilon) * in.gamma_e;
    const double g = 1.0 - in.gamma_e;
    out.bound = std::isinf(in.coverage)
                    ? kInfinity
                    : in.c3 / (g * g) * std::sqrt(in.coverage * in.d * in.d * out.zeta / in.n) * in.r_max;
    return out;
}

} // namespace gammareg
