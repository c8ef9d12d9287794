#pragma once

#include "gammareg/gammareg.hpp"

#include <gtest/gtest.h>

namespace gtest_support {

using namespace gammareg;

/// 1 state, `n_actions` actions, all rewards r.
inline TabularMdp single_state(double r, Index n_actions = 1, double r_max = 1.0) {
    TabularMdp m = TabularMdp::zeros(1, n_actions, r_max);
    m.transition.setOnes();
    m.reward.setConstant(r);
    return m;
}

/// s0 -> s1 -> s1 absorbing; r(s0,.) = 0, r(s1,.) = 1. Action 1 at s1 is a
/// zero-reward self loop when `trap` is set.
inline TabularMdp chain(bool trap = false) {
    TabularMdp m = TabularMdp::zeros(2, 2, 1.0);
    for (Index a = 0; a < 2; ++a) {
        m.transition(m.pair(0, a), 1) = 1.0;
        m.transition(m.pair(1, a), 1) = 1.0;
        m.reward(1, a) = 1.0;
    }
    if (trap) m.reward(1, 1) = 0.0;
    return m;
}

inline Vector random_vector(Index n, Rng& rng, double lo = 0.0, double hi = 1.0) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v(i) = rng.uniform(lo, hi);
    return v;
}

inline Policy random_policy(Index S, Index A, Rng& rng) {
    Policy pi;
    pi.probs = Matrix(S, A);
    for (Index s = 0; s < S; ++s) {
        for (Index a = 0; a < A; ++a) pi.probs(s, a) = rng.exponential();
        pi.probs.row(s) /= pi.probs.row(s).sum();
    }
    return pi;
}

inline Vector random_distribution(Index n, Rng& rng) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v(i) = rng.exponential();
    return v / v.sum();
}

/// Q(s,a) = r(s,a) + gamma sum_s' P(s'|s,a) v(s') by explicit loops.
inline Matrix brute_bellman(const TabularMdp& m, const Vector& v, double gamma) {
    Matrix q(m.n_states, m.n_actions);
    for (Index s = 0; s < m.n_states; ++s)
        for (Index a = 0; a < m.n_actions; ++a) {
            double acc = 0.0;
            for (Index t = 0; t < m.n_states; ++t) acc += m.p(s, a, t) * v(t);
            q(s, a) = m.reward(s, a) + gamma * acc;
        }
    return q;
}

} // namespace gtest_support
