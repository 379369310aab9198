#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>

#include "erracc/common.hpp"
#include "erracc/rng.hpp"

namespace erracc::dynamics {

struct L63Params {
    double sigma = 10.0;
    double rho = 28.0;
    double beta = 2.667;  // stored as the decimal value, not 8/3
};

// Two-tier system: K slow variables X coupled to J fast variables Y per X.
// State vectors are stacked [X_0..X_{K-1}, Y_0..Y_{JK-1}] with cyclic indexing.
struct L96Params {
    int K = 8;
    int J = 32;
    double h = 1.0;
    double b = 10.0;
    double c = 10.0;
    double F = 20.0;

    int dim() const { return K + J * K; }

    void validate() const {
        if (K < 4) throw ConfigError("L96Params: K must be >= 4 (advection stencil)");
        if (J < 1) throw ConfigError("L96Params: J must be >= 1");
    }
};

struct IntegratorConfig {
    double dt = 0.01;          // model time units per internal step
    int save_every = 1;        // internal steps per saved sample
    std::int64_t n_save = 1;   // saved samples to produce

    void validate() const {
        if (!(dt > 0.0)) throw ConfigError("IntegratorConfig: dt must be > 0");
        if (save_every < 1) throw ConfigError("IntegratorConfig: save_every must be >= 1");
        if (n_save < 1) throw ConfigError("IntegratorConfig: n_save must be >= 1");
    }
};

inline void l63_deriv(const L63Params& p, const Eigen::Vector3d& s, Eigen::Vector3d& ds) {
    ds[0] = p.sigma * (s[1] - s[0]);
    ds[1] = s[0] * (p.rho - s[2]) - s[1];
    ds[2] = s[0] * s[1] - p.beta * s[2];
}

inline Eigen::Vector3d l63_deriv(const L63Params& p, const Eigen::Vector3d& s) {
    Eigen::Vector3d ds;
    l63_deriv(p, s, ds);
    return ds;
}

inline void l96_deriv(const L96Params& p, const VectorXd& s, VectorXd& ds) {
    const int K = p.K;
    const int J = p.J;
    const int n_fast = J * K;
    if (s.size() != p.dim())
        throw ConfigError("l96_deriv: state size " + std::to_string(s.size()) +
                          " does not match params dim " + std::to_string(p.dim()));
    ds.resize(s.size());

    const double hc_b = p.h * p.c / p.b;
    const auto X = s.head(K);
    const auto Y = s.tail(n_fast);

    for (int k = 0; k < K; ++k) {
        const double xm1 = X[(k - 1 + K) % K];
        const double xm2 = X[(k - 2 + K) % K];
        const double xp1 = X[(k + 1) % K];
        const double coupling = Y.segment(k * J, J).sum();
        ds[k] = -xm1 * (xm2 - xp1) - X[k] + p.F - hc_b * coupling;
    }
    // The fast-variable coupling enters with +hc/b so the coupling exchanges
    // energy between tiers instead of injecting it; this is the standard
    // two-tier convention and the one that reproduces the known climatology
    // for these parameters (X mostly in [-10, 15], mean near 2.5).
    for (int j = 0; j < n_fast; ++j) {
        const double yp1 = Y[(j + 1) % n_fast];
        const double yp2 = Y[(j + 2) % n_fast];
        const double ym1 = Y[(j - 1 + n_fast) % n_fast];
        ds[K + j] = -p.c * p.b * yp1 * (yp2 - ym1) - p.c * Y[j] + hc_b * X[j / J];
    }
}

inline VectorXd l96_deriv(const L96Params& p, const VectorXd& s) {
    VectorXd ds;
    l96_deriv(p, s, ds);
    return ds;
}

// Classical fixed-step RK4; `deriv(state, out)` fills the derivative.
template <class Deriv, class Vec>
void rk4_step(Deriv&& deriv, Vec& state, double dt) {
    Vec k1, k2, k3, k4, tmp;
    deriv(state, k1);
    tmp = state + (0.5 * dt) * k1;
    deriv(tmp, k2);
    tmp = state + (0.5 * dt) * k2;
    deriv(tmp, k3);
    tmp = state + dt * k3;
    deriv(tmp, k4);
    state += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

// Streams each saved sample into `sink(saved_index, state)`.
// Throws NumericError naming the failing internal step if the state leaves
// the finite range.
template <class Deriv, class Vec, class Sink>
void integrate_steps(Deriv&& deriv, Vec& state, const IntegratorConfig& cfg, Sink&& sink) {
    cfg.validate();
    if (!state.allFinite()) throw NumericError("integrate: non-finite initial condition");
    std::int64_t step = 0;
    for (std::int64_t i = 0; i < cfg.n_save; ++i) {
        for (int k = 0; k < cfg.save_every; ++k) {
            rk4_step(deriv, state, cfg.dt);
            ++step;
            if (!state.allFinite())
                throw NumericError("integrate: non-finite state at internal step " +
                                   std::to_string(step));
        }
        sink(i, state);
    }
}

struct Trajectory {
    SystemKind system = SystemKind::L63;
    double dt_between_rows = 0.0;  // model time units between saved rows
    MatrixXd values;               // [n_save x D_full]
};

inline Trajectory integrate(const L63Params& p, const Eigen::Vector3d& ic,
                            const IntegratorConfig& cfg) {
    Trajectory out;
    out.system = SystemKind::L63;
    out.dt_between_rows = cfg.dt * cfg.save_every;
    out.values.resize(cfg.n_save, 3);
    Eigen::Vector3d state = ic;
    auto deriv = [&p](const Eigen::Vector3d& s, Eigen::Vector3d& ds) { l63_deriv(p, s, ds); };
    integrate_steps(deriv, state, cfg,
                    [&out](std::int64_t i, const Eigen::Vector3d& s) { out.values.row(i) = s; });
    return out;
}

inline Trajectory integrate(const L96Params& p, const VectorXd& ic, const IntegratorConfig& cfg) {
    p.validate();
    Trajectory out;
    out.system = SystemKind::L96;
    out.dt_between_rows = cfg.dt * cfg.save_every;
    out.values.resize(cfg.n_save, p.dim());
    VectorXd state = ic;
    auto deriv = [&p](const VectorXd& s, VectorXd& ds) { l96_deriv(p, s, ds); };
    integrate_steps(deriv, state, cfg,
                    [&out](std::int64_t i, const VectorXd& s) { out.values.row(i) = s; });
    return out;
}

// Truth-generation initial conditions. The seeding makes dataset generation
// reproducible; transients are absorbed by the burn-in discard downstream.
inline Eigen::Vector3d l63_initial_state() { return Eigen::Vector3d(1.0, 1.0, 1.0); }

inline VectorXd l96_initial_state(const L96Params& p, std::uint64_t seed) {
    RngStream rng(mix_seed(seed, 0x1963));
    VectorXd s(p.dim());
    for (int k = 0; k < p.K; ++k) s[k] = p.F + rng.gaussian();
    for (int j = 0; j < p.J * p.K; ++j) s[p.K + j] = 0.1 * rng.gaussian();
    return s;
}

}  // namespace erracc::dynamics
