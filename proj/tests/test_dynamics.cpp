#include <doctest.h>

#include <cmath>

#include "erracc/dynamics.hpp"

using namespace erracc;
using namespace erracc::dynamics;

namespace {

// Index-naive 1-based evaluation of the two-tier field, as a separate route
// from the production implementation.
VectorXd l96_deriv_naive(const L96Params& p, const VectorXd& s) {
    const int K = p.K, J = p.J, n = J * K;
    auto X = [&](int k) {  // 1-based, cyclic
        int i = ((k - 1) % K + K) % K;
        return s[i];
    };
    auto Y = [&](int j) {
        int i = ((j - 1) % n + n) % n;
        return s[K + i];
    };
    VectorXd ds(p.dim());
    for (int k = 1; k <= K; ++k) {
        double coupling = 0.0;
        for (int j = J * (k - 1) + 1; j <= k * J; ++j) coupling += Y(j);
        ds[k - 1] = -X(k - 1) * (X(k - 2) - X(k + 1)) - X(k) + p.F - p.h * p.c / p.b * coupling;
    }
    for (int j = 1; j <= n; ++j) {
        const int owner = (j - 1) / J + 1;
        ds[K + j - 1] = -p.c * p.b * Y(j + 1) * (Y(j + 2) - Y(j - 1)) - p.c * Y(j) +
                        p.h * p.c / p.b * X(owner);
    }
    return ds;
}

Eigen::Vector3d integrate_l63_fine(const Eigen::Vector3d& ic, double horizon, double dt) {
    L63Params p;
    Eigen::Vector3d s = ic;
    const auto n = static_cast<std::int64_t>(std::llround(horizon / dt));
    auto deriv = [&p](const Eigen::Vector3d& x, Eigen::Vector3d& dx) { l63_deriv(p, x, dx); };
    for (std::int64_t i = 0; i < n; ++i) rk4_step(deriv, s, dt);
    return s;
}

}  // namespace

TEST_CASE("l63 vector field matches direct substitution") {
    L63Params p;
    CHECK(l63_deriv(p, {0, 0, 0}).norm() == 0.0);

    const auto d1 = l63_deriv(p, {1, 1, 1});
    CHECK(d1[0] == doctest::Approx(0.0));
    CHECK(d1[1] == doctest::Approx(26.0));
    CHECK(d1[2] == doctest::Approx(1.0 - 2.667));

    const auto d2 = l63_deriv(p, {1, 2, 3});
    CHECK(d2[0] == doctest::Approx(10.0));
    CHECK(d2[1] == doctest::Approx(23.0));
    CHECK(d2[2] == doctest::Approx(2.0 - 8.001));
}

TEST_CASE("l96 vector field: forcing-only and coupling-only cases") {
    L96Params p;
    VectorXd zero = VectorXd::Zero(p.dim());
    const VectorXd d0 = l96_deriv(p, zero);
    for (int k = 0; k < p.K; ++k) CHECK(d0[k] == doctest::Approx(p.F));
    CHECK(d0.tail(p.J * p.K).cwiseAbs().maxCoeff() == 0.0);

    VectorXd rest = VectorXd::Zero(p.dim());
    rest.head(p.K).setConstant(p.F);
    const VectorXd d1 = l96_deriv(p, rest);
    CHECK(d1.head(p.K).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
    // energy-conserving coupling: the fast tier is driven by +hc/b * X
    for (int j = 0; j < p.J * p.K; ++j)
        CHECK(d1[p.K + j] == doctest::Approx(p.h * p.c / p.b * p.F));
}

TEST_CASE("l96 vector field matches the index-naive oracle") {
    L96Params p;
    RngStream rng(42);
    for (int trial = 0; trial < 5; ++trial) {
        VectorXd s(p.dim());
        for (int i = 0; i < p.dim(); ++i) s[i] = 5.0 * rng.gaussian();
        const VectorXd fast = l96_deriv(p, s);
        const VectorXd slow = l96_deriv_naive(p, s);
        CHECK((fast - slow).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("l96 deriv rejects mismatched state size") {
    L96Params p;
    VectorXd s = VectorXd::Zero(p.dim() - 1);
    CHECK_THROWS_AS(l96_deriv(p, s), ConfigError);
}

TEST_CASE("rk4 on a linear field reproduces the 4-term exponential series") {
    Eigen::Matrix<double, 1, 1> s;
    s[0] = 1.0;
    auto deriv = [](const Eigen::Matrix<double, 1, 1>& x, Eigen::Matrix<double, 1, 1>& dx) {
        dx[0] = -x[0];
    };
    rk4_step(deriv, s, 0.1);
    CHECK(s[0] == doctest::Approx(0.90483750).epsilon(1e-8));
}

TEST_CASE("rk4 l63 step agrees with a fine-step reference") {
    L63Params p;
    auto deriv = [&p](const Eigen::Vector3d& x, Eigen::Vector3d& dx) { l63_deriv(p, x, dx); };
    // one-step error follows the dt^5 local truncation scaling: ~2.2e-6 at
    // dt=0.01 for this field's magnitudes, dropping below 1e-8 by dt=0.001
    Eigen::Vector3d s1(1, 1, 1);
    rk4_step(deriv, s1, 0.01);
    CHECK((s1 - integrate_l63_fine({1, 1, 1}, 0.01, 1e-5)).cwiseAbs().maxCoeff() < 1e-5);

    Eigen::Vector3d s2(1, 1, 1);
    rk4_step(deriv, s2, 0.001);
    CHECK((s2 - integrate_l63_fine({1, 1, 1}, 0.001, 1e-6)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("l63 origin is preserved for 1e4 steps") {
    L63Params p;
    IntegratorConfig cfg{0.01, 1, 10000};
    const Trajectory tr = integrate(p, Eigen::Vector3d::Zero(), cfg);
    CHECK(tr.values.cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("integrate length contract and determinism") {
    L63Params p;
    IntegratorConfig one{0.01, 7, 1};
    const Trajectory t1 = integrate(p, {1, 1, 1}, one);
    CHECK(t1.values.rows() == 1);
    // the single row must equal the state after exactly save_every steps
    Eigen::Vector3d s(1, 1, 1);
    auto deriv = [&p](const Eigen::Vector3d& x, Eigen::Vector3d& dx) { l63_deriv(p, x, dx); };
    for (int i = 0; i < 7; ++i) rk4_step(deriv, s, 0.01);
    CHECK((t1.values.row(0).transpose() - s).norm() == 0.0);

    IntegratorConfig cfg{0.01, 1, 1000};
    const Trajectory a = integrate(p, {1, 1, 1}, cfg);
    const Trajectory b = integrate(p, {1, 1, 1}, cfg);
    CHECK(a.values == b.values);  // bit-identical
}

TEST_CASE("l96 stays in the attractor range over 5 MTU") {
    L96Params p;
    const VectorXd ic = l96_initial_state(p, 7);
    IntegratorConfig cfg{0.001, 5, 1000};  // 5 MTU saved every 0.005
    const Trajectory tr = integrate(p, ic, cfg);
    const auto X = tr.values.leftCols(p.K);
    CHECK(X.minCoeff() >= -15.0);
    CHECK(X.maxCoeff() <= 25.0);
}

TEST_CASE("l96 deriv is equivariant under cyclic rotation") {
    L96Params p;
    RngStream rng(3);
    VectorXd s(p.dim());
    for (int i = 0; i < p.dim(); ++i) s[i] = 3.0 * rng.gaussian();

    // rotate X by 1 and Y by J
    auto rotate = [&p](const VectorXd& v) {
        VectorXd out(v.size());
        const int K = p.K, n = p.J * p.K;
        for (int k = 0; k < K; ++k) out[(k + 1) % K] = v[k];
        for (int j = 0; j < n; ++j) out[K + (j + p.J) % n] = v[K + j];
        return out;
    };
    const VectorXd rotate_then_derive = l96_deriv(p, rotate(s));
    const VectorXd derive_then_rotate = rotate(l96_deriv(p, s));
    CHECK((rotate_then_derive - derive_then_rotate).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("rk4 convergence order on l63 is at least 3.5") {
    const double horizon = 2.0;
    const Eigen::Vector3d ref = integrate_l63_fine({1, 1, 1}, horizon, 1e-5);
    std::vector<double> dts = {0.02, 0.01, 0.005};
    std::vector<double> errs;
    for (double dt : dts)
        errs.push_back((integrate_l63_fine({1, 1, 1}, horizon, dt) - ref).norm());

    // least-squares slope of log err vs log dt
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < dts.size(); ++i) {
        const double x = std::log(dts[i]), y = std::log(errs[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double n = static_cast<double>(dts.size());
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    CHECK(slope >= 3.5);
}

TEST_CASE("non-finite states raise an integration failure naming the step") {
    // a field that blows up in finite time
    auto deriv = [](const Eigen::Matrix<double, 1, 1>& x, Eigen::Matrix<double, 1, 1>& dx) {
        dx[0] = x[0] * x[0];
    };
    Eigen::Matrix<double, 1, 1> s;
    s[0] = 1.0;
    IntegratorConfig cfg{10.0, 1, 100};
    CHECK_THROWS_AS(integrate_steps(deriv, s, cfg, [](std::int64_t, const auto&) {}),
                    NumericError);
}
