#include <doctest.h>

#include <cmath>
#include <limits>

#include "soda/dynamics.hpp"
#include "soda/error.hpp"

using namespace soda;

namespace {

State vec(std::initializer_list<double> v) {
    State s(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) s[i++] = x;
    return s;
}

}  // namespace

TEST_CASE("system specs carry the documented constants") {
    const auto f = SystemSpec::fhn();
    CHECK(f.state_dim == 2);
    CHECK(f.dt == 0.4);
    CHECK(f.free_param_name == "a");
    CHECK(f.param("b") == 0.2);
    CHECK(f.param("tau") == 1.0);
    CHECK(f.param("I") == 0.5);
    const auto l = SystemSpec::lorenz63();
    CHECK(l.state_dim == 3);
    CHECK(l.dt == 0.05);
    CHECK(l.param("sigma") == 10.0);
    CHECK(l.param("beta") == doctest::Approx(8.0 / 3.0));
    CHECK_THROWS_AS(ParameterPrior::uniform(1.0, 1.0), ContractViolation);
    CHECK_THROWS_AS(ParameterPrior::gaussian(0.0, 0.0), ContractViolation);
}

TEST_CASE("derivative matches hand evaluation") {
    const auto l = SystemSpec::lorenz63();
    CHECK(derivative(l, vec({0, 0, 0}), 28.0).isZero(0.0));
    const State d = derivative(l, vec({1, 1, 1}), 28.0);
    // sigma (y - x), x (rho - z) - y, x y - beta z
    CHECK(d[0] == doctest::Approx(0.0));
    CHECK(d[1] == doctest::Approx(26.0));
    CHECK(d[2] == doctest::Approx(1.0 - 8.0 / 3.0));

    const auto f = SystemSpec::fhn();
    const State g = derivative(f, vec({0, 0}), 0.5);
    // u - u^3/3 - v + I, (u + a - b v) / tau
    CHECK(g[0] == doctest::Approx(0.5));
    CHECK(g[1] == doctest::Approx(0.5));

    SystemSpec slow = f;
    slow.fixed_params["tau"] = 4.0;
    CHECK(derivative(slow, vec({0, 0}), 0.5)[1] == doctest::Approx(0.125));
}

TEST_CASE("derivative rejects bad input") {
    CHECK_THROWS_AS(derivative(SystemSpec::lorenz63(), vec({1, 2}), 28.0), ContractViolation);
    CHECK_THROWS_AS(derivative(SystemSpec::lorenz63(), vec({1, NAN, 2}), 28.0), NumericInputError);
    CHECK_THROWS_AS(derivative(SystemSpec::fhn(), vec({0, 0}), INFINITY), NumericInputError);
}

TEST_CASE("rk4 on x' = x") {
    const State x = rk4_advance([](const State& s) { return State(s); }, vec({1.0}), 0.1);
    CHECK(std::abs(x[0] - std::exp(0.1)) < 1e-7);
    CHECK(std::abs(x[0] - 1.10517083) < 1e-7);
}

TEST_CASE("equilibria are fixed points of rk4_step") {
    const auto l = SystemSpec::lorenz63();
    CHECK(rk4_step(l, vec({0, 0, 0}), 28.0, l.dt).isZero(0.0));
    const double q = std::sqrt(8.0 / 3.0 * 27.0);
    const State fp = vec({q, q, 27.0});
    CHECK((rk4_step(l, fp, 28.0, l.dt) - fp).cwiseAbs().maxCoeff() < 1e-9);
    const State fm = vec({-q, -q, 27.0});
    CHECK((rk4_step(l, fm, 28.0, l.dt) - fm).cwiseAbs().maxCoeff() < 1e-9);

    // FHN equilibrium: v = (u + a) / b and u - u^3/3 - v + I = 0, solved by bisection.
    const auto f = SystemSpec::fhn();
    const double a = 0.7, b = 0.2, I = 0.5;
    auto g = [&](double u) { return u - u * u * u / 3.0 - (u + a) / b + I; };
    double lo = -3.0, hi = 3.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (g(lo) * g(mid) <= 0.0 ? hi : lo) = mid;
    }
    const State e = vec({lo, (lo + a) / b});
    CHECK((rk4_step(f, e, a, f.dt) - e).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("rk4 converges at fourth order on a short FHN segment") {
    const auto f = SystemSpec::fhn();
    const State x0 = vec({0.3, -0.2});
    auto run = [&](double dt, int n) {
        State x = x0;
        for (int i = 0; i < n; ++i) x = rk4_step(f, x, 0.7, dt);
        return x;
    };
    const double dt = 0.4;
    const State ref = run(dt / 4, 40);
    const double e1 = (run(dt, 10) - ref).norm();
    const double e2 = (run(dt / 2, 20) - ref).norm();
    CHECK(e1 / e2 >= 8.0);
}

TEST_CASE("rk4_step reports the step index on divergence") {
    const auto l = SystemSpec::lorenz63();
    try {
        rk4_step(l, vec({1e155, 1e155, 1e155}), 28.0, l.dt, 42);
        FAIL("expected divergence");
    } catch (const DivergenceError& e) {
        CHECK(e.step() == 42);
    }
    try {
        simulate(l, vec({1e60, 1e60, 1e60}), 28.0, 50);
        FAIL("expected divergence");
    } catch (const DivergenceError& e) {
        CHECK(e.step() < 50);
    }
}

TEST_CASE("simulate") {
    const auto l = SystemSpec::lorenz63();
    const State x0 = vec({1.0, 1.0, 20.0});
    const auto one = simulate(l, x0, 28.0, 1);
    CHECK(one.length() == 1);
    CHECK(one.states.row(0).transpose() == x0);

    const auto t = simulate(l, x0, 28.0, 1024);
    CHECK(t.states.allFinite());
    CHECK(t.states.col(2).cwiseAbs().maxCoeff() < 60.0);
    CHECK(t.dt == l.dt);
    for (int i = 0; i + 1 < 10; ++i)
        CHECK(t.states.row(i + 1).transpose() == rk4_step(l, t.states.row(i).transpose(), 28.0, l.dt));

    const auto again = simulate(l, x0, 28.0, 1024);
    CHECK(again.states == t.states);
    CHECK_THROWS_AS(simulate(l, x0, 28.0, 0), ContractViolation);
}

TEST_CASE("sample_initial_state lands near the attractor") {
    const auto l = SystemSpec::lorenz63();
    const auto f = SystemSpec::fhn();
    for (std::uint64_t s = 0; s < 20; ++s) {
        Rng rng(s);
        const State x = sample_initial_state(l, 28.0, rng);
        CHECK(std::abs(x[0]) < 30.0);
        CHECK(std::abs(x[1]) < 30.0);
        CHECK(x[2] > 0.0);
        CHECK(x[2] < 60.0);
        Rng rng2(s);
        const State u = sample_initial_state(f, 0.5, rng2);
        CHECK(u.cwiseAbs().maxCoeff() < 3.0);
    }
    Rng a(7), b(7);
    CHECK(sample_initial_state(l, 28.0, a) == sample_initial_state(l, 28.0, b));
}

TEST_CASE("sample_parameter Monte-Carlo moments") {
    Rng rng(11);
    const auto u = ParameterPrior::uniform(0.0, 1.0);
    double sum = 0.0;
    for (int i = 0; i < 10000; ++i) sum += sample_parameter(u, rng);
    CHECK(std::abs(sum / 10000 - 0.5) < 0.02);

    const auto g = ParameterPrior::gaussian(28.0, 4.0);
    double s1 = 0.0, s2 = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const double v = sample_parameter(g, rng);
        s1 += v;
        s2 += v * v;
    }
    const double mean = s1 / 10000;
    CHECK(std::abs(std::sqrt(s2 / 10000 - mean * mean) - 4.0) < 0.15);

    const auto narrow = ParameterPrior::uniform(3.0, 3.0 + 1e-12);
    for (int i = 0; i < 100; ++i) {
        const double v = sample_parameter(narrow, rng);
        CHECK(v >= 3.0);
        CHECK(v <= 3.0 + 1e-12);
    }
    CHECK(ParameterPrior::default_for(SystemId::Lorenz63).mean() == 28.0);
    CHECK(ParameterPrior::default_for(SystemId::FHN).stddev() == doctest::Approx(std::sqrt(1.0 / 12.0)));
}
