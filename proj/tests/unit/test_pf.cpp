#include <doctest.h>

#include <cmath>
#include <numeric>

#include "soda/augment.hpp"
#include "soda/error.hpp"
#include "soda/metrics.hpp"
#include "soda/pf.hpp"

using namespace soda;

namespace {

std::vector<std::int32_t> resample(std::vector<double> w, double u) { return systematic_resample(w, u); }

struct Twin {
    AugmentedTrajectory truth;
    ObservationSeries y;
};

Twin lorenz_twin(double rho, int T, double noise_std, std::uint64_t seed) {
    const auto spec = SystemSpec::lorenz63();
    Rng rng(seed);
    const State x0 = sample_initial_state(spec, rho, rng);
    const auto traj = simulate(spec, x0, rho, T);
    ObservationModel m;
    m.noise_std = noise_std;
    Twin tw;
    tw.truth = augment(traj, rho, {}, rng);
    tw.y = observe(traj, m, rng);
    return tw;
}

}  // namespace

TEST_CASE("systematic resampling hand-traced cases") {
    for (double u : {0.0, 0.3, 0.999}) {
        const auto idx = resample({0.25, 0.25, 0.25, 0.25}, u);
        CHECK(idx == std::vector<std::int32_t>{0, 1, 2, 3});
    }
    CHECK(resample({1.0, 0.0, 0.0, 0.0}, 0.7) == std::vector<std::int32_t>{0, 0, 0, 0});
    CHECK(resample({0.0, 0.0, 0.0, 1.0}, 0.0) == std::vector<std::int32_t>{3, 3, 3, 3});
    CHECK(resample({0.5, 0.5}, 0.25) == std::vector<std::int32_t>{0, 1});
    CHECK(resample({0.1, 0.6, 0.3}, 0.5) == std::vector<std::int32_t>{1, 1, 2});
}

TEST_CASE("systematic resampling errors") {
    CHECK_THROWS_AS(resample({0.5, 0.6}, 0.1), ContractViolation);
    CHECK_THROWS_AS(resample({0.5, 0.5}, 1.0), ContractViolation);
    CHECK_THROWS_AS(resample({0.5, 0.5}, -0.1), ContractViolation);
    CHECK_THROWS_AS(resample({}, 0.1), ContractViolation);
    CHECK_NOTHROW(resample({0.5, 0.5 + 5e-10}, 0.1));
}

TEST_CASE("systematic resampling counts and ordering") {
    Rng rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        const int N = 1 + static_cast<int>(rng.uniform() * 40);
        std::vector<double> w(static_cast<std::size_t>(N));
        for (auto& v : w) v = rng.uniform() < 0.2 ? 0.0 : rng.uniform();
        w[0] += 1e-3;
        const double total = std::accumulate(w.begin(), w.end(), 0.0);
        for (auto& v : w) v /= total;
        const auto idx = systematic_resample(w, rng.uniform());
        REQUIRE(idx.size() == static_cast<std::size_t>(N));
        CHECK(std::is_sorted(idx.begin(), idx.end()));
        std::vector<int> count(static_cast<std::size_t>(N), 0);
        for (auto i : idx) {
            REQUIRE(i >= 0);
            REQUIRE(i < N);
            ++count[static_cast<std::size_t>(i)];
        }
        for (int k = 0; k < N; ++k) {
            const double nw = N * w[static_cast<std::size_t>(k)];
            CHECK(count[static_cast<std::size_t>(k)] >= std::floor(nw - 1e-9));
            CHECK(count[static_cast<std::size_t>(k)] <= std::ceil(nw + 1e-9));
            if (w[static_cast<std::size_t>(k)] == 0.0) CHECK(count[static_cast<std::size_t>(k)] == 0);
        }
    }
}

TEST_CASE("systematic resampling preserves expected counts") {
    const std::vector<double> w{0.05, 0.2, 0.087, 0.293, 0.07, 0.3};
    const int N = 6, draws = 100000;
    std::vector<double> count(6, 0.0);
    Rng rng(2);
    for (int d = 0; d < draws; ++d)
        for (auto i : systematic_resample(w, rng.uniform())) count[static_cast<std::size_t>(i)] += 1.0;
    for (int k = 0; k < N; ++k) {
        const double expected = static_cast<double>(draws) * N * w[static_cast<std::size_t>(k)];
        CHECK(std::abs(count[static_cast<std::size_t>(k)] / expected - 1.0) < 0.02);
    }
}

TEST_CASE("effective sample size") {
    CHECK(ess(std::vector<double>(8, 0.125)) == doctest::Approx(8.0).epsilon(1e-14));
    CHECK(ess(std::vector<double>{0.0, 1.0, 0.0}) == 1.0);
    CHECK(ess(std::vector<double>{0.5, 0.5, 0.0, 0.0}) == 2.0);
    CHECK_THROWS_AS(ess(std::vector<double>{0.0, 0.0}), ContractViolation);
}

TEST_CASE("filter without observations propagates the prior ensemble") {
    const auto spec = SystemSpec::lorenz63();
    PFConfig cfg = PFConfig::default_for(SystemId::Lorenz63);
    cfg.n_particles = 64;
    cfg.seed = 3;
    const auto ens = run_pf(spec, ParameterPrior::default_for(SystemId::Lorenz63), ObservationModel{}, ObservationSeries{},
                            cfg, 10);
    CHECK(ens.horizon() == 10);
    CHECK(ens.genealogy.empty());
    CHECK(ens.resampled.empty());
    CHECK((ens.weights.array() == 1.0 / 64).all());
    for (int i = 0; i < 64; ++i) {
        Rng rng(derive_seed(3, {0, static_cast<std::uint64_t>(i)}));
        const double theta = sample_parameter(ParameterPrior::default_for(SystemId::Lorenz63), rng);
        CHECK(ens.history[0](i, 3) == theta);
        CHECK(ens.history[0].row(i).head(3).transpose() == sample_initial_state(spec, theta, rng));
    }
    CHECK_THROWS_AS(run_pf(spec, ParameterPrior::default_for(SystemId::Lorenz63), ObservationModel{},
                           ObservationSeries{}, cfg),
                    ContractViolation);
}

TEST_CASE("filter weights, genealogy and path replay") {
    const auto tw = lorenz_twin(28.0, 33, 0.5, 4);
    const auto spec = SystemSpec::lorenz63();
    PFConfig cfg = PFConfig::default_for(SystemId::Lorenz63);
    cfg.n_particles = 256;
    cfg.seed = 5;
    const auto ens = run_pf(spec, ParameterPrior::default_for(SystemId::Lorenz63), tw.y.model, tw.y, cfg, 33);
    CHECK(ens.horizon() == 33);
    CHECK(ens.observation_times == tw.y.times);
    CHECK(ens.genealogy.size() == tw.y.size());
    CHECK(std::abs(ens.weights.sum() - 1.0) < 1e-12);
    CHECK((ens.weights.array() >= 0.0).all());
    for (const auto& g : ens.genealogy)
        for (auto i : g) {
            CHECK(i >= 0);
            CHECK(i < 256);
        }
    for (std::size_t k = 0; k < ens.resampled.size(); ++k)
        if (ens.resampled[k]) CHECK(ens.ess_trace[k] < 128.0);

    // Each traced path must be a chain of actually simulated steps.
    for (int i = 0; i < 256; i += 17) {
        const auto path = ens.trace_path(i);
        CHECK(path.states.row(32) == ens.particles.row(i));
        for (int t = 0; t + 1 < 33; ++t) {
            const State next = rk4_step(spec, path.states.row(t).head(3).transpose(), path.states(t, 3), spec.dt);
            CHECK(next == path.states.row(t + 1).head(3).transpose());
            CHECK(std::abs(path.states(t + 1, 3) - path.states(t, 3)) < 0.25 * 6.0);
        }
    }

    const auto again = run_pf(spec, ParameterPrior::default_for(SystemId::Lorenz63), tw.y.model, tw.y, cfg, 33);
    CHECK(again.particles == ens.particles);
    cfg.threads = 3;
    const auto threaded = run_pf(spec, ParameterPrior::default_for(SystemId::Lorenz63), tw.y.model, tw.y, cfg, 33);
    CHECK(threaded.particles == ens.particles);
}

TEST_CASE("vanishing jitter and a point-mass prior give weighted deterministic trajectories") {
    const auto spec = SystemSpec::lorenz63();
    const auto tw = lorenz_twin(28.0, 17, 2.0, 6);
    PFConfig cfg;
    cfg.n_particles = 32;
    cfg.jitter_std = 1e-300;
    cfg.seed = 7;
    const auto ens = run_pf(spec, ParameterPrior::gaussian(28.0, 1e-300), tw.y.model, tw.y, cfg, 17);
    for (int i = 0; i < 32; ++i) {
        const auto path = ens.trace_path(i);
        CHECK((path.states.col(3).array() == 28.0).all());
        const auto replay = simulate(spec, path.states.row(0).head(3).transpose(), 28.0, 17);
        CHECK(replay.states == path.states.leftCols(3));
    }
}

TEST_CASE("filter recovers the parameter of a synthetic twin") {
    const auto spec = SystemSpec::lorenz63();
    for (double rho : {24.0, 31.0}) {
        const auto tw = lorenz_twin(rho, 65, 0.05, static_cast<std::uint64_t>(rho));
        PFConfig cfg = PFConfig::default_for(SystemId::Lorenz63);
        cfg.n_particles = 4096;
        cfg.seed = 8;
        const auto ens = run_pf(spec, ParameterPrior::gaussian(rho, 1.0), tw.y.model, tw.y, cfg, 65);
        double m = 0.0, m2 = 0.0;
        for (int i = 0; i < ens.size(); ++i) {
            m += ens.weights[i] * ens.particles(i, 3);
            m2 += ens.weights[i] * ens.particles(i, 3) * ens.particles(i, 3);
        }
        const double sd = std::sqrt(std::max(m2 - m * m, 0.0));
        CHECK(std::abs(m - rho) <= 2.0 * sd + 1e-12);
        Rng rng(9);
        const auto paths = ens.sample_paths(32, rng);
        CHECK(paths.n_samples() == 32);
        CHECK(paths.length() == 65);
        const auto open = open_loop_samples(spec, ParameterPrior::default_for(SystemId::Lorenz63), 65, 64, 10);
        CHECK(expected_log_likelihood(paths, tw.y) > expected_log_likelihood(open, tw.y));
    }
}

TEST_CASE("filter errors") {
    const auto spec = SystemSpec::lorenz63();
    const auto tw = lorenz_twin(28.0, 17, 0.05, 11);
    PFConfig cfg;
    cfg.n_particles = 1;
    CHECK_THROWS_AS(run_pf(spec, ParameterPrior::default_for(SystemId::Lorenz63), tw.y.model, tw.y, cfg, 17),
                    ContractViolation);
    cfg.n_particles = 16;
    cfg.jitter_std = 0.0;
    CHECK_THROWS_AS(run_pf(spec, ParameterPrior::default_for(SystemId::Lorenz63), tw.y.model, tw.y, cfg, 17),
                    ContractViolation);
    cfg.jitter_std = 0.25;
    CHECK_THROWS_AS(run_pf(spec, ParameterPrior::default_for(SystemId::Lorenz63), tw.y.model, tw.y, cfg, 10),
                    ContractViolation);

    // Observations so far away that every log-weight overflows to -inf.
    auto far = tw.y;
    far.values.setConstant(1e200);
    far.model.noise_std = 1e-3;
    try {
        run_pf(spec, ParameterPrior::default_for(SystemId::Lorenz63), far.model, far, cfg, 17);
        FAIL("expected a degenerate filter");
    } catch (const DegenerateFilterError& e) {
        CHECK(e.observation_index() == 0);
    }
}

TEST_CASE("open-loop samples are prior simulations") {
    const auto spec = SystemSpec::fhn();
    const auto set = open_loop_samples(spec, ParameterPrior::default_for(SystemId::FHN), 20, 8, 12);
    CHECK(set.n_samples() == 8);
    for (const auto& s : set.samples) {
        CHECK(equation_residual(s, spec) < 1e-18);
        CHECK((s.states.col(2).array() == s.states(0, 2)).all());
    }
}
