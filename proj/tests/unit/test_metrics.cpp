#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "soda/augment.hpp"
#include "soda/error.hpp"
#include "soda/metrics.hpp"

using namespace soda;

namespace {

// W1 as the integral of |F_a - F_b| over the merged support.
double cdf_w1(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> xs = a;
    xs.insert(xs.end(), b.begin(), b.end());
    std::sort(xs.begin(), xs.end());
    auto cdf = [](const std::vector<double>& s, double x) {
        return static_cast<double>(std::count_if(s.begin(), s.end(), [&](double v) { return v <= x; })) / s.size();
    };
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < xs.size(); ++i) total += std::abs(cdf(a, xs[i]) - cdf(b, xs[i])) * (xs[i + 1] - xs[i]);
    return total;
}

PosteriorSampleSet random_set(int n, int T, int d, double shift, std::uint64_t seed) {
    Rng rng(seed);
    PosteriorSampleSet set;
    for (int i = 0; i < n; ++i) {
        AugmentedTrajectory z;
        z.states.resize(T, d);
        for (Eigen::Index k = 0; k < z.states.size(); ++k) z.states.data()[k] = shift + rng.normal();
        set.samples.push_back(z);
    }
    return set;
}

AugmentedTrajectory lorenz_sample(double rho, int T) {
    const auto spec = SystemSpec::lorenz63();
    Rng rng(4);
    const auto traj = simulate(spec, sample_initial_state(spec, rho, rng), rho, T);
    return augment(traj, rho, {}, rng);
}

}  // namespace

TEST_CASE("expected log-likelihood") {
    auto z = lorenz_sample(28.0, 65);
    ObservationSeries y;
    y.model = ObservationModel{};
    for (int t = 0; t < 65; t += 8) y.times.push_back(t);
    y.values.resize(9, 1);
    for (int i = 0; i < 9; ++i) y.values(i, 0) = z.states(8 * i, 0);
    PosteriorSampleSet one;
    one.samples.push_back(z);
    const double peak = -0.5 * std::log(2.0 * std::numbers::pi * 0.0025);
    CHECK(expected_log_likelihood(one, y) == doctest::Approx(9 * peak).epsilon(1e-13));
    CHECK(expected_log_likelihood(one, y) == doctest::Approx(18.691).epsilon(1e-4));

    // Shifting the latent theta channel does not matter.
    auto shifted = z;
    shifted.states.col(3).array() += 10.0;
    PosteriorSampleSet other;
    other.samples.push_back(shifted);
    CHECK(expected_log_likelihood(other, y) == expected_log_likelihood(one, y));

    PosteriorSampleSet twice = one;
    twice.samples.push_back(z);
    CHECK(expected_log_likelihood(twice, y) == expected_log_likelihood(one, y));

    auto off = z;
    for (int i = 0; i < 9; ++i) off.states(8 * i, 0) += 0.05;
    PosteriorSampleSet mixed;
    mixed.samples = {z, off};
    CHECK(expected_log_likelihood(mixed, y) == doctest::Approx(9 * peak - 0.5 * 9 * 0.5).epsilon(1e-12));

    CHECK_THROWS_AS(expected_log_likelihood(PosteriorSampleSet{}, y), ContractViolation);
}

TEST_CASE("one-dimensional W1") {
    CHECK(wasserstein1({0.0}, {3.0}) == 3.0);
    CHECK(wasserstein1({0.0, 1.0}, {1.0, 2.0}) == 1.0);
    CHECK(wasserstein1({1.0, 0.0}, {2.0, 1.0}) == 1.0);
    CHECK(wasserstein1({0.0}, {0.0, 2.0}) == doctest::Approx(1.0));
    CHECK(wasserstein1({0.0, 1.0, 2.0}, {0.0, 1.0}) == doctest::Approx(cdf_w1({0.0, 1.0, 2.0}, {0.0, 1.0})));
    CHECK_THROWS_AS(wasserstein1({}, {1.0}), ContractViolation);

    Rng rng(1);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = 1 + static_cast<int>(rng.uniform() * 9), m = 1 + static_cast<int>(rng.uniform() * 9);
        std::vector<double> a(static_cast<std::size_t>(n)), b(static_cast<std::size_t>(m));
        for (auto& v : a) v = rng.normal();
        for (auto& v : b) v = 0.5 + 2.0 * rng.normal();
        CHECK(wasserstein1(a, b) == doctest::Approx(cdf_w1(a, b)).epsilon(1e-12));
    }
}

TEST_CASE("marginal W1 is a metric on sample sets") {
    const auto A = random_set(5, 4, 2, 0.0, 2), B = random_set(7, 4, 2, 0.5, 3), C = random_set(3, 4, 2, -1.0, 4);
    CHECK(wasserstein1_marginal(A, A) == 0.0);
    const double ab = wasserstein1_marginal(A, B), ba = wasserstein1_marginal(B, A);
    CHECK(ab == doctest::Approx(ba).epsilon(1e-14));
    CHECK(ab > 0.0);
    CHECK(wasserstein1_marginal(A, C) <= wasserstein1_marginal(A, B) + wasserstein1_marginal(B, C) + 1e-12);
    CHECK(wasserstein1_marginal(B, C) <= wasserstein1_marginal(B, A) + wasserstein1_marginal(A, C) + 1e-12);

    PosteriorSampleSet p, q;
    AugmentedTrajectory z;
    z.states = RowMatrix::Zero(1, 1);
    p.samples.push_back(z);
    z.states(0, 0) = 3.0;
    q.samples.push_back(z);
    CHECK(wasserstein1_marginal(p, q) == 3.0);
    Vector scale(1);
    scale << 2.0;
    CHECK(wasserstein1_marginal(p, q, &scale) == 1.5);

    CHECK_THROWS_AS(wasserstein1_marginal(A, random_set(5, 3, 2, 0.0, 5)), ContractViolation);
    CHECK_THROWS_AS(wasserstein1_marginal(A, PosteriorSampleSet{}), ContractViolation);
}

TEST_CASE("sliced W1") {
    const auto A = random_set(16, 3, 2, 0.0, 6), B = random_set(16, 3, 2, 1.0, 7);
    CHECK(sliced_wasserstein1(A, A, 8, 1) == 0.0);
    const double ab = sliced_wasserstein1(A, B, 16, 1);
    CHECK(ab > 0.0);
    CHECK(ab == sliced_wasserstein1(A, B, 16, 1));
    CHECK(ab == doctest::Approx(sliced_wasserstein1(B, A, 16, 1)).epsilon(1e-12));
}

TEST_CASE("metrics are invariant under sample permutation") {
    auto A = random_set(9, 5, 3, 0.0, 8);
    const auto B = random_set(6, 5, 3, 0.3, 9);
    ObservationSeries y;
    y.times = {0, 2, 4};
    y.values = RowMatrix::Constant(3, 1, 0.2);
    const double w = wasserstein1_marginal(A, B), e = expected_log_likelihood(A, y);
    std::mt19937 g(1);
    for (int k = 0; k < 5; ++k) {
        std::shuffle(A.samples.begin(), A.samples.end(), g);
        CHECK(wasserstein1_marginal(A, B) == doctest::Approx(w).epsilon(1e-14));
        CHECK(expected_log_likelihood(A, y) == doctest::Approx(e).epsilon(1e-13));
    }
}

TEST_CASE("rmse and pearson") {
    const std::vector<double> x{1.0, 2.0, 3.0};
    CHECK(rmse(x, x) == 0.0);
    CHECK(rmse(std::vector<double>{3.5, 4.5, 5.5}, x) == doctest::Approx(2.5));
    CHECK(rmse(std::vector<double>{0.0, 0.0}, std::vector<double>{3.0, 4.0}) == doctest::Approx(std::sqrt(12.5)));
    CHECK(std::sqrt(12.5) == doctest::Approx(3.5355).epsilon(1e-4));
    CHECK_THROWS_AS(rmse(x, std::vector<double>{1.0}), ContractViolation);

    CHECK(pearson(x, std::vector<double>{2.0, 4.0, 6.0}) == doctest::Approx(1.0));
    CHECK(pearson(x, std::vector<double>{3.0, 2.0, 1.0}) == doctest::Approx(-1.0));
    CHECK(pearson(std::vector<double>{1.0, 2.0, 3.0, 4.0}, std::vector<double>{1.0, 3.0, 2.0, 4.0}) ==
          doctest::Approx(0.8));
}

TEST_CASE("equation residual") {
    const auto spec = SystemSpec::lorenz63();
    const auto z = lorenz_sample(28.0, 40);
    CHECK(equation_residual(z, spec) < 1e-18);
    auto wrong = z;
    wrong.states.col(3).array() += 4.0;
    CHECK(equation_residual(wrong, spec) > equation_residual(z, spec));
    CHECK(equation_residual(wrong, spec) > 0.0);
    AugmentedTrajectory single;
    single.states = z.states.topRows(1);
    CHECK(equation_residual(single, spec) == 0.0);

    // One perturbed step contributes its squared error once to the mean.
    auto bumped = z;
    bumped.states(39, 0) += 0.1;
    CHECK(equation_residual(bumped, spec) == doctest::Approx(0.01 / 39).epsilon(1e-6));

    // A state so far out that one step overflows is infinitely inconsistent.
    auto blown = z;
    blown.states(5, 0) = 1e200;
    CHECK(equation_residual(blown, spec) == std::numeric_limits<double>::infinity());
    blown.states(5, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK(equation_residual(blown, spec) == std::numeric_limits<double>::infinity());
}

TEST_CASE("sign test") {
    CHECK(sign_test_p_value(0, 4) == 1.0);
    CHECK(sign_test_p_value(4, 4) == doctest::Approx(1.0 / 16));
    CHECK(sign_test_p_value(3, 4) == doctest::Approx(5.0 / 16));
    CHECK(sign_test_p_value(24, 32) == doctest::Approx(0.0035).epsilon(0.01));
}

TEST_CASE("metric rows and csv") {
    const std::vector<double> v{1.0, 2.0, 3.0};
    const auto row = summarize_metric("lorenz63", "17", "RMSE_theta", v);
    CHECK(row.mean == 2.0);
    CHECK(row.std == doctest::Approx(std::sqrt(2.0 / 3.0)));
    CHECK(row.n_runs == 3);
    std::ostringstream os;
    write_metrics_csv(os, std::vector<MetricRow>{row});
    const std::string csv = os.str();
    CHECK(csv.rfind("system,w,metric,mean,std,n_runs\n", 0) == 0);
    CHECK(csv.find("lorenz63,17,RMSE_theta,2") != std::string::npos);
}
