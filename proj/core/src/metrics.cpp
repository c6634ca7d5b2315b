#include "soda/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

#include "soda/error.hpp"

namespace soda {

double expected_log_likelihood(const PosteriorSampleSet& samples, const ObservationSeries& y) {
    require(samples.n_samples() > 0, "expected_log_likelihood of an empty sample set");
    double total = 0.0;
    for (const auto& s : samples.samples) total += log_likelihood(y, s.states);
    return total / samples.n_samples();
}

double wasserstein1(std::vector<double> a, std::vector<double> b) {
    require(!a.empty() && !b.empty(), "wasserstein1 of an empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const std::size_t n = a.size(), m = b.size();
    if (n == m) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += std::abs(a[i] - b[i]);
        return s / static_cast<double>(n);
    }
    // Merge the breakpoints i/n and j/m of the two quantile functions.
    double total = 0.0, u = 0.0;
    std::size_t i = 0, j = 0;
    while (i < n && j < m) {
        const double next_a = static_cast<double>(i + 1) / n;
        const double next_b = static_cast<double>(j + 1) / m;
        const double next = std::min(next_a, next_b);
        total += (next - u) * std::abs(a[i] - b[j]);
        u = next;
        if (next_a <= next) ++i;
        if (next_b <= next) ++j;
    }
    return total;
}

namespace {

void check_same_shape(const PosteriorSampleSet& A, const PosteriorSampleSet& B) {
    require(A.n_samples() > 0 && B.n_samples() > 0, "wasserstein distance of an empty sample set");
    require(A.length() == B.length() && A.channels() == B.channels(), "sample sets differ in shape");
}

}  // namespace

double wasserstein1_marginal(const PosteriorSampleSet& A, const PosteriorSampleSet& B, const Vector* scale) {
    check_same_shape(A, B);
    const int T = A.length(), d = A.channels();
    if (scale) require(scale->size() == d, "scale has the wrong number of channels");
    double total = 0.0;
    std::vector<double> a(A.samples.size()), b(B.samples.size());
    for (int t = 0; t < T; ++t) {
        for (int c = 0; c < d; ++c) {
            const double s = scale ? (*scale)[c] : 1.0;
            for (std::size_t i = 0; i < a.size(); ++i) a[i] = A.samples[i].states(t, c) / s;
            for (std::size_t i = 0; i < b.size(); ++i) b[i] = B.samples[i].states(t, c) / s;
            total += wasserstein1(a, b);
        }
    }
    return total / (static_cast<double>(T) * d);
}

double sliced_wasserstein1(const PosteriorSampleSet& A, const PosteriorSampleSet& B, int projections,
                           std::uint64_t seed, const Vector* scale) {
    check_same_shape(A, B);
    require(projections >= 1, "need at least one projection");
    const int T = A.length(), d = A.channels();
    Rng rng(seed);
    auto project = [&](const AugmentedTrajectory& z, const RowMatrix& dir) {
        double s = 0.0;
        for (int t = 0; t < T; ++t)
            for (int c = 0; c < d; ++c) s += dir(t, c) * z.states(t, c) / (scale ? (*scale)[c] : 1.0);
        return s;
    };
    double total = 0.0;
    for (int p = 0; p < projections; ++p) {
        RowMatrix dir(T, d);
        for (Eigen::Index i = 0; i < dir.size(); ++i) dir.data()[i] = rng.normal();
        dir /= dir.norm();
        std::vector<double> a, b;
        for (const auto& z : A.samples) a.push_back(project(z, dir));
        for (const auto& z : B.samples) b.push_back(project(z, dir));
        total += wasserstein1(std::move(a), std::move(b));
    }
    return total / projections;
}

double rmse(std::span<const double> estimates, std::span<const double> truths) {
    require(estimates.size() == truths.size() && !truths.empty(), "rmse needs equal nonempty inputs");
    double s = 0.0;
    for (std::size_t i = 0; i < truths.size(); ++i) s += (estimates[i] - truths[i]) * (estimates[i] - truths[i]);
    return std::sqrt(s / static_cast<double>(truths.size()));
}

double equation_residual(const AugmentedTrajectory& sample, const SystemSpec& spec) {
    const int T = sample.length();
    require(sample.state_dim() == spec.state_dim, "sample does not match the system");
    if (T <= 1) return 0.0;
    double total = 0.0;
    for (int t = 0; t + 1 < T; ++t) {
        const State x = sample.states.row(t).head(spec.state_dim).transpose();
        const double theta = sample.states(t, spec.state_dim);
        if (!x.allFinite() || !std::isfinite(theta)) return std::numeric_limits<double>::infinity();
        State next;
        try {
            next = rk4_step(spec, x, theta, spec.dt, static_cast<std::size_t>(t));
        } catch (const DivergenceError&) {
            return std::numeric_limits<double>::infinity();
        }
        total += (sample.states.row(t + 1).head(spec.state_dim).transpose() - next).squaredNorm();
    }
    return total / (T - 1);
}

double pearson(std::span<const double> x, std::span<const double> y) {
    require(x.size() == y.size() && x.size() >= 2, "pearson needs two equal series of length >= 2");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

double sign_test_p_value(int successes, int n) {
    require(n >= 1 && successes >= 0 && successes <= n, "sign test counts out of range");
    double p = 0.0;
    for (int k = successes; k <= n; ++k)
        p += std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) - n * std::log(2.0));
    return std::min(p, 1.0);
}

MetricRow summarize_metric(std::string system, std::string w, std::string metric, std::span<const double> values) {
    MetricRow row{std::move(system), std::move(w), std::move(metric), 0.0, 0.0, static_cast<int>(values.size())};
    if (values.empty()) return row;
    for (double v : values) row.mean += v;
    row.mean /= static_cast<double>(values.size());
    for (double v : values) row.std += (v - row.mean) * (v - row.mean);
    row.std = std::sqrt(row.std / static_cast<double>(values.size()));
    return row;
}

void write_metrics_csv(std::ostream& os, std::span<const MetricRow> rows) {
    os << "system,w,metric,mean,std,n_runs\n";
    os << std::setprecision(10);
    for (const auto& r : rows)
        os << r.system << ',' << r.w << ',' << r.metric << ',' << r.mean << ',' << r.std << ',' << r.n_runs << '\n';
}

}  // namespace soda
