#include <benchmark/benchmark.h>

#include "soda/diffusion.hpp"
#include "soda/pf.hpp"
#include "soda/sda.hpp"

using namespace soda;

namespace {

ScoreNetwork lorenz_net(int w) {
    NetworkArchitecture arch;
    arch.window = w;
    arch.channels = 4;
    ScoreNetwork net(arch, Normalization::identity(4), NoiseSchedule{}, 1);
    Rng rng(2);
    Vector p = net.parameters();
    for (auto& v : p) v = 0.05 * rng.normal();
    net.set_parameters(p);
    return net;
}

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    Rng rng(seed);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    return m;
}

void BM_Rk4Step(benchmark::State& state) {
    const auto spec = SystemSpec::lorenz63();
    State x(3);
    x << 1.0, 1.0, 20.0;
    for (auto _ : state) {
        x = rk4_step(spec, x, 28.0, spec.dt);
        benchmark::DoNotOptimize(x);
    }
}
BENCHMARK(BM_Rk4Step);

void BM_Simulate(benchmark::State& state) {
    const auto spec = SystemSpec::lorenz63();
    State x(3);
    x << 1.0, 1.0, 20.0;
    for (auto _ : state) benchmark::DoNotOptimize(simulate(spec, x, 28.0, static_cast<int>(state.range(0))));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Simulate)->Arg(256)->Arg(1024);

void BM_NetworkScores(benchmark::State& state) {
    const auto net = lorenz_net(17);
    const Matrix windows = random_matrix(net.flat_size(), state.range(0), 3);
    Matrix out;
    for (auto _ : state) {
        net.scores(windows, 0.5, out);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_NetworkScores)->Arg(1)->Arg(49)->Arg(256);

void BM_TrainingGradient(benchmark::State& state) {
    const auto net = lorenz_net(17);
    Rng rng(4);
    const DsmBatch batch = make_dsm_batch(random_matrix(net.flat_size(), state.range(0), 5), NoiseSchedule{}, rng);
    for (auto _ : state) benchmark::DoNotOptimize(net_gradients(net, batch).loss);
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TrainingGradient)->Arg(128)->Arg(256);

void BM_ComposedScore(benchmark::State& state) {
    const auto net = lorenz_net(static_cast<int>(state.range(0)));
    const Matrix z = random_matrix(65, 4, 6);
    const RowMatrix zr = z;
    for (auto _ : state) benchmark::DoNotOptimize(composed_score(net, zr, 0.5));
}
BENCHMARK(BM_ComposedScore)->Arg(3)->Arg(17)->Arg(65);

void BM_GuidanceScore(benchmark::State& state) {
    const auto net = lorenz_net(17);
    const RowMatrix z = random_matrix(65, 4, 7);
    ObservationSeries y;
    for (int t = 0; t < 65; t += 8) y.times.push_back(t);
    y.values = RowMatrix::Zero(static_cast<Eigen::Index>(y.times.size()), 1);
    GuidanceConfig g;
    g.full_jacobian = state.range(0) != 0;
    for (auto _ : state) benchmark::DoNotOptimize(guidance_score(net, z, 0.5, y, NoiseSchedule{}, g));
}
BENCHMARK(BM_GuidanceScore)->Arg(0)->Arg(1);

void BM_ParticleFilter(benchmark::State& state) {
    const auto spec = SystemSpec::lorenz63();
    Rng rng(8);
    const auto traj = simulate(spec, sample_initial_state(spec, 28.0, rng), 28.0, 65);
    const ObservationSeries y = observe(traj, ObservationModel{}, rng);
    PFConfig cfg = PFConfig::default_for(SystemId::Lorenz63);
    cfg.n_particles = static_cast<int>(state.range(0));
    for (auto _ : state)
        benchmark::DoNotOptimize(
            run_pf(spec, ParameterPrior::default_for(SystemId::Lorenz63), y.model, y, cfg, 65).particles.data());
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ParticleFilter)->Arg(1024)->Arg(16384)->Unit(benchmark::kMillisecond);

void BM_SystematicResample(benchmark::State& state) {
    std::vector<double> w(static_cast<std::size_t>(state.range(0)));
    Rng rng(9);
    double total = 0.0;
    for (auto& v : w) total += (v = rng.uniform());
    for (auto& v : w) v /= total;
    for (auto _ : state) benchmark::DoNotOptimize(systematic_resample(w, 0.37));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SystematicResample)->Arg(16384);

}  // namespace

BENCHMARK_MAIN();
