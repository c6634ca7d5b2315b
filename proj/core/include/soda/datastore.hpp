#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "soda/augment.hpp"
#include "soda/diffusion.hpp"
#include "soda/observe.hpp"
#include "soda/sda.hpp"

namespace soda {

inline constexpr std::uint32_t kDatasetFormatVersion = 1;
inline constexpr std::uint32_t kModelFormatVersion = 1;
inline constexpr std::uint32_t kResultsFormatVersion = 1;

struct DatasetManifest {
    SystemSpec system = SystemSpec::lorenz63();
    ParameterPrior prior = ParameterPrior::default_for(SystemId::Lorenz63);
    int n_trajectories = 4096;
    int length = 1024;
    JitterConfig jitter;
    std::uint64_t seed = 0;
    double train_fraction = 0.8;
    double val_fraction = 0.1;
    double test_fraction = 0.1;
    std::uint32_t format_version = kDatasetFormatVersion;

    static DatasetManifest default_for(SystemId id);
    void validate() const;
    // Hash of every field; names cached artifacts.
    std::uint64_t content_hash() const;
};

struct Splits {
    std::vector<int> train;
    std::vector<int> val;
    std::vector<int> test;
};

// Deterministic shuffle, then contiguous cut: train = floor(f_train n),
// val = round(f_val n), test takes the rest.
Splits split_dataset(int n, std::uint64_t seed, double train_fraction = 0.8, double val_fraction = 0.1);

struct Dataset {
    DatasetManifest manifest;
    std::vector<AugmentedTrajectory> trajectories;
    std::vector<double> theta;  // parameter each trajectory was simulated with (theta_0)
    Splits splits;
    Normalization normalization;  // training split only
    int divergent_resamples = 0;

    int size() const { return static_cast<int>(trajectories.size()); }
    int channels() const { return trajectories.empty() ? 0 : trajectories.front().channels(); }
};

// Per-channel mean and std over the listed trajectories.
Normalization compute_normalization(const std::vector<AugmentedTrajectory>& trajectories, const std::vector<int>& indices);

// Throws DivergenceError when more than 1% of draws diverge.
Dataset generate_dataset(const DatasetManifest& manifest, int threads = 1);

// Uniform trajectory, uniform start in [0, T - w]; normalized, w x d_z.
RowMatrix sample_training_window(const std::vector<AugmentedTrajectory>& trajectories, const std::vector<int>& indices,
                                 int w, const Normalization& norm, Rng& rng);

class TrajectoryWindowSource final : public WindowSource {
public:
    TrajectoryWindowSource(const Dataset& data, const std::vector<int>& indices, int w);

    int window() const override { return w_; }
    int channels() const override { return data_.channels(); }
    const Normalization& normalization() const override { return data_.normalization; }
    void sample(Rng& rng, double* out) const override;

private:
    const Dataset& data_;
    const std::vector<int>& indices_;
    int w_;
};

// A T-step observed segment cut from a test trajectory.
struct EvaluationItem {
    int trajectory = 0;
    int offset = 0;
    AugmentedTrajectory truth;
    double theta = 0.0;
    ObservationSeries observations;
};

// Items cycle over the test split; offsets are evenly spaced over [0, L - T].
std::vector<EvaluationItem> build_evaluation_items(const Dataset& data, int n_items, int horizon,
                                                   const ObservationModel& obs_model, std::uint64_t seed);

void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

void save_model(const ScoreNetwork& net, const std::filesystem::path& path);
ScoreNetwork load_model(const std::filesystem::path& path);
// Hash of the serialized model bytes.
std::string model_id(const ScoreNetwork& net);

// Samples as CSV (sample,t,z0..) plus a JSON sidecar `<path>.json` with
// version, shape, provenance and the CSV content hash.
void save_results(const PosteriorSampleSet& set, const std::filesystem::path& path,
                  const std::map<std::string, std::string>& provenance = {});
PosteriorSampleSet load_results(const std::filesystem::path& path);

void save_observations(const ObservationSeries& y, const std::filesystem::path& path);
ObservationSeries load_observations(const std::filesystem::path& path);

}  // namespace soda
