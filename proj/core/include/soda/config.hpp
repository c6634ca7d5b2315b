#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "soda/datastore.hpp"
#include "soda/pf.hpp"

namespace soda {

// Plain-text `key = value` lines; `#` starts a comment. Every key may also be
// set from the command line as `--key value`.
struct ExperimentConfig {
    SystemId system = SystemId::Lorenz63;
    std::uint64_t seed = 0;
    int threads = 1;

    // dataset
    int n_trajectories = 1024;
    int length = 256;
    double jitter_std = 0.0;
    std::optional<ParameterPrior> prior;           // system default when unset
    std::map<std::string, double> fixed_params;    // overrides of the system constants

    // network and training
    std::vector<int> windows{17};
    std::vector<int> hidden{256, 256, 256};
    int embed_dim = 32;
    bool gaussian_skip = true;
    int train_steps = 10000;
    int batch_size = 256;
    double learning_rate = 1e-3;
    double ema_decay = 0.999;
    int validation_windows = 512;
    int log_every = 500;

    // posterior sampling
    int sampler_steps = 128;
    int corrector_steps = 1;
    double corrector_r = 0.1;
    double a_start = 0.995;
    double inflation = 0.1;
    double guidance_scale = 1.0;
    double guidance_a_min = 1e-3;
    bool full_jacobian = true;

    // evaluation protocol
    int horizon = 65;
    int n_items = 32;
    int n_samples = 16;
    std::vector<int> obs_components{0};
    int obs_stride = 8;
    double obs_noise = 0.05;
    int pf_particles = 1 << 14;
    std::optional<double> pf_jitter;  // system default when unset
    int pf_samples = 256;
    int open_loop_samples = 256;

    std::filesystem::path output = "results";
    std::filesystem::path cache;  // <output>/cache when empty

    SystemSpec system_spec() const;
    ParameterPrior parameter_prior() const;
    DatasetManifest manifest() const;
    NetworkArchitecture architecture(int w) const;
    TrainConfig train_config(int w) const;
    AssimilationRequest assimilation_request() const;
    ObservationModel observation_model() const;
    PFConfig pf_config() const;
    std::filesystem::path cache_dir() const;

    void validate() const;

    // Every key with its current value, rendered as in a config file.
    std::map<std::string, std::string> to_map() const;
    // Hash over every key that can change results (not threads or paths).
    std::uint64_t content_hash() const;
};

struct ConfigKey {
    std::string name;
    std::string help;
};

const std::vector<ConfigKey>& config_keys();

// Parses `key = value` text. Unknown keys and malformed values throw ConfigError.
std::map<std::string, std::string> parse_config_text(const std::string& text);
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);

// Applies the entries on top of the defaults of `base`; later maps win.
ExperimentConfig make_config(const std::vector<std::map<std::string, std::string>>& layers,
                             ExperimentConfig base = {});

std::string render_config(const ExperimentConfig& cfg);

}  // namespace soda
