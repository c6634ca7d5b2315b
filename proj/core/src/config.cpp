#include "soda/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <sstream>

#include "soda/error.hpp"
#include "soda/hash.hpp"

namespace soda {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep)) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    const char* first = value.data();
    const char* last = value.data() + value.size();
    std::from_chars_result r;
    if constexpr (std::is_floating_point_v<T>) {
        // from_chars for double is incomplete in older libstdc++.
        try {
            std::size_t used = 0;
            out = std::stod(value, &used);
            r.ptr = first + used;
            r.ec = {};
        } catch (const std::exception&) {
            r.ec = std::errc::invalid_argument;
        }
    } else {
        r = std::from_chars(first, last, out);
    }
    if (r.ec != std::errc{} || r.ptr != last || value.empty())
        throw ConfigError("config key '" + key + "': cannot parse '" + value + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
    if (value == "false" || value == "0" || value == "no" || value == "off") return false;
    throw ConfigError("config key '" + key + "': expected a boolean, got '" + value + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
    std::vector<int> out;
    for (const auto& item : split_list(value, ',')) out.push_back(parse_number<int>(key, item));
    if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
    return out;
}

std::string join(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

// "uniform(lo,hi)" or "gaussian(mean,std)".
ParameterPrior parse_prior(const std::string& key, const std::string& value) {
    const auto open = value.find('('), close = value.rfind(')');
    if (open == std::string::npos || close != value.size() - 1)
        throw ConfigError("config key '" + key + "': expected uniform(lo,hi) or gaussian(mean,std)");
    const std::string kind = trim(value.substr(0, open));
    const auto args = split_list(value.substr(open + 1, close - open - 1), ',');
    if (args.size() != 2) throw ConfigError("config key '" + key + "': prior takes two numbers");
    const double p1 = parse_number<double>(key, args[0]), p2 = parse_number<double>(key, args[1]);
    try {
        if (kind == "uniform") return ParameterPrior::uniform(p1, p2);
        if (kind == "gaussian") return ParameterPrior::gaussian(p1, p2);
    } catch (const ContractViolation& e) {
        throw ConfigError("config key '" + key + "': " + e.what());
    }
    throw ConfigError("config key '" + key + "': unknown prior kind '" + kind + "'");
}

std::string render_prior(const ParameterPrior& p) {
    return std::string(p.kind() == ParameterPrior::Kind::Uniform ? "uniform(" : "gaussian(") + fmt(p.first()) + "," +
           fmt(p.second()) + ")";
}

struct Field {
    ConfigKey key;
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
    bool affects_results = true;
};

#define SODA_INT(name, help)                                                                               \
    Field {                                                                                                \
        {#name, help}, [](ExperimentConfig& c, const std::string& v) { c.name = parse_number<int>(#name, v); }, \
            [](const ExperimentConfig& c) { return std::to_string(c.name); }                               \
    }
#define SODA_DOUBLE(name, help)                                                                                \
    Field {                                                                                                    \
        {#name, help}, [](ExperimentConfig& c, const std::string& v) { c.name = parse_number<double>(#name, v); }, \
            [](const ExperimentConfig& c) { return fmt(c.name); }                                              \
    }
#define SODA_LIST(name, help)                                                                            \
    Field {                                                                                              \
        {#name, help}, [](ExperimentConfig& c, const std::string& v) { c.name = parse_int_list(#name, v); }, \
            [](const ExperimentConfig& c) { return join(c.name); }                                       \
    }

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        Field{{"system", "lorenz63 or fhn"},
              [](ExperimentConfig& c, const std::string& v) {
                  try {
                      c.system = system_from_string(v);
                  } catch (const Error&) {
                      throw ConfigError("config key 'system': unknown system '" + v + "'");
                  }
              },
              [](const ExperimentConfig& c) { return std::string(to_string(c.system)); }},
        Field{{"seed", "master seed (the SODA_SEED environment variable overrides it)"},
              [](ExperimentConfig& c, const std::string& v) { c.seed = parse_number<std::uint64_t>("seed", v); },
              [](const ExperimentConfig& c) { return std::to_string(c.seed); }},
        Field{{"threads", "worker thread cap"},
              [](ExperimentConfig& c, const std::string& v) { c.threads = parse_number<int>("threads", v); },
              [](const ExperimentConfig& c) { return std::to_string(c.threads); }, false},
        SODA_INT(n_trajectories, "number of simulated trajectories"),
        SODA_INT(length, "steps per simulated trajectory"),
        SODA_DOUBLE(jitter_std, "per-step random-walk std of the parameter channel in the dataset (0 = constant)"),
        Field{{"prior", "parameter prior, uniform(lo,hi) or gaussian(mean,std); empty = system default"},
              [](ExperimentConfig& c, const std::string& v) {
                  if (v.empty()) c.prior.reset();
                  else c.prior = parse_prior("prior", v);
              },
              [](const ExperimentConfig& c) { return c.prior ? render_prior(*c.prior) : std::string{}; }},
        Field{{"fixed_params", "overrides of the fixed system constants, e.g. I=0.5,b=0.2"},
              [](ExperimentConfig& c, const std::string& v) {
                  c.fixed_params.clear();
                  for (const auto& item : split_list(v, ',')) {
                      const auto eq = item.find('=');
                      if (eq == std::string::npos) throw ConfigError("config key 'fixed_params': expected name=value");
                      c.fixed_params[trim(item.substr(0, eq))] = parse_number<double>("fixed_params", trim(item.substr(eq + 1)));
                  }
              },
              [](const ExperimentConfig& c) {
                  std::string s;
                  for (const auto& [k, v] : c.fixed_params) s += (s.empty() ? "" : ",") + k + "=" + fmt(v);
                  return s;
              }},
        SODA_LIST(windows, "window sizes to train and evaluate"),
        SODA_LIST(hidden, "hidden layer widths of the score network"),
        SODA_INT(embed_dim, "sinusoidal time-embedding size"),
        Field{{"gaussian_skip", "add the N(0, I) noise prediction sigma(a) x to the network output"},
              [](ExperimentConfig& c, const std::string& v) { c.gaussian_skip = parse_bool("gaussian_skip", v); },
              [](const ExperimentConfig& c) { return std::string(c.gaussian_skip ? "true" : "false"); }},
        SODA_INT(train_steps, "optimizer steps per window size"),
        SODA_INT(batch_size, "training windows per step"),
        SODA_DOUBLE(learning_rate, "peak Adam learning rate (cosine decay)"),
        SODA_DOUBLE(ema_decay, "EMA decay of the weights"),
        SODA_INT(validation_windows, "held-out windows for checkpoint selection"),
        SODA_INT(log_every, "steps between loss-curve points"),
        SODA_INT(sampler_steps, "reverse-diffusion predictor steps"),
        SODA_INT(corrector_steps, "Langevin corrector steps per predictor step"),
        SODA_DOUBLE(corrector_r, "Langevin step as a fraction of sigma^2"),
        SODA_DOUBLE(a_start, "diffusion time the sampler starts from"),
        SODA_DOUBLE(inflation, "observation-variance inflation lambda"),
        SODA_DOUBLE(guidance_scale, "multiplier of the likelihood score"),
        SODA_DOUBLE(guidance_a_min, "diffusion time below which the raw observation variance is used"),
        Field{{"full_jacobian", "propagate guidance through the network Jacobian (false = frozen denoiser)"},
              [](ExperimentConfig& c, const std::string& v) { c.full_jacobian = parse_bool("full_jacobian", v); },
              [](const ExperimentConfig& c) { return std::string(c.full_jacobian ? "true" : "false"); }},
        SODA_INT(horizon, "length T of each evaluation segment"),
        SODA_INT(n_items, "number of evaluation items"),
        SODA_INT(n_samples, "posterior samples per item"),
        SODA_LIST(obs_components, "observed state components"),
        SODA_INT(obs_stride, "steps between observations"),
        SODA_DOUBLE(obs_noise, "observation noise std"),
        SODA_INT(pf_particles, "particle count of the reference filter"),
        Field{{"pf_jitter", "parameter random-walk std inside the filter; empty = system default"},
              [](ExperimentConfig& c, const std::string& v) {
                  if (v.empty()) c.pf_jitter.reset();
                  else c.pf_jitter = parse_number<double>("pf_jitter", v);
              },
              [](const ExperimentConfig& c) { return c.pf_jitter ? fmt(*c.pf_jitter) : std::string{}; }},
        SODA_INT(pf_samples, "paths drawn from the filter per item"),
        SODA_INT(open_loop_samples, "free-running prior trajectories for the baseline"),
        Field{{"output", "results directory"},
              [](ExperimentConfig& c, const std::string& v) { c.output = v; },
              [](const ExperimentConfig& c) { return c.output.string(); }, false},
        Field{{"cache", "stage cache directory; empty = <output>/cache"},
              [](ExperimentConfig& c, const std::string& v) { c.cache = v; },
              [](const ExperimentConfig& c) { return c.cache.string(); }, false},
    };
    return table;
}

#undef SODA_INT
#undef SODA_DOUBLE
#undef SODA_LIST

const Field* find_field(const std::string& name) {
    for (const auto& f : fields())
        if (f.key.name == name) return &f;
    return nullptr;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = [] {
        std::vector<ConfigKey> out;
        for (const auto& f : fields()) out.push_back(f.key);
        return out;
    }();
    return keys;
}

std::map<std::string, std::string> parse_config_text(const std::string& text) {
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        if (!find_field(key)) throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        out[key] = trim(line.substr(eq + 1));
    }
    return out;
}

std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_config_text(ss.str());
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

ExperimentConfig make_config(const std::vector<std::map<std::string, std::string>>& layers, ExperimentConfig base) {
    for (const auto& layer : layers)
        for (const auto& [key, value] : layer) {
            const Field* f = find_field(key);
            if (!f) throw ConfigError("unknown config key '" + key + "'");
            f->set(base, value);
        }
    base.validate();
    return base;
}

std::map<std::string, std::string> ExperimentConfig::to_map() const {
    std::map<std::string, std::string> out;
    for (const auto& f : fields()) out[f.key.name] = f.get(*this);
    return out;
}

std::string render_config(const ExperimentConfig& cfg) {
    std::string out;
    for (const auto& f : fields()) out += f.key.name + " = " + f.get(cfg) + "\n";
    return out;
}

std::uint64_t ExperimentConfig::content_hash() const {
    std::uint64_t h = fnv1a("soda-config-v1\n");
    for (const auto& f : fields())
        if (f.affects_results) h = fnv1a(f.key.name + "=" + f.get(*this) + "\n", h);
    return h;
}

SystemSpec ExperimentConfig::system_spec() const {
    SystemSpec s = SystemSpec::for_system(system);
    for (const auto& [k, v] : fixed_params) {
        if (!s.fixed_params.contains(k))
            throw ConfigError("fixed_params: '" + k + "' is not a constant of " + std::string(to_string(system)));
        s.fixed_params[k] = v;
    }
    return s;
}

ParameterPrior ExperimentConfig::parameter_prior() const { return prior ? *prior : ParameterPrior::default_for(system); }

DatasetManifest ExperimentConfig::manifest() const {
    DatasetManifest m;
    m.system = system_spec();
    m.prior = parameter_prior();
    m.n_trajectories = n_trajectories;
    m.length = length;
    m.jitter = {jitter_std > 0.0, jitter_std};
    m.seed = derive_seed(seed, {1});
    return m;
}

NetworkArchitecture ExperimentConfig::architecture(int w) const {
    NetworkArchitecture a;
    a.window = w;
    a.channels = system_spec().state_dim + 1;
    a.hidden = hidden;
    a.embed_dim = embed_dim;
    a.gaussian_skip = gaussian_skip;
    return a;
}

TrainConfig ExperimentConfig::train_config(int w) const {
    TrainConfig t;
    t.batch_size = batch_size;
    t.steps = train_steps;
    t.learning_rate = learning_rate;
    t.ema_decay = ema_decay;
    t.validation_windows = validation_windows;
    t.log_every = log_every;
    t.seed = derive_seed(seed, {2, static_cast<std::uint64_t>(w)});
    return t;
}

AssimilationRequest ExperimentConfig::assimilation_request() const {
    AssimilationRequest r;
    r.horizon = horizon;
    r.n_samples = n_samples;
    r.sampler = {sampler_steps, corrector_steps, corrector_r, a_start};
    r.guidance.inflation = inflation;
    r.guidance.scale = guidance_scale;
    r.guidance.a_min = guidance_a_min;
    r.guidance.full_jacobian = full_jacobian;
    r.threads = threads;
    r.system_id = system;
    r.dt = system_spec().dt;
    return r;
}

ObservationModel ExperimentConfig::observation_model() const {
    ObservationModel m;
    m.observed_components = obs_components;
    m.stride = obs_stride;
    m.noise_std = obs_noise;
    return m;
}

PFConfig ExperimentConfig::pf_config() const {
    PFConfig p = PFConfig::default_for(system);
    p.n_particles = pf_particles;
    if (pf_jitter) p.jitter_std = *pf_jitter;
    p.threads = threads;
    return p;
}

std::filesystem::path ExperimentConfig::cache_dir() const { return cache.empty() ? output / "cache" : cache; }

void ExperimentConfig::validate() const {
    auto check = [](bool ok, const std::string& msg) {
        if (!ok) throw ConfigError(msg);
    };
    check(threads >= 1, "threads must be >= 1");
    check(!windows.empty(), "windows must list at least one window size");
    for (int w : windows) {
        check(w >= 1 && w <= length, "window size " + std::to_string(w) + " must lie in [1, length]");
        check(w <= horizon, "window size " + std::to_string(w) + " exceeds the evaluation horizon");
        check(w >= 3 || w == horizon, "window sizes below 3 need horizon == w");
    }
    check(horizon >= 1 && horizon <= length, "horizon must lie in [1, length]");
    check(n_items >= 1 && n_samples >= 1, "n_items and n_samples must be >= 1");
    check(pf_samples >= 1 && open_loop_samples >= 1, "pf_samples and open_loop_samples must be >= 1");
    try {
        manifest().validate();
        architecture(windows.front()).validate();
        train_config(windows.front()).validate();
        assimilation_request().sampler.validate();
        assimilation_request().guidance.validate();
        observation_model().validate(system_spec().state_dim);
        pf_config().validate();
    } catch (const ContractViolation& e) {
        throw ConfigError(e.what());
    }
}

}  // namespace soda
