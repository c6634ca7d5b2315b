#include "soda/datastore.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "binary_io.hpp"
#include "soda/error.hpp"
#include "soda/hash.hpp"
#include "soda/parallel.hpp"

namespace soda {

namespace fs = std::filesystem;
using nlohmann::json;

std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

namespace {

constexpr std::string_view kDatasetMagic = "SODADSET";
constexpr std::string_view kModelMagic = "SODAMODL";

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, std::string_view data) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError("cannot write " + path.string());
        out.write(data.data(), static_cast<std::streamsize>(data.size()));
        if (!out) throw FormatError("short write to " + path.string());
    }
    fs::rename(tmp, path);
}

// Appends the FNV-1a hash of the buffer.
std::string seal(const io::Writer& w) {
    io::Writer out = w;
    out.u64(fnv1a(w.buffer()));
    return out.buffer();
}

// Checks magic, version and trailing hash; returns a reader past the magic.
io::Reader open_sealed(std::string_view data, std::string_view magic, std::uint32_t version, const std::string& what) {
    if (data.size() < magic.size() || data.substr(0, magic.size()) != magic)
        throw FormatError(what + ": bad magic bytes");
    io::Reader header(data.substr(magic.size()));
    const std::uint32_t found = header.u32();
    if (found != version)
        throw FormatError(what + ": format version " + std::to_string(found) + ", expected " + std::to_string(version));
    if (data.size() < magic.size() + 12) throw CorruptFileError(what + ": file is truncated");
    const std::string_view body = data.substr(0, data.size() - 8);
    io::Reader tail(data.substr(data.size() - 8));
    if (tail.u64() != fnv1a(body)) throw CorruptFileError(what + ": content hash mismatch (truncated or corrupt)");
    io::Reader r(body.substr(magic.size()));
    r.u32();
    return r;
}

void write_system(io::Writer& w, const SystemSpec& s) {
    w.u32(static_cast<std::uint32_t>(s.system_id));
    w.u32(static_cast<std::uint32_t>(s.state_dim));
    w.f64(s.dt);
    w.str(s.free_param_name);
    w.u32(static_cast<std::uint32_t>(s.fixed_params.size()));
    for (const auto& [k, v] : s.fixed_params) {
        w.str(k);
        w.f64(v);
    }
}

SystemSpec read_system(io::Reader& r) {
    SystemSpec s;
    const auto id = r.u32();
    if (id > 1) throw FormatError("unknown system id");
    s.system_id = static_cast<SystemId>(id);
    s.state_dim = static_cast<int>(r.u32());
    s.dt = r.f64();
    s.free_param_name = r.str();
    const auto n = r.u32();
    s.fixed_params.clear();
    for (std::uint32_t i = 0; i < n; ++i) {
        auto k = r.str();
        s.fixed_params[k] = r.f64();
    }
    return s;
}

void write_vector(io::Writer& w, const Vector& v) {
    w.u64(static_cast<std::uint64_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) w.f64(v[i]);
}

Vector read_vector(io::Reader& r) {
    const auto n = r.u64();
    if (n > r.remaining() / 8) throw CorruptFileError("vector length exceeds file size");
    Vector v(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = r.f64();
    return v;
}

void write_indices(io::Writer& w, const std::vector<int>& idx) {
    w.u64(idx.size());
    for (int i : idx) w.u64(static_cast<std::uint64_t>(i));
}

std::vector<int> read_indices(io::Reader& r) {
    const auto n = r.u64();
    if (n > r.remaining() / 8) throw CorruptFileError("index list exceeds file size");
    std::vector<int> out(n);
    for (auto& i : out) i = static_cast<int>(r.u64());
    return out;
}

void write_manifest(io::Writer& w, const DatasetManifest& m) {
    write_system(w, m.system);
    w.u32(static_cast<std::uint32_t>(m.prior.kind()));
    w.f64(m.prior.first());
    w.f64(m.prior.second());
    w.u64(static_cast<std::uint64_t>(m.n_trajectories));
    w.u64(static_cast<std::uint64_t>(m.length));
    w.u32(m.jitter.enabled ? 1 : 0);
    w.f64(m.jitter.std);
    w.u64(m.seed);
    w.f64(m.train_fraction);
    w.f64(m.val_fraction);
    w.f64(m.test_fraction);
}

DatasetManifest read_manifest(io::Reader& r) {
    DatasetManifest m;
    m.system = read_system(r);
    const auto kind = r.u32();
    const double p1 = r.f64(), p2 = r.f64();
    m.prior = kind == 0 ? ParameterPrior::uniform(p1, p2) : ParameterPrior::gaussian(p1, p2);
    m.n_trajectories = static_cast<int>(r.u64());
    m.length = static_cast<int>(r.u64());
    m.jitter.enabled = r.u32() != 0;
    m.jitter.std = r.f64();
    m.seed = r.u64();
    m.train_fraction = r.f64();
    m.val_fraction = r.f64();
    m.test_fraction = r.f64();
    return m;
}

}  // namespace

DatasetManifest DatasetManifest::default_for(SystemId id) {
    DatasetManifest m;
    m.system = SystemSpec::for_system(id);
    m.prior = ParameterPrior::default_for(id);
    return m;
}

void DatasetManifest::validate() const {
    system.validate();
    require(n_trajectories >= 10, "dataset needs at least 10 trajectories");
    require(length >= 1, "trajectory length must be >= 1");
    require(jitter.std >= 0.0, "jitter std must be >= 0");
    require(train_fraction > 0.0 && val_fraction > 0.0 && test_fraction > 0.0, "split fractions must be positive");
    require(std::abs(train_fraction + val_fraction + test_fraction - 1.0) < 1e-9, "split fractions must sum to 1");
    require(format_version == kDatasetFormatVersion, "unsupported dataset format version");
}

std::uint64_t DatasetManifest::content_hash() const {
    io::Writer w;
    w.u32(format_version);
    write_manifest(w, *this);
    return fnv1a(w.buffer());
}

Splits split_dataset(int n, std::uint64_t seed, double train_fraction, double val_fraction) {
    require(n >= 3, "split_dataset needs n >= 3");
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, {0x5011}));
    // Fisher-Yates with our own generator so the permutation is portable.
    for (int i = n - 1; i > 0; --i) {
        const int j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    const int n_train = static_cast<int>(std::floor(train_fraction * n));
    const int n_val = static_cast<int>(std::lround(val_fraction * n));
    require(n_train >= 1 && n_val >= 1 && n - n_train - n_val >= 1, "split leaves an empty part");
    Splits s;
    s.train.assign(order.begin(), order.begin() + n_train);
    s.val.assign(order.begin() + n_train, order.begin() + n_train + n_val);
    s.test.assign(order.begin() + n_train + n_val, order.end());
    return s;
}

Normalization compute_normalization(const std::vector<AugmentedTrajectory>& trajectories, const std::vector<int>& indices) {
    require(!indices.empty(), "normalization needs at least one trajectory");
    const int d = trajectories.at(static_cast<std::size_t>(indices.front())).channels();
    Vector sum = Vector::Zero(d), sq = Vector::Zero(d);
    double count = 0.0;
    for (int i : indices) {
        const auto& z = trajectories.at(static_cast<std::size_t>(i)).states;
        sum += z.colwise().sum().transpose();
        count += static_cast<double>(z.rows());
    }
    const Vector mean = sum / count;
    for (int i : indices) {
        const auto& z = trajectories[static_cast<std::size_t>(i)].states;
        sq += (z.rowwise() - mean.transpose()).array().square().colwise().sum().matrix().transpose();
    }
    Vector std = (sq / count).cwiseSqrt();
    // A channel that never varies (e.g. a point-mass prior) keeps unit scale.
    for (Eigen::Index c = 0; c < d; ++c)
        if (!(std[c] > 1e-12)) std[c] = 1.0;
    return {mean, std};
}

Dataset generate_dataset(const DatasetManifest& manifest, int threads) {
    manifest.validate();
    const int n = manifest.n_trajectories;
    Dataset data;
    data.manifest = manifest;
    data.trajectories.resize(static_cast<std::size_t>(n));
    data.theta.resize(static_cast<std::size_t>(n));
    std::vector<int> retries(static_cast<std::size_t>(n), 0);
    // Every trajectory may diverge at most this often before the run aborts;
    // the global 1% budget is checked afterwards.
    const int max_attempts = 16;

    parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t i) {
        for (int attempt = 0; attempt < max_attempts; ++attempt) {
            Rng rng(derive_seed(manifest.seed, {i, static_cast<std::uint64_t>(attempt)}));
            try {
                const double theta = sample_parameter(manifest.prior, rng);
                const State x0 = sample_initial_state(manifest.system, theta, rng);
                data.trajectories[i] = augment(manifest.system, x0, theta, manifest.length, manifest.jitter, rng);
                data.theta[i] = theta;
                return;
            } catch (const DivergenceError&) {
                ++retries[i];
            }
        }
        throw DivergenceError("trajectory " + std::to_string(i) + " diverged on every attempt", max_attempts);
    });

    data.divergent_resamples = std::accumulate(retries.begin(), retries.end(), 0);
    if (data.divergent_resamples > 0.01 * n)
        throw DivergenceError("dataset divergence rate above 1%: " + std::to_string(data.divergent_resamples) + " of " +
                                  std::to_string(n) + " draws diverged",
                              static_cast<std::size_t>(data.divergent_resamples));
    data.splits = split_dataset(n, manifest.seed, manifest.train_fraction, manifest.val_fraction);
    data.normalization = compute_normalization(data.trajectories, data.splits.train);
    return data;
}

RowMatrix sample_training_window(const std::vector<AugmentedTrajectory>& trajectories, const std::vector<int>& indices,
                                 int w, const Normalization& norm, Rng& rng) {
    require(!indices.empty(), "no trajectories to sample windows from");
    const std::size_t pick = static_cast<std::size_t>(rng() % indices.size());
    const auto& z = trajectories.at(static_cast<std::size_t>(indices[pick]));
    if (w < 1 || w > z.length())
        throw ContractViolation("window size " + std::to_string(w) + " exceeds trajectory length " +
                                std::to_string(z.length()));
    const int start = static_cast<int>(rng() % static_cast<std::uint64_t>(z.length() - w + 1));
    return norm.normalize(z.states.middleRows(start, w));
}

TrajectoryWindowSource::TrajectoryWindowSource(const Dataset& data, const std::vector<int>& indices, int w)
    : data_(data), indices_(indices), w_(w) {
    require(!indices.empty(), "window source needs trajectories");
    for (int i : indices)
        if (data.trajectories.at(static_cast<std::size_t>(i)).length() < w)
            throw ContractViolation("window size exceeds trajectory length");
}

void TrajectoryWindowSource::sample(Rng& rng, double* out) const {
    const RowMatrix win = sample_training_window(data_.trajectories, indices_, w_, data_.normalization, rng);
    std::copy(win.data(), win.data() + win.size(), out);
}

std::vector<EvaluationItem> build_evaluation_items(const Dataset& data, int n_items, int horizon,
                                                   const ObservationModel& obs_model, std::uint64_t seed) {
    require(n_items >= 1, "need at least one evaluation item");
    require(!data.splits.test.empty(), "dataset has no test split");
    const int L = data.manifest.length;
    require(horizon >= 1 && horizon <= L, "evaluation horizon exceeds trajectory length");
    obs_model.validate(data.manifest.system.state_dim);
    std::vector<EvaluationItem> items;
    items.reserve(static_cast<std::size_t>(n_items));
    for (int i = 0; i < n_items; ++i) {
        EvaluationItem item;
        item.trajectory = data.splits.test[static_cast<std::size_t>(i) % data.splits.test.size()];
        item.offset = n_items > 1 ? static_cast<int>(std::lround(static_cast<double>(i) * (L - horizon) / (n_items - 1))) : 0;
        const auto& src = data.trajectories[static_cast<std::size_t>(item.trajectory)];
        item.truth.system_id = src.system_id;
        item.truth.dt = src.dt;
        item.truth.d_theta = src.d_theta;
        item.truth.states = src.states.middleRows(item.offset, horizon);
        item.theta = item.truth.states.col(item.truth.state_dim()).mean();
        Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(i)}));
        item.observations = observe(split(item.truth).first, obs_model, rng);
        items.push_back(std::move(item));
    }
    return items;
}

void save_dataset(const Dataset& data, const fs::path& path) {
    io::Writer w;
    w.bytes(kDatasetMagic);
    w.u32(kDatasetFormatVersion);
    write_manifest(w, data.manifest);
    const int d = data.channels();
    w.u32(static_cast<std::uint32_t>(d));
    w.u64(static_cast<std::uint64_t>(data.divergent_resamples));
    write_vector(w, data.normalization.mean);
    write_vector(w, data.normalization.std);
    write_indices(w, data.splits.train);
    write_indices(w, data.splits.val);
    write_indices(w, data.splits.test);
    w.u64(data.trajectories.size());
    for (std::size_t i = 0; i < data.trajectories.size(); ++i) {
        w.f64(data.theta[i]);
        const auto& z = data.trajectories[i].states;
        for (Eigen::Index k = 0; k < z.size(); ++k) w.f64(z.data()[k]);
    }
    write_file(path, seal(w));
}

Dataset load_dataset(const fs::path& path) {
    const std::string raw = read_file(path);
    io::Reader r = open_sealed(raw, kDatasetMagic, kDatasetFormatVersion, "dataset " + path.string());
    Dataset data;
    data.manifest = read_manifest(r);
    const int d = static_cast<int>(r.u32());
    data.divergent_resamples = static_cast<int>(r.u64());
    data.normalization.mean = read_vector(r);
    data.normalization.std = read_vector(r);
    data.splits.train = read_indices(r);
    data.splits.val = read_indices(r);
    data.splits.test = read_indices(r);
    const auto n = r.u64();
    const int T = data.manifest.length;
    if (n != static_cast<std::uint64_t>(data.manifest.n_trajectories) || d != data.manifest.system.state_dim + 1)
        throw FormatError("dataset header is inconsistent");
    data.trajectories.resize(n);
    data.theta.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        data.theta[i] = r.f64();
        auto& z = data.trajectories[i];
        z.system_id = data.manifest.system.system_id;
        z.dt = data.manifest.system.dt;
        z.d_theta = 1;
        z.states.resize(T, d);
        for (Eigen::Index k = 0; k < z.states.size(); ++k) z.states.data()[k] = r.f64();
    }
    if (r.remaining() != 0) throw CorruptFileError("dataset has trailing bytes");
    return data;
}

namespace {

std::string serialize_model(const ScoreNetwork& net) {
    const auto& a = net.architecture();
    io::Writer w;
    w.bytes(kModelMagic);
    w.u32(kModelFormatVersion);
    w.u32(static_cast<std::uint32_t>(a.window));
    w.u32(static_cast<std::uint32_t>(a.channels));
    w.u32(static_cast<std::uint32_t>(a.hidden.size()));
    for (int h : a.hidden) w.u32(static_cast<std::uint32_t>(h));
    w.u32(static_cast<std::uint32_t>(a.embed_dim));
    w.u32(static_cast<std::uint32_t>(a.activation));
    w.u32(a.gaussian_skip ? 1 : 0);
    w.str(NoiseSchedule::id());
    w.f64(net.schedule().sigma_min);
    write_vector(w, net.normalization().mean);
    write_vector(w, net.normalization().std);
    write_vector(w, net.parameters());
    return seal(w);
}

}  // namespace

void save_model(const ScoreNetwork& net, const fs::path& path) { write_file(path, serialize_model(net)); }

ScoreNetwork load_model(const fs::path& path) {
    const std::string raw = read_file(path);
    io::Reader r = open_sealed(raw, kModelMagic, kModelFormatVersion, "model " + path.string());
    NetworkArchitecture a;
    a.window = static_cast<int>(r.u32());
    a.channels = static_cast<int>(r.u32());
    const auto n_hidden = r.u32();
    if (n_hidden > 64) throw CorruptFileError("implausible layer count");
    a.hidden.resize(n_hidden);
    for (auto& h : a.hidden) h = static_cast<int>(r.u32());
    a.embed_dim = static_cast<int>(r.u32());
    if (r.u32() != static_cast<std::uint32_t>(Activation::Gelu)) throw FormatError("unknown activation");
    a.gaussian_skip = r.u32() != 0;
    if (r.str() != NoiseSchedule::id()) throw FormatError("unknown noise schedule");
    NoiseSchedule schedule;
    schedule.sigma_min = r.f64();
    Normalization norm;
    norm.mean = read_vector(r);
    norm.std = read_vector(r);
    Vector params = read_vector(r);
    if (r.remaining() != 0) throw CorruptFileError("model has trailing bytes");
    try {
        return ScoreNetwork(a, norm, schedule, std::move(params));
    } catch (const ContractViolation& e) {
        throw FormatError(std::string("model file is inconsistent: ") + e.what());
    }
}

std::string model_id(const ScoreNetwork& net) { return hex64(fnv1a(serialize_model(net))); }

void save_results(const PosteriorSampleSet& set, const fs::path& path, const std::map<std::string, std::string>& provenance) {
    set.validate();
    std::ostringstream csv;
    csv << std::setprecision(17);
    csv << "sample,t";
    for (int c = 0; c < set.channels(); ++c) csv << ",z" << c;
    csv << '\n';
    for (int s = 0; s < set.n_samples(); ++s) {
        const auto& z = set.samples[static_cast<std::size_t>(s)].states;
        for (Eigen::Index t = 0; t < z.rows(); ++t) {
            csv << s << ',' << t;
            for (Eigen::Index c = 0; c < z.cols(); ++c) csv << ',' << z(t, c);
            csv << '\n';
        }
    }
    const std::string body = csv.str();
    const auto& first = set.samples.front();
    json meta = {
        {"format", "soda-results"},
        {"version", kResultsFormatVersion},
        {"n_samples", set.n_samples()},
        {"T", set.length()},
        {"channels", set.channels()},
        {"d_theta", first.d_theta},
        {"system", std::string(to_string(first.system_id))},
        {"dt", first.dt},
        {"model_id", set.model_id},
        {"observation_id", set.observation_id},
        {"sampler_config", set.sampler_config},
        {"seed", set.seed},
        {"content_hash", hex64(fnv1a(body))},
        {"provenance", provenance},
    };
    write_file(path, body);
    write_file(path.string() + ".json", meta.dump(2) + "\n");
}

PosteriorSampleSet load_results(const fs::path& path) {
    json meta;
    try {
        meta = json::parse(read_file(path.string() + ".json"));
    } catch (const json::exception& e) {
        throw CorruptFileError(std::string("results sidecar is not valid JSON: ") + e.what());
    }
    if (meta.value("format", "") != "soda-results") throw FormatError("not a results file");
    if (meta.value("version", 0u) != kResultsFormatVersion)
        throw FormatError("results format version " + meta.value("version", json(0)).dump() + ", expected " +
                          std::to_string(kResultsFormatVersion));
    const std::string body = read_file(path);
    if (hex64(fnv1a(body)) != meta.value("content_hash", ""))
        throw CorruptFileError("results content hash mismatch (truncated or corrupt)");

    PosteriorSampleSet set;
    const int n = meta.at("n_samples"), T = meta.at("T"), d = meta.at("channels");
    set.model_id = meta.value("model_id", "");
    set.observation_id = meta.value("observation_id", "");
    set.sampler_config = meta.value("sampler_config", "");
    set.seed = meta.value("seed", std::uint64_t{0});
    const SystemId system = system_from_string(meta.value("system", "lorenz63"));
    set.samples.resize(static_cast<std::size_t>(n));
    for (auto& z : set.samples) {
        z.system_id = system;
        z.dt = meta.value("dt", 0.0);
        z.d_theta = meta.value("d_theta", 1);
        z.states.resize(T, d);
    }
    std::istringstream in(body);
    std::string line;
    std::getline(in, line);
    long rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        std::getline(ls, cell, ',');
        const int s = std::stoi(cell);
        std::getline(ls, cell, ',');
        const int t = std::stoi(cell);
        if (s < 0 || s >= n || t < 0 || t >= T) throw CorruptFileError("results row index out of range");
        for (int c = 0; c < d; ++c) {
            if (!std::getline(ls, cell, ',')) throw CorruptFileError("results row is short");
            set.samples[static_cast<std::size_t>(s)].states(t, c) = std::stod(cell);
        }
        ++rows;
    }
    if (rows != static_cast<long>(n) * T) throw CorruptFileError("results file has the wrong number of rows");
    return set;
}

void save_observations(const ObservationSeries& y, const fs::path& path) {
    json values = json::array();
    for (Eigen::Index i = 0; i < y.values.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < y.values.cols(); ++j) row.push_back(y.values(i, j));
        values.push_back(row);
    }
    json doc = {
        {"format", "soda-observations"},
        {"version", kResultsFormatVersion},
        {"components", y.model.observed_components},
        {"stride", y.model.stride},
        {"noise_std", y.model.noise_std},
        {"times", y.times},
        {"values", values},
    };
    write_file(path, doc.dump(2) + "\n");
}

ObservationSeries load_observations(const fs::path& path) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw CorruptFileError(std::string("observation file is not valid JSON: ") + e.what());
    }
    if (doc.value("format", "") != "soda-observations") throw FormatError("not an observation file");
    if (doc.value("version", 0u) != kResultsFormatVersion) throw FormatError("unsupported observation file version");
    ObservationSeries y;
    try {
        y.model.observed_components = doc.at("components").get<std::vector<int>>();
        y.model.stride = doc.at("stride");
        y.model.noise_std = doc.at("noise_std");
        y.times = doc.at("times").get<std::vector<int>>();
        const auto& values = doc.at("values");
        y.values.resize(static_cast<Eigen::Index>(y.times.size()), y.model.obs_dim());
        if (values.size() != y.times.size()) throw FormatError("observation values and times differ in length");
        for (std::size_t i = 0; i < values.size(); ++i)
            for (int j = 0; j < y.model.obs_dim(); ++j) y.values(static_cast<Eigen::Index>(i), j) = values[i].at(j);
    } catch (const json::exception& e) {
        throw FormatError(std::string("observation file is malformed: ") + e.what());
    }
    return y;
}

}  // namespace soda
