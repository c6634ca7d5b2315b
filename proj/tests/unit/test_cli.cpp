#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

struct Sandbox {
    fs::path dir;
    Sandbox() {
        dir = fs::temp_directory_path() / ("soda_cli_" + std::to_string(::getpid()));
        fs::remove_all(dir);
        fs::create_directories(dir);
        std::ofstream(dir / "tiny.cfg") << "# tiny run\n"
                                           "system = lorenz63\n"
                                           "n_trajectories = 16\n"
                                           "length = 40\n"
                                           "windows = 5\n"
                                           "hidden = 16,16\n"
                                           "embed_dim = 8\n"
                                           "train_steps = 40\n"
                                           "batch_size = 16\n"
                                           "log_every = 20\n"
                                           "validation_windows = 16\n"
                                           "n_items = 2\n"
                                           "n_samples = 2\n"
                                           "sampler_steps = 8\n"
                                           "horizon = 17\n"
                                           "pf_particles = 256\n"
                                           "pf_samples = 16\n"
                                           "open_loop_samples = 16\n";
    }
    ~Sandbox() { fs::remove_all(dir); }

    int run(const std::string& args, const std::string& env = "") const {
        const std::string cmd = "cd '" + dir.string() + "' && " + env + " '" + SODA_CLI_PATH + "' " + args +
                                " > '" + (dir / "stdout.txt").string() + "' 2> '" + (dir / "stderr.txt").string() + "'";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }
    std::string read(const fs::path& p) const {
        std::ifstream in(dir / p, std::ios::binary);
        return {std::istreambuf_iterator<char>(in), {}};
    }
};

}  // namespace

TEST_CASE("cli help and usage errors") {
    Sandbox sb;
    CHECK(sb.run("--help") == 0);
    CHECK(sb.read("stdout.txt").find("sweep") != std::string::npos);
    CHECK(sb.run("run --help") == 0);
    CHECK(sb.read("stdout.txt").find("--train_steps") != std::string::npos);
    CHECK(sb.run("") == 2);
    CHECK(sb.run("frobnicate") == 2);
    CHECK(sb.run("run --no-such-flag 1") == 2);
    std::ofstream(sb.dir / "bad.cfg") << "unknown_key = 3\n";
    CHECK(sb.run("run --config bad.cfg") == 2);
    CHECK(sb.read("stderr.txt").find("unknown_key") != std::string::npos);
    CHECK(sb.run("run --config tiny.cfg --train_steps 0") == 2);
    CHECK(sb.run("run --config missing.cfg") == 2);
}

TEST_CASE("cli format errors") {
    Sandbox sb;
    std::ofstream(sb.dir / "junk.bin") << "junk";
    std::ofstream(sb.dir / "y.json") << "{}";
    CHECK(sb.run("assimilate --config tiny.cfg -m junk.bin -y y.json -o r.csv") == 4);
    CHECK(sb.run("train --config tiny.cfg -d junk.bin -w 5 -o m.bin") == 4);
}

TEST_CASE("cli stages compose and the pipeline is reproducible") {
    Sandbox sb;
    REQUIRE(sb.run("simulate --config tiny.cfg -o data.bin --items-dir items") == 0);
    CHECK(fs::exists(sb.dir / "data.bin"));
    CHECK(fs::exists(sb.dir / "items/item_000.obs.json"));
    CHECK(fs::exists(sb.dir / "items/item_001.truth.csv.json"));

    REQUIRE(sb.run("train --config tiny.cfg -d data.bin -w 5 -o model.bin") == 0);
    REQUIRE(sb.run("assimilate --config tiny.cfg -m model.bin -y items/item_000.obs.json -o post.csv") == 0);
    CHECK(sb.read("stdout.txt").find("parameter estimate") != std::string::npos);
    REQUIRE(sb.run("pf --config tiny.cfg -y items/item_000.obs.json -o pf.csv") == 0);
    REQUIRE(sb.run("evaluate --config tiny.cfg -s post.csv -y items/item_000.obs.json -r pf.csv --truth-theta 28") == 0);
    const std::string eval = sb.read("stdout.txt");
    for (const char* metric : {"ELL", "W1", "D_eq", "abs_error_theta"}) CHECK(eval.find(metric) != std::string::npos);
    CHECK(sb.run("assimilate --config tiny.cfg --windows 5 -m model.bin -y items/item_000.obs.json -o post.csv "
                 "--horizon 3") == 2);

    REQUIRE(sb.run("run --config tiny.cfg --output a") == 0);
    const std::string first = sb.read("a/metrics.csv");
    REQUIRE(sb.run("run --config tiny.cfg --output b --cache a/cache") == 0);
    CHECK(sb.read("b/metrics.csv") == first);
    REQUIRE(sb.run("run --config tiny.cfg --output c") == 0);
    CHECK(sb.read("c/metrics.csv") == first);
    for (const char* metric : {"ELL", "W1", "RMSE_theta", "D_eq"}) CHECK(first.find(metric) != std::string::npos);
    CHECK(fs::exists(sb.dir / "a/scatter.csv"));
    CHECK(fs::exists(sb.dir / "a/summary.json"));
    const auto meta = nlohmann::json::parse(sb.read("a/metrics.csv.json"));
    CHECK(meta.contains("config_hash"));
    CHECK(meta.contains("seed"));

    REQUIRE(sb.run("run --config tiny.cfg --output d", "SODA_SEED=99") == 0);
    CHECK(sb.read("d/metrics.csv") != first);
    REQUIRE(sb.run("run --config tiny.cfg --output e --seed 0", "SODA_SEED=99") == 0);
    CHECK(sb.read("e/metrics.csv") == first);
}
