#include <doctest.h>

#include <set>

#include "soda/config.hpp"
#include "soda/error.hpp"

using namespace soda;

TEST_CASE("config text parsing") {
    const auto m = parse_config_text("# comment\nsystem = fhn\n\n  seed=12   # trailing\nwindows = 3, 17\n");
    CHECK(m.at("system") == "fhn");
    CHECK(m.at("seed") == "12");
    CHECK(m.at("windows") == "3, 17");
    CHECK_THROWS_AS(parse_config_text("nonsense_key = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("seed 12\n"), ConfigError);
}

TEST_CASE("config layering: later layers win") {
    const auto cfg = make_config({{{"seed", "1"}, {"system", "fhn"}}, {{"seed", "2"}}, {{"train_steps", "7"}}});
    CHECK(cfg.seed == 2);
    CHECK(cfg.system == SystemId::FHN);
    CHECK(cfg.train_steps == 7);
    CHECK(cfg.windows == std::vector<int>{17});
}

TEST_CASE("config values") {
    const auto cfg = make_config({{{"windows", "3,5,17"},
                                   {"hidden", "64,32"},
                                   {"prior", "uniform(20,36)"},
                                   {"full_jacobian", "false"},
                                   {"gaussian_skip", "off"},
                                   {"pf_jitter", "0.5"},
                                   {"obs_components", "0,2"},
                                   {"fixed_params", "sigma=9"}}});
    CHECK(cfg.windows == std::vector<int>{3, 5, 17});
    CHECK(cfg.architecture(5).hidden == std::vector<int>{64, 32});
    CHECK(cfg.architecture(5).window == 5);
    CHECK(cfg.architecture(5).channels == 4);
    CHECK_FALSE(cfg.architecture(5).gaussian_skip);
    CHECK(cfg.parameter_prior().kind() == ParameterPrior::Kind::Uniform);
    CHECK(cfg.parameter_prior().first() == 20.0);
    CHECK_FALSE(cfg.assimilation_request().guidance.full_jacobian);
    CHECK(cfg.pf_config().jitter_std == 0.5);
    CHECK(cfg.observation_model().observed_components == std::vector<int>{0, 2});
    CHECK(cfg.system_spec().param("sigma") == 9.0);

    CHECK_THROWS_AS(make_config({{{"seed", "abc"}}}), ConfigError);
    CHECK_THROWS_AS(make_config({{{"train_steps", "1.5"}}}), ConfigError);
    CHECK_THROWS_AS(make_config({{{"prior", "beta(1,2)"}}}), ConfigError);
    CHECK_THROWS_AS(make_config({{{"full_jacobian", "maybe"}}}), ConfigError);
    CHECK_THROWS_AS(make_config({{{"system", "kolmogorov"}}}), ConfigError);
    CHECK_THROWS_AS(make_config({{{"fixed_params", "rho=3"}}}), ConfigError);
    CHECK_THROWS_AS(make_config({{{"bogus", "1"}}}), ConfigError);
}

TEST_CASE("config validation") {
    CHECK_THROWS_AS(make_config({{{"train_steps", "0"}}}), ConfigError);
    CHECK_THROWS_AS(make_config({{{"windows", "1"}, {"horizon", "65"}}}), ConfigError);
    CHECK_THROWS_AS(make_config({{{"windows", "70"}, {"horizon", "65"}}}), ConfigError);
    CHECK_THROWS_AS(make_config({{{"n_trajectories", "5"}}}), ConfigError);
    CHECK_THROWS_AS(make_config({{{"obs_noise", "-1"}}}), ConfigError);
    CHECK_NOTHROW(make_config({{{"windows", "65"}, {"horizon", "65"}}}));
}

TEST_CASE("every key renders and parses back") {
    std::set<std::string> names;
    for (const auto& k : config_keys()) {
        CHECK_FALSE(k.help.empty());
        names.insert(k.name);
    }
    CHECK(names.size() == config_keys().size());
    for (const char* key : {"system", "seed", "threads", "windows", "train_steps", "inflation", "pf_particles", "output"})
        CHECK(names.count(key) == 1);

    auto cfg = make_config({{{"system", "fhn"}, {"seed", "5"}, {"prior", "gaussian(0.5,0.1)"}, {"windows", "25"}}});
    const auto round = make_config({parse_config_text(render_config(cfg))});
    CHECK(round.to_map() == cfg.to_map());
    CHECK(round.content_hash() == cfg.content_hash());
}

TEST_CASE("content hash tracks result-changing keys only") {
    const auto base = make_config({});
    CHECK(make_config({{{"threads", "8"}}}).content_hash() == base.content_hash());
    CHECK(make_config({{{"output", "elsewhere"}}}).content_hash() == base.content_hash());
    CHECK(make_config({{{"seed", "1"}}}).content_hash() != base.content_hash());
    CHECK(make_config({{{"inflation", "0.2"}}}).content_hash() != base.content_hash());
}

TEST_CASE("derived seeds differ by stage and window") {
    const auto cfg = make_config({{{"seed", "3"}}});
    CHECK(cfg.manifest().seed != cfg.train_config(17).seed);
    CHECK(cfg.train_config(3).seed != cfg.train_config(17).seed);
    CHECK(make_config({{{"seed", "4"}}}).manifest().seed != cfg.manifest().seed);
}
