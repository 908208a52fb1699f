#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "meee/config.hpp"

using namespace meee;

namespace {

std::filesystem::path write_temp(const std::string& name, const std::string& body) {
    const auto path = std::filesystem::temp_directory_path() / name;
    std::ofstream f(path);
    f << body;
    return path;
}

}  // namespace

TEST_CASE("defaults: documented table per environment") {
    const ExperimentConfig lqr = default_config("lqr");
    CHECK(lqr.n_epochs == 30);
    CHECK(lqr.steps_per_epoch == 200);
    CHECK(lqr.rollout_horizon == 1);
    CHECK(lqr.eval_interval == 200);
    CHECK(lqr.env_buffer_capacity == 6000);
    CHECK(lqr.model_buffer_capacity == 10 * 1 * 200);
    CHECK(lqr.gradient_updates_per_step == 10);
    CHECK(lqr.model_rollouts_per_step == 10);
    CHECK(lqr.ensemble_size == 5);
    CHECK(lqr.lambda == 1.0);
    CHECK(lqr.psi == std::vector<double>{1.0});
    CHECK(lqr.weight_temperature == 20.0);
    CHECK(lqr.alpha == 0.2);
    CHECK(lqr.gamma == 0.99);
    CHECK(lqr.candidates == 8);
    CHECK(lqr.include_base);
    CHECK(lqr.hidden_size == 64);
    CHECK_FALSE(lqr.single_critic);
    CHECK(lqr.real_data_fraction == 0.0);

    const ExperimentConfig pend = default_config("pendulum");
    CHECK(pend.n_epochs == 50);
    CHECK(pend.steps_per_epoch == 400);
    CHECK(pend.rollout_horizon == 5);
    CHECK(pend.model_buffer_capacity == 10 * 5 * 400);
}

TEST_CASE("load: a file with only env gets the full default table") {
    const auto path = write_temp("meee_cfg_min.cfg", "env = pendulum\n");
    const ExperimentConfig cfg = load_config(path);
    CHECK(cfg == default_config("pendulum"));
    std::filesystem::remove(path);
}

TEST_CASE("load: comments, blank lines, key overrides") {
    const auto path = write_temp("meee_cfg_full.cfg",
                                 "# a comment\n"
                                 "env = lqr\n"
                                 "\n"
                                 "variant = meee_v2   # trailing comment\n"
                                 "lambda = 0.5\n"
                                 "psi = 0.3, 0.7\n"
                                 "seed = 42\n");
    const ExperimentConfig cfg = load_config(path);
    CHECK(cfg.variant == Variant::meee_v2);
    CHECK(cfg.lambda == 0.5);
    CHECK(cfg.psi == std::vector<double>({0.3, 0.7}));
    CHECK(cfg.seed == 42);
    std::filesystem::remove(path);
}

TEST_CASE("load: out-of-range values name the key") {
    const auto path = write_temp("meee_cfg_bad.cfg", "env = lqr\nlambda = -1\n");
    CHECK_THROWS_WITH_AS(load_config(path), doctest::Contains("lambda"),
                         std::invalid_argument);
    std::filesystem::remove(path);
}

TEST_CASE("load: unknown and duplicate keys name line and key") {
    auto path = write_temp("meee_cfg_unknown.cfg", "env = lqr\nlambada = 1\n");
    CHECK_THROWS_WITH_AS(load_config(path), doctest::Contains("unknown key 'lambada'"),
                         std::invalid_argument);
    CHECK_THROWS_WITH_AS(load_config(path), doctest::Contains("line 2"),
                         std::invalid_argument);
    std::filesystem::remove(path);

    path = write_temp("meee_cfg_dup.cfg", "env = lqr\nenv = pendulum\n");
    CHECK_THROWS_WITH_AS(load_config(path), doctest::Contains("duplicate key 'env'"),
                         std::invalid_argument);
    std::filesystem::remove(path);
}

TEST_CASE("load: malformed numbers name line and key") {
    const auto path = write_temp("meee_cfg_num.cfg", "env = lqr\ngamma = fast\n");
    CHECK_THROWS_WITH_AS(load_config(path), doctest::Contains("'gamma'"),
                         std::invalid_argument);
    std::filesystem::remove(path);
}

TEST_CASE("load: structural errors report the line") {
    const auto path = write_temp("meee_cfg_struct.cfg", "env = lqr\njust words\n");
    CHECK_THROWS_WITH_AS(load_config(path), doctest::Contains("line 2"),
                         std::invalid_argument);
    std::filesystem::remove(path);
}

TEST_CASE("validate: rejects out-of-range fields by name") {
    ExperimentConfig cfg = default_config("lqr");
    cfg.gamma = 1.0;
    CHECK_THROWS_WITH_AS(validate_config(cfg), doctest::Contains("gamma"),
                         std::invalid_argument);
    cfg = default_config("lqr");
    cfg.ensemble_size = 1;
    CHECK_THROWS_WITH_AS(validate_config(cfg), doctest::Contains("ensemble_size"),
                         std::invalid_argument);
    cfg = default_config("lqr");
    cfg.weight_temperature = 0.0;
    CHECK_THROWS_WITH_AS(validate_config(cfg), doctest::Contains("weight_temperature"),
                         std::invalid_argument);
    cfg = default_config("lqr");
    cfg.psi = {1.0, -0.5};
    CHECK_THROWS_WITH_AS(validate_config(cfg), doctest::Contains("psi"),
                         std::invalid_argument);
    cfg = default_config("lqr");
    cfg.real_data_fraction = 1.5;
    CHECK_THROWS_WITH_AS(validate_config(cfg), doctest::Contains("real_data_fraction"),
                         std::invalid_argument);
}

TEST_CASE("round-trip: save then load is identical") {
    for (const char* env : {"lqr", "pendulum"}) {
        ExperimentConfig cfg = default_config(env);
        cfg.seed = 1234567;
        cfg.variant = Variant::mbpo;
        cfg.psi = {0.25, 0.75};
        cfg.lambda = 1.5e-3;
        cfg.out_dir = "some/dir";
        cfg.debug_dump_buffers = true;

        const auto path = write_temp("meee_cfg_rt.cfg", "");
        save_config(cfg, path);
        const ExperimentConfig back = load_config(path);
        CHECK(back == cfg);
        std::filesystem::remove(path);
    }
}

TEST_CASE("variant names round-trip") {
    for (Variant v : {Variant::meee, Variant::meee_v1, Variant::meee_v2, Variant::mbpo,
                      Variant::sac})
        CHECK(variant_from_string(to_string(v)) == v);
    CHECK_THROWS_AS(variant_from_string("meee_v3"), std::invalid_argument);
}
