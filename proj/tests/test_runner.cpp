#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "meee/checkpoint.hpp"
#include "meee/runner.hpp"

using namespace meee;

namespace {

namespace fs = std::filesystem;

ExperimentConfig tiny_config(Variant variant, const std::string& tag) {
    ExperimentConfig cfg = default_config("lqr");
    cfg.variant = variant;
    cfg.seed = 7;
    cfg.n_epochs = 2;
    cfg.steps_per_epoch = 25;
    cfg.gradient_updates_per_step = 2;
    cfg.batch_size = 16;
    cfg.model_batch_size = 16;
    cfg.model_train_epochs = 2;
    cfg.model_rollouts_per_step = 4;
    cfg.rollout_horizon = 1;
    cfg.ensemble_size = 2;
    cfg.candidates = 3;
    cfg.hidden_size = 16;
    cfg.eval_episodes = 2;
    cfg.eval_interval = 25;
    cfg.env_buffer_capacity = 0;
    cfg.model_buffer_capacity = 0;
    apply_auto_defaults(cfg);
    cfg.out_dir = (fs::temp_directory_path() / ("meee_run_" + tag)).string();
    return cfg;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// Strips the wall clock column (the one timing-dependent field).
std::string strip_wall_clock(const std::string& csv) {
    std::stringstream in(csv), out;
    std::string line;
    while (std::getline(in, line)) {
        const auto cut = line.rfind(',');
        out << line.substr(0, cut) << '\n';
    }
    return out.str();
}

}  // namespace

TEST_CASE("evaluate: optimal linear controller matches the closed-form value") {
    const Env env = Env::make("lqr");
    const LqrEnv* lqr = env.as_lqr();
    const auto sol = lqr_optimal_value(lqr->A(), lqr->B(), lqr->Q(), lqr->R(), 0.99);

    Rng eval_rng(99), value_rng(99);
    const auto [mean_ret, sd] = evaluate_with(
        [&](const Eigen::VectorXd& s) { return Eigen::VectorXd(-sol.gain * s); }, env,
        1000, eval_rng);
    (void)sd;

    double value_sum = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const Eigen::VectorXd s0 = env.reset(value_rng);
        value_sum += -s0.dot(sol.value * s0);
    }
    const double mean_value = value_sum / 1000.0;
    CHECK(std::abs(mean_ret - mean_value) <= 0.01 * std::abs(mean_value));
}

TEST_CASE("evaluate: zero-torque pendulum equals a replayed simulation") {
    const Env env = Env::make("pendulum");
    Rng eval_rng(5), replay_rng(5);
    const auto [ret, sd] = evaluate_with(
        [&](const Eigen::VectorXd&) { return Eigen::VectorXd::Zero(1); }, env, 1,
        eval_rng);
    CHECK(sd == 0.0);

    Eigen::VectorXd s = env.reset(replay_rng);
    double total = 0.0;
    for (int t = 0; t < env.spec().max_episode_steps; ++t) {
        const StepResult sr = env.step(s, Eigen::VectorXd::Zero(1));
        total += sr.r;
        s = sr.s_next;
    }
    CHECK(ret == total);
}

TEST_CASE("evaluate: same seed, same statistics") {
    const Env env = Env::make("pendulum");
    const GaussianPolicy p =
        make_policy(3, env.spec().action_low, env.spec().action_high, {16, 16},
                    Activation::relu, 31);
    Rng a(8), b(8);
    const auto ra = evaluate_policy(p, env, 5, a);
    const auto rb = evaluate_policy(p, env, 5, b);
    CHECK(ra.first == rb.first);
    CHECK(ra.second == rb.second);
}

TEST_CASE("run: every variant completes a tiny budget with exact step accounting") {
    for (Variant v : {Variant::meee, Variant::meee_v1, Variant::meee_v2, Variant::mbpo,
                      Variant::sac}) {
        ExperimentConfig cfg = tiny_config(v, "variant_" + to_string(v));
        const RunResult res = run_experiment(cfg);
        CHECK(res.total_env_steps == 2 * 25);
        CHECK(res.rows.size() == 2);
        CHECK(fs::exists(res.metrics_path));
        CHECK(fs::exists(res.summary_path));
        CHECK(fs::exists(res.policy_path));
        if (v == Variant::sac) {
            CHECK(res.ensemble_path.empty());
        } else {
            CHECK(fs::exists(res.ensemble_path));
        }
        const std::string csv = slurp(res.metrics_path);
        CHECK(csv.rfind("epoch,total_env_steps,eval_return_mean,eval_return_std,"
                        "mean_model_loss,mean_rollout_weight,mean_ensemble_variance,"
                        "wall_clock_seconds\n",
                        0) == 0);
        fs::remove_all(cfg.out_dir);
    }
}

TEST_CASE("run: metrics are bitwise reproducible apart from wall clock") {
    ExperimentConfig cfg = tiny_config(Variant::meee, "det_a");
    const RunResult r1 = run_experiment(cfg);
    const std::string csv1 = slurp(r1.metrics_path);
    fs::remove_all(cfg.out_dir);

    cfg.out_dir = (fs::temp_directory_path() / "meee_run_det_b").string();
    const RunResult r2 = run_experiment(cfg);
    const std::string csv2 = slurp(r2.metrics_path);
    fs::remove_all(cfg.out_dir);

    CHECK(strip_wall_clock(csv1) == strip_wall_clock(csv2));
}

TEST_CASE("run: without updates, weighted-exploitation acts exactly like the vanilla baseline") {
    // With gradient updates disabled the only difference between meee_v1 and
    // mbpo is the stored weights, so the real-transition streams must match.
    ExperimentConfig cfg = tiny_config(Variant::meee_v1, "v1_stream");
    cfg.gradient_updates_per_step = 0;
    cfg.debug_dump_buffers = true;
    const RunResult r1 = run_experiment(cfg);
    const std::string env_csv_v1 = slurp(fs::path(cfg.out_dir) / "env_buffer.csv");
    const std::string model_csv_v1 = slurp(fs::path(cfg.out_dir) / "model_buffer.csv");
    fs::remove_all(cfg.out_dir);

    cfg.variant = Variant::mbpo;
    cfg.out_dir = (fs::temp_directory_path() / "meee_run_mbpo_stream").string();
    const RunResult r2 = run_experiment(cfg);
    const std::string env_csv_mbpo = slurp(fs::path(cfg.out_dir) / "env_buffer.csv");
    const std::string model_csv_mbpo = slurp(fs::path(cfg.out_dir) / "model_buffer.csv");
    fs::remove_all(cfg.out_dir);

    CHECK(env_csv_v1 == env_csv_mbpo);
    CHECK(r1.total_env_steps == r2.total_env_steps);
    // and the imagined transitions agree except for the weight column
    CHECK(model_csv_v1 != model_csv_mbpo);
    CHECK(strip_wall_clock(model_csv_v1) == strip_wall_clock(model_csv_mbpo));
}

TEST_CASE("run: exploration-only variant stores unit weights everywhere") {
    ExperimentConfig cfg = tiny_config(Variant::meee_v2, "v2_weights");
    cfg.debug_dump_buffers = true;
    run_experiment(cfg);
    std::ifstream f(fs::path(cfg.out_dir) / "model_buffer.csv");
    std::string line;
    std::getline(f, line);  // header
    REQUIRE(line.rfind(",weight") != std::string::npos);
    int rows = 0;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        CHECK(line.substr(line.rfind(',') + 1) == "1");
        ++rows;
    }
    CHECK(rows > 0);
    fs::remove_all(cfg.out_dir);
}

TEST_CASE("run: sustained non-finite losses abort with a diagnostic") {
    ExperimentConfig cfg = tiny_config(Variant::sac, "diverge");
    cfg.steps_per_epoch = 40;
    cfg.gradient_updates_per_step = 5;
    cfg.batch_size = 4;
    cfg.lr_critic = 1e154;  // one huge step, then overflow everywhere
    CHECK_THROWS_WITH_AS(run_experiment(cfg), doctest::Contains("100 consecutive"),
                         std::runtime_error);
    fs::remove_all(cfg.out_dir);
}

TEST_CASE("run: invalid out_dir fails with a diagnostic") {
    ExperimentConfig cfg = tiny_config(Variant::sac, "unused");
    cfg.out_dir = "/proc/meee_not_writable/x";
    CHECK_THROWS_AS(run_experiment(cfg), std::runtime_error);
}

TEST_CASE("checkpoints: policy and ensemble round-trip") {
    const Env env = Env::make("pendulum");
    const GaussianPolicy p =
        make_policy(3, env.spec().action_low, env.spec().action_high, {16, 16},
                    Activation::relu, 61);
    const auto pp = fs::temp_directory_path() / "meee_policy.ckpt";
    save_policy(p, pp);
    const GaussianPolicy back = load_policy(pp);
    CHECK((flatten_params(back.trunk) - flatten_params(p.trunk)).cwiseAbs().maxCoeff() ==
          0.0);
    CHECK((back.action_low - p.action_low).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.action_high - p.action_high).cwiseAbs().maxCoeff() == 0.0);
    CHECK(back.trunk.hidden_activation == p.trunk.hidden_activation);
    fs::remove(pp);

    Ensemble e = make_ensemble(3, 1, 3, {16, 16}, Activation::relu, 62,
                               ModelLoss::nll, false);
    e.input_norm.mean.setConstant(0.25);
    e.target_std.setConstant(2.5);
    const auto ep = fs::temp_directory_path() / "meee_ens.ckpt";
    save_ensemble(e, ep);
    const Ensemble eb = load_ensemble(ep);
    CHECK(eb.size() == 3);
    CHECK(eb.loss_kind == ModelLoss::nll);
    CHECK_FALSE(eb.include_reward_in_variance);
    CHECK((eb.input_norm.mean - e.input_norm.mean).cwiseAbs().maxCoeff() == 0.0);
    CHECK((eb.target_std - e.target_std).cwiseAbs().maxCoeff() == 0.0);
    for (int m = 0; m < 3; ++m) {
        CHECK(eb.members[m].init_seed == e.members[m].init_seed);
        CHECK((flatten_params(eb.members[m].trunk) -
               flatten_params(e.members[m].trunk))
                  .cwiseAbs()
                  .maxCoeff() == 0.0);
    }
    fs::remove(ep);

    CHECK_THROWS_AS(load_policy(fs::temp_directory_path() / "missing.ckpt"),
                    std::runtime_error);
}
