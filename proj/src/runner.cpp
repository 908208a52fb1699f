#include "meee/runner.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <optional>

#include "meee/buffer.hpp"
#include "meee/check.hpp"
#include "meee/checkpoint.hpp"
#include "meee/dyn_model.hpp"
#include "meee/explore.hpp"
#include "meee/rollout.hpp"

namespace meee {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

Eigen::VectorXd bind_psi(const ExperimentConfig& cfg, int action_dim) {
    Eigen::VectorXd psi(action_dim);
    if (cfg.psi.size() == 1) {
        psi.setConstant(cfg.psi[0]);
    } else if (static_cast<int>(cfg.psi.size()) == action_dim) {
        for (int i = 0; i < action_dim; ++i) psi(i) = cfg.psi[i];
    } else {
        contract_error("psi: expected 1 or ", action_dim, " entries, got ",
                       cfg.psi.size());
    }
    return psi;
}

int horizon_for_epoch(const ExperimentConfig& cfg, int epoch) {
    if (cfg.rollout_horizon_final == 0 ||
        cfg.rollout_horizon_final == cfg.rollout_horizon || cfg.n_epochs == 1)
        return cfg.rollout_horizon;
    const double t = static_cast<double>(epoch - 1) / (cfg.n_epochs - 1);
    return static_cast<int>(std::lround(cfg.rollout_horizon +
                                        t * (cfg.rollout_horizon_final -
                                             cfg.rollout_horizon)));
}

Batch make_batch(const std::vector<Transition>& ts) {
    Batch b;
    const Eigen::Index n = static_cast<Eigen::Index>(ts.size());
    const Eigen::Index sd = ts.front().s.size();
    const Eigen::Index ad = ts.front().a.size();
    b.s.resize(sd, n);
    b.a.resize(ad, n);
    b.s_next.resize(sd, n);
    b.r.resize(n);
    b.done.resize(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        b.s.col(j) = ts[j].s;
        b.a.col(j) = ts[j].a;
        b.s_next.col(j) = ts[j].s_next;
        b.r(j) = ts[j].r;
        b.done(j) = ts[j].done ? 1.0 : 0.0;
    }
    return b;
}

struct WindowStats {
    double model_loss_sum = 0.0;
    long model_loss_count = 0;
    RolloutStats rollouts;

    void reset() { *this = WindowStats{}; }
    double mean_model_loss() const {
        return model_loss_count > 0 ? model_loss_sum / model_loss_count : kNan;
    }
    double mean_weight() const {
        return rollouts.stored > 0 ? rollouts.weight_sum / rollouts.stored : kNan;
    }
    double mean_variance() const {
        return rollouts.stored > 0 ? rollouts.variance_sum / rollouts.stored : kNan;
    }
};

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["env"] = cfg.env;
    j["variant"] = to_string(cfg.variant);
    j["seed"] = cfg.seed;
    j["n_epochs"] = cfg.n_epochs;
    j["steps_per_epoch"] = cfg.steps_per_epoch;
    j["model_rollouts_per_step"] = cfg.model_rollouts_per_step;
    j["rollout_horizon"] = cfg.rollout_horizon;
    j["rollout_horizon_final"] = cfg.rollout_horizon_final;
    j["gradient_updates_per_step"] = cfg.gradient_updates_per_step;
    j["ensemble_size"] = cfg.ensemble_size;
    j["candidates"] = cfg.candidates;
    j["include_base"] = cfg.include_base;
    j["lambda"] = cfg.lambda;
    j["psi"] = cfg.psi;
    j["weight_temperature"] = cfg.weight_temperature;
    j["gamma"] = cfg.gamma;
    j["alpha"] = cfg.alpha;
    j["auto_alpha"] = cfg.auto_alpha;
    j["polyak"] = cfg.polyak;
    j["lr_actor"] = cfg.lr_actor;
    j["lr_critic"] = cfg.lr_critic;
    j["lr_model"] = cfg.lr_model;
    j["batch_size"] = cfg.batch_size;
    j["model_batch_size"] = cfg.model_batch_size;
    j["env_buffer_capacity"] = cfg.env_buffer_capacity;
    j["model_buffer_capacity"] = cfg.model_buffer_capacity;
    j["model_train_epochs"] = cfg.model_train_epochs;
    j["real_data_fraction"] = cfg.real_data_fraction;
    j["eval_episodes"] = cfg.eval_episodes;
    j["eval_interval"] = cfg.eval_interval;
    j["hidden_size"] = cfg.hidden_size;
    j["activation"] = cfg.activation;
    j["model_loss"] = cfg.model_loss;
    j["variance_include_reward"] = cfg.variance_include_reward;
    j["single_critic"] = cfg.single_critic;
    j["threads"] = cfg.threads;
    j["debug_dump_buffers"] = cfg.debug_dump_buffers;
    j["out_dir"] = cfg.out_dir;
    return j;
}

}  // namespace

std::pair<double, double> evaluate_policy(const GaussianPolicy& policy, const Env& env,
                                          int episodes, Rng& rng) {
    return evaluate_with(
        [&policy](const Eigen::VectorXd& s) { return mean_action(policy, s); }, env,
        episodes, rng);
}

std::pair<double, double> evaluate_with(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& act, const Env& env,
    int episodes, Rng& rng) {
    if (episodes < 1) contract_error("evaluate_policy: episodes must be >= 1");
    std::vector<double> returns;
    returns.reserve(episodes);
    for (int e = 0; e < episodes; ++e) {
        Eigen::VectorXd s = env.reset(rng);
        double total = 0.0;
        for (int t = 0; t < env.spec().max_episode_steps; ++t) {
            const Eigen::VectorXd a = act(s);
            StepResult sr = env.step(s, a);
            total += sr.r;
            s = std::move(sr.s_next);
            if (sr.done) break;
        }
        returns.push_back(total);
    }
    const double mean =
        std::accumulate(returns.begin(), returns.end(), 0.0) / returns.size();
    double var = 0.0;
    for (double r : returns) var += (r - mean) * (r - mean);
    const double std_dev =
        returns.size() > 1 ? std::sqrt(var / (returns.size() - 1)) : 0.0;
    return {mean, std_dev};
}

void write_metrics(const std::vector<MetricsRow>& rows,
                   const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) runtime_fail("write_metrics: cannot open ", path.string());
    f << "epoch,total_env_steps,eval_return_mean,eval_return_std,mean_model_loss,"
         "mean_rollout_weight,mean_ensemble_variance,wall_clock_seconds\n";
    for (const auto& r : rows) {
        f << r.epoch << ',' << r.total_env_steps << ',' << fmt(r.eval_return_mean)
          << ',' << fmt(r.eval_return_std) << ',' << fmt(r.mean_model_loss) << ','
          << fmt(r.mean_rollout_weight) << ',' << fmt(r.mean_ensemble_variance)
          << ',' << fmt(r.wall_clock_seconds) << '\n';
    }
}

RunResult run_experiment(const ExperimentConfig& cfg) {
    validate_config(cfg);
    std::error_code ec;
    std::filesystem::create_directories(cfg.out_dir, ec);
    if (ec) runtime_fail("run_experiment: cannot create out_dir '", cfg.out_dir,
                         "': ", ec.message());
    {
        std::ofstream probe(std::filesystem::path(cfg.out_dir) / ".write_probe");
        if (!probe) runtime_fail("run_experiment: out_dir '", cfg.out_dir,
                                 "' is not writable");
    }
    std::filesystem::remove(std::filesystem::path(cfg.out_dir) / ".write_probe", ec);

    const auto t0 = std::chrono::steady_clock::now();
    const auto elapsed = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    };

    const Env env = Env::make(cfg.env);
    const EnvSpec& spec = env.spec();
    const Eigen::VectorXd psi = bind_psi(cfg, spec.action_dim);
    const Activation act =
        cfg.activation == "relu" ? Activation::relu : Activation::tanh;
    const std::vector<int> hidden = {cfg.hidden_size, cfg.hidden_size};
    const auto [reward_lo, reward_hi] = env.reward_bounds();

    const bool model_based = cfg.variant != Variant::sac;
    const bool explore_on =
        cfg.variant == Variant::meee || cfg.variant == Variant::meee_v2;
    const bool unit_weights =
        cfg.variant == Variant::mbpo || cfg.variant == Variant::meee_v2;

    Rng reset_rng(derive_seed(cfg.seed, "env-reset"));
    Rng act_rng(derive_seed(cfg.seed, "policy-act"));
    Rng explore_rng(derive_seed(cfg.seed, "explore"));
    Rng rollout_rng(derive_seed(cfg.seed, "rollout"));
    Rng agent_rng(derive_seed(cfg.seed, "agent"));
    Rng model_rng(derive_seed(cfg.seed, "model-train"));

    SacAgent agent(
        make_policy(spec.state_dim, spec.action_low, spec.action_high, hidden, act,
                    derive_seed(cfg.seed, "policy-init")),
        make_critics(spec.state_dim, spec.action_dim, hidden, act,
                     derive_seed(cfg.seed, "critic-init"), !cfg.single_critic,
                     cfg.polyak, cfg.alpha, cfg.gamma),
        cfg.lr_actor, cfg.lr_critic, cfg.auto_alpha);

    std::optional<Ensemble> ensemble;
    if (model_based) {
        ensemble = make_ensemble(spec.state_dim, spec.action_dim, cfg.ensemble_size,
                                 hidden, act, derive_seed(cfg.seed, "ensemble-init"),
                                 cfg.model_loss == "mse" ? ModelLoss::mse
                                                         : ModelLoss::nll,
                                 cfg.variance_include_reward);
    }

    EnvBuffer env_buf(cfg.env_buffer_capacity, spec.state_dim, spec.action_dim);
    ModelBuffer model_buf(cfg.model_buffer_capacity, spec.state_dim, spec.action_dim);
    const ExplorationParams xp{cfg.lambda, psi, cfg.candidates, cfg.include_base};

    std::vector<MetricsRow> rows;
    WindowStats window;
    long long total_steps = 0;
    long eval_count = 0;
    int bad_updates = 0;

    const auto evaluate_now = [&](int epoch) {
        Rng eval_rng(derive_seed(cfg.seed, "eval", static_cast<std::uint64_t>(eval_count++)));
        const auto [mean, sd] =
            evaluate_policy(agent.policy(), env, cfg.eval_episodes, eval_rng);
        MetricsRow row;
        row.epoch = epoch;
        row.total_env_steps = total_steps;
        row.eval_return_mean = mean;
        row.eval_return_std = sd;
        row.mean_model_loss = window.mean_model_loss();
        row.mean_rollout_weight = window.mean_weight();
        row.mean_ensemble_variance = window.mean_variance();
        row.wall_clock_seconds = elapsed();
        rows.push_back(row);
        window.reset();
    };

    Eigen::VectorXd state;
    int episode_steps = spec.max_episode_steps;  // forces a reset on the first step

    for (int epoch = 1; epoch <= cfg.n_epochs; ++epoch) {
        if (model_based &&
            env_buf.size() >= static_cast<std::size_t>(cfg.model_batch_size)) {
            const auto traces =
                train_ensemble(*ensemble, env_buf, cfg.model_train_epochs,
                               cfg.model_batch_size, model_rng, cfg.lr_model,
                               cfg.threads);
            for (const auto& trace : traces) {
                window.model_loss_sum += trace.back();
                window.model_loss_count += 1;
            }
        }
        const RolloutParams rollout_params{cfg.model_rollouts_per_step,
                                           horizon_for_epoch(cfg, epoch)};

        for (int step = 0; step < cfg.steps_per_epoch; ++step) {
            if (episode_steps >= spec.max_episode_steps) {
                state = env.reset(reset_rng);
                episode_steps = 0;
            }

            Eigen::VectorXd a;
            if (explore_on) {
                a = select_action(state, agent.policy(), agent.critics(), *ensemble,
                                  xp, explore_rng);
            } else {
                a = sample_action(agent.policy(), state, act_rng).action;
            }

            StepResult sr = env.step(state, a);
            if (sr.r < reward_lo - 1e-9 || sr.r > reward_hi + 1e-9)
                runtime_fail("run_experiment: reward ", sr.r,
                             " outside the precomputed bounds [", reward_lo, ", ",
                             reward_hi, "]");
            env_buf.push({state, a, sr.r, sr.s_next, sr.done});
            ++total_steps;
            ++episode_steps;
            state = sr.s_next;
            if (sr.done) episode_steps = spec.max_episode_steps;

            if (model_based) {
                generate_rollouts(*ensemble, agent.policy(), env_buf, model_buf, env,
                                  rollout_params, cfg.weight_temperature, rollout_rng,
                                  cfg.threads, unit_weights, &window.rollouts);
            }

            const std::size_t batch_n = static_cast<std::size_t>(cfg.batch_size);
            const bool can_update = model_based ? model_buf.size() >= batch_n
                                                : env_buf.size() >= batch_n;
            for (int g = 0; can_update && g < cfg.gradient_updates_per_step; ++g) {
                std::vector<Transition> trans;
                Eigen::VectorXd weights(cfg.batch_size);
                if (!model_based) {
                    trans = env_buf.sample_batch(batch_n, agent_rng);
                    weights.setOnes();
                } else {
                    const long n_real =
                        std::lround(cfg.real_data_fraction * cfg.batch_size);
                    const long n_model = cfg.batch_size - n_real;
                    trans.reserve(batch_n);
                    if (n_model > 0) {
                        const auto sampled = model_buf.sample_batch(n_model, agent_rng);
                        for (long j = 0; j < n_model; ++j) {
                            trans.push_back(sampled[j].transition);
                            weights(j) = sampled[j].weight;
                        }
                    }
                    if (n_real > 0) {
                        const auto sampled = env_buf.sample_batch(n_real, agent_rng);
                        for (long j = 0; j < n_real; ++j) {
                            trans.push_back(sampled[j]);
                            weights(n_model + j) = 1.0;
                        }
                    }
                }
                const SacUpdateStats st =
                    agent.update(make_batch(trans), weights, agent_rng);
                if (!st.applied) {
                    if (++bad_updates >= 100)
                        runtime_fail(
                            "run_experiment: non-finite agent loss for 100 "
                            "consecutive updates (divergence) at env step ",
                            total_steps);
                } else {
                    bad_updates = 0;
                }
            }

            if (total_steps % cfg.eval_interval == 0) evaluate_now(epoch);
        }
    }
    if (rows.empty() || rows.back().total_env_steps != total_steps)
        evaluate_now(cfg.n_epochs);

    RunResult res;
    res.rows = rows;
    res.final_eval_mean = rows.back().eval_return_mean;
    res.final_eval_std = rows.back().eval_return_std;
    res.total_env_steps = total_steps;

    const std::filesystem::path out(cfg.out_dir);
    res.metrics_path = out / "metrics.csv";
    res.summary_path = out / "summary.json";
    res.policy_path = out / "policy.ckpt";
    write_metrics(rows, res.metrics_path);
    save_policy(agent.policy(), res.policy_path);
    if (cfg.debug_dump_buffers) {
        env_buf.dump_csv(out / "env_buffer.csv");
        if (model_based) model_buf.dump_csv(out / "model_buffer.csv");
    }
    if (model_based) {
        res.ensemble_path = out / "ensemble.ckpt";
        save_ensemble(*ensemble, res.ensemble_path);
    }

    nlohmann::json summary;
    summary["config"] = config_to_json(cfg);
    summary["final"] = {{"eval_return_mean", res.final_eval_mean},
                        {"eval_return_std", res.final_eval_std},
                        {"total_env_steps", res.total_env_steps},
                        {"epochs", cfg.n_epochs},
                        {"wall_clock_seconds", elapsed()}};
    summary["paths"] = {{"metrics", res.metrics_path.string()},
                        {"policy", res.policy_path.string()},
                        {"ensemble", res.ensemble_path.string()}};
    std::ofstream sf(res.summary_path);
    if (!sf) runtime_fail("run_experiment: cannot write ", res.summary_path.string());
    sf << summary.dump(2) << '\n';

    return res;
}

}  // namespace meee
