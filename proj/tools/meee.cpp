#include <CLI11.hpp>
#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include "meee/checkpoint.hpp"
#include "meee/config.hpp"
#include "meee/runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Model-ensemble exploration/exploitation experiments"};
    app.require_subcommand(1);

    // run --config <path> [--seed S] [--variant V] [--env E] [--out DIR]
    auto* run = app.add_subcommand("run", "Run an experiment from a config file");
    std::string config_path;
    run->add_option("--config", config_path, "Config file (key = value lines)")
        ->required();
    std::string seed_override, variant_override, env_override, out_override;
    run->add_option("--seed", seed_override, "Override the config seed");
    run->add_option("--variant", variant_override,
                    "Override the variant (meee, meee_v1, meee_v2, mbpo, sac)");
    run->add_option("--env", env_override, "Override the environment (lqr, pendulum)");
    run->add_option("--out", out_override, "Override the output directory");

    // eval --checkpoint <path> --env E --episodes N [--seed S]
    auto* eval = app.add_subcommand("eval", "Evaluate a policy checkpoint");
    std::string ckpt_path, eval_env = "lqr";
    int episodes = 10;
    std::uint64_t eval_seed = 0;
    eval->add_option("--checkpoint", ckpt_path, "Policy checkpoint")->required();
    eval->add_option("--env", eval_env, "Environment name (lqr, pendulum)");
    eval->add_option("--episodes", episodes, "Number of evaluation episodes");
    eval->add_option("--seed", eval_seed, "Evaluation seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            meee::ExperimentConfig cfg = meee::load_config(config_path);
            if (!seed_override.empty()) cfg.seed = std::stoull(seed_override);
            if (!variant_override.empty())
                cfg.variant = meee::variant_from_string(variant_override);
            if (!env_override.empty()) {
                cfg.env = env_override;
                // re-resolve budgets the previous environment filled in
                meee::ExperimentConfig fresh = meee::load_config(config_path);
                if (fresh.env != cfg.env) {
                    cfg.n_epochs = 0;
                    cfg.steps_per_epoch = 0;
                    cfg.rollout_horizon = 0;
                    cfg.eval_interval = 0;
                    cfg.env_buffer_capacity = 0;
                    cfg.model_buffer_capacity = 0;
                    meee::apply_auto_defaults(cfg);
                }
            }
            if (!out_override.empty()) cfg.out_dir = out_override;
            meee::validate_config(cfg);

            const meee::RunResult res = meee::run_experiment(cfg);
            std::printf("variant=%s env=%s seed=%llu steps=%lld final_return=%.6g +- %.6g\n",
                        meee::to_string(cfg.variant).c_str(), cfg.env.c_str(),
                        static_cast<unsigned long long>(cfg.seed),
                        res.total_env_steps, res.final_eval_mean, res.final_eval_std);
            std::printf("metrics: %s\n", res.metrics_path.string().c_str());
            std::printf("summary: %s\n", res.summary_path.string().c_str());
        } else if (eval->parsed()) {
            const meee::GaussianPolicy policy = meee::load_policy(ckpt_path);
            const meee::Env env = meee::Env::make(eval_env);
            meee::Rng rng(meee::derive_seed(eval_seed, "eval"));
            const auto [mean, sd] = meee::evaluate_policy(policy, env, episodes, rng);
            std::printf("episodes=%d return=%.6g +- %.6g\n", episodes, mean, sd);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
