#pragma once

#include <filesystem>
#include <functional>
#include <utility>
#include <vector>

#include "meee/config.hpp"
#include "meee/env.hpp"
#include "meee/rng.hpp"
#include "meee/sac.hpp"

namespace meee {

struct MetricsRow {
    int epoch = 0;
    long long total_env_steps = 0;
    double eval_return_mean = 0.0;
    double eval_return_std = 0.0;
    double mean_model_loss = 0.0;        // nan until the ensemble has trained
    double mean_rollout_weight = 0.0;    // nan when no rollouts ran in the window
    double mean_ensemble_variance = 0.0;
    double wall_clock_seconds = 0.0;
};

struct RunResult {
    std::vector<MetricsRow> rows;
    double final_eval_mean = 0.0;
    double final_eval_std = 0.0;
    long long total_env_steps = 0;
    std::filesystem::path metrics_path;
    std::filesystem::path summary_path;
    std::filesystem::path policy_path;
    std::filesystem::path ensemble_path;  // empty for the model-free variant
};

// Full episodes with the deterministic policy mode (zero pre-squash noise);
// returns the mean and sample standard deviation of undiscounted returns.
std::pair<double, double> evaluate_policy(const GaussianPolicy& policy, const Env& env,
                                          int episodes, Rng& rng);

// Same episode machinery for an arbitrary deterministic controller.
std::pair<double, double> evaluate_with(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& act, const Env& env,
    int episodes, Rng& rng);

void write_metrics(const std::vector<MetricsRow>& rows,
                   const std::filesystem::path& path);

// Runs the configured experiment end to end and writes metrics.csv,
// summary.json and checkpoints into cfg.out_dir. Deterministic given the
// seed (the wall_clock_seconds column aside).
RunResult run_experiment(const ExperimentConfig& cfg);

}  // namespace meee
