#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace meee {

enum class Variant { meee, meee_v1, meee_v2, mbpo, sac };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

// Every knob of a run. Fields documented as "0 = auto" are resolved to
// per-environment defaults at load time, so a loaded config is always fully
// concrete.
struct ExperimentConfig {
    std::string env = "lqr";
    Variant variant = Variant::meee;
    std::uint64_t seed = 0;

    int n_epochs = 0;                // 0 = auto: 30 (lqr) / 50 (pendulum)
    int steps_per_epoch = 0;         // 0 = auto: 200 (lqr) / 400 (pendulum)
    int model_rollouts_per_step = 10;
    int rollout_horizon = 0;         // 0 = auto: 1 (lqr) / 5 (pendulum)
    int rollout_horizon_final = 0;   // 0 = fixed; otherwise linear ramp per epoch
    int gradient_updates_per_step = 10;
    int ensemble_size = 5;

    int candidates = 8;
    bool include_base = true;
    double lambda = 1.0;
    std::vector<double> psi = {1.0};  // broadcast over action dims when length 1
    double weight_temperature = 20.0;

    double gamma = 0.99;
    double alpha = 0.2;
    bool auto_alpha = false;
    double polyak = 0.995;
    double lr_actor = 3e-4;
    double lr_critic = 3e-4;
    double lr_model = 1e-3;
    int batch_size = 64;
    int model_batch_size = 256;

    std::uint64_t env_buffer_capacity = 0;    // 0 = auto: n_epochs * steps_per_epoch
    std::uint64_t model_buffer_capacity = 0;  // 0 = auto: M * k * steps_per_epoch
    int model_train_epochs = 5;
    double real_data_fraction = 0.0;

    int eval_episodes = 10;
    int eval_interval = 0;  // 0 = auto: steps_per_epoch

    int hidden_size = 64;
    std::string activation = "relu";   // relu | tanh
    std::string model_loss = "mse";    // mse | nll
    bool variance_include_reward = true;
    bool single_critic = false;
    int threads = 1;
    bool debug_dump_buffers = false;  // write buffer CSVs into out_dir at run end
    std::string out_dir = "out";

    bool operator==(const ExperimentConfig&) const = default;
};

// Fully resolved defaults for one of the built-in environments.
ExperimentConfig default_config(const std::string& env_name);

// Resolves the "0 = auto" fields in place.
void apply_auto_defaults(ExperimentConfig& cfg);

// Throws naming the offending field when a value is out of range.
void validate_config(const ExperimentConfig& cfg);

// Flat "key = value" file; '#' starts a comment. Unknown or duplicate keys
// are rejected with the line number and key name. The result is resolved and
// validated.
ExperimentConfig load_config(const std::filesystem::path& path);

// Writes every key; load_config(save_config(cfg)) round-trips exactly.
void save_config(const ExperimentConfig& cfg, const std::filesystem::path& path);

}  // namespace meee
