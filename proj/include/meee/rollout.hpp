#pragma once

#include <cstddef>

#include "meee/buffer.hpp"
#include "meee/dyn_model.hpp"
#include "meee/env.hpp"
#include "meee/rng.hpp"
#include "meee/sac.hpp"

namespace meee {

struct RolloutParams {
    int rollouts = 10;  // rollouts per real step, >= 1
    int horizon = 1;    // imagined steps per rollout, >= 1
};

struct RolloutStats {
    std::size_t stored = 0;
    double weight_sum = 0.0;
    double variance_sum = 0.0;
};

// Runs `rollouts` imagined trajectories of up to `horizon` steps. Each
// rollout starts from a state sampled out of env_buffer, acts with the plain
// policy, steps a uniformly drawn ensemble member, and stores every
// transition with its confidence weight into model_buffer. A rollout
// truncates early when the termination predicate fires or the model emits a
// non-finite value. Per-rollout generator streams are derived up front, so
// running with threads > 1 stores exactly the sequence the sequential order
// would. Returns the number of transitions stored (<= rollouts * horizon).
std::size_t generate_rollouts(const Ensemble& ensemble, const GaussianPolicy& policy,
                              const EnvBuffer& env_buffer, ModelBuffer& model_buffer,
                              const Env& env, const RolloutParams& params,
                              double weight_temperature, Rng& rng, int threads = 1,
                              bool force_unit_weights = false,
                              RolloutStats* stats = nullptr);

}  // namespace meee
