#pragma once

#include <Eigen/Dense>

#include "meee/dyn_model.hpp"
#include "meee/rng.hpp"
#include "meee/sac.hpp"

namespace meee {

struct ExplorationParams {
    double lambda = 1.0;        // bonus weight, >= 0
    Eigen::VectorXd psi;        // diagonal covariance of the action disturbance, > 0
    int candidates = 8;         // augmented candidates per decision, >= 0
    bool include_base = true;   // keep the unperturbed policy action in the set
};

// clip(a + z, box) with z ~ N(0, diag(psi)).
Eigen::VectorXd augment_action(const Eigen::VectorXd& a, const Eigen::VectorXd& psi,
                               Rng& rng, const Eigen::VectorXd& action_low,
                               const Eigen::VectorXd& action_high);

// z is the standard normal draw; the disturbance is sqrt(psi) .* z.
Eigen::VectorXd augment_action_with_noise(const Eigen::VectorXd& a,
                                          const Eigen::VectorXd& psi,
                                          const Eigen::VectorXd& z,
                                          const Eigen::VectorXd& action_low,
                                          const Eigen::VectorXd& action_high);

// Builds the candidate set from one policy draw plus Gaussian augmentations
// and returns the candidate maximizing min Q(s, a) + lambda * V(s, a).
// Ties break toward the lowest candidate index.
Eigen::VectorXd select_action(const Eigen::VectorXd& state, const GaussianPolicy& policy,
                              const CriticPair& critics, const Ensemble& ensemble,
                              const ExplorationParams& params, Rng& rng);

}  // namespace meee
