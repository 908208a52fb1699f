#include "meee/explore.hpp"

#include <cmath>
#include <vector>

#include "meee/check.hpp"

namespace meee {

Eigen::VectorXd augment_action(const Eigen::VectorXd& a, const Eigen::VectorXd& psi,
                               Rng& rng, const Eigen::VectorXd& action_low,
                               const Eigen::VectorXd& action_high) {
    Eigen::VectorXd z(a.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
    return augment_action_with_noise(a, psi, z, action_low, action_high);
}

Eigen::VectorXd augment_action_with_noise(const Eigen::VectorXd& a,
                                          const Eigen::VectorXd& psi,
                                          const Eigen::VectorXd& z,
                                          const Eigen::VectorXd& action_low,
                                          const Eigen::VectorXd& action_high) {
    if (psi.size() != a.size())
        contract_error("augment_action: psi size ", psi.size(), " != action size ",
                       a.size());
    if (z.size() != a.size())
        contract_error("augment_action: noise size ", z.size(), " != action size ",
                       a.size());
    for (Eigen::Index i = 0; i < psi.size(); ++i)
        if (!(psi(i) > 0.0))
            contract_error("augment_action: psi[", i, "] = ", psi(i),
                           " must be positive");
    Eigen::VectorXd out(a.size());
    for (Eigen::Index i = 0; i < a.size(); ++i)
        out(i) = std::clamp(a(i) + std::sqrt(psi(i)) * z(i), action_low(i),
                            action_high(i));
    return out;
}

Eigen::VectorXd select_action(const Eigen::VectorXd& state, const GaussianPolicy& policy,
                              const CriticPair& critics, const Ensemble& ensemble,
                              const ExplorationParams& params, Rng& rng) {
    if (params.lambda < 0.0)
        contract_error("select_action: lambda must be >= 0, got ", params.lambda);
    if (params.candidates < 0)
        contract_error("select_action: candidate count must be >= 0, got ",
                       params.candidates);
    if (params.candidates == 0 && !params.include_base)
        contract_error("select_action: empty candidate set (candidates = 0 and "
                       "include_base = false)");

    const Eigen::VectorXd base = sample_action(policy, state, rng).action;
    std::vector<Eigen::VectorXd> candidates;
    candidates.reserve(static_cast<std::size_t>(params.candidates) + 1);
    if (params.include_base) candidates.push_back(base);
    for (int i = 0; i < params.candidates; ++i)
        candidates.push_back(augment_action(base, params.psi, rng, policy.action_low,
                                            policy.action_high));

    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        double score = q_min_online(critics, state, candidates[i]);
        if (params.lambda > 0.0)
            score += params.lambda * ensemble_variance(ensemble, state, candidates[i]);
        if (score > best_score) {
            best_score = score;
            best = i;
        }
    }
    return candidates[best];
}

}  // namespace meee
