#include "meee/rollout.hpp"

#include <cmath>
#include <future>
#include <vector>

#include "meee/check.hpp"

namespace meee {

namespace {

std::vector<WeightedTransition> run_one_rollout(const Ensemble& ensemble,
                                                const GaussianPolicy& policy,
                                                const EnvBuffer& env_buffer,
                                                const Env& env, int horizon,
                                                double weight_temperature,
                                                bool force_unit_weights,
                                                std::uint64_t seed,
                                                double& variance_sum) {
    Rng rng(seed);
    std::vector<WeightedTransition> out;
    out.reserve(horizon);

    Eigen::VectorXd s = env_buffer.sample_states(1, rng)[0];
    for (int i = 0; i < horizon; ++i) {
        const Eigen::VectorXd a = sample_action(policy, s, rng).action;
        const int member = static_cast<int>(rng.index(ensemble.members.size()));
        const double v_hat = ensemble_variance(ensemble, s, a);

        Eigen::VectorXd z(ensemble.target_dim());
        for (Eigen::Index d = 0; d < z.size(); ++d) z(d) = rng.normal();
        Eigen::VectorXd s_next;
        double r = 0.0;
        if (!try_predict_with_noise(ensemble, member, s, a, z, s_next, r))
            break;  // model diverged; drop the rest of this rollout

        WeightedTransition wt;
        wt.transition.s = s;
        wt.transition.a = a;
        wt.transition.r = r;
        wt.transition.s_next = s_next;
        wt.transition.done = termination_predicate(env, s_next);
        wt.weight =
            force_unit_weights ? 1.0 : uncertainty_weight(v_hat, weight_temperature);
        variance_sum += v_hat;
        out.push_back(std::move(wt));

        if (out.back().transition.done) break;
        s = s_next;
    }
    return out;
}

}  // namespace

std::size_t generate_rollouts(const Ensemble& ensemble, const GaussianPolicy& policy,
                              const EnvBuffer& env_buffer, ModelBuffer& model_buffer,
                              const Env& env, const RolloutParams& params,
                              double weight_temperature, Rng& rng, int threads,
                              bool force_unit_weights, RolloutStats* stats) {
    if (params.rollouts < 1 || params.horizon < 1)
        contract_error("generate_rollouts: rollouts and horizon must be >= 1");
    if (env_buffer.size() == 0)
        contract_error("generate_rollouts: environment buffer is empty");

    std::vector<std::uint64_t> seeds(params.rollouts);
    for (auto& s : seeds) s = rng.next_seed();

    std::vector<std::vector<WeightedTransition>> staged(params.rollouts);
    std::vector<double> variance_sums(params.rollouts, 0.0);

    const auto work = [&](int r) {
        staged[r] = run_one_rollout(ensemble, policy, env_buffer, env, params.horizon,
                                    weight_temperature, force_unit_weights, seeds[r],
                                    variance_sums[r]);
    };

    if (threads <= 1) {
        for (int r = 0; r < params.rollouts; ++r) work(r);
    } else {
        const int workers = std::min(threads, params.rollouts);
        std::vector<std::future<void>> futures;
        for (int w = 0; w < workers; ++w) {
            futures.push_back(std::async(std::launch::async, [&, w] {
                for (int r = w; r < params.rollouts; r += workers) work(r);
            }));
        }
        for (auto& f : futures) f.get();
    }

    std::size_t stored = 0;
    for (int r = 0; r < params.rollouts; ++r) {
        for (const auto& wt : staged[r]) {
            model_buffer.push(wt);
            ++stored;
            if (stats) stats->weight_sum += wt.weight;
        }
        if (stats) stats->variance_sum += variance_sums[r];
    }
    if (stats) stats->stored += stored;
    return stored;
}

}  // namespace meee
