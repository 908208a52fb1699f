#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "meee/nn.hpp"
#include "meee/rng.hpp"

namespace meee {

// Tanh-squashed Gaussian policy. The trunk maps a state to (mean, log-std)
// per action dimension; log-std is clamped to [-20, 2] and samples are
// rescaled into the action box, so sampled actions lie strictly inside it.
struct GaussianPolicy {
    DenseNet trunk;
    Eigen::VectorXd action_low;
    Eigen::VectorXd action_high;

    int state_dim() const { return trunk.in_dim(); }
    int action_dim() const { return static_cast<int>(action_low.size()); }
    Eigen::VectorXd center() const { return 0.5 * (action_high + action_low); }
    Eigen::VectorXd half_width() const { return 0.5 * (action_high - action_low); }
};

GaussianPolicy make_policy(int state_dim, const Eigen::VectorXd& action_low,
                           const Eigen::VectorXd& action_high,
                           const std::vector<int>& hidden_sizes,
                           Activation activation, std::uint64_t seed);

struct PolicySample {
    Eigen::VectorXd action;
    double log_prob = 0.0;  // exact density of the squashed, rescaled Gaussian
};

PolicySample sample_action(const GaussianPolicy& policy, const Eigen::VectorXd& state,
                           Rng& rng);

// z is the pre-squash standard normal draw; z = 0 gives the distribution mode.
PolicySample sample_action_with_noise(const GaussianPolicy& policy,
                                      const Eigen::VectorXd& state,
                                      const Eigen::VectorXd& z);

Eigen::VectorXd mean_action(const GaussianPolicy& policy, const Eigen::VectorXd& state);

// Twin critics with delayed target copies. single-critic mode (twin = false)
// drops q2 everywhere the minimum is taken.
struct CriticPair {
    DenseNet q1, q2;
    DenseNet q1_target, q2_target;
    bool twin = true;
    double polyak = 0.995;
    double alpha = 0.2;
    double gamma = 0.99;
};

CriticPair make_critics(int state_dim, int action_dim,
                        const std::vector<int>& hidden_sizes, Activation activation,
                        std::uint64_t seed, bool twin, double polyak, double alpha,
                        double gamma);

double q_value(const DenseNet& q, const Eigen::VectorXd& s, const Eigen::VectorXd& a);
double q_min_online(const CriticPair& critics, const Eigen::VectorXd& s,
                    const Eigen::VectorXd& a);

// Column-per-sample transition batch.
struct Batch {
    Eigen::MatrixXd s, a, s_next;
    Eigen::VectorXd r;
    Eigen::VectorXd done;  // 0 or 1

    Eigen::Index size() const { return s.cols(); }
};

// Bootstrap regression targets: r + gamma (min target Q(s', a') - alpha log
// pi(a'|s')) with a' freshly sampled, and exactly r where done = 1. No
// gradients flow through these.
Eigen::VectorXd td_target(const Batch& batch, const CriticPair& critics,
                          const GaussianPolicy& policy, Rng& rng);
Eigen::VectorXd td_target_with_noise(const Batch& batch, const CriticPair& critics,
                                     const GaussianPolicy& policy,
                                     const Eigen::MatrixXd& z);

struct CriticLossResult {
    double loss = 0.0;
    NetGrads q1_grads, q2_grads;
};

// Per-sample weighted Bellman residual:
//   (1/B) sum_j w_j [(q1(s,a) - y)^2 + (q2(s,a) - y)^2]
// Weights must lie in (0, 1].
CriticLossResult critic_loss(const Batch& batch, const Eigen::VectorXd& weights,
                             const CriticPair& critics, const GaussianPolicy& policy,
                             Rng& rng);
CriticLossResult critic_loss_given_targets(const Batch& batch,
                                           const Eigen::VectorXd& weights,
                                           const CriticPair& critics,
                                           const Eigen::VectorXd& targets);

struct ActorLossResult {
    double loss = 0.0;
    NetGrads policy_grads;
    double mean_log_prob = 0.0;
};

// (1/B) sum_j w_j (alpha log pi(a_j|s_j) - min Q(s_j, a_j)) with a_j
// reparametrized; gradients flow through the action into the critic inputs
// but never into critic parameters.
ActorLossResult actor_loss(const Eigen::MatrixXd& states, const Eigen::VectorXd& weights,
                           const CriticPair& critics, const GaussianPolicy& policy,
                           Rng& rng);
ActorLossResult actor_loss_with_noise(const Eigen::MatrixXd& states,
                                      const Eigen::VectorXd& weights,
                                      const CriticPair& critics,
                                      const GaussianPolicy& policy,
                                      const Eigen::MatrixXd& z);

// target <- polyak * target + (1 - polyak) * online, elementwise.
void update_targets(CriticPair& critics);

struct SacUpdateStats {
    double critic_loss = 0.0;
    double actor_loss = 0.0;
    double alpha = 0.0;
    bool applied = false;  // false when a non-finite loss/gradient was skipped
};

// Owns the optimizers and the update sequence: one critic step on both
// critics, one actor step, one target update, in that order.
class SacAgent {
  public:
    SacAgent(GaussianPolicy policy, CriticPair critics, double lr_actor,
             double lr_critic, bool auto_alpha);

    SacUpdateStats update(const Batch& batch, const Eigen::VectorXd& weights, Rng& rng);

    GaussianPolicy& policy() { return policy_; }
    const GaussianPolicy& policy() const { return policy_; }
    CriticPair& critics() { return critics_; }
    const CriticPair& critics() const { return critics_; }

  private:
    GaussianPolicy policy_;
    CriticPair critics_;
    AdamState policy_adam_, q1_adam_, q2_adam_;
    double lr_actor_, lr_critic_;

    bool auto_alpha_;
    double log_alpha_ = 0.0;
    double target_entropy_ = 0.0;
    double alpha_m_ = 0.0, alpha_v_ = 0.0;
    long alpha_steps_ = 0;
};

}  // namespace meee
