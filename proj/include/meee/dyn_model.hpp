#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <utility>
#include <vector>

#include "meee/buffer.hpp"
#include "meee/nn.hpp"
#include "meee/rng.hpp"

namespace meee {

enum class ModelLoss { mse, nll };

/// Per-member predicted mean and diagonal variance over (next-state delta, reward).
struct GaussianPrediction {
    Eigen::VectorXd mean;
    Eigen::VectorXd variance;
};

// Input/target normalization tracked from the environment buffer.
struct Normalizer {
    Eigen::VectorXd mean;
    Eigen::VectorXd std;

    Eigen::VectorXd apply(const Eigen::VectorXd& x) const {
        return (x - mean).cwiseQuotient(std);
    }
    Eigen::MatrixXd apply_batch(const Eigen::MatrixXd& x) const {
        return ((x.colwise() - mean).array().colwise() / std.array()).matrix();
    }
};

// One Gaussian-output dynamics model: trunk maps the normalized (state,
// action) pair to [mean; log-variance] over (state delta, reward). The
// log-variance head is clamped to [-10, 4] before exponentiation.
struct ProbabilisticModel {
    DenseNet trunk;
    AdamState adam;
    std::uint64_t init_seed = 0;
};

struct Ensemble {
    std::vector<ProbabilisticModel> members;
    Normalizer input_norm;
    Eigen::VectorXd target_mean;  // per (delta, reward) dimension
    Eigen::VectorXd target_std;   // members train and predict in standardized
                                  // target units; the API stays in raw units
    int state_dim = 0;
    int action_dim = 0;
    ModelLoss loss_kind = ModelLoss::mse;
    bool include_reward_in_variance = true;

    int size() const { return static_cast<int>(members.size()); }
    int target_dim() const { return state_dim + 1; }
    int input_dim() const { return state_dim + action_dim; }
};

// Members get pairwise distinct init seeds derived from seed_base. At least
// two members are required.
Ensemble make_ensemble(int state_dim, int action_dim, int n_members,
                       const std::vector<int>& hidden_sizes, Activation activation,
                       std::uint64_t seed_base, ModelLoss loss,
                       bool include_reward_in_variance);

// Recomputes input mean/std and per-dimension target std from the current
// buffer contents (stds floored at 1e-8).
void set_normalization_from(Ensemble& ensemble, const EnvBuffer& buffer);

GaussianPrediction predict_dist(const Ensemble& ensemble, int member,
                                const Eigen::VectorXd& s, const Eigen::VectorXd& a);

// Deterministic mean head: (state delta, reward).
Eigen::VectorXd predict_mean(const Ensemble& ensemble, int member,
                             const Eigen::VectorXd& s, const Eigen::VectorXd& a);

// Reparametrized sample (s_next, r) = mean + sigma .* z with fresh z; s_next
// includes the current-state offset. Throws on non-finite output.
std::pair<Eigen::VectorXd, double> predict(const Ensemble& ensemble, int member,
                                           const Eigen::VectorXd& s,
                                           const Eigen::VectorXd& a, Rng& rng);

std::pair<Eigen::VectorXd, double> predict_with_noise(const Ensemble& ensemble,
                                                      int member,
                                                      const Eigen::VectorXd& s,
                                                      const Eigen::VectorXd& a,
                                                      const Eigen::VectorXd& z);

// Non-throwing variant for rollout truncation; returns false on non-finite output.
bool try_predict_with_noise(const Ensemble& ensemble, int member,
                            const Eigen::VectorXd& s, const Eigen::VectorXd& a,
                            const Eigen::VectorXd& z, Eigen::VectorXd& s_next,
                            double& r);

// Unbiased (I-1 denominator) per-dimension sample variance of member means,
// each dimension divided by scale_std^2, averaged into one scalar.
double variance_of_means(const std::vector<Eigen::VectorXd>& means,
                         const Eigen::VectorXd& scale_std);

// Ensemble disagreement at (s, a); always >= 0.
double ensemble_variance(const Ensemble& ensemble, const Eigen::VectorXd& s,
                         const Eigen::VectorXd& a);

// sigmoid(-v_hat * temperature) + 0.5, in [0.5, 1.0], strictly decreasing,
// exactly 1 at v_hat = 0.
double uncertainty_weight(double v_hat, double temperature);

struct ModelLossResult {
    double loss = 0.0;
    NetGrads grads;
};

// Training loss and gradients for one member on a prepared batch. raw_inputs
// columns are (s, a) pairs pre-normalization, targets are (delta, reward),
// z holds the reparametrization draws (ignored for nll).
ModelLossResult model_training_loss(const Ensemble& ensemble, int member,
                                    const Eigen::MatrixXd& raw_inputs,
                                    const Eigen::MatrixXd& targets,
                                    const Eigen::MatrixXd& z, ModelLoss kind);

// Trains every member independently on shuffled minibatch passes over the
// buffer; returns one loss trace (mean batch loss per epoch) per member.
// threads > 1 trains members concurrently with results identical to the
// sequential order.
std::vector<std::vector<double>> train_ensemble(Ensemble& ensemble,
                                                const EnvBuffer& buffer, int epochs,
                                                int batch_size, Rng& rng,
                                                double learning_rate = 1e-3,
                                                int threads = 1);

}  // namespace meee
