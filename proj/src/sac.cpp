#include "meee/sac.hpp"

#include <cmath>

#include "meee/check.hpp"

namespace meee {

namespace {

constexpr double kLogStdMin = -20.0;
constexpr double kLogStdMax = 2.0;
constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2*pi)

double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// log(1 - tanh(u)^2), stable for large |u|.
double log_one_minus_tanh_sq(double u) {
    constexpr double kLog2 = 0.69314718055994530942;
    return 2.0 * (kLog2 - u - softplus(-2.0 * u));
}

void check_weights(const Eigen::VectorXd& w, Eigen::Index batch, const char* who) {
    if (w.size() != batch)
        contract_error(who, ": weights size ", w.size(), " != batch size ", batch);
    for (Eigen::Index j = 0; j < batch; ++j) {
        if (!std::isfinite(w(j)) || w(j) <= 0.0 || w(j) > 1.0)
            contract_error(who, ": weight[", j, "] = ", w(j), " outside (0, 1]");
    }
}

Eigen::MatrixXd stack_state_action(const Eigen::MatrixXd& s, const Eigen::MatrixXd& a) {
    Eigen::MatrixXd x(s.rows() + a.rows(), s.cols());
    x << s, a;
    return x;
}

// Draws an (dim x batch) standard normal matrix column by column.
Eigen::MatrixXd draw_noise(Eigen::Index dim, Eigen::Index batch, Rng& rng) {
    Eigen::MatrixXd z(dim, batch);
    for (Eigen::Index j = 0; j < batch; ++j)
        for (Eigen::Index d = 0; d < dim; ++d) z(d, j) = rng.normal();
    return z;
}

struct PolicyHeads {
    Eigen::ArrayXXd mu;          // action_dim x B
    Eigen::ArrayXXd log_std;     // clamped
    Eigen::ArrayXXd clamp_mask;  // 1 where the clamp is inactive
    Eigen::ArrayXXd sigma;
};

PolicyHeads split_policy_out(const Eigen::MatrixXd& out, int action_dim) {
    PolicyHeads h;
    h.mu = out.topRows(action_dim).array();
    const Eigen::ArrayXXd raw = out.bottomRows(action_dim).array();
    h.log_std = raw.max(kLogStdMin).min(kLogStdMax);
    h.clamp_mask = ((raw > kLogStdMin) && (raw < kLogStdMax)).cast<double>();
    h.sigma = h.log_std.exp();
    return h;
}

}  // namespace

GaussianPolicy make_policy(int state_dim, const Eigen::VectorXd& action_low,
                           const Eigen::VectorXd& action_high,
                           const std::vector<int>& hidden_sizes,
                           Activation activation, std::uint64_t seed) {
    if (action_low.size() != action_high.size() || action_low.size() == 0)
        contract_error("make_policy: inconsistent action bounds");
    for (Eigen::Index i = 0; i < action_low.size(); ++i)
        if (!(action_low(i) < action_high(i)))
            contract_error("make_policy: action_low[", i, "] = ", action_low(i),
                           " must be < action_high[", i, "] = ", action_high(i));
    std::vector<int> sizes;
    sizes.push_back(state_dim);
    sizes.insert(sizes.end(), hidden_sizes.begin(), hidden_sizes.end());
    sizes.push_back(2 * static_cast<int>(action_low.size()));
    GaussianPolicy p;
    p.trunk = make_dense_net(sizes, activation, seed);
    p.action_low = action_low;
    p.action_high = action_high;
    return p;
}

PolicySample sample_action(const GaussianPolicy& policy, const Eigen::VectorXd& state,
                           Rng& rng) {
    Eigen::VectorXd z(policy.action_dim());
    for (Eigen::Index d = 0; d < z.size(); ++d) z(d) = rng.normal();
    return sample_action_with_noise(policy, state, z);
}

PolicySample sample_action_with_noise(const GaussianPolicy& policy,
                                      const Eigen::VectorXd& state,
                                      const Eigen::VectorXd& z) {
    if (z.size() != policy.action_dim())
        contract_error("sample_action: noise size ", z.size(), " != action_dim ",
                       policy.action_dim());
    const Eigen::VectorXd out = net_forward(policy.trunk, state);
    const int m = policy.action_dim();
    const Eigen::VectorXd c = policy.center();
    const Eigen::VectorXd h = policy.half_width();

    PolicySample res;
    res.action.resize(m);
    res.log_prob = 0.0;
    for (int d = 0; d < m; ++d) {
        const double log_std = std::clamp(out(m + d), kLogStdMin, kLogStdMax);
        const double sigma = std::exp(log_std);
        const double u = out(d) + sigma * z(d);
        const double t = std::tanh(u);
        res.action(d) = c(d) + h(d) * t;
        res.log_prob += -0.5 * z(d) * z(d) - log_std - kHalfLog2Pi - std::log(h(d)) -
                        log_one_minus_tanh_sq(u);
    }
    return res;
}

Eigen::VectorXd mean_action(const GaussianPolicy& policy, const Eigen::VectorXd& state) {
    const Eigen::VectorXd out = net_forward(policy.trunk, state);
    const int m = policy.action_dim();
    return policy.center().array() +
           policy.half_width().array() * out.head(m).array().tanh();
}

CriticPair make_critics(int state_dim, int action_dim,
                        const std::vector<int>& hidden_sizes, Activation activation,
                        std::uint64_t seed, bool twin, double polyak, double alpha,
                        double gamma) {
    if (polyak < 0.0 || polyak > 1.0)
        contract_error("make_critics: polyak must lie in [0, 1], got ", polyak);
    if (alpha < 0.0) contract_error("make_critics: alpha must be >= 0, got ", alpha);
    if (gamma < 0.0 || gamma >= 1.0)
        contract_error("make_critics: gamma must lie in [0, 1), got ", gamma);
    std::vector<int> sizes;
    sizes.push_back(state_dim + action_dim);
    sizes.insert(sizes.end(), hidden_sizes.begin(), hidden_sizes.end());
    sizes.push_back(1);
    CriticPair c;
    c.q1 = make_dense_net(sizes, activation, derive_seed(seed, "q1"));
    c.q2 = make_dense_net(sizes, activation, derive_seed(seed, "q2"));
    c.q1_target = c.q1;
    c.q2_target = c.q2;
    c.twin = twin;
    c.polyak = polyak;
    c.alpha = alpha;
    c.gamma = gamma;
    return c;
}

double q_value(const DenseNet& q, const Eigen::VectorXd& s, const Eigen::VectorXd& a) {
    Eigen::VectorXd x(s.size() + a.size());
    x << s, a;
    return net_forward(q, x)(0);
}

double q_min_online(const CriticPair& critics, const Eigen::VectorXd& s,
                    const Eigen::VectorXd& a) {
    const double v1 = q_value(critics.q1, s, a);
    if (!critics.twin) return v1;
    return std::min(v1, q_value(critics.q2, s, a));
}

Eigen::VectorXd td_target(const Batch& batch, const CriticPair& critics,
                          const GaussianPolicy& policy, Rng& rng) {
    return td_target_with_noise(batch, critics, policy,
                                draw_noise(policy.action_dim(), batch.size(), rng));
}

Eigen::VectorXd td_target_with_noise(const Batch& batch, const CriticPair& critics,
                                     const GaussianPolicy& policy,
                                     const Eigen::MatrixXd& z) {
    const Eigen::Index b = batch.size();
    const int m = policy.action_dim();
    const Eigen::MatrixXd out = net_forward_batch(policy.trunk, batch.s_next);
    const PolicyHeads heads = split_policy_out(out, m);

    const Eigen::ArrayXXd u = heads.mu + heads.sigma * z.array();
    const Eigen::ArrayXXd t = u.tanh();
    Eigen::MatrixXd a_next(m, b);
    Eigen::VectorXd log_prob = Eigen::VectorXd::Zero(b);
    const Eigen::VectorXd c = policy.center();
    const Eigen::VectorXd h = policy.half_width();
    for (Eigen::Index j = 0; j < b; ++j) {
        for (int d = 0; d < m; ++d) {
            a_next(d, j) = c(d) + h(d) * t(d, j);
            log_prob(j) += -0.5 * z(d, j) * z(d, j) - heads.log_std(d, j) -
                           kHalfLog2Pi - std::log(h(d)) -
                           log_one_minus_tanh_sq(u(d, j));
        }
    }

    const Eigen::MatrixXd x = stack_state_action(batch.s_next, a_next);
    const Eigen::VectorXd q1 = net_forward_batch(critics.q1_target, x).row(0).transpose();
    Eigen::VectorXd q_min = q1;
    if (critics.twin) {
        const Eigen::VectorXd q2 = net_forward_batch(critics.q2_target, x).row(0).transpose();
        q_min = q1.cwiseMin(q2);
    }

    Eigen::VectorXd target(b);
    for (Eigen::Index j = 0; j < b; ++j) {
        if (batch.done(j) != 0.0) {
            target(j) = batch.r(j);
        } else {
            target(j) = batch.r(j) +
                        critics.gamma * (q_min(j) - critics.alpha * log_prob(j));
        }
    }
    return target;
}

CriticLossResult critic_loss(const Batch& batch, const Eigen::VectorXd& weights,
                             const CriticPair& critics, const GaussianPolicy& policy,
                             Rng& rng) {
    const Eigen::VectorXd targets = td_target(batch, critics, policy, rng);
    return critic_loss_given_targets(batch, weights, critics, targets);
}

CriticLossResult critic_loss_given_targets(const Batch& batch,
                                           const Eigen::VectorXd& weights,
                                           const CriticPair& critics,
                                           const Eigen::VectorXd& targets) {
    const Eigen::Index b = batch.size();
    check_weights(weights, b, "critic_loss");
    if (targets.size() != b)
        contract_error("critic_loss: targets size ", targets.size(),
                       " != batch size ", b);

    const Eigen::MatrixXd x = stack_state_action(batch.s, batch.a);
    const double inv_b = 1.0 / static_cast<double>(b);

    CriticLossResult res;
    ForwardCache cache1;
    const Eigen::VectorXd q1 = net_forward_batch(critics.q1, x, cache1).row(0).transpose();
    const Eigen::VectorXd d1 = q1 - targets;

    Eigen::VectorXd d2;
    ForwardCache cache2;
    if (critics.twin) {
        const Eigen::VectorXd q2 = net_forward_batch(critics.q2, x, cache2).row(0).transpose();
        d2 = q2 - targets;
    }

    double loss = 0.0;
    for (Eigen::Index j = 0; j < b; ++j) {
        double sq = d1(j) * d1(j);
        if (critics.twin) sq += d2(j) * d2(j);
        loss += weights(j) * sq;
    }
    res.loss = loss * inv_b;

    Eigen::MatrixXd up1(1, b);
    for (Eigen::Index j = 0; j < b; ++j) up1(0, j) = 2.0 * weights(j) * d1(j) * inv_b;
    res.q1_grads = make_zero_grads(critics.q1);
    net_backward_batch(critics.q1, cache1, up1, res.q1_grads);

    if (critics.twin) {
        Eigen::MatrixXd up2(1, b);
        for (Eigen::Index j = 0; j < b; ++j)
            up2(0, j) = 2.0 * weights(j) * d2(j) * inv_b;
        res.q2_grads = make_zero_grads(critics.q2);
        net_backward_batch(critics.q2, cache2, up2, res.q2_grads);
    }
    return res;
}

ActorLossResult actor_loss(const Eigen::MatrixXd& states, const Eigen::VectorXd& weights,
                           const CriticPair& critics, const GaussianPolicy& policy,
                           Rng& rng) {
    return actor_loss_with_noise(states, weights, critics, policy,
                                 draw_noise(policy.action_dim(), states.cols(), rng));
}

ActorLossResult actor_loss_with_noise(const Eigen::MatrixXd& states,
                                      const Eigen::VectorXd& weights,
                                      const CriticPair& critics,
                                      const GaussianPolicy& policy,
                                      const Eigen::MatrixXd& z) {
    const Eigen::Index b = states.cols();
    check_weights(weights, b, "actor_loss");
    const int m = policy.action_dim();
    const double inv_b = 1.0 / static_cast<double>(b);
    const Eigen::VectorXd c = policy.center();
    const Eigen::VectorXd h = policy.half_width();

    ForwardCache policy_cache;
    const Eigen::MatrixXd out = net_forward_batch(policy.trunk, states, policy_cache);
    const PolicyHeads heads = split_policy_out(out, m);

    const Eigen::ArrayXXd u = heads.mu + heads.sigma * z.array();
    const Eigen::ArrayXXd t = u.tanh();
    Eigen::MatrixXd actions(m, b);
    Eigen::VectorXd log_prob = Eigen::VectorXd::Zero(b);
    for (Eigen::Index j = 0; j < b; ++j) {
        for (int d = 0; d < m; ++d) {
            actions(d, j) = c(d) + h(d) * t(d, j);
            log_prob(j) += -0.5 * z(d, j) * z(d, j) - heads.log_std(d, j) -
                           kHalfLog2Pi - std::log(h(d)) -
                           log_one_minus_tanh_sq(u(d, j));
        }
    }

    const Eigen::MatrixXd x = stack_state_action(states, actions);
    ForwardCache cache1, cache2;
    const Eigen::VectorXd q1 = net_forward_batch(critics.q1, x, cache1).row(0).transpose();
    Eigen::VectorXd q_min = q1;
    Eigen::VectorXd use_q1 = Eigen::VectorXd::Ones(b);
    if (critics.twin) {
        const Eigen::VectorXd q2 = net_forward_batch(critics.q2, x, cache2).row(0).transpose();
        for (Eigen::Index j = 0; j < b; ++j) {
            if (q2(j) < q1(j)) {
                q_min(j) = q2(j);
                use_q1(j) = 0.0;
            }
        }
    }

    ActorLossResult res;
    double loss = 0.0;
    for (Eigen::Index j = 0; j < b; ++j)
        loss += weights(j) * (critics.alpha * log_prob(j) - q_min(j));
    res.loss = loss * inv_b;
    res.mean_log_prob = log_prob.mean();

    // dL/d(min Q) = -w/B, routed to whichever critic attains the minimum;
    // critic parameters receive nothing.
    Eigen::MatrixXd up_q1(1, b), up_q2(1, b);
    for (Eigen::Index j = 0; j < b; ++j) {
        const double g = -weights(j) * inv_b;
        up_q1(0, j) = g * use_q1(j);
        up_q2(0, j) = g * (1.0 - use_q1(j));
    }
    Eigen::MatrixXd dx = net_input_grad_batch(critics.q1, cache1, up_q1);
    if (critics.twin) dx += net_input_grad_batch(critics.q2, cache2, up_q2);
    const Eigen::ArrayXXd d_action = dx.bottomRows(m).array();

    // Chain rule through a = c + h*tanh(u), u = mu + sigma*z, sigma = e^l:
    //   dlogp/du = 2 tanh(u),  dlogp/dl = -1 (direct term),
    //   da/du = h (1 - tanh(u)^2).
    Eigen::MatrixXd upstream(2 * m, b);
    for (Eigen::Index j = 0; j < b; ++j) {
        const double coef = critics.alpha * weights(j) * inv_b;
        for (int d = 0; d < m; ++d) {
            const double du = coef * 2.0 * t(d, j) +
                              d_action(d, j) * h(d) * (1.0 - t(d, j) * t(d, j));
            upstream(d, j) = du;
            upstream(m + d, j) =
                (du * heads.sigma(d, j) * z(d, j) - coef) * heads.clamp_mask(d, j);
        }
    }
    res.policy_grads = make_zero_grads(policy.trunk);
    net_backward_batch(policy.trunk, policy_cache, upstream, res.policy_grads);
    return res;
}

void update_targets(CriticPair& critics) {
    const double p = critics.polyak;
    for (int l = 0; l < critics.q1.n_layers(); ++l) {
        critics.q1_target.weights[l] =
            p * critics.q1_target.weights[l] + (1.0 - p) * critics.q1.weights[l];
        critics.q1_target.biases[l] =
            p * critics.q1_target.biases[l] + (1.0 - p) * critics.q1.biases[l];
        critics.q2_target.weights[l] =
            p * critics.q2_target.weights[l] + (1.0 - p) * critics.q2.weights[l];
        critics.q2_target.biases[l] =
            p * critics.q2_target.biases[l] + (1.0 - p) * critics.q2.biases[l];
    }
}

namespace {

bool grads_finite(const NetGrads& g) {
    for (const auto& w : g.d_weights)
        if (!w.allFinite()) return false;
    for (const auto& b : g.d_biases)
        if (!b.allFinite()) return false;
    return true;
}

}  // namespace

SacAgent::SacAgent(GaussianPolicy policy, CriticPair critics, double lr_actor,
                   double lr_critic, bool auto_alpha)
    : policy_(std::move(policy)),
      critics_(std::move(critics)),
      policy_adam_(make_adam_state(policy_.trunk)),
      q1_adam_(make_adam_state(critics_.q1)),
      q2_adam_(make_adam_state(critics_.q2)),
      lr_actor_(lr_actor),
      lr_critic_(lr_critic),
      auto_alpha_(auto_alpha) {
    if (lr_actor <= 0.0 || lr_critic <= 0.0)
        contract_error("SacAgent: learning rates must be positive");
    log_alpha_ = std::log(std::max(critics_.alpha, 1e-8));
    target_entropy_ = -static_cast<double>(policy_.action_dim());
}

SacUpdateStats SacAgent::update(const Batch& batch, const Eigen::VectorXd& weights,
                                Rng& rng) {
    SacUpdateStats stats;
    stats.applied = true;

    CriticLossResult cl = critic_loss(batch, weights, critics_, policy_, rng);
    stats.critic_loss = cl.loss;
    if (std::isfinite(cl.loss) && grads_finite(cl.q1_grads) &&
        (!critics_.twin || grads_finite(cl.q2_grads))) {
        adam_update(critics_.q1, cl.q1_grads, q1_adam_, lr_critic_);
        if (critics_.twin) adam_update(critics_.q2, cl.q2_grads, q2_adam_, lr_critic_);
    } else {
        stats.applied = false;
    }

    ActorLossResult al = actor_loss(batch.s, weights, critics_, policy_, rng);
    stats.actor_loss = al.loss;
    if (std::isfinite(al.loss) && grads_finite(al.policy_grads)) {
        adam_update(policy_.trunk, al.policy_grads, policy_adam_, lr_actor_);
    } else {
        stats.applied = false;
    }

    if (auto_alpha_ && stats.applied) {
        // d/d(log alpha) of -log_alpha * (mean log pi + target entropy)
        const double g = -(al.mean_log_prob + target_entropy_);
        alpha_steps_ += 1;
        alpha_m_ = 0.9 * alpha_m_ + 0.1 * g;
        alpha_v_ = 0.999 * alpha_v_ + 0.001 * g * g;
        const double mh = alpha_m_ / (1.0 - std::pow(0.9, double(alpha_steps_)));
        const double vh = alpha_v_ / (1.0 - std::pow(0.999, double(alpha_steps_)));
        log_alpha_ -= 3e-4 * mh / (std::sqrt(vh) + 1e-8);
        critics_.alpha = std::exp(log_alpha_);
    }
    stats.alpha = critics_.alpha;

    update_targets(critics_);
    return stats;
}

}  // namespace meee
