#include "meee/dyn_model.hpp"

#include <cmath>
#include <future>
#include <numeric>

#include "meee/check.hpp"

namespace meee {

namespace {

constexpr double kLogVarMin = -10.0;
constexpr double kLogVarMax = 4.0;
constexpr double kStdFloor = 1e-8;

Eigen::VectorXd raw_input(const Eigen::VectorXd& s, const Eigen::VectorXd& a) {
    Eigen::VectorXd x(s.size() + a.size());
    x << s, a;
    return x;
}

void check_dims(const Ensemble& e, int member, const Eigen::VectorXd& s,
                const Eigen::VectorXd& a, const char* who) {
    if (member < 0 || member >= e.size())
        contract_error(who, ": member index ", member, " out of range [0, ",
                       e.size(), ")");
    if (s.size() != e.state_dim)
        contract_error(who, ": state size ", s.size(), " != state_dim ", e.state_dim);
    if (a.size() != e.action_dim)
        contract_error(who, ": action size ", a.size(), " != action_dim ",
                       e.action_dim);
}

// Deterministic Fisher-Yates driven by our own generator.
std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.index(i)]);
    return idx;
}

}  // namespace

Ensemble make_ensemble(int state_dim, int action_dim, int n_members,
                       const std::vector<int>& hidden_sizes, Activation activation,
                       std::uint64_t seed_base, ModelLoss loss,
                       bool include_reward_in_variance) {
    if (n_members < 2)
        contract_error("make_ensemble: need at least 2 members, got ", n_members);
    if (state_dim < 1 || action_dim < 1)
        contract_error("make_ensemble: state_dim and action_dim must be positive");

    Ensemble e;
    e.state_dim = state_dim;
    e.action_dim = action_dim;
    e.loss_kind = loss;
    e.include_reward_in_variance = include_reward_in_variance;

    std::vector<int> sizes;
    sizes.push_back(state_dim + action_dim);
    sizes.insert(sizes.end(), hidden_sizes.begin(), hidden_sizes.end());
    sizes.push_back(2 * (state_dim + 1));

    for (int i = 0; i < n_members; ++i) {
        ProbabilisticModel m;
        m.init_seed = derive_seed(seed_base, "member-init", static_cast<std::uint64_t>(i));
        m.trunk = make_dense_net(sizes, activation, m.init_seed);
        m.adam = make_adam_state(m.trunk);
        e.members.push_back(std::move(m));
    }

    e.input_norm.mean = Eigen::VectorXd::Zero(e.input_dim());
    e.input_norm.std = Eigen::VectorXd::Ones(e.input_dim());
    e.target_mean = Eigen::VectorXd::Zero(e.target_dim());
    e.target_std = Eigen::VectorXd::Ones(e.target_dim());
    return e;
}

void set_normalization_from(Ensemble& ensemble, const EnvBuffer& buffer) {
    if (buffer.size() == 0)
        contract_error("set_normalization_from: buffer is empty");
    const auto n = static_cast<double>(buffer.size());
    Eigen::VectorXd in_mean = Eigen::VectorXd::Zero(ensemble.input_dim());
    Eigen::VectorXd tgt_mean = Eigen::VectorXd::Zero(ensemble.target_dim());
    for (std::size_t i = 0; i < buffer.size(); ++i) {
        const Transition& t = buffer.at(i);
        in_mean.head(ensemble.state_dim) += t.s;
        in_mean.tail(ensemble.action_dim) += t.a;
        tgt_mean.head(ensemble.state_dim) += t.s_next - t.s;
        tgt_mean(ensemble.state_dim) += t.r;
    }
    in_mean /= n;
    tgt_mean /= n;

    Eigen::VectorXd in_var = Eigen::VectorXd::Zero(ensemble.input_dim());
    Eigen::VectorXd tgt_var = Eigen::VectorXd::Zero(ensemble.target_dim());
    for (std::size_t i = 0; i < buffer.size(); ++i) {
        const Transition& t = buffer.at(i);
        Eigen::VectorXd x(ensemble.input_dim());
        x << t.s, t.a;
        in_var += (x - in_mean).cwiseAbs2();
        Eigen::VectorXd y(ensemble.target_dim());
        y << (t.s_next - t.s), t.r;
        tgt_var += (y - tgt_mean).cwiseAbs2();
    }
    in_var /= n;
    tgt_var /= n;

    ensemble.input_norm.mean = in_mean;
    ensemble.input_norm.std = in_var.cwiseSqrt().cwiseMax(kStdFloor);
    ensemble.target_mean = tgt_mean;
    ensemble.target_std = tgt_var.cwiseSqrt().cwiseMax(kStdFloor);
}

namespace {

// Splits a trunk output column into (mean, clamped log-variance).
void split_heads(const Eigen::VectorXd& out, int d, Eigen::VectorXd& mean,
                 Eigen::VectorXd& log_var) {
    mean = out.head(d);
    log_var = out.tail(d).cwiseMax(kLogVarMin).cwiseMin(kLogVarMax);
}

}  // namespace

GaussianPrediction predict_dist(const Ensemble& ensemble, int member,
                                const Eigen::VectorXd& s, const Eigen::VectorXd& a) {
    check_dims(ensemble, member, s, a, "predict_dist");
    const Eigen::VectorXd x = ensemble.input_norm.apply(raw_input(s, a));
    const Eigen::VectorXd out = net_forward(ensemble.members[member].trunk, x);
    GaussianPrediction p;
    Eigen::VectorXd log_var;
    split_heads(out, ensemble.target_dim(), p.mean, log_var);
    p.mean = ensemble.target_mean.array() + ensemble.target_std.array() * p.mean.array();
    p.variance =
        ensemble.target_std.array().square() * log_var.array().exp().array();
    return p;
}

Eigen::VectorXd predict_mean(const Ensemble& ensemble, int member,
                             const Eigen::VectorXd& s, const Eigen::VectorXd& a) {
    check_dims(ensemble, member, s, a, "predict_mean");
    const Eigen::VectorXd x = ensemble.input_norm.apply(raw_input(s, a));
    const Eigen::VectorXd out = net_forward(ensemble.members[member].trunk, x);
    return ensemble.target_mean.array() +
           ensemble.target_std.array() * out.head(ensemble.target_dim()).array();
}

std::pair<Eigen::VectorXd, double> predict(const Ensemble& ensemble, int member,
                                           const Eigen::VectorXd& s,
                                           const Eigen::VectorXd& a, Rng& rng) {
    Eigen::VectorXd z(ensemble.target_dim());
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
    return predict_with_noise(ensemble, member, s, a, z);
}

std::pair<Eigen::VectorXd, double> predict_with_noise(const Ensemble& ensemble,
                                                      int member,
                                                      const Eigen::VectorXd& s,
                                                      const Eigen::VectorXd& a,
                                                      const Eigen::VectorXd& z) {
    Eigen::VectorXd s_next;
    double r = 0.0;
    if (!try_predict_with_noise(ensemble, member, s, a, z, s_next, r))
        runtime_fail("predict: non-finite model output from member ", member);
    return {std::move(s_next), r};
}

bool try_predict_with_noise(const Ensemble& ensemble, int member,
                            const Eigen::VectorXd& s, const Eigen::VectorXd& a,
                            const Eigen::VectorXd& z, Eigen::VectorXd& s_next,
                            double& r) {
    check_dims(ensemble, member, s, a, "predict");
    if (z.size() != ensemble.target_dim())
        contract_error("predict: noise size ", z.size(), " != target dim ",
                       ensemble.target_dim());
    const GaussianPrediction p = predict_dist(ensemble, member, s, a);
    const Eigen::VectorXd sample =
        p.mean + p.variance.cwiseSqrt().cwiseProduct(z);
    s_next = s + sample.head(ensemble.state_dim);
    r = sample(ensemble.state_dim);
    return s_next.allFinite() && std::isfinite(r);
}

double variance_of_means(const std::vector<Eigen::VectorXd>& means,
                         const Eigen::VectorXd& scale_std) {
    const auto count = means.size();
    if (count < 2)
        contract_error("variance_of_means: need at least 2 member means, got ", count);
    const Eigen::Index d = means.front().size();
    if (scale_std.size() != d)
        contract_error("variance_of_means: scale size ", scale_std.size(),
                       " != mean dim ", d);

    // Shifted two-pass form: identical members yield exactly zero spread.
    const Eigen::VectorXd& shift = means.front();
    Eigen::VectorXd center = Eigen::VectorXd::Zero(d);
    for (const auto& m : means) center += m - shift;
    center /= static_cast<double>(count);

    Eigen::VectorXd var = Eigen::VectorXd::Zero(d);
    for (const auto& m : means) var += (m - shift - center).cwiseAbs2();
    var /= static_cast<double>(count - 1);

    const Eigen::ArrayXd scaled =
        var.array() / scale_std.array().max(kStdFloor).square();
    return scaled.mean();
}

double ensemble_variance(const Ensemble& ensemble, const Eigen::VectorXd& s,
                         const Eigen::VectorXd& a) {
    std::vector<Eigen::VectorXd> means;
    means.reserve(ensemble.members.size());
    const int dims = ensemble.include_reward_in_variance ? ensemble.target_dim()
                                                         : ensemble.state_dim;
    for (int i = 0; i < ensemble.size(); ++i)
        means.push_back(predict_mean(ensemble, i, s, a).head(dims).eval());
    return variance_of_means(means, ensemble.target_std.head(dims));
}

double uncertainty_weight(double v_hat, double temperature) {
    if (!(v_hat >= 0.0))
        contract_error("uncertainty_weight: variance must be >= 0, got ", v_hat);
    if (!(temperature > 0.0))
        contract_error("uncertainty_weight: temperature must be > 0, got ",
                       temperature);
    return 1.0 / (1.0 + std::exp(v_hat * temperature)) + 0.5;
}

ModelLossResult model_training_loss(const Ensemble& ensemble, int member,
                                    const Eigen::MatrixXd& raw_inputs,
                                    const Eigen::MatrixXd& targets,
                                    const Eigen::MatrixXd& z, ModelLoss kind) {
    const int d = ensemble.target_dim();
    const auto batch = raw_inputs.cols();
    if (targets.cols() != batch || (kind == ModelLoss::mse && z.cols() != batch))
        contract_error("model_training_loss: batch size mismatch");
    if (targets.rows() != d)
        contract_error("model_training_loss: target rows ", targets.rows(),
                       " != target dim ", d);

    const DenseNet& net = ensemble.members[member].trunk;
    const Eigen::MatrixXd x = ensemble.input_norm.apply_batch(raw_inputs);
    const Eigen::MatrixXd y_std =
        ((targets.colwise() - ensemble.target_mean).array().colwise() /
         ensemble.target_std.array())
            .matrix();
    ForwardCache cache;
    const Eigen::MatrixXd out = net_forward_batch(net, x, cache);

    const Eigen::ArrayXXd mu = out.topRows(d).array();
    const Eigen::ArrayXXd lv_raw = out.bottomRows(d).array();
    const Eigen::ArrayXXd lv = lv_raw.max(kLogVarMin).min(kLogVarMax);
    const Eigen::ArrayXXd clamp_mask =
        ((lv_raw > kLogVarMin) && (lv_raw < kLogVarMax)).cast<double>();
    const double inv_b = 1.0 / static_cast<double>(batch);

    ModelLossResult res;
    Eigen::MatrixXd upstream(2 * d, batch);
    if (kind == ModelLoss::mse) {
        const Eigen::ArrayXXd sigma = (0.5 * lv).exp();
        const Eigen::ArrayXXd err = mu + sigma * z.array() - y_std.array();
        res.loss = err.square().sum() * inv_b;
        upstream.topRows(d) = (2.0 * inv_b) * err.matrix();
        upstream.bottomRows(d) =
            (inv_b * err * z.array() * sigma * clamp_mask).matrix();
    } else {
        const Eigen::ArrayXXd var = lv.exp();
        const Eigen::ArrayXXd diff = mu - y_std.array();
        res.loss = 0.5 * (diff.square() / var + lv).sum() * inv_b;
        upstream.topRows(d) = (inv_b * diff / var).matrix();
        upstream.bottomRows(d) =
            (0.5 * inv_b * (1.0 - diff.square() / var) * clamp_mask).matrix();
    }

    res.grads = make_zero_grads(net);
    net_backward_batch(net, cache, upstream, res.grads);
    return res;
}

namespace {

struct TrainData {
    Eigen::MatrixXd inputs;   // (s, a) columns, raw
    Eigen::MatrixXd targets;  // (delta, r) columns
};

TrainData gather(const Ensemble& e, const EnvBuffer& buffer) {
    TrainData d;
    d.inputs.resize(e.input_dim(), static_cast<Eigen::Index>(buffer.size()));
    d.targets.resize(e.target_dim(), static_cast<Eigen::Index>(buffer.size()));
    for (std::size_t i = 0; i < buffer.size(); ++i) {
        const Transition& t = buffer.at(i);
        d.inputs.col(i) << t.s, t.a;
        d.targets.col(i) << (t.s_next - t.s), t.r;
    }
    return d;
}

std::vector<double> train_member(Ensemble& e, int member, const TrainData& data,
                                 int epochs, int batch_size, double learning_rate,
                                 std::uint64_t seed) {
    Rng rng(seed);
    const auto n = static_cast<std::size_t>(data.inputs.cols());
    const int d = e.target_dim();
    std::vector<double> trace;
    trace.reserve(epochs);
    for (int epoch = 0; epoch < epochs; ++epoch) {
        const auto order = shuffled_indices(n, rng);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < n; start += batch_size) {
            const auto b = std::min<std::size_t>(batch_size, n - start);
            Eigen::MatrixXd xb(data.inputs.rows(), b), yb(d, b), zb(d, b);
            for (std::size_t j = 0; j < b; ++j) {
                xb.col(j) = data.inputs.col(order[start + j]);
                yb.col(j) = data.targets.col(order[start + j]);
            }
            for (std::size_t j = 0; j < b; ++j)
                for (int k = 0; k < d; ++k) zb(k, j) = rng.normal();
            ModelLossResult r = model_training_loss(e, member, xb, yb, zb, e.loss_kind);
            if (!std::isfinite(r.loss))
                runtime_fail("train_ensemble: non-finite loss in member ", member);
            adam_update(e.members[member].trunk, r.grads, e.members[member].adam,
                        learning_rate);
            loss_sum += r.loss;
            ++batches;
        }
        trace.push_back(loss_sum / static_cast<double>(batches));
    }
    return trace;
}

}  // namespace

std::vector<std::vector<double>> train_ensemble(Ensemble& ensemble,
                                                const EnvBuffer& buffer, int epochs,
                                                int batch_size, Rng& rng,
                                                double learning_rate, int threads) {
    if (batch_size < 1) contract_error("train_ensemble: batch_size must be >= 1");
    if (buffer.size() < static_cast<std::size_t>(batch_size))
        contract_error("train_ensemble: buffer size ", buffer.size(),
                       " < batch size ", batch_size);

    set_normalization_from(ensemble, buffer);
    const TrainData data = gather(ensemble, buffer);

    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < ensemble.size(); ++i) seeds.push_back(rng.next_seed());

    std::vector<std::vector<double>> traces(ensemble.size());
    if (threads <= 1) {
        for (int i = 0; i < ensemble.size(); ++i)
            traces[i] = train_member(ensemble, i, data, epochs, batch_size,
                                     learning_rate, seeds[i]);
    } else {
        std::vector<std::future<std::vector<double>>> futures;
        for (int i = 0; i < ensemble.size(); ++i) {
            futures.push_back(std::async(std::launch::async, [&, i] {
                return train_member(ensemble, i, data, epochs, batch_size,
                                    learning_rate, seeds[i]);
            }));
        }
        for (int i = 0; i < ensemble.size(); ++i) traces[i] = futures[i].get();
    }
    return traces;
}

}  // namespace meee
