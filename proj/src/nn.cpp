#include "meee/nn.hpp"

#include <cmath>

#include "meee/check.hpp"

namespace meee {

namespace {

void apply_hidden(Activation act, Eigen::MatrixXd& m) {
    if (act == Activation::relu) {
        m = m.cwiseMax(0.0);
    } else {
        m = m.array().tanh();
    }
}

// Derivative expressed in terms of the layer output (valid for relu and tanh).
Eigen::ArrayXXd hidden_deriv(Activation act, const Eigen::MatrixXd& post) {
    if (act == Activation::relu) {
        return (post.array() > 0.0).cast<double>();
    }
    return 1.0 - post.array().square();
}

}  // namespace

std::size_t DenseNet::n_params() const {
    std::size_t n = 0;
    for (int l = 0; l < n_layers(); ++l) {
        n += static_cast<std::size_t>(weights[l].size()) + biases[l].size();
    }
    return n;
}

DenseNet make_dense_net(const std::vector<int>& layer_sizes, Activation hidden,
                        std::uint64_t seed) {
    if (layer_sizes.size() < 2)
        contract_error("make_dense_net: need at least 2 layer sizes, got ",
                       layer_sizes.size());
    for (int s : layer_sizes)
        if (s <= 0) contract_error("make_dense_net: non-positive layer size ", s);

    DenseNet net;
    net.layer_sizes = layer_sizes;
    net.hidden_activation = hidden;
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        const int fan_in = layer_sizes[l];
        const int fan_out = layer_sizes[l + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        Eigen::MatrixXd w(fan_out, fan_in);
        for (int r = 0; r < fan_out; ++r)
            for (int c = 0; c < fan_in; ++c) w(r, c) = rng.uniform(-bound, bound);
        Eigen::VectorXd b(fan_out);
        for (int r = 0; r < fan_out; ++r) b(r) = rng.uniform(-bound, bound);
        net.weights.push_back(std::move(w));
        net.biases.push_back(std::move(b));
    }
    return net;
}

void NetGrads::set_zero() {
    for (auto& g : d_weights) g.setZero();
    for (auto& g : d_biases) g.setZero();
}

NetGrads make_zero_grads(const DenseNet& net) {
    NetGrads g;
    for (int l = 0; l < net.n_layers(); ++l) {
        g.d_weights.emplace_back(Eigen::MatrixXd::Zero(net.weights[l].rows(),
                                                       net.weights[l].cols()));
        g.d_biases.emplace_back(Eigen::VectorXd::Zero(net.biases[l].size()));
    }
    return g;
}

Eigen::VectorXd net_forward(const DenseNet& net, const Eigen::VectorXd& input) {
    if (input.size() != net.in_dim())
        contract_error("net_forward: input size ", input.size(),
                       " != first layer size ", net.in_dim());
    Eigen::VectorXd h = input;
    const int L = net.n_layers();
    for (int l = 0; l < L; ++l) {
        h = net.weights[l] * h + net.biases[l];
        if (l + 1 < L) {
            if (net.hidden_activation == Activation::relu)
                h = h.cwiseMax(0.0);
            else
                h = h.array().tanh();
        }
    }
    return h;
}

Eigen::MatrixXd net_forward_batch(const DenseNet& net, const Eigen::MatrixXd& inputs) {
    ForwardCache cache;
    return net_forward_batch(net, inputs, cache);
}

Eigen::MatrixXd net_forward_batch(const DenseNet& net, const Eigen::MatrixXd& inputs,
                                  ForwardCache& cache) {
    if (inputs.rows() != net.in_dim())
        contract_error("net_forward_batch: input rows ", inputs.rows(),
                       " != first layer size ", net.in_dim());
    const int L = net.n_layers();
    cache.acts.assign(static_cast<std::size_t>(L) + 1, Eigen::MatrixXd());
    cache.acts[0] = inputs;
    for (int l = 0; l < L; ++l) {
        Eigen::MatrixXd z = (net.weights[l] * cache.acts[l]).colwise() + net.biases[l];
        if (l + 1 < L) apply_hidden(net.hidden_activation, z);
        cache.acts[l + 1] = std::move(z);
    }
    return cache.acts.back();
}

BackwardResult net_backward(const DenseNet& net, const Eigen::VectorXd& input,
                            const Eigen::VectorXd& upstream) {
    if (input.size() != net.in_dim())
        contract_error("net_backward: input size ", input.size(),
                       " != first layer size ", net.in_dim());
    if (upstream.size() != net.out_dim())
        contract_error("net_backward: upstream size ", upstream.size(),
                       " != output size ", net.out_dim());
    ForwardCache cache;
    net_forward_batch(net, input, cache);
    BackwardResult out;
    out.grads = make_zero_grads(net);
    Eigen::MatrixXd ig = net_backward_batch(net, cache, upstream, out.grads);
    out.input_grad = ig.col(0);
    return out;
}

Eigen::MatrixXd net_backward_batch(const DenseNet& net, const ForwardCache& cache,
                                   const Eigen::MatrixXd& upstream, NetGrads& grads) {
    const int L = net.n_layers();
    if (upstream.rows() != net.out_dim())
        contract_error("net_backward_batch: upstream rows ", upstream.rows(),
                       " != output size ", net.out_dim());
    Eigen::MatrixXd delta = upstream;
    for (int l = L - 1; l >= 0; --l) {
        grads.d_weights[l] = delta * cache.acts[l].transpose();
        grads.d_biases[l] = delta.rowwise().sum();
        Eigen::MatrixXd prev = net.weights[l].transpose() * delta;
        if (l > 0) {
            delta = prev.array() * hidden_deriv(net.hidden_activation, cache.acts[l]);
        } else {
            return prev;
        }
    }
    return delta;  // unreachable for L >= 1
}

Eigen::MatrixXd net_input_grad_batch(const DenseNet& net, const ForwardCache& cache,
                                     const Eigen::MatrixXd& upstream) {
    const int L = net.n_layers();
    Eigen::MatrixXd delta = upstream;
    for (int l = L - 1; l >= 0; --l) {
        Eigen::MatrixXd prev = net.weights[l].transpose() * delta;
        if (l > 0) {
            delta = prev.array() * hidden_deriv(net.hidden_activation, cache.acts[l]);
        } else {
            return prev;
        }
    }
    return delta;
}

AdamState make_adam_state(const DenseNet& net) {
    AdamState s;
    for (int l = 0; l < net.n_layers(); ++l) {
        s.m_w.emplace_back(Eigen::MatrixXd::Zero(net.weights[l].rows(),
                                                 net.weights[l].cols()));
        s.v_w.emplace_back(Eigen::MatrixXd::Zero(net.weights[l].rows(),
                                                 net.weights[l].cols()));
        s.m_b.emplace_back(Eigen::VectorXd::Zero(net.biases[l].size()));
        s.v_b.emplace_back(Eigen::VectorXd::Zero(net.biases[l].size()));
    }
    return s;
}

void adam_update(DenseNet& net, const NetGrads& grads, AdamState& state,
                 double learning_rate) {
    if (learning_rate <= 0.0)
        contract_error("adam_update: learning rate must be > 0, got ", learning_rate);
    const int L = net.n_layers();
    if (static_cast<int>(grads.d_weights.size()) != L)
        contract_error("adam_update: grads have ", grads.d_weights.size(),
                       " layers, net has ", L);
    for (int l = 0; l < L; ++l) {
        if (!grads.d_weights[l].allFinite() || !grads.d_biases[l].allFinite())
            runtime_fail("adam_update: non-finite gradient in layer ", l);
    }

    state.step_count += 1;
    const double b1 = state.beta1, b2 = state.beta2;
    const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
    const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));

    for (int l = 0; l < L; ++l) {
        state.m_w[l] = b1 * state.m_w[l] + (1.0 - b1) * grads.d_weights[l];
        state.v_w[l] = b2 * state.v_w[l].array() +
                       (1.0 - b2) * grads.d_weights[l].array().square();
        state.m_b[l] = b1 * state.m_b[l] + (1.0 - b1) * grads.d_biases[l];
        state.v_b[l] = b2 * state.v_b[l].array() +
                       (1.0 - b2) * grads.d_biases[l].array().square();

        net.weights[l].array() -=
            learning_rate * (state.m_w[l].array() / corr1) /
            ((state.v_w[l].array() / corr2).sqrt() + state.epsilon);
        net.biases[l].array() -=
            learning_rate * (state.m_b[l].array() / corr1) /
            ((state.v_b[l].array() / corr2).sqrt() + state.epsilon);

        if (!net.weights[l].allFinite() || !net.biases[l].allFinite())
            runtime_fail("adam_update: non-finite parameters after update in layer ", l);
    }
}

Eigen::VectorXd flatten_params(const DenseNet& net) {
    Eigen::VectorXd flat(net.n_params());
    Eigen::Index at = 0;
    for (int l = 0; l < net.n_layers(); ++l) {
        const auto& w = net.weights[l];
        flat.segment(at, w.size()) = Eigen::Map<const Eigen::VectorXd>(w.data(), w.size());
        at += w.size();
        flat.segment(at, net.biases[l].size()) = net.biases[l];
        at += net.biases[l].size();
    }
    return flat;
}

void unflatten_params(DenseNet& net, const Eigen::VectorXd& flat) {
    if (flat.size() != static_cast<Eigen::Index>(net.n_params()))
        contract_error("unflatten_params: flat size ", flat.size(),
                       " != parameter count ", net.n_params());
    Eigen::Index at = 0;
    for (int l = 0; l < net.n_layers(); ++l) {
        auto& w = net.weights[l];
        Eigen::Map<Eigen::VectorXd>(w.data(), w.size()) = flat.segment(at, w.size());
        at += w.size();
        net.biases[l] = flat.segment(at, net.biases[l].size());
        at += net.biases[l].size();
    }
}

Eigen::VectorXd flatten_grads(const DenseNet& net, const NetGrads& grads) {
    Eigen::VectorXd flat(net.n_params());
    Eigen::Index at = 0;
    for (int l = 0; l < net.n_layers(); ++l) {
        const auto& g = grads.d_weights[l];
        flat.segment(at, g.size()) = Eigen::Map<const Eigen::VectorXd>(g.data(), g.size());
        at += g.size();
        flat.segment(at, grads.d_biases[l].size()) = grads.d_biases[l];
        at += grads.d_biases[l].size();
    }
    return flat;
}

double max_rel_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric) {
    if (analytic.size() != numeric.size())
        contract_error("max_rel_error: size mismatch ", analytic.size(), " vs ",
                       numeric.size());
    double worst = 0.0;
    for (Eigen::Index i = 0; i < analytic.size(); ++i) {
        const double denom =
            std::max({std::abs(analytic(i)), std::abs(numeric(i)), 1e-8});
        worst = std::max(worst, std::abs(analytic(i) - numeric(i)) / denom);
    }
    return worst;
}

double gradient_check(const DenseNet& net, const Eigen::VectorXd& input,
                      const std::function<double(const Eigen::VectorXd&)>& loss,
                      const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& loss_grad) {
    const Eigen::VectorXd y = net_forward(net, input);
    BackwardResult bw = net_backward(net, input, loss_grad(y));
    const Eigen::VectorXd analytic = flatten_grads(net, bw.grads);

    DenseNet probe = net;
    Eigen::VectorXd p = flatten_params(net);
    Eigen::VectorXd numeric(p.size());
    const double h = 1e-5;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        const double saved = p(i);
        p(i) = saved + h;
        unflatten_params(probe, p);
        const double up = loss(net_forward(probe, input));
        p(i) = saved - h;
        unflatten_params(probe, p);
        const double down = loss(net_forward(probe, input));
        p(i) = saved;
        numeric(i) = (up - down) / (2.0 * h);
    }
    return max_rel_error(analytic, numeric);
}

}  // namespace meee
