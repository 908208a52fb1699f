#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include "meee/rng.hpp"

namespace meee {

enum class Activation { relu, tanh };

/// Fully connected network with explicit parameter storage. The output
/// layer is always linear; hidden layers share one activation.
struct DenseNet {
    std::vector<int> layer_sizes;               // [in, h1, ..., out]
    std::vector<Eigen::MatrixXd> weights;       // weights[l]: sizes[l+1] x sizes[l]
    std::vector<Eigen::VectorXd> biases;        // biases[l]: sizes[l+1]
    Activation hidden_activation = Activation::relu;

    int in_dim() const { return layer_sizes.front(); }
    int out_dim() const { return layer_sizes.back(); }
    int n_layers() const { return static_cast<int>(weights.size()); }
    std::size_t n_params() const;
};

// Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)] from a dedicated
// generator, so two nets with distinct seeds differ at initialization.
DenseNet make_dense_net(const std::vector<int>& layer_sizes, Activation hidden,
                        std::uint64_t seed);

struct NetGrads {
    std::vector<Eigen::MatrixXd> d_weights;
    std::vector<Eigen::VectorXd> d_biases;

    void set_zero();
};

NetGrads make_zero_grads(const DenseNet& net);

Eigen::VectorXd net_forward(const DenseNet& net, const Eigen::VectorXd& input);

// Batched variants treat each column as one sample.
Eigen::MatrixXd net_forward_batch(const DenseNet& net, const Eigen::MatrixXd& inputs);

struct ForwardCache {
    std::vector<Eigen::MatrixXd> acts;  // acts[0] = input, acts[l+1] = layer l output
};

Eigen::MatrixXd net_forward_batch(const DenseNet& net, const Eigen::MatrixXd& inputs,
                                  ForwardCache& cache);

struct BackwardResult {
    NetGrads grads;
    Eigen::VectorXd input_grad;
};

// Gradients of <upstream, net(input)> w.r.t. every parameter and the input.
BackwardResult net_backward(const DenseNet& net, const Eigen::VectorXd& input,
                            const Eigen::VectorXd& upstream);

// Param grads are summed over columns; returns per-column input grads.
Eigen::MatrixXd net_backward_batch(const DenseNet& net, const ForwardCache& cache,
                                   const Eigen::MatrixXd& upstream, NetGrads& grads);

// Input grads only; skips the parameter-gradient products.
Eigen::MatrixXd net_input_grad_batch(const DenseNet& net, const ForwardCache& cache,
                                     const Eigen::MatrixXd& upstream);

struct AdamState {
    std::vector<Eigen::MatrixXd> m_w, v_w;
    std::vector<Eigen::VectorXd> m_b, v_b;
    long step_count = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

AdamState make_adam_state(const DenseNet& net);

// Bias-corrected Adam step. Throws on non-finite gradients (naming the
// layer) and asserts all parameters are finite after the update.
void adam_update(DenseNet& net, const NetGrads& grads, AdamState& state,
                 double learning_rate);

// Flat parameter views; ordering is stable (per layer: W column-major, then b).
Eigen::VectorXd flatten_params(const DenseNet& net);
void unflatten_params(DenseNet& net, const Eigen::VectorXd& flat);
Eigen::VectorXd flatten_grads(const DenseNet& net, const NetGrads& grads);

// max_i |a_i - n_i| / max(|a_i|, |n_i|, 1e-8)
double max_rel_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric);

// Compares analytic backprop against central finite differences (h = 1e-5)
// for the scalar loss(net(input)). loss_grad must be the exact gradient of
// loss w.r.t. the network output.
double gradient_check(const DenseNet& net, const Eigen::VectorXd& input,
                      const std::function<double(const Eigen::VectorXd&)>& loss,
                      const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& loss_grad);

}  // namespace meee
