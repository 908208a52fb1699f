#include "meee/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "meee/check.hpp"

namespace meee {

namespace {

constexpr char kPolicyMagic[8] = {'M', 'E', 'E', 'E', 'P', 'O', 'L', '1'};
constexpr char kEnsembleMagic[8] = {'M', 'E', 'E', 'E', 'N', 'S', 'B', '1'};

void put_u32(std::ofstream& f, std::uint32_t v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void put_u64(std::ofstream& f, std::uint64_t v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void put_doubles(std::ofstream& f, const double* p, std::size_t n) {
    f.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

std::uint32_t get_u32(std::ifstream& f) {
    std::uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}
std::uint64_t get_u64(std::ifstream& f) {
    std::uint64_t v = 0;
    f.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}
void get_doubles(std::ifstream& f, double* p, std::size_t n) {
    f.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

void put_net_shape(std::ofstream& f, const DenseNet& net) {
    put_u32(f, static_cast<std::uint32_t>(net.hidden_activation == Activation::relu ? 0 : 1));
    put_u32(f, static_cast<std::uint32_t>(net.layer_sizes.size()));
    for (int s : net.layer_sizes) put_u32(f, static_cast<std::uint32_t>(s));
}

DenseNet get_net_shape(std::ifstream& f) {
    const std::uint32_t act = get_u32(f);
    const std::uint32_t n = get_u32(f);
    if (!f || n < 2 || n > 64) runtime_fail("checkpoint: corrupt layer count");
    std::vector<int> sizes(n);
    for (auto& s : sizes) s = static_cast<int>(get_u32(f));
    return make_dense_net(sizes, act == 0 ? Activation::relu : Activation::tanh, 0);
}

void put_params(std::ofstream& f, const DenseNet& net) {
    const Eigen::VectorXd flat = flatten_params(net);
    put_doubles(f, flat.data(), static_cast<std::size_t>(flat.size()));
}

void get_params(std::ifstream& f, DenseNet& net) {
    Eigen::VectorXd flat(net.n_params());
    get_doubles(f, flat.data(), static_cast<std::size_t>(flat.size()));
    if (!f) runtime_fail("checkpoint: truncated parameter block");
    unflatten_params(net, flat);
}

}  // namespace

void save_policy(const GaussianPolicy& policy, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) runtime_fail("save_policy: cannot open ", path.string());
    f.write(kPolicyMagic, sizeof(kPolicyMagic));
    put_net_shape(f, policy.trunk);
    put_u32(f, static_cast<std::uint32_t>(policy.action_dim()));
    put_doubles(f, policy.action_low.data(), policy.action_low.size());
    put_doubles(f, policy.action_high.data(), policy.action_high.size());
    put_params(f, policy.trunk);
    if (!f) runtime_fail("save_policy: write failed for ", path.string());
}

GaussianPolicy load_policy(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) runtime_fail("load_policy: cannot open ", path.string());
    char magic[8];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, kPolicyMagic, sizeof(magic)) != 0)
        runtime_fail("load_policy: ", path.string(), " is not a policy checkpoint");
    GaussianPolicy p;
    p.trunk = get_net_shape(f);
    const std::uint32_t action_dim = get_u32(f);
    p.action_low.resize(action_dim);
    p.action_high.resize(action_dim);
    get_doubles(f, p.action_low.data(), action_dim);
    get_doubles(f, p.action_high.data(), action_dim);
    get_params(f, p.trunk);
    if (p.trunk.out_dim() != 2 * static_cast<int>(action_dim))
        runtime_fail("load_policy: head size ", p.trunk.out_dim(),
                     " does not match action dim ", action_dim);
    return p;
}

void save_ensemble(const Ensemble& ensemble, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) runtime_fail("save_ensemble: cannot open ", path.string());
    f.write(kEnsembleMagic, sizeof(kEnsembleMagic));
    put_u32(f, static_cast<std::uint32_t>(ensemble.state_dim));
    put_u32(f, static_cast<std::uint32_t>(ensemble.action_dim));
    put_u32(f, static_cast<std::uint32_t>(ensemble.size()));
    put_u32(f, ensemble.loss_kind == ModelLoss::mse ? 0u : 1u);
    put_u32(f, ensemble.include_reward_in_variance ? 1u : 0u);
    for (const auto& m : ensemble.members) put_u64(f, m.init_seed);
    put_net_shape(f, ensemble.members.front().trunk);
    put_doubles(f, ensemble.input_norm.mean.data(), ensemble.input_norm.mean.size());
    put_doubles(f, ensemble.input_norm.std.data(), ensemble.input_norm.std.size());
    put_doubles(f, ensemble.target_mean.data(), ensemble.target_mean.size());
    put_doubles(f, ensemble.target_std.data(), ensemble.target_std.size());
    for (const auto& m : ensemble.members) put_params(f, m.trunk);
    if (!f) runtime_fail("save_ensemble: write failed for ", path.string());
}

Ensemble load_ensemble(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) runtime_fail("load_ensemble: cannot open ", path.string());
    char magic[8];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, kEnsembleMagic, sizeof(magic)) != 0)
        runtime_fail("load_ensemble: ", path.string(), " is not an ensemble checkpoint");

    Ensemble e;
    e.state_dim = static_cast<int>(get_u32(f));
    e.action_dim = static_cast<int>(get_u32(f));
    const std::uint32_t members = get_u32(f);
    e.loss_kind = get_u32(f) == 0 ? ModelLoss::mse : ModelLoss::nll;
    e.include_reward_in_variance = get_u32(f) != 0;
    if (!f || members < 2 || members > 1024)
        runtime_fail("load_ensemble: corrupt member count");
    std::vector<std::uint64_t> seeds(members);
    for (auto& s : seeds) s = get_u64(f);
    const DenseNet shape = get_net_shape(f);

    e.input_norm.mean.resize(e.input_dim());
    e.input_norm.std.resize(e.input_dim());
    e.target_mean.resize(e.target_dim());
    e.target_std.resize(e.target_dim());
    get_doubles(f, e.input_norm.mean.data(), e.input_norm.mean.size());
    get_doubles(f, e.input_norm.std.data(), e.input_norm.std.size());
    get_doubles(f, e.target_mean.data(), e.target_mean.size());
    get_doubles(f, e.target_std.data(), e.target_std.size());

    for (std::uint32_t i = 0; i < members; ++i) {
        ProbabilisticModel m;
        m.init_seed = seeds[i];
        m.trunk = shape;
        get_params(f, m.trunk);
        m.adam = make_adam_state(m.trunk);
        e.members.push_back(std::move(m));
    }
    if (!f) runtime_fail("load_ensemble: truncated file ", path.string());
    return e;
}

}  // namespace meee
