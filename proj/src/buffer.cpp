#include "meee/buffer.hpp"

#include <cmath>
#include <fstream>

#include "meee/check.hpp"

namespace meee {

namespace {

void check_transition(const Transition& t, int state_dim, int action_dim,
                      const char* who) {
    if (t.s.size() != state_dim || t.s_next.size() != state_dim)
        contract_error(who, ": state size ", t.s.size(), "/", t.s_next.size(),
                       " != state_dim ", state_dim);
    if (t.a.size() != action_dim)
        contract_error(who, ": action size ", t.a.size(), " != action_dim ",
                       action_dim);
    if (!t.s.allFinite() || !t.a.allFinite() || !t.s_next.allFinite() ||
        !std::isfinite(t.r))
        contract_error(who, ": non-finite transition entry");
}

void write_vec(std::ofstream& f, const Eigen::VectorXd& v) {
    char buf[32];
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", v(i));
        f << buf << ',';
    }
}

void write_header(std::ofstream& f, int state_dim, int action_dim, bool weighted) {
    for (int i = 0; i < state_dim; ++i) f << 's' << i << ',';
    for (int i = 0; i < action_dim; ++i) f << 'a' << i << ',';
    f << "r,";
    for (int i = 0; i < state_dim; ++i) f << "s_next" << i << ',';
    f << "done";
    if (weighted) f << ",weight";
    f << '\n';
}

void write_row(std::ofstream& f, const Transition& t) {
    char buf[32];
    write_vec(f, t.s);
    write_vec(f, t.a);
    std::snprintf(buf, sizeof(buf), "%.17g", t.r);
    f << buf << ',';
    write_vec(f, t.s_next);
    f << (t.done ? 1 : 0);
}

}  // namespace

EnvBuffer::EnvBuffer(std::size_t capacity, int state_dim, int action_dim)
    : state_dim_(state_dim), action_dim_(action_dim), ring_(capacity) {
    if (capacity == 0) contract_error("EnvBuffer: capacity must be positive");
}

void EnvBuffer::validate(const Transition& t) const {
    check_transition(t, state_dim_, action_dim_, "EnvBuffer::push");
}

void EnvBuffer::push(const Transition& t) {
    validate(t);
    ring_.push(t);
}

std::vector<Transition> EnvBuffer::sample_batch(std::size_t n, Rng& rng) const {
    if (ring_.size() == 0) contract_error("EnvBuffer::sample_batch: buffer is empty");
    if (n < 1) contract_error("EnvBuffer::sample_batch: n must be >= 1");
    std::vector<Transition> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(ring_.at(rng.index(ring_.size())));
    return out;
}

std::vector<Eigen::VectorXd> EnvBuffer::sample_states(std::size_t m, Rng& rng) const {
    if (m == 0) return {};
    if (ring_.size() == 0) contract_error("EnvBuffer::sample_states: buffer is empty");
    std::vector<Eigen::VectorXd> out;
    out.reserve(m);
    for (std::size_t i = 0; i < m; ++i) out.push_back(ring_.at(rng.index(ring_.size())).s);
    return out;
}

void EnvBuffer::dump_csv(const std::filesystem::path& path) const {
    std::ofstream f(path);
    if (!f) runtime_fail("EnvBuffer::dump_csv: cannot open ", path.string());
    write_header(f, state_dim_, action_dim_, false);
    for (std::size_t i = 0; i < ring_.size(); ++i) {
        write_row(f, ring_.at(i));
        f << '\n';
    }
}

ModelBuffer::ModelBuffer(std::size_t capacity, int state_dim, int action_dim)
    : state_dim_(state_dim), action_dim_(action_dim), ring_(capacity) {
    if (capacity == 0) contract_error("ModelBuffer: capacity must be positive");
}

void ModelBuffer::push(const WeightedTransition& wt) {
    check_transition(wt.transition, state_dim_, action_dim_, "ModelBuffer::push");
    if (!std::isfinite(wt.weight) || wt.weight < 0.5 || wt.weight > 1.0)
        contract_error("ModelBuffer::push: weight ", wt.weight,
                       " outside [0.5, 1.0]");
    ring_.push(wt);
}

std::vector<WeightedTransition> ModelBuffer::sample_batch(std::size_t n, Rng& rng) const {
    if (ring_.size() == 0) contract_error("ModelBuffer::sample_batch: buffer is empty");
    if (n < 1) contract_error("ModelBuffer::sample_batch: n must be >= 1");
    std::vector<WeightedTransition> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(ring_.at(rng.index(ring_.size())));
    return out;
}

void ModelBuffer::dump_csv(const std::filesystem::path& path) const {
    std::ofstream f(path);
    if (!f) runtime_fail("ModelBuffer::dump_csv: cannot open ", path.string());
    write_header(f, state_dim_, action_dim_, true);
    char buf[32];
    for (std::size_t i = 0; i < ring_.size(); ++i) {
        write_row(f, ring_.at(i).transition);
        std::snprintf(buf, sizeof(buf), "%.17g", ring_.at(i).weight);
        f << ',' << buf << '\n';
    }
}

}  // namespace meee
