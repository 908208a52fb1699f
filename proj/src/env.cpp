#include "meee/env.hpp"

#include <cmath>

#include "meee/check.hpp"

namespace meee {

namespace {

constexpr double kPi = 3.14159265358979323846;

void check_state(const EnvSpec& spec, const Eigen::VectorXd& s, const char* who) {
    if (s.size() != spec.state_dim)
        contract_error(who, ": state size ", s.size(), " != state_dim ",
                       spec.state_dim);
    if (!s.allFinite()) contract_error(who, ": non-finite state entry");
}

void check_action(const EnvSpec& spec, const Eigen::VectorXd& a, const char* who) {
    if (a.size() != spec.action_dim)
        contract_error(who, ": action size ", a.size(), " != action_dim ",
                       spec.action_dim);
    if (!a.allFinite()) contract_error(who, ": non-finite action entry");
    for (int i = 0; i < spec.action_dim; ++i) {
        if (a(i) < spec.action_low(i) || a(i) > spec.action_high(i))
            contract_error(who, ": action[", i, "] = ", a(i), " outside box [",
                           spec.action_low(i), ", ", spec.action_high(i),
                           "]; clip before stepping");
    }
}

}  // namespace

LqrEnv::LqrEnv()
    : LqrEnv(Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(2, 2),
             Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(2, 2),
             1.0, 200) {}

LqrEnv::LqrEnv(Eigen::MatrixXd A, Eigen::MatrixXd B, Eigen::MatrixXd Q,
               Eigen::MatrixXd R, double action_bound, int max_episode_steps)
    : A_(std::move(A)), B_(std::move(B)), Q_(std::move(Q)), R_(std::move(R)) {
    const int n = static_cast<int>(A_.rows());
    const int m = static_cast<int>(B_.cols());
    if (A_.cols() != n || B_.rows() != n || Q_.rows() != n || Q_.cols() != n ||
        R_.rows() != m || R_.cols() != m)
        contract_error("LqrEnv: inconsistent matrix shapes");
    if (!Q_.isApprox(Q_.transpose(), 1e-12) || !R_.isApprox(R_.transpose(), 1e-12))
        contract_error("LqrEnv: Q and R must be symmetric");
    if (action_bound <= 0.0) contract_error("LqrEnv: action bound must be positive");
    spec_.state_dim = n;
    spec_.action_dim = m;
    spec_.action_low = Eigen::VectorXd::Constant(m, -action_bound);
    spec_.action_high = Eigen::VectorXd::Constant(m, action_bound);
    spec_.max_episode_steps = max_episode_steps;
    spec_.has_termination = false;
}

Eigen::VectorXd LqrEnv::reset(Rng& rng) const {
    Eigen::VectorXd s(spec_.state_dim);
    for (int i = 0; i < spec_.state_dim; ++i) s(i) = rng.uniform(-1.0, 1.0);
    return s;
}

StepResult LqrEnv::step(const Eigen::VectorXd& s, const Eigen::VectorXd& a) const {
    check_state(spec_, s, "LqrEnv::step");
    check_action(spec_, a, "LqrEnv::step");
    StepResult out;
    out.s_next = A_ * s + B_ * a;
    out.r = -(s.dot(Q_ * s) + a.dot(R_ * a));
    out.done = false;
    return out;
}

bool LqrEnv::terminal(const Eigen::VectorXd& s) const {
    check_state(spec_, s, "LqrEnv::terminal");
    return false;
}

std::pair<double, double> LqrEnv::reward_bounds() const {
    // Reachable envelope over one episode: |s_i| grows by at most the largest
    // action push per step.
    const double a_max = spec_.action_high.cwiseAbs().maxCoeff();
    const double row_a = A_.cwiseAbs().rowwise().sum().maxCoeff();
    const double row_b = B_.cwiseAbs().rowwise().sum().maxCoeff();
    double s_max = 1.0;
    for (int t = 0; t < spec_.max_episode_steps; ++t)
        s_max = row_a * s_max + row_b * a_max;
    const double q_inf = Q_.cwiseAbs().rowwise().sum().maxCoeff();
    const double r_inf = R_.cwiseAbs().rowwise().sum().maxCoeff();
    const double lo = -(spec_.state_dim * q_inf * s_max * s_max +
                        spec_.action_dim * r_inf * a_max * a_max);
    return {lo, 0.0};
}

PendulumEnv::PendulumEnv() {
    spec_.state_dim = 3;
    spec_.action_dim = 1;
    spec_.action_low = Eigen::VectorXd::Constant(1, -2.0);
    spec_.action_high = Eigen::VectorXd::Constant(1, 2.0);
    spec_.max_episode_steps = 200;
    spec_.has_termination = false;
}

Eigen::VectorXd PendulumEnv::reset(Rng& rng) const {
    const double th = rng.uniform(-kPi, kPi);
    const double thdot = rng.uniform(-1.0, 1.0);
    Eigen::VectorXd s(3);
    s << std::cos(th), std::sin(th), thdot;
    return s;
}

StepResult PendulumEnv::step(const Eigen::VectorXd& s, const Eigen::VectorXd& a) const {
    check_state(spec_, s, "PendulumEnv::step");
    check_action(spec_, a, "PendulumEnv::step");
    constexpr double g = 9.81, m = 1.0, l = 1.0, dt = 0.05, max_speed = 8.0;
    const double th = std::atan2(s(1), s(0));
    const double thdot = s(2);
    const double u = a(0);

    StepResult out;
    out.r = -(th * th + 0.1 * thdot * thdot + 0.001 * u * u);

    double new_thdot =
        thdot + (1.5 * g / l * std::sin(th) + 3.0 / (m * l * l) * u) * dt;
    new_thdot = std::clamp(new_thdot, -max_speed, max_speed);
    const double new_th = th + new_thdot * dt;

    out.s_next = Eigen::VectorXd(3);
    out.s_next << std::cos(new_th), std::sin(new_th), new_thdot;
    out.done = false;
    return out;
}

bool PendulumEnv::terminal(const Eigen::VectorXd& s) const {
    check_state(spec_, s, "PendulumEnv::terminal");
    return false;
}

std::pair<double, double> PendulumEnv::reward_bounds() const {
    return {-(kPi * kPi + 0.1 * 64.0 + 0.001 * 4.0), 0.0};
}

Env Env::make(const std::string& name) {
    if (name == "lqr") return Env(LqrEnv());
    if (name == "pendulum") return Env(PendulumEnv());
    contract_error("Env::make: unknown environment '", name,
                   "' (expected \"lqr\" or \"pendulum\")");
}

const EnvSpec& Env::spec() const {
    return std::visit([](const auto& e) -> const EnvSpec& { return e.spec(); }, impl_);
}

Eigen::VectorXd Env::reset(Rng& rng) const {
    return std::visit([&](const auto& e) { return e.reset(rng); }, impl_);
}

StepResult Env::step(const Eigen::VectorXd& s, const Eigen::VectorXd& a) const {
    return std::visit([&](const auto& e) { return e.step(s, a); }, impl_);
}

bool Env::terminal(const Eigen::VectorXd& s) const {
    return std::visit([&](const auto& e) { return e.terminal(s); }, impl_);
}

std::pair<double, double> Env::reward_bounds() const {
    return std::visit([](const auto& e) { return e.reward_bounds(); }, impl_);
}

bool termination_predicate(const Env& env, const Eigen::VectorXd& state) {
    return env.terminal(state);
}

RiccatiSolution lqr_optimal_value(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                  const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                                  double gamma) {
    if (gamma <= 0.0 || gamma >= 1.0)
        contract_error("lqr_optimal_value: gamma must lie in (0,1), got ", gamma);
    const auto dare_rhs = [&](const Eigen::MatrixXd& P) {
        const Eigen::MatrixXd BtPB = R + gamma * B.transpose() * P * B;
        const Eigen::MatrixXd BtPA = B.transpose() * P * A;
        return Eigen::MatrixXd(Q + gamma * A.transpose() * P * A -
                               gamma * gamma * A.transpose() * P * B *
                                   BtPB.ldlt().solve(BtPA));
    };

    Eigen::MatrixXd P = Q;
    constexpr std::size_t max_iters = 1000000;
    constexpr double tol = 1e-10;
    RiccatiSolution sol;
    for (std::size_t it = 1; it <= max_iters; ++it) {
        Eigen::MatrixXd P_next = dare_rhs(P);
        const double diff = (P_next - P).cwiseAbs().maxCoeff();
        P = std::move(P_next);
        if (diff < tol) {
            sol.iterations = it;
            sol.value = P;
            sol.residual = (P - dare_rhs(P)).cwiseAbs().maxCoeff();
            if (sol.residual > 1e-9)
                runtime_fail("lqr_optimal_value: converged iterate has residual ",
                             sol.residual, " > 1e-9");
            const Eigen::MatrixXd BtPB = R + gamma * B.transpose() * P * B;
            sol.gain = gamma * BtPB.ldlt().solve(B.transpose() * P * A);
            return sol;
        }
    }
    runtime_fail("lqr_optimal_value: no convergence after ", max_iters, " iterations");
}

double lqr_expected_optimal_return(const RiccatiSolution& sol) {
    return -sol.value.trace() / 3.0;
}

}  // namespace meee
