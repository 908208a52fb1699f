#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <variant>

#include "meee/rng.hpp"

namespace meee {

struct EnvSpec {
    int state_dim = 0;
    int action_dim = 0;
    Eigen::VectorXd action_low;
    Eigen::VectorXd action_high;
    int max_episode_steps = 200;
    bool has_termination = false;
};

/// One real environment step.
struct Transition {
    Eigen::VectorXd s;
    Eigen::VectorXd a;
    double r = 0.0;
    Eigen::VectorXd s_next;
    bool done = false;
};

struct StepResult {
    Eigen::VectorXd s_next;
    double r = 0.0;
    bool done = false;
};

// Discrete-time point mass: s' = A s + B a, r = -(s'Qs + a'Ra).
// Defaults to A = B = Q = R = I with 2-dim state/action, actions in [-1,1],
// resets uniform in [-1,1] per dimension.
class LqrEnv {
  public:
    LqrEnv();
    LqrEnv(Eigen::MatrixXd A, Eigen::MatrixXd B, Eigen::MatrixXd Q, Eigen::MatrixXd R,
           double action_bound, int max_episode_steps);

    const EnvSpec& spec() const { return spec_; }
    Eigen::VectorXd reset(Rng& rng) const;
    StepResult step(const Eigen::VectorXd& s, const Eigen::VectorXd& a) const;
    bool terminal(const Eigen::VectorXd& s) const;
    std::pair<double, double> reward_bounds() const;

    const Eigen::MatrixXd& A() const { return A_; }
    const Eigen::MatrixXd& B() const { return B_; }
    const Eigen::MatrixXd& Q() const { return Q_; }
    const Eigen::MatrixXd& R() const { return R_; }

  private:
    Eigen::MatrixXd A_, B_, Q_, R_;
    EnvSpec spec_;
};

// Torque-limited swing-up with the classic constants: m = 1, l = 1, g = 9.81,
// dt = 0.05, torque in [-2, 2], angular velocity clipped to [-8, 8].
// Observation is (cos th, sin th, thdot); th = 0 is upright.
// r = -(th^2 + 0.1 thdot^2 + 0.001 u^2) with th normalized to (-pi, pi].
class PendulumEnv {
  public:
    PendulumEnv();

    const EnvSpec& spec() const { return spec_; }
    Eigen::VectorXd reset(Rng& rng) const;
    StepResult step(const Eigen::VectorXd& s, const Eigen::VectorXd& a) const;
    bool terminal(const Eigen::VectorXd& s) const;
    std::pair<double, double> reward_bounds() const;

  private:
    EnvSpec spec_;
};

// Value-type dispatch over the built-in tasks; cheap to copy, no shared state.
class Env {
  public:
    static Env make(const std::string& name);

    explicit Env(LqrEnv e) : impl_(std::move(e)) {}
    explicit Env(PendulumEnv e) : impl_(std::move(e)) {}

    const EnvSpec& spec() const;
    Eigen::VectorXd reset(Rng& rng) const;
    StepResult step(const Eigen::VectorXd& s, const Eigen::VectorXd& a) const;
    bool terminal(const Eigen::VectorXd& s) const;
    std::pair<double, double> reward_bounds() const;

    const LqrEnv* as_lqr() const { return std::get_if<LqrEnv>(&impl_); }

  private:
    std::variant<LqrEnv, PendulumEnv> impl_;
};

// Pure function of state; errors on non-finite input rather than returning false.
bool termination_predicate(const Env& env, const Eigen::VectorXd& state);

struct RiccatiSolution {
    Eigen::MatrixXd gain;    // optimal policy is a = -gain * s
    Eigen::MatrixXd value;   // V(s) = -s' value s for the reward formulation
    double residual = 0.0;
    std::size_t iterations = 0;
};

// Discounted discrete-time Riccati fixed point, iterated to 1e-10 with the
// residual verified below 1e-9. Throws after 1e6 iterations without
// convergence.
RiccatiSolution lqr_optimal_value(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                  const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                                  double gamma);

// Expected optimal return -E[s0' P s0] under the uniform [-1,1] reset
// distribution of LqrEnv: -(1/3) trace(P).
double lqr_expected_optimal_return(const RiccatiSolution& sol);

}  // namespace meee
