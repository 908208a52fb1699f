#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "meee/dyn_model.hpp"
#include "meee/env.hpp"
#include "oracles.hpp"

using namespace meee;

namespace {

Ensemble small_ensemble(int members = 3, std::uint64_t seed = 7,
                        const std::vector<int>& hidden = {32, 32}) {
    return make_ensemble(2, 2, members, hidden, Activation::relu, seed,
                         ModelLoss::mse, true);
}

// s' = s, r = 0 over random states; memorizable by construction.
EnvBuffer constant_dynamics_buffer(int n, std::uint64_t seed) {
    EnvBuffer buf(n, 2, 2);
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        Transition t;
        t.s = Eigen::Vector2d(rng.uniform(-1, 1), rng.uniform(-1, 1));
        t.a = Eigen::Vector2d(rng.uniform(-1, 1), rng.uniform(-1, 1));
        t.r = 0.0;
        t.s_next = t.s;
        t.done = false;
        buf.push(t);
    }
    return buf;
}

// One rollout collection shuffled into a train/held-out split.
void lqr_split(int n_train, int n_held, std::uint64_t seed, EnvBuffer& train,
               EnvBuffer& held) {
    const Env env = Env::make("lqr");
    Rng rng(seed);
    std::vector<Transition> all;
    Eigen::VectorXd s = env.reset(rng);
    for (int i = 0; i < n_train + n_held; ++i) {
        Eigen::VectorXd a(2);
        a << rng.uniform(-1, 1), rng.uniform(-1, 1);
        const StepResult sr = env.step(s, a);
        all.push_back({s, a, sr.r, sr.s_next, false});
        s = sr.s_next;
        if ((i + 1) % env.spec().max_episode_steps == 0) s = env.reset(rng);
    }
    std::vector<std::size_t> idx(all.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.index(i)]);
    for (int i = 0; i < n_train; ++i) train.push(all[idx[i]]);
    for (int i = 0; i < n_held; ++i) held.push(all[idx[n_train + i]]);
}

double heldout_mse(const Ensemble& e, const EnvBuffer& held) {
    double total = 0.0;
    for (std::size_t i = 0; i < held.size(); ++i) {
        const Transition& t = held.at(i);
        Eigen::VectorXd target(e.target_dim());
        target << (t.s_next - t.s), t.r;
        for (int m = 0; m < e.size(); ++m)
            total += (predict_mean(e, m, t.s, t.a) - target).squaredNorm();
    }
    return total / (held.size() * e.size());
}

}  // namespace

TEST_CASE("members differ at initialization, pairwise") {
    const Ensemble e = small_ensemble(4);
    for (int i = 0; i < e.size(); ++i) {
        for (int j = i + 1; j < e.size(); ++j) {
            CHECK(e.members[i].init_seed != e.members[j].init_seed);
            const Eigen::VectorXd pi = flatten_params(e.members[i].trunk);
            const Eigen::VectorXd pj = flatten_params(e.members[j].trunk);
            CHECK((pi - pj).cwiseAbs().maxCoeff() > 0.0);
        }
    }
    CHECK_THROWS_AS(make_ensemble(2, 2, 1, {8}, Activation::relu, 0, ModelLoss::mse,
                                  true),
                    std::invalid_argument);
}

TEST_CASE("predict: zero noise reduces to the mean head plus state offset") {
    const Ensemble e = small_ensemble();
    const Eigen::VectorXd s = Eigen::Vector2d(0.3, -0.2);
    const Eigen::VectorXd a = Eigen::Vector2d(0.1, 0.4);
    const auto [s_next, r] =
        predict_with_noise(e, 0, s, a, Eigen::VectorXd::Zero(e.target_dim()));
    const Eigen::VectorXd mean = predict_mean(e, 0, s, a);
    CHECK((s_next - (s + mean.head(2))).cwiseAbs().maxCoeff() == 0.0);
    CHECK(r == mean(2));

    // mean head on a fresh ensemble with the identity normalizer is just the net
    const Eigen::VectorXd z2 = Eigen::VectorXd::Zero(2);
    const Eigen::VectorXd direct =
        net_forward(e.members[0].trunk, Eigen::VectorXd::Zero(4)).head(3);
    CHECK((predict_mean(e, 0, z2, z2) - direct).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("predict: identical rng states give identical samples") {
    const Ensemble e = small_ensemble();
    Rng a(99), b(99);
    const auto ra = predict(e, 1, Eigen::Vector2d(0.1, 0.2), Eigen::Vector2d(0, 0), a);
    const auto rb = predict(e, 1, Eigen::Vector2d(0.1, 0.2), Eigen::Vector2d(0, 0), b);
    CHECK((ra.first - rb.first).cwiseAbs().maxCoeff() == 0.0);
    CHECK(ra.second == rb.second);
}

TEST_CASE("predict: sample mean concentrates on the predicted mean") {
    const Ensemble e = small_ensemble();
    const Eigen::VectorXd s = Eigen::Vector2d(0.5, -0.5);
    const Eigen::VectorXd a = Eigen::Vector2d(-0.3, 0.3);
    const GaussianPrediction dist = predict_dist(e, 2, s, a);

    const int n = 10000;
    Rng rng(2024);
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(3);
    for (int i = 0; i < n; ++i) {
        const auto [s_next, r] = predict(e, 2, s, a, rng);
        acc.head(2) += s_next - s;
        acc(2) += r;
    }
    acc /= n;
    for (int d = 0; d < 3; ++d) {
        const double tol = 4.0 * std::sqrt(dist.variance(d)) / std::sqrt(double(n));
        CHECK(std::abs(acc(d) - dist.mean(d)) <= tol);
    }
}

TEST_CASE("variance: identical members give exactly zero") {
    Ensemble e = small_ensemble();
    const Eigen::VectorXd p0 = flatten_params(e.members[0].trunk);
    for (auto& m : e.members) unflatten_params(m.trunk, p0);
    Rng rng(5);
    for (int i = 0; i < 20; ++i) {
        const Eigen::VectorXd s = Eigen::Vector2d(rng.uniform(-2, 2), rng.uniform(-2, 2));
        const Eigen::VectorXd a = Eigen::Vector2d(rng.uniform(-1, 1), rng.uniform(-1, 1));
        CHECK(ensemble_variance(e, s, a) == 0.0);
    }
}

TEST_CASE("variance: hand-computed 1-dim case and permutation symmetry") {
    std::vector<Eigen::VectorXd> means = {Eigen::VectorXd::Constant(1, 1.0),
                                          Eigen::VectorXd::Constant(1, 2.0),
                                          Eigen::VectorXd::Constant(1, 3.0)};
    const Eigen::VectorXd unit_scale = Eigen::VectorXd::Ones(1);
    CHECK(variance_of_means(means, unit_scale) == doctest::Approx(1.0).epsilon(1e-15));

    std::swap(means[0], means[2]);
    CHECK(variance_of_means(means, unit_scale) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("variance: matches the two-pass oracle on 1000 random member sets") {
    Rng rng(31);
    for (int trial = 0; trial < 1000; ++trial) {
        const int members = 2 + int(rng.index(6));
        const int dims = 1 + int(rng.index(4));
        std::vector<Eigen::VectorXd> means;
        for (int m = 0; m < members; ++m) {
            Eigen::VectorXd v(dims);
            for (int d = 0; d < dims; ++d) v(d) = rng.uniform(-5, 5);
            means.push_back(v);
        }
        Eigen::VectorXd scale(dims);
        for (int d = 0; d < dims; ++d) scale(d) = rng.uniform(0.1, 3.0);
        const double lib = variance_of_means(means, scale);
        const double ref = oracles::two_pass_variance_scalarized(means, scale);
        CHECK(std::abs(lib - ref) <= 1e-12 * std::max(1.0, std::abs(ref)));
        CHECK(lib >= 0.0);
    }
}

TEST_CASE("weight transform: endpoints, spot value, monotonicity") {
    CHECK(uncertainty_weight(0.0, 20.0) == 1.0);
    CHECK(uncertainty_weight(1e9, 20.0) == 0.5);

    const double w = uncertainty_weight(0.1, 20.0);
    const long double expected = 1.0L / (1.0L + std::exp(2.0L)) + 0.5L;
    CHECK(std::abs(w - double(expected)) < 1e-12);
    CHECK(w == doctest::Approx(0.6192029).epsilon(1e-6));

    Rng rng(8);
    for (int i = 0; i < 10000; ++i) {
        double v1 = rng.uniform(0.0, 10.0), v2 = rng.uniform(0.0, 10.0);
        if (v1 > v2) std::swap(v1, v2);
        CHECK(uncertainty_weight(v1, 20.0) >= uncertainty_weight(v2, 20.0));
    }

    CHECK_THROWS_AS(uncertainty_weight(-0.1, 20.0), std::invalid_argument);
    CHECK_THROWS_AS(uncertainty_weight(0.1, 0.0), std::invalid_argument);
}

TEST_CASE("training: fits constant dynamics to below 1e-2") {
    EnvBuffer buf = constant_dynamics_buffer(500, 404);
    Ensemble e = small_ensemble(3, 11);
    Rng rng(1);
    const auto traces = train_ensemble(e, buf, 200, 64, rng);

    for (int m = 0; m < e.size(); ++m) {
        double err = 0.0;
        for (std::size_t i = 0; i < buf.size(); ++i) {
            const Transition& t = buf.at(i);
            Eigen::VectorXd target(3);
            target << 0.0, 0.0, 0.0;
            err += (predict_mean(e, m, t.s, t.a) - target).squaredNorm();
        }
        err /= buf.size();
        CHECK(err < 1e-2);
        // smoke: the loss trace has settled well below where it started
        CHECK(traces[m].back() < traces[m].front());
    }
}

TEST_CASE("training: deterministic given seeds, members independent") {
    EnvBuffer buf = constant_dynamics_buffer(200, 55);

    Ensemble a = small_ensemble(2, 77, {16, 16});
    Ensemble b = small_ensemble(2, 77, {16, 16});
    Rng ra(5), rb(5);
    train_ensemble(a, buf, 10, 32, ra);
    train_ensemble(b, buf, 10, 32, rb);
    for (int m = 0; m < 2; ++m) {
        const Eigen::VectorXd pa = flatten_params(a.members[m].trunk);
        const Eigen::VectorXd pb = flatten_params(b.members[m].trunk);
        CHECK((pa - pb).cwiseAbs().maxCoeff() == 0.0);
    }

    // Corrupting member 0 before training must not change member 1's outcome.
    Ensemble c = small_ensemble(2, 77, {16, 16});
    for (auto& w : c.members[0].trunk.weights) w.array() += 0.25;
    Rng rc(5);
    train_ensemble(c, buf, 10, 32, rc);
    const Eigen::VectorXd p1a = flatten_params(a.members[1].trunk);
    const Eigen::VectorXd p1c = flatten_params(c.members[1].trunk);
    CHECK((p1a - p1c).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("training: parallel member training equals sequential") {
    EnvBuffer buf = constant_dynamics_buffer(200, 56);
    Ensemble a = small_ensemble(4, 13, {16, 16});
    Ensemble b = small_ensemble(4, 13, {16, 16});
    Rng ra(9), rb(9);
    train_ensemble(a, buf, 8, 32, ra, 1e-3, 1);
    train_ensemble(b, buf, 8, 32, rb, 1e-3, 4);
    for (int m = 0; m < 4; ++m) {
        const Eigen::VectorXd pa = flatten_params(a.members[m].trunk);
        const Eigen::VectorXd pb = flatten_params(b.members[m].trunk);
        CHECK((pa - pb).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("training: held-out error on real transitions drops at least 10x") {
    EnvBuffer train(1600, 2, 2), held(400, 2, 2);
    lqr_split(1600, 400, 500, train, held);

    Ensemble e = small_ensemble(2, 19);
    set_normalization_from(e, train);
    const double before = heldout_mse(e, held);
    Rng rng(3);
    train_ensemble(e, train, 60, 128, rng);
    const double after = heldout_mse(e, held);
    CHECK(after * 10.0 <= before);
}

TEST_CASE("training: errors on insufficient data") {
    EnvBuffer buf = constant_dynamics_buffer(10, 57);
    Ensemble e = small_ensemble(2, 3, {8});
    Rng rng(1);
    CHECK_THROWS_AS(train_ensemble(e, buf, 1, 64, rng), std::invalid_argument);
}

TEST_CASE("training: uncertainty at seen points shrinks") {
    EnvBuffer buf = constant_dynamics_buffer(400, 58);
    Ensemble e = small_ensemble(3, 23);
    set_normalization_from(e, buf);

    std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> probes;
    for (int i = 0; i < 100; ++i)
        probes.emplace_back(buf.at(i).s, buf.at(i).a);

    double before = 0.0;
    for (const auto& [s, a] : probes) before += ensemble_variance(e, s, a);
    Rng rng(4);
    train_ensemble(e, buf, 150, 64, rng);
    double after = 0.0;
    for (const auto& [s, a] : probes) after += ensemble_variance(e, s, a);
    CHECK(after < before);
}

TEST_CASE("mse loss gradient matches finite differences") {
    Ensemble e = make_ensemble(2, 1, 2, {8, 8}, Activation::tanh, 31, ModelLoss::mse,
                               true);
    Rng rng(6);
    const int batch = 5;
    Eigen::MatrixXd x(3, batch), y(3, batch), z(3, batch);
    for (int j = 0; j < batch; ++j)
        for (int d = 0; d < 3; ++d) {
            x(d, j) = rng.uniform(-1, 1);
            y(d, j) = rng.uniform(-1, 1);
            z(d, j) = rng.normal();
        }

    for (ModelLoss kind : {ModelLoss::mse, ModelLoss::nll}) {
        const auto res = model_training_loss(e, 0, x, y, z, kind);
        const Eigen::VectorXd analytic = flatten_grads(e.members[0].trunk, res.grads);
        const Eigen::VectorXd numeric = oracles::fd_param_grads(
            e.members[0].trunk,
            [&] { return model_training_loss(e, 0, x, y, z, kind).loss; });
        CHECK(max_rel_error(analytic, numeric) < 1e-5);
    }
}
