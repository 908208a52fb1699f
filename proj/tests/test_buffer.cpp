#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "meee/buffer.hpp"

using namespace meee;

namespace {

Transition make_transition(double tag) {
    Transition t;
    t.s = Eigen::Vector2d(tag, 0.0);
    t.a = Eigen::Vector2d(0.1, -0.1);
    t.r = -tag;
    t.s_next = Eigen::Vector2d(tag + 1.0, 0.0);
    t.done = false;
    return t;
}

}  // namespace

TEST_CASE("push grows size until capacity, then evicts FIFO") {
    EnvBuffer buf(2, 2, 2);
    CHECK(buf.size() == 0);
    buf.push(make_transition(1));
    CHECK(buf.size() == 1);
    buf.push(make_transition(2));
    buf.push(make_transition(3));
    CHECK(buf.size() == 2);
    CHECK(buf.at(0).s(0) == 2.0);
    CHECK(buf.at(1).s(0) == 3.0);
}

TEST_CASE("iteration yields the last min(pushes, capacity) items in order") {
    EnvBuffer buf(5, 2, 2);
    for (int i = 0; i < 13; ++i) buf.push(make_transition(i));
    CHECK(buf.size() == 5);
    for (int i = 0; i < 5; ++i) CHECK(buf.at(i).s(0) == double(8 + i));
}

TEST_CASE("push validates dimensions and finiteness") {
    EnvBuffer buf(4, 2, 2);
    Transition t = make_transition(1);
    t.a = Eigen::Vector3d(0, 0, 0);
    CHECK_THROWS_AS(buf.push(t), std::invalid_argument);
    t = make_transition(1);
    t.r = std::numeric_limits<double>::infinity();
    CHECK_THROWS_WITH_AS(buf.push(t), doctest::Contains("non-finite"),
                         std::invalid_argument);
}

TEST_CASE("model buffer enforces the weight range") {
    ModelBuffer buf(4, 2, 2);
    buf.push({make_transition(1), 0.5});
    buf.push({make_transition(2), 1.0});
    CHECK(buf.size() == 2);
    CHECK_THROWS_WITH_AS(buf.push({make_transition(3), 1.2}),
                         doctest::Contains("outside [0.5, 1.0]"),
                         std::invalid_argument);
    CHECK_THROWS_AS(buf.push({make_transition(3), 0.49}), std::invalid_argument);
    CHECK_THROWS_AS(buf.push({make_transition(3), std::nan("")}),
                    std::invalid_argument);
}

TEST_CASE("sampling: single-element buffer repeats, same seed same batch") {
    EnvBuffer buf(4, 2, 2);
    buf.push(make_transition(7));
    Rng rng(1);
    const auto batch = buf.sample_batch(3, rng);
    REQUIRE(batch.size() == 3);
    for (const auto& t : batch) CHECK(t.s(0) == 7.0);

    for (int i = 0; i < 10; ++i) buf.push(make_transition(i));
    Rng a(42), b(42);
    const auto ba = buf.sample_batch(6, a);
    const auto bb = buf.sample_batch(6, b);
    for (std::size_t i = 0; i < ba.size(); ++i) CHECK(ba[i].s(0) == bb[i].s(0));
}

TEST_CASE("sampling errors: empty buffer and n = 0") {
    EnvBuffer buf(4, 2, 2);
    Rng rng(1);
    CHECK_THROWS_WITH_AS(buf.sample_batch(1, rng), doctest::Contains("empty"),
                         std::invalid_argument);
    buf.push(make_transition(1));
    CHECK_THROWS_AS(buf.sample_batch(0, rng), std::invalid_argument);
}

TEST_CASE("sample_states returns only s fields; m = 0 is fine") {
    EnvBuffer buf(4, 2, 2);
    Rng rng(3);
    CHECK(buf.sample_states(0, rng).empty());
    buf.push(make_transition(5));  // s = (5, 0), s_next = (6, 0)
    const auto states = buf.sample_states(50, rng);
    for (const auto& s : states) CHECK(s(0) == 5.0);

    Rng a(9), b(9);
    const auto sa = buf.sample_states(4, a);
    const auto sb = buf.sample_states(4, b);
    for (std::size_t i = 0; i < sa.size(); ++i)
        CHECK((sa[i] - sb[i]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sampling is uniform: 1e5 draws over 1000 items within 5 sigma") {
    EnvBuffer buf(1000, 2, 2);
    for (int i = 0; i < 1000; ++i) buf.push(make_transition(i));
    Rng rng(12345);
    std::vector<int> counts(1000, 0);
    const int n = 100000;
    const auto batch = buf.sample_batch(n, rng);
    for (const auto& t : batch) counts[static_cast<int>(t.s(0))]++;

    const double p = 1.0 / 1000.0;
    const double sigma = std::sqrt(n * p * (1.0 - p));
    for (int c : counts) CHECK(std::abs(c - n * p) <= 5.0 * sigma);
}

TEST_CASE("dump writes one row per element with the documented header") {
    const auto path = std::filesystem::temp_directory_path() / "meee_buf_dump.csv";
    ModelBuffer buf(8, 2, 2);
    for (int i = 0; i < 3; ++i) buf.push({make_transition(i), 0.75});
    buf.dump_csv(path);

    std::ifstream f(path);
    std::string line;
    std::getline(f, line);
    CHECK(line == "s0,s1,a0,a1,r,s_next0,s_next1,done,weight");
    int rows = 0;
    while (std::getline(f, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 3);
    std::filesystem::remove(path);
}
