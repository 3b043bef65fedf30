#include <cmath>
#include <random>

#include "doctest.h"
#include "dribo/mi.hpp"
#include "dribo/oracle.hpp"

using namespace dribo;
using namespace dribo::ndgrad;

namespace {

Tensor uniform(const Shape& shape, double lo, double hi, Rng& rng) {
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor t(shape);
    for (auto& v : t.storage()) v = u(rng);
    return t;
}

Node eye(std::size_t d) {
    Tensor t({d, d}, 0.0);
    for (std::size_t i = 0; i < d; ++i) t.at(i, i) = 1.0;
    return Node::constant(t);
}

}  // namespace

TEST_CASE("score_matrix hand cases") {
    const Node s1 = Node::constant(Tensor::matrix({{1, 0}, {0, 1}}));
    const Node s2 = Node::constant(Tensor::matrix({{2, 0}, {0, 3}}));
    CHECK(score_matrix(s1, s2, eye(2)).value().storage() == std::vector<double>{2, 0, 0, 3});
    CHECK(score_matrix(s1, s1, eye(2)).value().storage() == std::vector<double>{1, 0, 0, 1});
    const Node z = score_matrix(s1, s2, Node::constant(Tensor({2, 2}, 0.0)));
    for (double v : z.value().storage()) CHECK(v == 0.0);
    const double r = 1.0 / std::sqrt(2.0);
    const Node rot = Node::constant(Tensor::matrix({{r, r}, {-r, r}}));
    const Node g = score_matrix(rot, rot, eye(2));
    CHECK(g.value()[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(std::abs(g.value()[1]) < 1e-15);
    CHECK_THROWS_AS(score_matrix(s1, Node::constant(Tensor({3, 2})), eye(2)), ShapeError);
    CHECK_THROWS_AS(score_matrix(s1, s2, eye(3)), ShapeError);
}

TEST_CASE("infonce hand values") {
    CHECK(infonce(Node::constant(Tensor({4, 4}, 0.0))).item() == 0.0);
    CHECK(infonce(Node::constant(Tensor({5, 5}, 3.7))).item() == 0.0);
    Tensor sat({4, 4}, -40.0);
    for (std::size_t i = 0; i < 4; ++i) sat.at(i, i) = 40.0;
    CHECK(std::abs(infonce(Node::constant(sat)).item() - 1.3862943611198906) < 1e-10);
    // 1 - log((e + 1) / 2)
    CHECK(infonce(Node::constant(Tensor::matrix({{1, 0}, {0, 1}}))).item() ==
          doctest::Approx(0.3798854930417225).epsilon(1e-12));
    CHECK_THROWS_AS(infonce(Node::constant(Tensor({1, 1}, 0.0))), ContractError);
    CHECK_THROWS_AS(infonce(Node::constant(Tensor({2, 3}, 0.0))), ShapeError);
}

TEST_CASE("infonce never exceeds log M") {
    Rng rng(100);
    std::uniform_int_distribution<std::size_t> msize(2, 12);
    std::uniform_real_distribution<double> scale(0.1, 60.0);
    for (int trial = 0; trial < 10000; ++trial) {
        const std::size_t m = msize(rng);
        const double s = scale(rng);
        Tensor t = uniform({m, m}, -s, s, rng);
        if (trial % 3 == 0)
            for (std::size_t i = 0; i < m; ++i) t.at(i, i) += s;  // favor positives
        CHECK(infonce(Node::constant(t)).item() <= std::log(static_cast<double>(m)));
    }
}

TEST_CASE("raising a positive score never lowers the estimate") {
    Rng rng(101);
    for (int trial = 0; trial < 200; ++trial) {
        const Tensor t = uniform({5, 5}, -3, 3, rng);
        Node x = Node::variable(t);
        backward(infonce(x));
        for (std::size_t i = 0; i < 5; ++i) {
            CHECK(x.grad().at(i, i) >= 0.0);
            Tensor up = t;
            up.at(i, i) += 1e-4;
            CHECK(infonce(Node::constant(up)).item() >= infonce(Node::constant(t)).item());
        }
    }
}

TEST_CASE("adding a constant to one row leaves the estimate unchanged") {
    Rng rng(102);
    std::uniform_int_distribution<int> grid(-64, 64);
    for (int trial = 0; trial < 200; ++trial) {
        // Dyadic scores and integer shifts keep every subtraction exact.
        Tensor t({4, 4});
        for (auto& v : t.storage()) v = grid(rng) / 8.0;
        Tensor shifted = t;
        const std::size_t row = static_cast<std::size_t>(trial % 4);
        const double c = grid(rng);
        for (std::size_t j = 0; j < 4; ++j) shifted.at(row, j) += c;
        CHECK(infonce(Node::constant(shifted)).item() == infonce(Node::constant(t)).item());

        const Tensor r = uniform({4, 4}, -3, 3, rng);
        Tensor rs = r;
        const double rc = std::uniform_real_distribution<double>(-5, 5)(rng);
        for (std::size_t j = 0; j < 4; ++j) rs.at(row, j) += rc;
        CHECK(std::abs(infonce(Node::constant(rs)).item() - infonce(Node::constant(r)).item()) < 1e-12);
    }
}

TEST_CASE("infonce and score gradients match finite differences") {
    Rng rng(103);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor s1 = uniform({6, 3}, -1, 1, rng);
        const Tensor s2 = uniform({6, 3}, -1, 1, rng);
        const Tensor w = uniform({3, 3}, -2, 2, rng);
        CHECK(finite_diff_check([&](const Node& x) { return infonce(score_matrix(x, Node::constant(s2), Node::constant(w))); }, s1, 1e-5) < 1e-4);
        CHECK(finite_diff_check([&](const Node& x) { return infonce(score_matrix(Node::constant(s1), x, Node::constant(w))); }, s2, 1e-5) < 1e-4);
        CHECK(finite_diff_check([&](const Node& x) { return infonce(score_matrix(Node::constant(s1), Node::constant(s2), x)); }, w, 1e-5) < 1e-4);
    }
}

TEST_CASE("trained critic approaches the true information of a one-bit source from below") {
    // Two views of a fair bit X embedded in R^4 with small independent noise.
    JointTable joint({"x1", "x2"}, {2, 2});
    joint.add({0, 0}, 0.5);
    joint.add({1, 1}, 0.5);
    const double truth = mutual_info(joint, {"x1"}, {"x2"});
    CHECK(truth == doctest::Approx(std::log(2.0)).epsilon(1e-15));

    Rng rng(104);
    const std::size_t d = 4, m = 64;
    const Tensor proto = uniform({2, d}, -1, 1, rng);
    std::bernoulli_distribution bit(0.5);
    std::normal_distribution<double> noise(0.0, 0.05);
    auto draw = [&](Tensor& a, Tensor& b) {
        a = Tensor({m, d});
        b = Tensor({m, d});
        for (std::size_t i = 0; i < m; ++i) {
            const std::size_t x = bit(rng) ? 1 : 0;
            for (std::size_t k = 0; k < d; ++k) {
                a.at(i, k) = proto.at(x, k) + noise(rng);
                b.at(i, k) = proto.at(x, k) + noise(rng);
            }
        }
    };
    BilinearCritic critic(d, rng);
    Adam opt(critic.params().nodes(), {.lr = 0.05});
    for (int step = 0; step < 400; ++step) {
        Tensor a, b;
        draw(a, b);
        opt.zero_grads();
        backward(neg(infonce(score_matrix(Node::constant(a), Node::constant(b), critic))));
        opt.step();
    }
    double avg = 0.0;
    const int evals = 200;
    for (int e = 0; e < evals; ++e) {
        Tensor a, b;
        draw(a, b);
        avg += infonce(score_matrix(Node::constant(a), Node::constant(b), critic)).item() / evals;
    }
    MESSAGE("estimate " << avg << " vs true " << truth);
    CHECK(avg < truth);
    CHECK(avg > truth - 0.1);
}
