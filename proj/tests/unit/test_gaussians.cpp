#include <cmath>
#include <random>

#include "doctest.h"
#include "dribo/gaussians.hpp"
#include "dribo/params.hpp"

using namespace dribo;
using namespace dribo::ndgrad;

namespace {

DiagGaussian make(std::vector<double> mean, std::vector<double> stddev) {
    return {Node::constant(Tensor::vector(std::move(mean))), Node::constant(Tensor::vector(std::move(stddev)))};
}

DiagGaussian random_gaussian(std::size_t rows, std::size_t dim, Rng& rng) {
    std::uniform_real_distribution<double> m(-2.0, 2.0);
    std::uniform_real_distribution<double> s(0.2, 2.0);
    Tensor mean({rows, dim});
    Tensor sd({rows, dim});
    for (auto& v : mean.storage()) v = m(rng);
    for (auto& v : sd.storage()) v = s(rng);
    return {Node::constant(mean), Node::constant(sd)};
}

}  // namespace

TEST_CASE("kl closed-form hand values") {
    const auto a = make({1.0}, {1.0});
    const auto b = make({0.0}, {1.0});
    CHECK(kl(a, a).item() == 0.0);
    CHECK(kl(a, b).item() == doctest::Approx(0.5).epsilon(1e-12));
    // log(1/2) + 4/2 - 1/2
    CHECK(kl(make({0.0}, {2.0}), b).item() == doctest::Approx(0.8068528194400546).epsilon(1e-12));
    CHECK(kl(b, make({0.0}, {2.0})).item() == doctest::Approx(0.3181471805599453).epsilon(1e-12));
}

TEST_CASE("skl hand values and symmetry") {
    const auto a = make({1.0}, {1.0});
    const auto b = make({0.0}, {1.0});
    CHECK(skl(a, a).item() == 0.0);
    CHECK(skl(a, b).item() == doctest::Approx(0.5).epsilon(1e-12));
    Rng rng(8);
    for (int trial = 0; trial < 200; ++trial) {
        const auto p = random_gaussian(2, 4, rng);
        const auto q = random_gaussian(2, 4, rng);
        const auto pq = skl(p, q).value().storage();
        const auto qp = skl(q, p).value().storage();
        CHECK(pq == qp);
        const auto k1 = kl(p, q).value().storage();
        const auto k2 = kl(q, p).value().storage();
        for (std::size_t r = 0; r < 2; ++r) {
            CHECK(pq[r] >= 0.0);
            CHECK(pq[r] == 0.5 * (k1[r] + k2[r]));
        }
    }
}

TEST_CASE("kl is non-negative on random pairs and zero on equal parameters") {
    Rng rng(9);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto p = random_gaussian(1, 3, rng);
        const auto q = random_gaussian(1, 3, rng);
        CHECK(kl(p, q).item() >= 0.0);
        CHECK(kl(p, p).item() == 0.0);
    }
}

TEST_CASE("rsample") {
    const auto d = make({0.5, -1.0}, {2.0, 3.0});
    CHECK(rsample(d, Tensor({2}, 0.0)).value().storage() == std::vector<double>{0.5, -1.0});
    CHECK(rsample(make({0.0}, {2.0}), Tensor::vector({1.0})).item() == 2.0);
    Node mean = Node::variable(Tensor::vector({0.1, 0.2, 0.3}));
    Node sd = Node::variable(Tensor::vector({1.0, 2.0, 0.5}));
    backward(sum(rsample({mean, sd}, Tensor::vector({0.3, -1.0, 2.0}))));
    CHECK(mean.grad().storage() == std::vector<double>{1, 1, 1});
    CHECK(sd.grad().storage() == std::vector<double>{0.3, -1.0, 2.0});
    CHECK_THROWS_AS(rsample(d, Tensor({3}, 0.0)), ShapeError);
}

TEST_CASE("log_prob hand values and dimension additivity") {
    const double half_log_2pi = -0.9189385332046727;
    CHECK(log_prob(make({0.3}, {1.0}), Node::constant(Tensor::vector({0.3}))).item() ==
          doctest::Approx(half_log_2pi).epsilon(1e-12));
    CHECK(log_prob(make({0.3}, {1.7}), Node::constant(Tensor::vector({2.0}))).item() ==
          doctest::Approx(log_prob(make({0.3}, {1.7}), Node::constant(Tensor::vector({0.3}))).item() - 0.5)
              .epsilon(1e-12));
    const auto d = make({0.1, -0.4}, {0.7, 1.3});
    const double joint = log_prob(d, Node::constant(Tensor::vector({0.5, 0.5}))).item();
    const double a = log_prob(make({0.1}, {0.7}), Node::constant(Tensor::vector({0.5}))).item();
    const double b = log_prob(make({-0.4}, {1.3}), Node::constant(Tensor::vector({0.5}))).item();
    CHECK(joint == doctest::Approx(a + b).epsilon(1e-12));
}

TEST_CASE("shape mismatches are rejected") {
    CHECK_THROWS_AS(kl(make({0.0}, {1.0}), make({0.0, 1.0}, {1.0, 1.0})), ShapeError);
    CHECK_THROWS_AS(log_prob(make({0.0}, {1.0}), Node::constant(Tensor::vector({1.0, 2.0}))), ShapeError);
}

TEST_CASE("from_raw respects the stddev floor") {
    const auto d = DiagGaussian::from_raw(Node::constant(Tensor({4}, 0.0)),
                                          Node::constant(Tensor::vector({-800.0, -50.0, 0.0, 3.0})));
    // softplus underflows to 0 for very negative raw values, leaving exactly the floor.
    for (double s : d.stddev.value().storage()) CHECK(s >= kStddevFloor);
    CHECK(d.stddev.value()[3] > kStddevFloor);
}

TEST_CASE("Monte-Carlo log-ratio average matches kl within three standard errors") {
    Rng rng(2024);
    for (int trial = 0; trial < 5; ++trial) {
        const auto p = random_gaussian(1, 3, rng);
        const auto q = random_gaussian(1, 3, rng);
        const std::size_t n = 100000;
        Tensor mean({n, 3});
        Tensor sd({n, 3});
        Tensor qm({n, 3});
        Tensor qs({n, 3});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < 3; ++k) {
                mean.at(i, k) = p.mean.value()[k];
                sd.at(i, k) = p.stddev.value()[k];
                qm.at(i, k) = q.mean.value()[k];
                qs.at(i, k) = q.stddev.value()[k];
            }
        const DiagGaussian pb{Node::constant(mean), Node::constant(sd)};
        const DiagGaussian qb{Node::constant(qm), Node::constant(qs)};
        const Node x = rsample(pb, standard_normal({n, 3}, rng));
        const auto ratio = sub(log_prob(pb, x), log_prob(qb, x)).value().storage();
        double s1 = 0.0, s2 = 0.0;
        for (double r : ratio) s1 += r;
        const double avg = s1 / static_cast<double>(n);
        for (double r : ratio) s2 += (r - avg) * (r - avg);
        const double se = std::sqrt(s2 / static_cast<double>(n - 1) / static_cast<double>(n));
        CHECK(std::abs(avg - kl(p, q).item()) < 3.0 * se);
    }
}

TEST_CASE("gradients of kl, skl and log_prob match finite differences") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const auto p = random_gaussian(2, 3, rng);
        const auto q = random_gaussian(2, 3, rng);
        const Tensor x = random_gaussian(2, 3, rng).mean.value();
        auto check_all = [&](auto fn) {
            CHECK(finite_diff_check([&](const Node& m) { return sum(fn(DiagGaussian{m, p.stddev}, q)); },
                                    p.mean.value(), 1e-5) < 1e-4);
            CHECK(finite_diff_check([&](const Node& s) { return sum(fn(DiagGaussian{p.mean, s}, q)); },
                                    p.stddev.value(), 1e-5) < 1e-4);
            CHECK(finite_diff_check([&](const Node& m) { return sum(fn(p, DiagGaussian{m, q.stddev})); },
                                    q.mean.value(), 1e-5) < 1e-4);
            CHECK(finite_diff_check([&](const Node& s) { return sum(fn(p, DiagGaussian{q.mean, s})); },
                                    q.stddev.value(), 1e-5) < 1e-4);
        };
        check_all([](const DiagGaussian& a, const DiagGaussian& b) { return kl(a, b); });
        check_all([](const DiagGaussian& a, const DiagGaussian& b) { return skl(a, b); });
        check_all([&](const DiagGaussian& a, const DiagGaussian&) { return log_prob(a, Node::constant(x)); });
        CHECK(finite_diff_check([&](const Node& v) { return sum(log_prob(p, v)); }, x, 1e-5) < 1e-4);
    }
}
