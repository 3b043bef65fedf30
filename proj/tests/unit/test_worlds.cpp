#include <cmath>
#include <numbers>
#include <set>

#include "doctest.h"
#include "dribo/worlds.hpp"

using namespace dribo;

namespace {

std::vector<double> one_hot(std::size_t k, std::size_t n) {
    std::vector<double> a(n, 0.0);
    a[k] = 1.0;
    return a;
}

}  // namespace

TEST_CASE("frames have the render size and unit-range pixels") {
    for (const auto& cfg : {DistractorConfig{}, DistractorConfig::small(), DistractorConfig::discrete4()}) {
        DistractorControl env(cfg);
        Rng rng(2);
        auto f = env.reset(BackgroundMode::train, rng);
        const std::vector<double> a = cfg.discrete_actions ? one_hot(1, cfg.discrete_count) : std::vector<double>{0.3};
        for (int t = 0; t < 10; ++t) {
            CHECK(f.size() == cfg.render_size * cfg.render_size);
            for (double p : f) {
                CHECK(p >= 0.0);
                CHECK(p <= 1.0);
            }
            f = env.step(a).observation;
        }
    }
}

TEST_CASE("reward is zero hanging down and one pointing up") {
    CHECK(DistractorControl::reward_for(0.0) == 0.0);
    CHECK(DistractorControl::reward_for(std::numbers::pi) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(DistractorControl::reward_for(std::numbers::pi / 2) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("one step follows semi-implicit Euler") {
    DistractorConfig cfg;
    DistractorControl env(cfg);
    Rng rng(4);
    env.reset(BackgroundMode::train, rng);
    env.set_physics(0.7, -0.3);
    const double u = 0.4;
    const auto r = env.step(std::vector<double>{u});
    const double v = -0.3 + cfg.dt * (-cfg.gravity * std::sin(0.7) - cfg.damping * -0.3 + cfg.max_torque * u);
    const double a = 0.7 + cfg.dt * v;
    CHECK(env.velocity() == doctest::Approx(v).epsilon(1e-14));
    CHECK(env.angle() == doctest::Approx(a).epsilon(1e-14));
    CHECK(r.reward == doctest::Approx(0.5 * (1.0 - std::cos(a))).epsilon(1e-14));
}

TEST_CASE("angle stays wrapped to one turn") {
    DistractorControl env(DistractorConfig{});
    Rng rng(1);
    env.reset(BackgroundMode::train, rng);
    for (int t = 0; t < 50; ++t) {
        env.step(std::vector<double>{1.0});
        CHECK(std::abs(env.angle()) <= std::numbers::pi + 1e-12);
    }
}

TEST_CASE("episodes end after episode_length steps") {
    DistractorConfig cfg;
    cfg.episode_length = 7;
    DistractorControl env(cfg);
    CHECK_THROWS_AS(env.step(std::vector<double>{0.0}), ContractError);
    Rng rng(1);
    env.reset(BackgroundMode::train, rng);
    for (int t = 0; t < 7; ++t) {
        CHECK_FALSE(env.done());
        const auto r = env.step(std::vector<double>{0.0});
        CHECK(r.done == (t == 6));
    }
    CHECK_THROWS_AS(env.step(std::vector<double>{0.0}), ContractError);
    env.reset(BackgroundMode::train, rng);
    CHECK_FALSE(env.done());
    CHECK(env.time() == 0);
}

TEST_CASE("the background ignores the action") {
    DistractorControl a(DistractorConfig{}), b(DistractorConfig{});
    Rng ra(8), rb(8);
    a.reset(BackgroundMode::train, ra);
    b.reset(BackgroundMode::train, rb);
    CHECK(a.background_id() == b.background_id());
    Rng pick(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int t = 0; t < 30; ++t) {
        a.step(std::vector<double>{u(pick)});
        b.step(std::vector<double>{-1.0});
        CHECK(a.background_layer() == b.background_layer());
    }
    CHECK(a.angle() != b.angle());
}

TEST_CASE("train and test draw from disjoint background pools") {
    DistractorConfig cfg;
    DistractorControl env(cfg);
    Rng rng(6);
    std::set<std::size_t> train, test;
    for (int i = 0; i < 200; ++i) {
        env.reset(BackgroundMode::train, rng);
        train.insert(env.background_id());
        env.reset(BackgroundMode::test, rng);
        test.insert(env.background_id());
    }
    CHECK(train.size() == cfg.train_pool);
    CHECK(test.size() == cfg.test_pool);
    CHECK(*train.rbegin() < cfg.train_pool);
    CHECK(*test.begin() >= cfg.train_pool);
}

TEST_CASE("a fixed background is static and shared by both modes") {
    DistractorControl env(DistractorConfig::small());
    Rng rng(2);
    env.reset(BackgroundMode::test, rng);
    CHECK(env.background_id() == 0);
    const auto layer = env.background_layer();
    for (int t = 0; t < 10; ++t) {
        env.step(std::vector<double>{0.5});
        CHECK(env.background_layer() == layer);
    }
}

TEST_CASE("moving backgrounds change between steps") {
    DistractorControl env(DistractorConfig{});
    Rng rng(2);
    env.reset(BackgroundMode::train, rng);
    const auto layer = env.background_layer();
    env.step(std::vector<double>{0.0});
    CHECK(env.background_layer() != layer);
}

TEST_CASE("discrete actions map one-hot indices to evenly spaced torques") {
    DistractorControl env(DistractorConfig::discrete4());
    for (std::size_t k = 0; k < 4; ++k)
        CHECK(env.torque(one_hot(k, 4)) == doctest::Approx(-1.0 + 2.0 * static_cast<double>(k) / 3.0));
    CHECK_THROWS_AS(env.torque(std::vector<double>{1, 1, 0, 0}), ContractError);
    CHECK_THROWS_AS(env.torque(std::vector<double>{0, 0, 0, 0}), ContractError);
    CHECK_THROWS_AS(env.torque(std::vector<double>{0.5, 0.5, 0, 0}), ContractError);
    CHECK_THROWS_AS(env.torque(std::vector<double>{1, 0, 0}), ContractError);

    DistractorControl cont(DistractorConfig{});
    CHECK(cont.torque(std::vector<double>{-1.0}) == -1.0);
    CHECK_THROWS_AS(cont.torque(std::vector<double>{1.5}), ContractError);
    CHECK_THROWS_AS(cont.torque(std::vector<double>{std::nan("")}), ContractError);
}

TEST_CASE("resets are reproducible from the generator state") {
    DistractorControl a(DistractorConfig{}), b(DistractorConfig{});
    Rng ra(11), rb(11);
    CHECK(a.reset(BackgroundMode::test, ra) == b.reset(BackgroundMode::test, rb));
    for (int t = 0; t < 5; ++t)
        CHECK(a.step(std::vector<double>{0.2}).observation == b.step(std::vector<double>{0.2}).observation);
}

TEST_CASE("random-policy baseline is reproducible and bounded") {
    const DistractorConfig cfg;
    const auto a = random_policy_returns(cfg, BackgroundMode::train, 20, 5);
    const auto b = random_policy_returns(cfg, BackgroundMode::train, 20, 5);
    CHECK(a.returns == b.returns);
    CHECK(a.returns.size() == 20);
    for (double r : a.returns) {
        CHECK(r >= 0.0);
        CHECK(r <= static_cast<double>(cfg.episode_length));
    }
    CHECK(a.stddev > 0.0);
}

TEST_CASE("invalid configurations are rejected") {
    DistractorConfig c;
    c.render_size = 2;
    CHECK_THROWS_AS(DistractorControl{c}, ContractError);
    c = DistractorConfig{};
    c.episode_length = 0;
    CHECK_THROWS_AS(DistractorControl{c}, ContractError);
    c = DistractorConfig::discrete4();
    c.discrete_count = 1;
    CHECK_THROWS_AS(DistractorControl{c}, ContractError);
}
