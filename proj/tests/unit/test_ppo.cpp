#include <cmath>

#include "doctest.h"
#include "dribo/ppo.hpp"

using namespace dribo;
using namespace dribo::ndgrad;

namespace {

EncoderConfig micro_encoder() {
    EncoderConfig c;
    c.obs_dim = 6;
    c.embed_hidden = 5;
    c.embed_dim = 4;
    c.deter_dim = 4;
    c.stoch_dim = 3;
    c.head_hidden = 4;
    c.action_dim = 3;
    c.discrete_actions = true;
    c.action_embed_hidden = 5;
    c.action_embed_dim = 2;
    return c;
}

PpoConfig micro_ppo() {
    PpoConfig c;
    c.state_dim = 7;
    c.num_actions = 3;
    c.hidden = 8;
    c.epochs = 2;
    c.minibatches = 2;
    return c;
}

struct Fixture {
    Rng rng{5};
    RssmEncoder model{micro_encoder(), rng};
    PpoAgent agent;
    Adam encoder_opt{model.params().nodes(), {}};

    explicit Fixture(PpoConfig cfg = micro_ppo()) : agent(cfg, rng) {}

    // Episodes of the given lengths on random frames, collected exactly as training does.
    PpoRollout collect(const std::vector<std::size_t>& lengths) {
        PpoRollout r;
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (std::size_t len : lengths) {
            Carry carry = initial_carry(model);
            for (std::size_t t = 0; t < len; ++t) {
                std::vector<double> frame(6);
                for (auto& v : frame) v = u(rng);
                const PpoAction a = ppo_act(agent, model, carry, frame, ActMode::stochastic, rng);
                r.frames.push_back(frame);
                r.actions.push_back(a.index);
                r.rewards.push_back(u(rng));
                r.old_log_probs.push_back(a.log_prob);
                r.values.push_back(a.value);
                r.prev_states.push_back(a.prev_state);
                r.prev_actions.push_back(carry.prev_action.storage());
                r.noise.push_back(a.noise);
                r.terminal.push_back(t + 1 == len ? 1 : 0);
                carry = a.next;
            }
        }
        return r;
    }
};

std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> rows(n);
    for (std::size_t i = 0; i < n; ++i) rows[i] = i;
    return rows;
}

}  // namespace

TEST_CASE("clipped objective picks the pessimistic term") {
    CHECK(clipped_objective(1.5, 2.0, 0.2) == doctest::Approx(1.2 * 2.0));
    CHECK(clipped_objective(0.5, 2.0, 0.2) == doctest::Approx(0.5 * 2.0));
    CHECK(clipped_objective(1.5, -2.0, 0.2) == doctest::Approx(1.5 * -2.0));
    CHECK(clipped_objective(0.5, -2.0, 0.2) == doctest::Approx(0.8 * -2.0));
    CHECK(clipped_objective(1.1, 3.0, 0.2) == doctest::Approx(1.1 * 3.0));
}

TEST_CASE("GAE with gamma = lambda = 1 is return-to-go minus value") {
    const std::vector<double> r{1.0, -2.0, 0.5, 3.0}, v{0.3, 0.1, -0.4, 2.0};
    const Advantages a = compute_gae(r, v, {0, 0, 0, 1}, 1.0, 1.0);
    const std::vector<double> to_go{2.5, 1.5, 3.5, 3.0};
    for (std::size_t t = 0; t < 4; ++t) {
        CHECK(a.advantages[t] == doctest::Approx(to_go[t] - v[t]).epsilon(1e-14));
        CHECK(a.returns[t] == doctest::Approx(to_go[t]).epsilon(1e-14));
    }
}

TEST_CASE("GAE with lambda = 0 is the one-step TD error and stops at terminals") {
    const std::vector<double> r{1.0, 2.0, 3.0, 4.0}, v{0.5, 0.25, 1.0, -1.0};
    const double g = 0.9;
    const Advantages a = compute_gae(r, v, {0, 1, 0, 1}, g, 0.0);
    CHECK(a.advantages[0] == doctest::Approx(1.0 + g * 0.25 - 0.5));
    CHECK(a.advantages[1] == doctest::Approx(2.0 - 0.25));
    CHECK(a.advantages[2] == doctest::Approx(3.0 + g * -1.0 - 1.0));
    CHECK(a.advantages[3] == doctest::Approx(4.0 + 1.0));
}

TEST_CASE("GAE mixes TD errors geometrically within an episode") {
    const std::vector<double> r{1.0, 0.0, 2.0}, v{0.1, 0.2, 0.3};
    const double g = 0.9, l = 0.5;
    const Advantages a = compute_gae(r, v, {0, 0, 1}, g, l);
    const double d2 = 2.0 - 0.3, d1 = 0.0 + g * 0.3 - 0.2, d0 = 1.0 + g * 0.2 - 0.1;
    CHECK(a.advantages[2] == doctest::Approx(d2));
    CHECK(a.advantages[1] == doctest::Approx(d1 + g * l * d2));
    CHECK(a.advantages[0] == doctest::Approx(d0 + g * l * (d1 + g * l * d2)));
}

TEST_CASE("running statistics match a two-pass computation") {
    const std::vector<double> xs{3.0, -1.0, 4.0, 1.5, 9.0, -2.5};
    RunningMeanStd s;
    for (double x : xs) s.update(x);
    double mean = 0.0, var = 0.0;
    for (double x : xs) mean += x / 6.0;
    for (double x : xs) var += (x - mean) * (x - mean) / 6.0;
    CHECK(s.mean() == doctest::Approx(mean).epsilon(1e-14));
    CHECK(s.variance() == doctest::Approx(var).epsilon(1e-14));
}

TEST_CASE("reward normalization divides by the discounted-return spread") {
    RewardNormalizer n(0.5);
    RunningMeanStd ref;
    const std::vector<double> rs{1.0, 2.0, 0.0, 4.0};
    const std::vector<bool> ends{false, true, false, true};
    double g = 0.0;
    for (std::size_t i = 0; i < rs.size(); ++i) {
        g = 0.5 * g + rs[i];
        ref.update(g);
        CHECK(n(rs[i], ends[i]) == doctest::Approx(rs[i] / std::sqrt(ref.variance() + 1e-8)));
        if (ends[i]) g = 0.0;
    }
}

TEST_CASE("policy heads are normalized and the value is one per row") {
    Fixture f;
    Tensor s({4, 7});
    std::normal_distribution<double> n(0.0, 2.0);
    for (auto& v : s.storage()) v = n(f.rng);
    const PpoHeads h = f.agent.heads(Node::constant(s));
    CHECK(h.value.shape() == Shape{4});
    const Tensor lp = h.log_probs.value();
    for (std::size_t i = 0; i < 4; ++i) {
        double total = 0.0;
        for (std::size_t k = 0; k < 3; ++k) total += std::exp(lp.at(i, k));
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("acting returns a valid index with its own log-probability") {
    Fixture f;
    Carry carry = initial_carry(f.model);
    const std::vector<double> frame(6, 0.4);
    for (int t = 0; t < 10; ++t) {
        const PpoAction a = ppo_act(f.agent, f.model, carry, frame, ActMode::stochastic, f.rng);
        CHECK(a.index < 3);
        REQUIRE(a.one_hot.size() == 3);
        for (std::size_t k = 0; k < 3; ++k) CHECK(a.one_hot[k] == (k == a.index ? 1.0 : 0.0));
        CHECK(a.log_prob <= 0.0);
        CHECK(a.prev_state == carry.state.representation().value().storage());
        CHECK(a.next.prev_action.storage() == a.one_hot);
        carry = a.next;
    }
}

TEST_CASE("recomputation reproduces collection exactly, so the first ratio is one") {
    Fixture f;
    const PpoRollout r = f.collect({5, 4});
    const Advantages adv = compute_gae(r.rewards, r.values, r.terminal, 0.99, 0.95);
    const PpoLosses l = ppo_losses(f.agent, f.model, r, all_rows(r.size()), adv.advantages, adv.returns);
    CHECK(l.ratio_mean == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(l.approx_kl == 0.0);
    CHECK(l.clip_fraction == 0.0);
    // At ratio one the clipped surrogate is minus the mean advantage.
    double mean_adv = 0.0;
    for (double a : adv.advantages) mean_adv += a / static_cast<double>(r.size());
    CHECK(l.policy.item() == doctest::Approx(-mean_adv).epsilon(1e-12));
}

TEST_CASE("an update calls the hook once per minibatch and moves both agent and encoder") {
    Fixture f;
    const PpoRollout r = f.collect({6, 6});
    const auto agent_before = f.agent.params().entries().front().node.value().storage();
    const auto encoder_before = f.model.params().entries().front().node.value().storage();
    int calls = 0;
    const auto metrics = ppo_update(f.agent, f.model, f.encoder_opt, r, f.rng, [&] { ++calls; });
    CHECK(calls == 4);
    REQUIRE(metrics.size() == ppo_metric_keys().size());
    for (std::size_t i = 0; i < metrics.size(); ++i) {
        CHECK(metrics[i].first == ppo_metric_keys()[i]);
        CHECK(std::isfinite(metrics[i].second));
    }
    CHECK(f.agent.params().entries().front().node.value().storage() != agent_before);
    CHECK(f.model.params().entries().front().node.value().storage() != encoder_before);
}

TEST_CASE("the encoder stays fixed when PPO may not train it") {
    PpoConfig cfg = micro_ppo();
    cfg.train_encoder = false;
    Fixture f(cfg);
    const PpoRollout r = f.collect({4});
    const auto encoder_before = f.model.params().entries().front().node.value().storage();
    ppo_update(f.agent, f.model, f.encoder_opt, r, f.rng);
    CHECK(f.model.params().entries().front().node.value().storage() == encoder_before);
}

TEST_CASE("malformed rollouts are rejected") {
    Fixture f;
    PpoRollout r = f.collect({3});
    PpoRollout missing = r;
    missing.prev_states.clear();
    CHECK_THROWS_AS(ppo_update(f.agent, f.model, f.encoder_opt, missing, f.rng), ContractError);
    PpoRollout open = r;
    open.terminal.back() = 0;
    CHECK_THROWS_AS(ppo_update(f.agent, f.model, f.encoder_opt, open, f.rng), ContractError);
    PpoRollout bad_action = r;
    bad_action.actions[0] = 3;
    CHECK_THROWS_AS(ppo_update(f.agent, f.model, f.encoder_opt, bad_action, f.rng), ContractError);
    CHECK_THROWS_AS(compute_gae({1.0}, {1.0, 2.0}, {1}, 0.9, 0.9), ContractError);
}
