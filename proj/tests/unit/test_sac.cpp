#include <cmath>
#include <numbers>

#include "doctest.h"
#include "dribo/sac.hpp"

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
    c.action_dim = 1;
    return c;
}

SacConfig micro_sac() {
    SacConfig c;
    c.state_dim = 7;
    c.action_dim = 1;
    c.hidden = 8;
    return c;
}

SequenceBatch random_batch(std::size_t n, std::size_t t, Rng& rng, double reward_scale = 1.0) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SequenceBatch b;
    b.height = 2;
    b.width = 3;
    for (std::size_t k = 0; k < t; ++k) {
        Tensor o({n, 6}), a({n, 1});
        for (auto& v : o.storage()) v = u(rng);
        for (auto& v : a.storage()) v = 2.0 * u(rng) - 1.0;
        b.observations.push_back(o);
        b.actions.push_back(a);
    }
    b.rewards = Tensor({t, n});
    for (auto& v : b.rewards.storage()) v = reward_scale * u(rng);
    return b;
}

struct Fixture {
    Rng rng{42};
    RssmEncoder model{micro_encoder(), rng};
    RssmEncoder target{model.clone()};
    SacAgent agent;
    Adam encoder_opt{model.params().nodes(), {}};

    explicit Fixture(SacConfig cfg = micro_sac()) : agent(cfg, rng) {}
};

std::vector<std::vector<double>> values_of(const ParamRegistry& reg) {
    std::vector<std::vector<double>> out;
    for (const auto& e : reg.entries()) out.push_back(e.node.value().storage());
    return out;
}

bool all_zero(const Tensor& t) {
    for (double v : t.storage())
        if (v != 0.0) return false;
    return true;
}

double abs_sum(const Tensor& t) {
    double s = 0.0;
    for (double v : t.storage()) s += std::abs(v);
    return s;
}

double log_normal(double x) { return -0.5 * x * x - 0.5 * std::log(2.0 * std::numbers::pi); }

}  // namespace

TEST_CASE("transitions pair consecutive steps, time-major") {
    Fixture f;
    const SequenceBatch b = random_batch(3, 4, f.rng);
    const SacNoise noise = draw_sac_noise(f.agent, f.model.config(), 3, 4, f.rng);
    const SacTransitions tr = encode_transitions(f.model, f.target, b, noise);
    REQUIRE(tr.rows() == 9);
    CHECK(tr.state.shape() == Shape{9, 7});
    CHECK(tr.next_state.shape() == Shape{9, 7});
    for (std::size_t t = 0; t < 3; ++t)
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(tr.action.at(t * 3 + i, 0) == b.actions[t].at(i, 0));
            CHECK(tr.reward[t * 3 + i] == b.rewards.at(t, i));
        }
}

TEST_CASE("with gamma 0 and zero rewards the critic loss is the mean squared Q") {
    SacConfig cfg = micro_sac();
    cfg.gamma = 0.0;
    Fixture f(cfg);
    const SequenceBatch b = random_batch(4, 3, f.rng, 0.0);
    const SacNoise noise = draw_sac_noise(f.agent, f.model.config(), 4, 3, f.rng);
    const SacTransitions tr = encode_transitions(f.model, f.target, b, noise);
    const Tensor y = sac_target(f.agent, tr, noise).value();
    for (double v : y.storage()) CHECK(v == 0.0);
    const auto [q1, q2] = f.agent.q_values(tr.state, Node::constant(tr.action));
    double expected = 0.0;
    const double m = static_cast<double>(tr.rows());
    for (std::size_t i = 0; i < tr.rows(); ++i)
        expected += (q1.value()[i] * q1.value()[i] + q2.value()[i] * q2.value()[i]) / m;
    CHECK(sac_critic_loss(f.agent, tr, noise).item() == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("squashed log-probability matches the change-of-variables formula") {
    Fixture f;
    Tensor s({5, 7}), eps({5, 1});
    std::normal_distribution<double> n(0.0, 1.0);
    for (auto& v : s.storage()) v = n(f.rng);
    for (auto& v : eps.storage()) v = 2.0 * n(f.rng);
    const Node state = Node::constant(s);
    const auto [mean, log_std] = f.agent.policy(state);
    const SquashedSample smp = f.agent.sample(state, eps);
    for (std::size_t i = 0; i < 5; ++i) {
        const double sd = std::exp(log_std.value()[i]);
        const double u = mean.value()[i] + sd * eps[i];
        const double a = std::tanh(u);
        const double want = log_normal(eps[i]) - std::log(sd) - std::log(1.0 - a * a);
        CHECK(smp.action.value()[i] == doctest::Approx(a).epsilon(1e-12));
        CHECK(smp.log_prob.value()[i] == doctest::Approx(want).epsilon(1e-8));
        CHECK(log_std.value()[i] >= f.agent.config().log_std_min);
        CHECK(log_std.value()[i] <= f.agent.config().log_std_max);
    }
}

TEST_CASE("the soft target uses the target critic and the entropy bonus") {
    Fixture f;
    const SequenceBatch b = random_batch(2, 3, f.rng);
    const SacNoise noise = draw_sac_noise(f.agent, f.model.config(), 2, 3, f.rng);
    const SacTransitions tr = encode_transitions(f.model, f.target, b, noise);
    // Make the target critic differ from the online one so a mix-up would show.
    for (const auto& e : f.agent.critic_target().entries()) {
        Node p = e.node;
        for (auto& v : p.mutable_value().storage()) v *= 1.5;
    }
    const SquashedSample next = f.agent.sample(tr.next_state, noise.next_action);
    const auto [t1, t2] = f.agent.q_values(tr.next_state, next.action, true);
    const Tensor y = sac_target(f.agent, tr, noise).value();
    const double g = f.agent.config().gamma, alpha = f.agent.alpha();
    for (std::size_t i = 0; i < tr.rows(); ++i) {
        const double want = tr.reward[i] + g * (std::min(t1.value()[i], t2.value()[i]) - alpha * next.log_prob.value()[i]);
        CHECK(y[i] == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("critic backward leaves target critic and target encoder untouched") {
    Fixture f;
    const SequenceBatch b = random_batch(3, 3, f.rng);
    const SacNoise noise = draw_sac_noise(f.agent, f.model.config(), 3, 3, f.rng);
    const SacTransitions tr = encode_transitions(f.model, f.target, b, noise);
    backward(sac_critic_loss(f.agent, tr, noise));
    for (const auto* reg : {&f.agent.critic_target(), &f.target.params(), &f.agent.actor(), &f.agent.temperature()})
        for (const auto& e : reg->entries())
            CHECK(all_zero(e.node.grad()));
    double encoder_grad = 0.0;
    for (const auto& e : f.model.params().entries())
        encoder_grad += abs_sum(e.node.grad());
    CHECK(encoder_grad > 0.0);
}

TEST_CASE("actor backward reaches only the actor") {
    Fixture f;
    const SequenceBatch b = random_batch(3, 3, f.rng);
    const SacNoise noise = draw_sac_noise(f.agent, f.model.config(), 3, 3, f.rng);
    const SacTransitions tr = encode_transitions(f.model, f.target, b, noise);
    backward(sac_actor_loss(f.agent, tr, noise));
    for (const auto* reg : {&f.agent.critic(), &f.model.params(), &f.agent.temperature()})
        for (const auto& e : reg->entries())
            CHECK(all_zero(e.node.grad()));
}

TEST_CASE("temperature gradient sign follows the entropy target") {
    for (const double target : {100.0, -100.0}) {
        SacConfig cfg = micro_sac();
        cfg.target_entropy = target;
        Fixture f(cfg);
        const SequenceBatch b = random_batch(3, 3, f.rng);
        const SacNoise noise = draw_sac_noise(f.agent, f.model.config(), 3, 3, f.rng);
        const SacTransitions tr = encode_transitions(f.model, f.target, b, noise);
        backward(sac_alpha_loss(f.agent, tr, noise));
        const double g = f.agent.log_alpha().grad()[0];
        // Entropy below a high target must raise alpha (negative gradient); above a low target, lower it.
        if (target > 0) CHECK(g < 0.0);
        else CHECK(g > 0.0);
        const double before = f.agent.alpha();
        f.agent.temperature_optimizer().step();
        if (target > 0) CHECK(f.agent.alpha() > before);
        else CHECK(f.agent.alpha() < before);
    }
}

TEST_CASE("an update ends with exact Polyak averages of both targets") {
    Fixture f;
    const SequenceBatch b = random_batch(3, 4, f.rng);
    const auto critic_target_before = values_of(f.agent.critic_target());
    const auto target_encoder_before = values_of(f.target.params());
    const auto critic_before = values_of(f.agent.critic());
    const auto metrics = sac_update(f.agent, f.model, f.target, f.encoder_opt, b, f.rng);
    CHECK(metrics.size() == sac_metric_keys().size());

    const double tq = f.agent.config().tau_q, te = f.agent.config().tau_encoder;
    const auto critic_after = values_of(f.agent.critic());
    const auto critic_target_after = values_of(f.agent.critic_target());
    CHECK(critic_after != critic_before);
    for (std::size_t k = 0; k < critic_after.size(); ++k)
        for (std::size_t i = 0; i < critic_after[k].size(); ++i)
            CHECK(critic_target_after[k][i] ==
                  doctest::Approx(tq * critic_after[k][i] + (1.0 - tq) * critic_target_before[k][i]).epsilon(1e-14));
    const auto encoder_after = values_of(f.model.params());
    const auto target_encoder_after = values_of(f.target.params());
    for (std::size_t k = 0; k < encoder_after.size(); ++k)
        for (std::size_t i = 0; i < encoder_after[k].size(); ++i)
            CHECK(target_encoder_after[k][i] ==
                  doctest::Approx(te * encoder_after[k][i] + (1.0 - te) * target_encoder_before[k][i]).epsilon(1e-14));
    for (const auto* reg : {&f.agent.critic(), &f.agent.actor(), &f.model.params()})
        for (const auto& e : reg->entries())
            CHECK(all_zero(e.node.grad()));
}

TEST_CASE("the encoder stays fixed when the critic may not train it") {
    SacConfig cfg = micro_sac();
    cfg.critic_trains_encoder = false;
    Fixture f(cfg);
    const auto before = values_of(f.model.params());
    sac_update(f.agent, f.model, f.target, f.encoder_opt, random_batch(2, 3, f.rng), f.rng);
    CHECK(values_of(f.model.params()) == before);
}

TEST_CASE("a non-finite batch aborts before any parameter moves") {
    Fixture f;
    const SequenceBatch b = random_batch(2, 3, f.rng);
    Node w = f.agent.actor().entries().front().node;
    w.mutable_value()[0] = std::nan("");
    const auto critic = values_of(f.agent.critic());
    const auto encoder = values_of(f.model.params());
    CHECK_THROWS_AS(sac_update(f.agent, f.model, f.target, f.encoder_opt, b, f.rng), DomainError);
    CHECK(values_of(f.agent.critic()) == critic);
    CHECK(values_of(f.model.params()) == encoder);
}

TEST_CASE("acting yields bounded actions; deterministic acting is reproducible") {
    Fixture f;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Carry carry = initial_carry(f.model);
    Carry det_a = carry, det_b = carry;
    Rng other(999);
    for (int t = 0; t < 20; ++t) {
        std::vector<double> frame(6);
        for (auto& v : frame) v = u(f.rng);
        const SacAction s = sac_act(f.agent, f.model, carry, frame, ActMode::stochastic, f.rng);
        REQUIRE(s.action.size() == 1);
        CHECK(std::abs(s.action[0]) <= 1.0);
        carry = s.next;
        const SacAction a = sac_act(f.agent, f.model, det_a, frame, ActMode::deterministic, f.rng);
        const SacAction b = sac_act(f.agent, f.model, det_b, frame, ActMode::deterministic, other);
        CHECK(a.action == b.action);
        CHECK(a.next.state.representation().value().storage() == b.next.state.representation().value().storage());
        CHECK(a.next.prev_action.storage() == a.action);
        det_a = a.next;
        det_b = b.next;
    }
}

TEST_CASE("invalid configurations are rejected") {
    Rng rng(1);
    SacConfig c = micro_sac();
    c.tau_q = 1.5;
    CHECK_THROWS_AS(SacAgent(c, rng), ContractError);
    c = micro_sac();
    c.init_alpha = 0.0;
    CHECK_THROWS_AS(SacAgent(c, rng), ContractError);
    c = micro_sac();
    c.log_std_min = 3.0;
    CHECK_THROWS_AS(SacAgent(c, rng), ContractError);
}
