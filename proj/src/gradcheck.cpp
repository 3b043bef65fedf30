#include "dribo/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "dribo/loss.hpp"
#include "dribo/ppo.hpp"
#include "dribo/sac.hpp"

namespace dribo {

namespace ng = ndgrad;
using ng::Node;
using ng::Tensor;

namespace {

Tensor uniform(const ng::Shape& shape, double lo, double hi, Rng& rng) {
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor t(shape);
    for (auto& v : t.storage()) v = u(rng);
    return t;
}

// Moves parameters off their initial values so unit gains and zero biases cannot hide mistakes.
void jitter(ParamRegistry& reg, Rng& rng, double scale = 0.3) {
    std::normal_distribution<double> n(0.0, scale);
    for (const auto& e : reg.entries()) {
        Node p = e.node;
        for (auto& v : p.mutable_value().storage()) v += n(rng);
    }
}

EncoderConfig micro_encoder(bool discrete) {
    EncoderConfig c;
    c.obs_dim = 6;
    c.embed_hidden = 5;
    c.embed_dim = 4;
    c.deter_dim = 4;
    c.stoch_dim = 3;
    c.head_hidden = 4;
    c.action_dim = discrete ? 3 : 2;
    c.discrete_actions = discrete;
    c.action_embed_hidden = 5;
    c.action_embed_dim = 4;
    return c;
}

SequenceBatch micro_batch(const EncoderConfig& c, std::size_t n, std::size_t t, Rng& rng) {
    SequenceBatch b;
    b.height = 2;
    b.width = 3;
    std::uniform_int_distribution<std::size_t> cat(0, c.action_dim - 1);
    for (std::size_t k = 0; k < t; ++k) {
        b.observations.push_back(uniform({n, c.obs_dim}, 0, 1, rng));
        if (c.discrete_actions) {
            Tensor a({n, c.action_dim}, 0.0);
            for (std::size_t i = 0; i < n; ++i) a.at(i, cat(rng)) = 1.0;
            b.actions.push_back(std::move(a));
        } else {
            b.actions.push_back(uniform({n, c.action_dim}, -1, 1, rng));
        }
    }
    b.rewards = uniform({t, n}, -1, 1, rng);
    return b;
}

GradCheckResult track(std::string name, double err, GradCheckResult* acc = nullptr) {
    if (acc) {
        acc->max_rel_error = std::max(acc->max_rel_error, err);
        ++acc->trials;
        return *acc;
    }
    return {std::move(name), err, 1};
}

Node op_probe(ng::OpKind kind, const Node& x, const Tensor& other, const Tensor& rhs, const Tensor& w3,
              const Tensor& w, const Tensor& wt, const Tensor& waxis) {
    using ng::OpKind;
    const Node wc = Node::constant(w);
    const Node c = Node::constant(other);
    ng::OpAttrs attrs;
    switch (kind) {
        case OpKind::add:
        case OpKind::sub:
        case OpKind::mul:
            return ng::add(ng::sum(ng::mul(ng::apply(kind, {x, c}), wc)), ng::sum(ng::mul(ng::apply(kind, {c, x}), wc)));
        case OpKind::div:
            return ng::add(ng::sum(ng::mul(ng::apply(kind, {x, c}), wc)),
                           ng::sum(ng::mul(ng::apply(kind, {c, ng::add_scalar(ng::square(x), 0.5)}), wc)));
        case OpKind::matmul:
            return ng::sum(ng::mul(ng::apply(kind, {x, Node::constant(rhs)}), Node::constant(Tensor({3, 2}, 0.7))));
        case OpKind::sum:
        case OpKind::mean: {
            const Node x3 = ng::reshape(ng::concat({x, ng::mul(x, x)}, 0), {2, 3, 4});
            attrs.has_axis = true;
            attrs.axis = 1;
            return ng::add(ng::sum(ng::mul(ng::apply(kind, {x3}, attrs), Node::constant(waxis))),
                           ng::apply(kind, {ng::mul(x, wc)}));
        }
        case OpKind::broadcast:
            attrs.shape = {2, 3, 4};
            return ng::sum(ng::mul(ng::apply(kind, {x}, attrs), Node::constant(w3)));
        case OpKind::concat:
            attrs.axis = 1;
            return ng::sum(ng::mul(ng::apply(kind, {x, c, x}, attrs), Node::constant(Tensor({3, 12}, 0.3))));
        case OpKind::slice:
            attrs.axis = 1;
            attrs.begin = 1;
            attrs.end = 3;
            return ng::sum(ng::mul(ng::apply(kind, {x}, attrs), Node::constant(Tensor({3, 2}, -0.4))));
        case OpKind::transpose:
            return ng::sum(ng::mul(ng::apply(kind, {x}), Node::constant(wt)));
        default:
            return ng::sum(ng::mul(ng::apply(kind, {x}), wc));
    }
}

}  // namespace

std::vector<GradCheckResult> op_gradient_suite(Rng& rng, std::size_t trials) {
    using ng::OpKind;
    std::vector<GradCheckResult> out;
    for (OpKind kind : ng::all_op_kinds()) {
        GradCheckResult r{"op/" + ng::op_name(kind), 0.0, 0};
        for (std::size_t trial = 0; trial < trials; ++trial) {
            const bool positive = kind == OpKind::log || kind == OpKind::sqrt;
            Tensor x0 = positive ? uniform({3, 4}, 0.2, 2.0, rng) : uniform({3, 4}, -2.0, 2.0, rng);
            // Keep relu inputs away from the kink, where the central difference straddles it.
            if (kind == OpKind::relu)
                for (auto& v : x0.storage())
                    if (std::abs(v) < 1e-3) v = 0.5;
            const Tensor other = uniform({3, 4}, 0.5, 2.0, rng);
            const Tensor rhs = uniform({4, 2}, -2.0, 2.0, rng);
            const Tensor w3 = uniform({2, 3, 4}, -1.0, 1.0, rng);
            const Tensor w = uniform({3, 4}, -1.0, 1.0, rng);
            const Tensor wt = uniform({4, 3}, -1.0, 1.0, rng);
            const Tensor waxis = uniform({2, 4}, -1.0, 1.0, rng);
            auto f = [&](const Node& x) { return op_probe(kind, x, other, rhs, w3, w, wt, waxis); };
            track("", ng::finite_diff_check(f, x0, kGradCheckEps), &r);
        }
        out.push_back(r);
    }

    GradCheckResult fused{"op/fused", 0.0, 0};
    for (std::size_t trial = 0; trial < trials; ++trial) {
        const Tensor x0 = uniform({3, 5}, -2.0, 2.0, rng);
        const Node wc = Node::constant(uniform({3, 5}, -1.0, 1.0, rng));
        const Node gain = Node::constant(uniform({5}, 0.5, 1.5, rng));
        const Node bias = Node::constant(uniform({5}, -0.5, 0.5, rng));
        const Node wrow = Node::constant(uniform({3}, -1.0, 1.0, rng));
        const Node wl = Node::constant(uniform({5, 2}, -1.0, 1.0, rng));
        const Node bl = Node::constant(uniform({2}, -1.0, 1.0, rng));
        const std::vector<std::function<Node(const Node&)>> fs{
            [&](const Node& x) { return ng::sum(ng::mul(ng::sigmoid(x), wc)); },
            [&](const Node& x) { return ng::sum(ng::mul(ng::softplus(x), wc)); },
            [&](const Node& x) { return ng::sum(ng::mul(ng::logsumexp_rows(x), wrow)); },
            [&](const Node& x) { return ng::sum(ng::mul(ng::log_softmax_rows(x), wc)); },
            [&](const Node& x) { return ng::sum(ng::mul(ng::layer_norm(x, gain, bias), wc)); },
            [&](const Node& x) { return ng::sum(ng::mul(ng::minimum(x, ng::scale(x, -1.0)), wc)); },
            [&](const Node& x) { return ng::sum(ng::mul(ng::clip(x, -1.7, 1.7), wc)); },
            [&](const Node& x) { return ng::sum(ng::linear(x, wl, bl)); },
            [&](const Node& x) { return ng::sum(ng::mul(ng::neg(ng::scale(ng::add_scalar(x, 0.3), 1.5)), wc)); },
        };
        for (const auto& f : fs) track("", ng::finite_diff_check(f, x0, kGradCheckEps), &fused);
    }
    out.push_back(fused);
    return out;
}

std::vector<GradCheckResult> gaussian_gradient_suite(Rng& rng, std::size_t trials) {
    GradCheckResult kl_r{"gaussian/kl", 0.0, 0}, skl_r{"gaussian/skl", 0.0, 0}, lp_r{"gaussian/log_prob", 0.0, 0},
        rs_r{"gaussian/rsample", 0.0, 0};
    for (std::size_t trial = 0; trial < trials; ++trial) {
        const Tensor pm = uniform({2, 3}, -1, 1, rng), ps = uniform({2, 3}, 0.3, 2.0, rng);
        const Tensor qm = uniform({2, 3}, -1, 1, rng), qs = uniform({2, 3}, 0.3, 2.0, rng);
        const Tensor x = uniform({2, 3}, -1, 1, rng), noise = standard_normal({2, 3}, rng);
        const Node cpm = Node::constant(pm), cps = Node::constant(ps), cqm = Node::constant(qm),
                   cqs = Node::constant(qs);
        auto probe = [&](auto fn, GradCheckResult& r) {
            track("", ng::finite_diff_check([&](const Node& v) { return ng::sum(fn(DiagGaussian{v, cps}, DiagGaussian{cqm, cqs})); }, pm, kGradCheckEps), &r);
            track("", ng::finite_diff_check([&](const Node& v) { return ng::sum(fn(DiagGaussian{cpm, v}, DiagGaussian{cqm, cqs})); }, ps, kGradCheckEps), &r);
            track("", ng::finite_diff_check([&](const Node& v) { return ng::sum(fn(DiagGaussian{cpm, cps}, DiagGaussian{v, cqs})); }, qm, kGradCheckEps), &r);
            track("", ng::finite_diff_check([&](const Node& v) { return ng::sum(fn(DiagGaussian{cpm, cps}, DiagGaussian{cqm, v})); }, qs, kGradCheckEps), &r);
        };
        probe([](const DiagGaussian& a, const DiagGaussian& b) { return kl(a, b); }, kl_r);
        probe([](const DiagGaussian& a, const DiagGaussian& b) { return skl(a, b); }, skl_r);
        probe([&](const DiagGaussian& a, const DiagGaussian& b) {
            return ng::add(log_prob(a, Node::constant(x)), log_prob(b, Node::constant(x)));
        }, lp_r);
        track("", ng::finite_diff_check([&](const Node& v) { return ng::sum(log_prob(DiagGaussian{cpm, cps}, v)); }, x, kGradCheckEps), &lp_r);
        const Node w = Node::constant(uniform({2, 3}, -1, 1, rng));
        track("", ng::finite_diff_check([&](const Node& v) { return ng::sum(ng::mul(rsample(DiagGaussian{v, cps}, noise), w)); }, pm, kGradCheckEps), &rs_r);
        track("", ng::finite_diff_check([&](const Node& v) { return ng::sum(ng::mul(rsample(DiagGaussian{cpm, v}, noise), w)); }, ps, kGradCheckEps), &rs_r);
        // Softplus parameterization of the standard deviation.
        track("", ng::finite_diff_check([&](const Node& v) { return ng::sum(kl(DiagGaussian::from_raw(cpm, v), DiagGaussian{cqm, cqs})); }, qm, kGradCheckEps), &kl_r);
    }
    return {kl_r, skl_r, lp_r, rs_r};
}

std::vector<GradCheckResult> rssm_gradient_suite(Rng& rng) {
    std::vector<GradCheckResult> out;
    for (bool discrete : {false, true}) {
        const EncoderConfig cfg = micro_encoder(discrete);
        RssmEncoder enc(cfg, rng);
        jitter(enc.params(), rng);
        GradCheckResult r{discrete ? "rssm/encode_sequence_discrete" : "rssm/encode_sequence", 0.0, 0};
        for (std::size_t t = 1; t <= 4; ++t) {
            const SequenceBatch b = micro_batch(cfg, 2, t, rng);
            std::vector<Tensor> noise;
            for (std::size_t k = 0; k < t; ++k) noise.push_back(standard_normal({2, cfg.stoch_dim}, rng));
            const Node wr = Node::constant(uniform({2, cfg.state_dim()}, -1, 1, rng));
            const Node wz = Node::constant(uniform({2, cfg.stoch_dim}, -1, 1, rng));
            auto loss = [&] {
                std::size_t next = 0;
                const auto steps = enc.encode_sequence(b.observations, b.actions, std::nullopt,
                                                       [&](const ng::Shape&) { return noise.at(next++); });
                Node acc = Node::constant(Tensor::scalar(0.0));
                for (const auto& st : steps) {
                    acc = ng::add(acc, ng::sum(ng::mul(st.state.representation(), wr)));
                    acc = ng::add(acc, ng::sum(ng::mul(ng::log(st.posterior.stddev), wz)));
                    acc = ng::add(acc, ng::sum(ng::mul(st.prior.mean, wz)));
                    acc = ng::add(acc, ng::sum(ng::log(st.prior.stddev)));
                }
                return acc;
            };
            track("", registry_grad_check(enc.params(), loss, kGradCheckEps), &r);
        }
        out.push_back(r);
    }
    return out;
}

std::vector<GradCheckResult> loss_gradient_suite(Rng& rng) {
    const EncoderConfig cfg = micro_encoder(false);
    RssmEncoder model(cfg, rng);
    jitter(model.params(), rng);
    BilinearCritic critic(cfg.state_dim(), rng, 0.3);
    const SequenceBatch v1 = micro_batch(cfg, 2, 3, rng);
    SequenceBatch v2 = v1;
    for (auto& o : v2.observations) o = uniform(o.shape(), 0, 1, rng);
    const std::uint64_t noise_seed = rng();
    // The balanced KL is a stop-gradient construction; its forward value equals plain KL, whose
    // gradient is what a central difference measures.
    DriboLossOptions opts;
    opts.plain_kl = true;
    auto loss = [&] {
        Rng n(noise_seed);
        return dribo_loss(v1, v2, model, critic, 0.5, gaussian_noise(n), opts).total;
    };
    auto infomax = [&] {
        Rng n(noise_seed);
        return dribo_loss(v1, v2, model, critic, 0.0, gaussian_noise(n)).total;
    };
    return {{"dribo_loss/encoder", registry_grad_check(model.params(), loss, kGradCheckEps), 1},
            {"dribo_loss/critic", registry_grad_check(critic.params(), loss, kGradCheckEps), 1},
            {"dribo_loss/infomax_encoder", registry_grad_check(model.params(), infomax, kGradCheckEps), 1}};
}

std::vector<GradCheckResult> sac_gradient_suite(Rng& rng) {
    const EncoderConfig cfg = micro_encoder(false);
    RssmEncoder model(cfg, rng);
    jitter(model.params(), rng);
    RssmEncoder target = model.clone();
    jitter(target.params(), rng, 0.05);
    SacConfig sc;
    sc.state_dim = cfg.state_dim();
    sc.action_dim = cfg.action_dim;
    sc.hidden = 6;
    sc.gamma = 0.9;
    SacAgent agent(sc, rng);
    jitter(agent.actor(), rng, 0.2);
    jitter(agent.critic(), rng, 0.2);
    jitter(agent.critic_target(), rng, 0.2);
    const SequenceBatch b = micro_batch(cfg, 2, 3, rng);
    const SacNoise noise = draw_sac_noise(agent, cfg, 2, 3, rng);
    auto critic_loss = [&] { return sac_critic_loss(agent, encode_transitions(model, target, b, noise), noise); };
    auto actor_loss = [&] { return sac_actor_loss(agent, encode_transitions(model, target, b, noise), noise); };
    auto alpha_loss = [&] { return sac_alpha_loss(agent, encode_transitions(model, target, b, noise), noise); };
    return {{"sac/critic_loss", registry_grad_check(agent.critic(), critic_loss, kGradCheckEps), 1},
            {"sac/critic_loss_encoder", registry_grad_check(model.params(), critic_loss, kGradCheckEps), 1},
            {"sac/actor_loss", registry_grad_check(agent.actor(), actor_loss, kGradCheckEps), 1},
            {"sac/alpha_loss", registry_grad_check(agent.temperature(), alpha_loss, kGradCheckEps), 1}};
}

std::vector<GradCheckResult> ppo_gradient_suite(Rng& rng) {
    const EncoderConfig cfg = micro_encoder(true);
    RssmEncoder model(cfg, rng);
    jitter(model.params(), rng);
    PpoConfig pc;
    pc.state_dim = cfg.state_dim();
    pc.num_actions = cfg.action_dim;
    pc.hidden = 5;
    PpoAgent agent(pc, rng);
    jitter(agent.params(), rng, 0.5);

    // Two short episodes with stored states and log-probabilities that differ from the current
    // policy, so some ratios sit inside the clip range and some outside.
    PpoRollout ro;
    Carry carry = initial_carry(model);
    const std::size_t len = 6;
    std::uniform_real_distribution<double> shift(-0.6, 0.6);
    for (std::size_t k = 0; k < len; ++k) {
        std::vector<double> frame = uniform({cfg.obs_dim}, 0, 1, rng).storage();
        const PpoAction act = ppo_act(agent, model, carry, frame, ActMode::stochastic, rng);
        ro.frames.push_back(frame);
        ro.actions.push_back(act.index);
        ro.rewards.push_back(uniform({1}, -1, 1, rng)[0]);
        ro.old_log_probs.push_back(act.log_prob + shift(rng));
        ro.values.push_back(act.value);
        ro.prev_states.push_back(act.prev_state);
        ro.prev_actions.push_back(carry.prev_action.storage());
        ro.noise.push_back(act.noise);
        const bool end = k == 2 || k + 1 == len;
        ro.terminal.push_back(end ? 1 : 0);
        carry = end ? initial_carry(model) : act.next;
    }
    const Advantages gae = compute_gae(ro.rewards, ro.values, ro.terminal, pc.gamma, pc.gae_lambda);
    std::vector<std::size_t> rows(len);
    for (std::size_t i = 0; i < len; ++i) rows[i] = i;
    auto part = [&](int which) {
        return [&, which] {
            const PpoLosses l = ppo_losses(agent, model, ro, rows, gae.advantages, gae.returns);
            switch (which) {
                case 0: return l.policy;
                case 1: return l.value;
                case 2: return l.entropy;
                default: return l.total;
            }
        };
    };
    return {{"ppo/policy_loss", registry_grad_check(agent.params(), part(0), kGradCheckEps), 1},
            {"ppo/value_loss", registry_grad_check(agent.params(), part(1), kGradCheckEps), 1},
            {"ppo/entropy", registry_grad_check(agent.params(), part(2), kGradCheckEps), 1},
            {"ppo/total", registry_grad_check(agent.params(), part(3), kGradCheckEps), 1},
            {"ppo/total_encoder", registry_grad_check(model.params(), part(3), kGradCheckEps), 1}};
}

std::vector<GradCheckResult> full_gradient_suite(std::uint64_t seed) {
    Rng rng(seed);
    std::vector<GradCheckResult> out;
    auto append = [&](std::vector<GradCheckResult> part) { out.insert(out.end(), part.begin(), part.end()); };
    append(op_gradient_suite(rng, 20));
    append(gaussian_gradient_suite(rng, 10));
    append(rssm_gradient_suite(rng));
    append(loss_gradient_suite(rng));
    append(sac_gradient_suite(rng));
    append(ppo_gradient_suite(rng));
    return out;
}

}  // namespace dribo
