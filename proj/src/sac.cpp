#include "dribo/sac.hpp"

#include <cmath>
#include <memory>
#include <numbers>

namespace dribo {

namespace ng = ndgrad;
using ng::Node;
using ng::Tensor;

void SacConfig::validate() const {
    if (state_dim == 0 || action_dim == 0 || hidden == 0) throw ContractError("sac: dimensions must be positive");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ContractError("sac: gamma must lie in [0, 1]");
    if (!(tau_q > 0.0 && tau_q <= 1.0) || !(tau_encoder > 0.0 && tau_encoder <= 1.0))
        throw ContractError("sac: Polyak rates must lie in (0, 1]");
    if (!(init_alpha > 0.0)) throw ContractError("sac: initial temperature must be positive");
    if (!(actor_lr > 0.0) || !(critic_lr > 0.0) || !(alpha_lr > 0.0) || !(encoder_lr > 0.0))
        throw ContractError("sac: learning rates must be positive");
    if (!(log_std_min < log_std_max)) throw ContractError("sac: log_std_min must be below log_std_max");
    if (target_entropy && !std::isfinite(*target_entropy)) throw ContractError("sac: target entropy must be finite");
}

namespace {

void add_layer(ParamRegistry& r, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng) {
    r.add(prefix + "_w", glorot(in, out, rng));
    r.add(prefix + "_b", Tensor({out}, 0.0));
}

// Parameters used inside a loss whose gradient must not reach them.
Node param(const ParamRegistry& r, const std::string& name, bool frozen) {
    const Node& p = r.get(name);
    return frozen ? ng::stop_gradient(p) : p;
}

Node dense(const ParamRegistry& r, const std::string& prefix, const Node& x, bool frozen) {
    return ng::linear(x, param(r, prefix + "_w", frozen), param(r, prefix + "_b", frozen));
}

Node q_net(const ParamRegistry& r, const std::string& q, const Node& sa, bool frozen) {
    Node h = ng::relu(dense(r, q + "/l1", sa, frozen));
    h = ng::relu(dense(r, q + "/l2", h, frozen));
    return ng::reshape(dense(r, q + "/out", h, frozen), {sa.shape()[0]});
}

std::pair<Node, Node> twin_q(const ParamRegistry& r, const Node& s, const Node& a, bool frozen) {
    const Node sa = ng::concat({s, a}, 1);
    return {q_net(r, "q1", sa, frozen), q_net(r, "q2", sa, frozen)};
}

// log(1 - tanh(u)^2) written without cancellation.
Node log_squash_jacobian(const Node& u) {
    return ng::scale(ng::sub(ng::add_scalar(ng::neg(u), std::numbers::ln2), ng::softplus(ng::scale(u, -2.0))), 2.0);
}

void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw DomainError(std::string("sac_update: non-finite ") + what);
}

Node stack_rows(const std::vector<Node>& xs) { return xs.size() == 1 ? xs.front() : ng::concat(xs, 0); }

}  // namespace

SacAgent::SacAgent(SacConfig config, Rng& rng)
    : config_(std::move(config)), actor_opt_({}, {}), critic_opt_({}, {}), temperature_opt_({}, {}) {
    config_.validate();
    const std::size_t s = config_.state_dim, a = config_.action_dim, h = config_.hidden;
    for (const char* q : {"q1", "q2"}) {
        add_layer(critic_, std::string(q) + "/l1", s + a, h, rng);
        add_layer(critic_, std::string(q) + "/l2", h, h, rng);
        add_layer(critic_, std::string(q) + "/out", h, 1, rng);
    }
    critic_target_ = critic_.clone();
    add_layer(actor_, "pi/l1", s, h, rng);
    add_layer(actor_, "pi/l2", h, h, rng);
    add_layer(actor_, "pi/mean", h, a, rng);
    add_layer(actor_, "pi/log_std", h, a, rng);
    temperature_.add("log_alpha", Tensor::scalar(std::log(config_.init_alpha)));
    actor_opt_ = Adam(actor_.nodes(), {.lr = config_.actor_lr});
    critic_opt_ = Adam(critic_.nodes(), {.lr = config_.critic_lr});
    temperature_opt_ = Adam(temperature_.nodes(), {.lr = config_.alpha_lr});
}

double SacAgent::alpha() const { return std::exp(log_alpha().item()); }

std::pair<Node, Node> SacAgent::q_values(const Node& s, const Node& a, bool target) const {
    return twin_q(target ? critic_target_ : critic_, s, a, false);
}

std::pair<Node, Node> SacAgent::policy(const Node& s) const {
    if (s.shape().size() != 2 || s.shape()[1] != config_.state_dim) throw ShapeError("sac policy: bad state shape");
    Node h = ng::relu(dense(actor_, "pi/l1", s, false));
    h = ng::relu(dense(actor_, "pi/l2", h, false));
    const Node mean = dense(actor_, "pi/mean", h, false);
    // Smoothly squeeze the raw output into [log_std_min, log_std_max].
    const double lo = config_.log_std_min, hi = config_.log_std_max;
    const Node log_std = ng::add_scalar(ng::scale(ng::add_scalar(ng::tanh(dense(actor_, "pi/log_std", h, false)), 1.0),
                                                  0.5 * (hi - lo)),
                                        lo);
    return {mean, log_std};
}

SquashedSample SacAgent::sample(const Node& s, const Tensor& noise) const {
    auto [mean, log_std] = policy(s);
    if (noise.shape() != mean.shape()) throw ShapeError("sac sample: noise shape mismatch");
    const Node eps = Node::constant(noise);
    const Node u = ng::add(mean, ng::mul(ng::exp(log_std), eps));
    // Gaussian log density at u, written through eps so it is exact for the reparameterized draw.
    const Node gauss = ng::add_scalar(ng::neg(ng::add(ng::scale(ng::square(eps), 0.5), log_std)),
                                      -0.5 * std::log(2.0 * std::numbers::pi));
    const Node log_prob = ng::sum(ng::sub(gauss, log_squash_jacobian(u)), 1);
    return {ng::tanh(u), log_prob};
}

Node SacAgent::mean_action(const Node& s) const { return ng::tanh(policy(s).first); }

SacNoise draw_sac_noise(const SacAgent& agent, const EncoderConfig& encoder, std::size_t batch, std::size_t window,
                        Rng& rng) {
    if (window < 2) throw ContractError("sac: sequences need at least two steps");
    SacNoise n;
    for (std::size_t t = 0; t < window; ++t) n.encoder.push_back(standard_normal({batch, encoder.stoch_dim}, rng));
    for (std::size_t t = 0; t < window; ++t)
        n.target_encoder.push_back(standard_normal({batch, encoder.stoch_dim}, rng));
    const std::size_t m = (window - 1) * batch;
    n.next_action = standard_normal({m, agent.config().action_dim}, rng);
    n.action = standard_normal({m, agent.config().action_dim}, rng);
    return n;
}

SacTransitions encode_transitions(const RssmEncoder& model, const RssmEncoder& target_model, const SequenceBatch& batch,
                                  const SacNoise& noise) {
    batch.validate();
    const std::size_t t_len = batch.length(), n = batch.batch();
    if (t_len < 2) throw ContractError("sac: sequences need at least two steps");
    if (noise.encoder.size() != t_len || noise.target_encoder.size() != t_len)
        throw ContractError("sac: noise drawn for a different window");
    auto replay = [](const std::vector<Tensor>& draws) {
        auto next = std::make_shared<std::size_t>(0);
        return NoiseFn([&draws, next](const ng::Shape& shape) {
            const Tensor& d = draws.at((*next)++);
            if (d.shape() != shape) throw ShapeError("sac: noise shape mismatch");
            return d;
        });
    };
    const auto online = model.encode_sequence(batch.observations, batch.actions, std::nullopt, replay(noise.encoder));
    const auto target =
        target_model.encode_sequence(batch.observations, batch.actions, std::nullopt, replay(noise.target_encoder));
    std::vector<Node> s, s_next;
    for (std::size_t t = 0; t + 1 < t_len; ++t) {
        s.push_back(online[t].state.representation());
        s_next.push_back(target[t + 1].state.representation());
    }
    const std::size_t a_dim = batch.action_dim(), m = (t_len - 1) * n;
    Tensor action({m, a_dim}), reward({m});
    for (std::size_t t = 0; t + 1 < t_len; ++t)
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < a_dim; ++k) action.at(t * n + i, k) = batch.actions[t].at(i, k);
            reward[t * n + i] = batch.rewards.at(t, i);
        }
    return {stack_rows(s), ng::stop_gradient(stack_rows(s_next)), std::move(action), std::move(reward)};
}

Node sac_target(const SacAgent& agent, const SacTransitions& tr, const SacNoise& noise) {
    const SquashedSample next = agent.sample(tr.next_state, noise.next_action);
    auto [q1, q2] = agent.q_values(tr.next_state, next.action, true);
    const Node v = ng::sub(ng::minimum(q1, q2), ng::scale(next.log_prob, agent.alpha()));
    const Node y = ng::add(Node::constant(tr.reward), ng::scale(v, agent.config().gamma));
    return ng::stop_gradient(y);
}

Node sac_critic_loss(const SacAgent& agent, const SacTransitions& tr, const SacNoise& noise) {
    const Node y = sac_target(agent, tr, noise);
    auto [q1, q2] = agent.q_values(tr.state, Node::constant(tr.action));
    return ng::add(ng::mean(ng::square(ng::sub(q1, y))), ng::mean(ng::square(ng::sub(q2, y))));
}

Node sac_actor_loss(const SacAgent& agent, const SacTransitions& tr, const SacNoise& noise) {
    const Node s = ng::stop_gradient(tr.state);
    const SquashedSample pi = agent.sample(s, noise.action);
    // The critic scores the action but is not trained by this loss.
    auto [q1, q2] = twin_q(agent.critic(), s, pi.action, true);
    return ng::mean(ng::sub(ng::scale(pi.log_prob, agent.alpha()), ng::minimum(q1, q2)));
}

Node sac_alpha_loss(const SacAgent& agent, const SacTransitions& tr, const SacNoise& noise) {
    const SquashedSample pi = agent.sample(ng::stop_gradient(tr.state), noise.action);
    const Node slack = ng::stop_gradient(ng::add_scalar(pi.log_prob, agent.config().entropy_target()));
    const Node alpha = ng::exp(agent.log_alpha());
    return ng::neg(ng::mean(ng::mul(slack, ng::broadcast_to(alpha, slack.shape()))));
}

std::vector<std::string> sac_metric_keys() {
    return {"sac/critic_loss", "sac/actor_loss", "sac/alpha_loss", "sac/alpha", "sac/entropy", "sac/q_mean"};
}

std::vector<std::pair<std::string, double>> sac_update(SacAgent& agent, RssmEncoder& model, RssmEncoder& target_model,
                                                       Adam& encoder_optimizer, const SequenceBatch& batch, Rng& rng) {
    const SacNoise noise = draw_sac_noise(agent, model.config(), batch.batch(), batch.length(), rng);
    const SacTransitions tr = encode_transitions(model, target_model, batch, noise);
    if (tr.state.shape()[1] != agent.config().state_dim) throw ShapeError("sac_update: encoder and agent disagree");
    if (batch.action_dim() != agent.config().action_dim) throw ShapeError("sac_update: action width mismatch");

    const Node critic_loss = sac_critic_loss(agent, tr, noise);
    const Node actor_loss = sac_actor_loss(agent, tr, noise);
    const Node alpha_loss = sac_alpha_loss(agent, tr, noise);
    require_finite(critic_loss.item(), "critic loss");
    require_finite(actor_loss.item(), "actor loss");
    require_finite(alpha_loss.item(), "alpha loss");

    const SquashedSample pi = agent.sample(ng::stop_gradient(tr.state), noise.action);
    auto [q1, q2] = agent.q_values(ng::stop_gradient(tr.state), Node::constant(tr.action));
    double q_mean = 0.0;
    for (std::size_t i = 0; i < q1.size(); ++i) q_mean += 0.5 * (q1.value()[i] + q2.value()[i]);
    std::vector<std::pair<std::string, double>> metrics{{"sac/critic_loss", critic_loss.item()},
                                                        {"sac/actor_loss", actor_loss.item()},
                                                        {"sac/alpha_loss", alpha_loss.item()},
                                                        {"sac/alpha", agent.alpha()},
                                                        {"sac/entropy", -ng::mean(pi.log_prob).item()},
                                                        {"sac/q_mean", q_mean / static_cast<double>(q1.size())}};

    // All backward passes run before any step so every graph sees the same parameters.
    agent.critic().zero_grads();
    agent.actor().zero_grads();
    agent.temperature().zero_grads();
    model.params().zero_grads();
    ng::backward(critic_loss);
    ng::backward(actor_loss);
    ng::backward(alpha_loss);

    agent.critic_optimizer().step();
    if (agent.config().critic_trains_encoder) encoder_optimizer.step();
    agent.actor_optimizer().step();
    agent.temperature_optimizer().step();
    agent.critic().zero_grads();
    agent.actor().zero_grads();
    agent.temperature().zero_grads();
    model.params().zero_grads();

    agent.critic_target().polyak_update(agent.critic(), agent.config().tau_q);
    target_model.params().polyak_update(model.params(), agent.config().tau_encoder);

    return metrics;
}

SacAction sac_act(const SacAgent& agent, const RssmEncoder& model, const Carry& carry, std::span<const double> frame,
                  ActMode mode, Rng& rng) {
    const FilterStep f = filter_step(model, carry, frame, mode, rng);
    const Node s = f.state.representation();
    Node a;
    if (mode == ActMode::deterministic) {
        a = agent.mean_action(s);
    } else {
        a = agent.sample(s, standard_normal({1, agent.config().action_dim}, rng)).action;
    }
    std::vector<double> action(a.value().storage());
    // tanh can round to exactly +-1 for large pre-activations; the world accepts the closed range.
    return {action, Carry{f.state, Tensor({1, action.size()}, action)}};
}

}  // namespace dribo
