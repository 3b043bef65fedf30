#include "dribo/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dribo {

namespace ng = ndgrad;
using ng::Node;
using ng::Tensor;

void PpoConfig::validate() const {
    if (state_dim == 0 || hidden == 0) throw ContractError("ppo: dimensions must be positive");
    if (num_actions < 2) throw ContractError("ppo: need at least two actions");
    if (!(gamma >= 0.0 && gamma <= 1.0) || !(gae_lambda >= 0.0 && gae_lambda <= 1.0))
        throw ContractError("ppo: gamma and lambda must lie in [0, 1]");
    if (!(clip > 0.0 && clip < 1.0)) throw ContractError("ppo: clip range must lie in (0, 1)");
    if (!(entropy_coef >= 0.0) || !(value_coef >= 0.0)) throw ContractError("ppo: coefficients must be non-negative");
    if (!(lr > 0.0) || !(max_grad_norm >= 0.0)) throw ContractError("ppo: bad optimizer settings");
    if (epochs == 0 || minibatches == 0) throw ContractError("ppo: epochs and minibatches must be positive");
}

void RunningMeanStd::update(double x) {
    count_ += 1.0;
    const double delta = x - mean_;
    mean_ += delta / count_;
    m2_ += delta * (x - mean_);
}

double RewardNormalizer::operator()(double reward, bool episode_end) {
    discounted_ = gamma_ * discounted_ + reward;
    stats_.update(discounted_);
    if (episode_end) discounted_ = 0.0;
    return reward / std::sqrt(stats_.variance() + 1e-8);
}

void PpoRollout::validate(const EncoderConfig& encoder, std::size_t num_actions) const {
    const std::size_t n = size();
    if (n == 0) throw ContractError("ppo rollout: empty");
    if (frames.size() != n || rewards.size() != n || old_log_probs.size() != n || values.size() != n ||
        prev_actions.size() != n || noise.size() != n || terminal.size() != n)
        throw ContractError("ppo rollout: fields differ in length");
    if (prev_states.size() != n) throw ContractError("ppo rollout: missing stored old states");
    if (!terminal.back()) throw ContractError("ppo rollout: must end on an episode boundary");
    for (std::size_t i = 0; i < n; ++i) {
        if (frames[i].size() != encoder.obs_dim) throw ContractError("ppo rollout: frame size mismatch");
        if (prev_states[i].size() != encoder.state_dim()) throw ContractError("ppo rollout: old state width mismatch");
        if (prev_actions[i].size() != num_actions) throw ContractError("ppo rollout: previous action width mismatch");
        if (noise[i].size() != encoder.stoch_dim) throw ContractError("ppo rollout: noise width mismatch");
        if (actions[i] >= num_actions) throw ContractError("ppo rollout: action index out of range");
        if (!std::isfinite(rewards[i]) || !std::isfinite(old_log_probs[i]) || !std::isfinite(values[i]))
            throw ContractError("ppo rollout: non-finite entry");
    }
}

Advantages compute_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                       const std::vector<char>& terminal, double gamma, double lambda) {
    const std::size_t n = rewards.size();
    if (values.size() != n || terminal.size() != n) throw ContractError("gae: inputs differ in length");
    Advantages out;
    out.advantages.assign(n, 0.0);
    out.returns.assign(n, 0.0);
    double next_adv = 0.0, next_value = 0.0;
    for (std::size_t k = n; k-- > 0;) {
        if (terminal[k]) next_adv = next_value = 0.0;
        const double delta = rewards[k] + gamma * next_value - values[k];
        next_adv = delta + gamma * lambda * next_adv;
        out.advantages[k] = next_adv;
        out.returns[k] = next_adv + values[k];
        next_value = values[k];
    }
    return out;
}

PpoAgent::PpoAgent(PpoConfig config, Rng& rng) : config_(std::move(config)), opt_({}, {}) {
    config_.validate();
    const std::size_t s = config_.state_dim, h = config_.hidden, a = config_.num_actions;
    params_.add("shared_w", glorot(s, h, rng));
    params_.add("shared_b", Tensor({h}, 0.0));
    // A small policy layer starts the policy close to uniform.
    Tensor pw = glorot(h, a, rng);
    for (auto& v : pw.storage()) v *= 0.01;
    params_.add("pi_w", std::move(pw));
    params_.add("pi_b", Tensor({a}, 0.0));
    params_.add("v_w", glorot(h, 1, rng));
    params_.add("v_b", Tensor({1}, 0.0));
    opt_ = Adam(params_.nodes(), {.lr = config_.lr, .max_grad_norm = config_.max_grad_norm});
}

PpoHeads PpoAgent::heads(const Node& s) const {
    if (s.shape().size() != 2 || s.shape()[1] != config_.state_dim) throw ShapeError("ppo heads: bad state shape");
    const Node h = ng::relu(ng::linear(s, params_.get("shared_w"), params_.get("shared_b")));
    const Node logits = ng::linear(h, params_.get("pi_w"), params_.get("pi_b"));
    const Node value = ng::linear(h, params_.get("v_w"), params_.get("v_b"));
    return {ng::log_softmax_rows(logits), ng::reshape(value, {s.shape()[0]})};
}

double clipped_objective(double ratio, double advantage, double clip) {
    return std::min(ratio * advantage, std::clamp(ratio, 1.0 - clip, 1.0 + clip) * advantage);
}

namespace {

Tensor gather_rows(const std::vector<std::vector<double>>& src, const std::vector<std::size_t>& rows,
                   std::size_t width, std::size_t offset = 0) {
    Tensor t({rows.size(), width});
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy_n(src[rows[i]].begin() + static_cast<std::ptrdiff_t>(offset), width,
                    t.storage().begin() + static_cast<std::ptrdiff_t>(i * width));
    return t;
}

}  // namespace

PpoLosses ppo_losses(const PpoAgent& agent, const RssmEncoder& model, const PpoRollout& rollout,
                     const std::vector<std::size_t>& rows, const std::vector<double>& advantages,
                     const std::vector<double>& returns) {
    const auto& enc = model.config();
    const auto& cfg = agent.config();
    if (rows.empty()) throw ContractError("ppo_losses: no rows");
    if (advantages.size() != rollout.size() || returns.size() != rollout.size())
        throw ContractError("ppo_losses: advantages do not match the rollout");
    const std::size_t m = rows.size(), a = cfg.num_actions;
    const LatentState prev{Node::constant(gather_rows(rollout.prev_states, rows, enc.deter_dim)),
                           Node::constant(gather_rows(rollout.prev_states, rows, enc.stoch_dim, enc.deter_dim))};
    const EncodedStep step =
        model.step_with_noise(prev, Node::constant(gather_rows(rollout.prev_actions, rows, a)),
                              Node::constant(gather_rows(rollout.frames, rows, enc.obs_dim)),
                              gather_rows(rollout.noise, rows, enc.stoch_dim));
    const PpoHeads heads = agent.heads(step.state.representation());

    Tensor one_hot({m, a}, 0.0), old_lp({m}), adv({m}), ret({m});
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t r = rows[i];
        one_hot.at(i, rollout.actions[r]) = 1.0;
        old_lp[i] = rollout.old_log_probs[r];
        adv[i] = advantages[r];
        ret[i] = returns[r];
    }
    const Node log_prob = ng::sum(ng::mul(heads.log_probs, Node::constant(one_hot)), 1);
    const Node ratio = ng::exp(ng::sub(log_prob, Node::constant(old_lp)));
    const Node a_node = Node::constant(adv);
    const Node surrogate = ng::minimum(ng::mul(ratio, a_node), ng::mul(ng::clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip), a_node));
    const Node policy = ng::neg(ng::mean(surrogate));
    const Node value = ng::mean(ng::square(ng::sub(heads.value, Node::constant(ret))));
    const Node probs = ng::exp(heads.log_probs);
    const Node entropy = ng::neg(ng::mean(ng::sum(ng::mul(probs, heads.log_probs), 1)));
    const Node total = ng::sub(ng::add(policy, ng::scale(value, cfg.value_coef)), ng::scale(entropy, cfg.entropy_coef));

    PpoLosses out{total, policy, value, entropy};
    for (std::size_t i = 0; i < m; ++i) {
        const double r = ratio.value()[i];
        if (std::abs(r - 1.0) > cfg.clip) out.clip_fraction += 1.0 / static_cast<double>(m);
        out.ratio_mean += r / static_cast<double>(m);
        // Low-variance estimator of KL(old || new).
        out.approx_kl += ((r - 1.0) - std::log(r)) / static_cast<double>(m);
    }
    return out;
}

std::vector<std::string> ppo_metric_keys() {
    return {"ppo/total", "ppo/policy_loss", "ppo/value_loss", "ppo/entropy", "ppo/approx_kl", "ppo/clip_fraction"};
}

std::vector<std::pair<std::string, double>> ppo_update(PpoAgent& agent, RssmEncoder& model, Adam& encoder_optimizer,
                                                       const PpoRollout& rollout, Rng& rng,
                                                       const std::function<void()>& after_minibatch) {
    const auto& cfg = agent.config();
    rollout.validate(model.config(), cfg.num_actions);
    if (model.config().state_dim() != cfg.state_dim) throw ShapeError("ppo_update: encoder and agent disagree");
    Advantages gae = compute_gae(rollout.rewards, rollout.values, rollout.terminal, cfg.gamma, cfg.gae_lambda);
    if (cfg.normalize_advantages && rollout.size() > 1) {
        RunningMeanStd s;
        for (double v : gae.advantages) s.update(v);
        const double sd = std::sqrt(s.variance()) + 1e-8;
        for (double& v : gae.advantages) v = (v - s.mean()) / sd;
    }

    const std::size_t n = rollout.size();
    const std::size_t per = std::max<std::size_t>(1, n / cfg.minibatches);
    std::vector<std::size_t> order(n);
    double total = 0, policy = 0, value = 0, entropy = 0, kl = 0, clipped = 0, count = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t i = n; i > 1; --i)
            std::swap(order[i - 1], order[std::uniform_int_distribution<std::size_t>(0, i - 1)(rng)]);
        for (std::size_t b = 0; b < cfg.minibatches && b * per < n; ++b) {
            const std::size_t end = b + 1 == cfg.minibatches ? n : std::min(n, (b + 1) * per);
            const std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(b * per),
                                                order.begin() + static_cast<std::ptrdiff_t>(end));
            const PpoLosses l = ppo_losses(agent, model, rollout, rows, gae.advantages, gae.returns);
            if (!std::isfinite(l.total.item())) throw DomainError("ppo_update: non-finite loss");
            agent.params().zero_grads();
            model.params().zero_grads();
            ng::backward(l.total);
            agent.optimizer().step();
            if (cfg.train_encoder) encoder_optimizer.step();
            model.params().zero_grads();
            total += l.total.item();
            policy += l.policy.item();
            value += l.value.item();
            entropy += l.entropy.item();
            kl += l.approx_kl;
            clipped += l.clip_fraction;
            count += 1.0;
            if (after_minibatch) after_minibatch();
        }
    }
    return {{"ppo/total", total / count},       {"ppo/policy_loss", policy / count},
            {"ppo/value_loss", value / count},  {"ppo/entropy", entropy / count},
            {"ppo/approx_kl", kl / count},      {"ppo/clip_fraction", clipped / count}};
}

PpoAction ppo_act(const PpoAgent& agent, const RssmEncoder& model, const Carry& carry, std::span<const double> frame,
                  ActMode mode, Rng& rng) {
    const std::size_t a = agent.config().num_actions;
    if (model.config().action_dim != a) throw ShapeError("ppo_act: encoder action width differs from the policy");
    const FilterStep f = filter_step(model, carry, frame, mode, rng);
    const PpoHeads heads = agent.heads(f.state.representation());
    const auto& lp = heads.log_probs.value().storage();
    std::size_t pick = 0;
    if (mode == ActMode::deterministic) {
        pick = static_cast<std::size_t>(std::max_element(lp.begin(), lp.end()) - lp.begin());
    } else {
        double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng), acc = 0.0;
        pick = a - 1;
        for (std::size_t k = 0; k < a; ++k) {
            acc += std::exp(lp[k]);
            if (u < acc) {
                pick = k;
                break;
            }
        }
    }
    PpoAction out;
    out.index = pick;
    out.one_hot.assign(a, 0.0);
    out.one_hot[pick] = 1.0;
    out.log_prob = lp[pick];
    out.value = heads.value.item();
    out.prev_state = carry.state.representation().value().storage();
    out.noise = f.noise.storage();
    out.next = Carry{f.state, Tensor({1, a}, out.one_hot)};
    return out;
}

}  // namespace dribo
