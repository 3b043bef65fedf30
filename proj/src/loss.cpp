#include "dribo/loss.hpp"

#include <algorithm>
#include <cmath>

namespace dribo {

namespace ng = ndgrad;
using ng::Node;
using ng::Tensor;

void BetaSchedule::validate() const {
    if (!(beta_start > 0.0) || !(beta_end >= beta_start) || !std::isfinite(beta_end))
        throw ContractError("beta schedule: need 0 < beta_start <= beta_end");
    if (start_episode < 0 || end_episode <= start_episode)
        throw ContractError("beta schedule: need 0 <= start_episode < end_episode");
}

double beta_at(const BetaSchedule& s, long episode) {
    s.validate();
    if (episode < 0) throw ContractError("beta_at: negative episode");
    if (episode <= s.start_episode) return s.beta_start;
    if (episode >= s.end_episode) return s.beta_end;
    const double frac = static_cast<double>(episode - s.start_episode) /
                        static_cast<double>(s.end_episode - s.start_episode);
    return s.beta_start * std::pow(s.beta_end / s.beta_start, frac);
}

Node skl_sequence(const std::vector<DiagGaussian>& post1, const std::vector<DiagGaussian>& post2) {
    if (post1.empty() || post1.size() != post2.size())
        throw ContractError("skl_sequence: need two equal-length, non-empty posterior lists");
    std::vector<Node> per_step;
    per_step.reserve(post1.size());
    for (std::size_t t = 0; t < post1.size(); ++t) per_step.push_back(skl(post1[t], post2[t]));
    return ng::mean(ng::concat(per_step, 0));
}

Node kl_balanced(const DiagGaussian& post, const DiagGaussian& prior, double prior_weight) {
    // Both routes evaluate the same arithmetic, so the forward value is KL(post || prior) bit for bit.
    const Node toward_prior = kl(post.detached(), prior);
    const Node toward_post = kl(post, prior.detached());
    return ng::balance(toward_prior, toward_post, prior_weight);
}

std::vector<std::string> dribo_metric_keys() {
    return {"dribo/total", "dribo/infonce", "dribo/infonce_lse", "dribo/skl", "dribo/kl_balance", "dribo/beta"};
}

std::vector<std::pair<std::string, double>> DriboLossOutput::metrics() const {
    return {
        {"dribo/total", total.item()},
        {"dribo/infonce", infonce_value},
        {"dribo/infonce_lse", infonce_value - std::log(static_cast<double>(pairs))},
        {"dribo/skl", skl_value},
        {"dribo/kl_balance", kl_balance_value},
        {"dribo/beta", beta},
    };
}

namespace {

void check_views(const SequenceBatch& a, const SequenceBatch& b) {
    a.validate();
    b.validate();
    if (a.length() != b.length() || a.batch() != b.batch() || a.obs_dim() != b.obs_dim())
        throw ContractError("dribo_loss: views differ in shape");
    for (std::size_t t = 0; t < a.length(); ++t)
        if (a.actions[t].storage() != b.actions[t].storage())
            throw ContractError("dribo_loss: views must share their action sequence");
}

std::vector<DiagGaussian> posteriors(const std::vector<EncodedStep>& steps) {
    std::vector<DiagGaussian> out;
    out.reserve(steps.size());
    for (const auto& s : steps) out.push_back(s.posterior);
    return out;
}

// Same posteriors as encode_sequence produced, but each conditioned on a detached copy of s_{t-1}.
std::vector<DiagGaussian> posteriors_detached_history(const RssmEncoder& model, const SequenceBatch& view,
                                                      const std::vector<EncodedStep>& steps) {
    std::vector<DiagGaussian> out;
    out.reserve(steps.size());
    LatentState prev = model.zero_state(view.batch());
    Node prev_action = Node::constant(Tensor({view.batch(), view.action_dim()}, 0.0));
    for (std::size_t t = 0; t < steps.size(); ++t) {
        const Node h = model.det_step(prev.detached(), prev_action);
        out.push_back(model.posterior(h, Node::constant(view.observations[t])));
        prev = steps[t].state;
        prev_action = Node::constant(view.actions[t]);
    }
    return out;
}

Node pool(const std::vector<EncodedStep>& steps) {
    std::vector<Node> reps;
    reps.reserve(steps.size());
    for (const auto& s : steps) reps.push_back(s.state.representation());
    return ng::concat(reps, 0);
}

Node balance_term(const std::vector<EncodedStep>& steps, bool plain) {
    std::vector<Node> rows;
    rows.reserve(steps.size());
    for (const auto& s : steps) rows.push_back(plain ? kl(s.posterior, s.prior) : kl_balanced(s.posterior, s.prior));
    return ng::mean(ng::concat(rows, 0));
}

}  // namespace

DriboLossOutput dribo_loss(const SequenceBatch& view1, const SequenceBatch& view2, const RssmEncoder& model,
                           const BilinearCritic& critic, double beta, const NoiseFn& noise,
                           const DriboLossOptions& options) {
    check_views(view1, view2);
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw ContractError("dribo_loss: beta must be finite and >= 0");
    if (view1.actions.front().dim(1) != model.config().action_dim || view1.obs_dim() != model.config().obs_dim)
        throw ContractError("dribo_loss: batch does not match the encoder configuration");

    NoiseFn noise1 = noise;
    NoiseFn noise2 = noise;
    std::vector<Tensor> recorded;
    if (options.shared_noise) {
        noise1 = [&](const ng::Shape& shape) {
            recorded.push_back(noise(shape));
            return recorded.back();
        };
        std::size_t next = 0;
        noise2 = [&recorded, next](const ng::Shape&) mutable { return recorded.at(next++); };
    }

    const auto enc1 = model.encode_sequence(view1.observations, view1.actions, std::nullopt, noise1);
    const auto enc2 = model.encode_sequence(view2.observations, view2.actions, std::nullopt, noise2);

    DriboLossOutput out;
    out.pairs = view1.length() * view1.batch();
    out.beta = beta;
    out.infonce = infonce(score_matrix(pool(enc1), pool(enc2), critic));
    if (options.block_conditioning_grad)
        out.skl = skl_sequence(posteriors_detached_history(model, view1, enc1),
                               posteriors_detached_history(model, view2, enc2));
    else
        out.skl = skl_sequence(posteriors(enc1), posteriors(enc2));
    out.kl_balance = ng::scale(ng::add(balance_term(enc1, options.plain_kl), balance_term(enc2, options.plain_kl)), 0.5);

    out.total = ng::add(ng::neg(out.infonce), ng::scale(ng::add(out.skl, out.kl_balance), beta));
    out.infonce_value = out.infonce.item();
    out.skl_value = out.skl.item();
    out.kl_balance_value = out.kl_balance.item();
    if (!std::isfinite(out.total.item())) throw DomainError("dribo_loss: non-finite loss");
    return out;
}

}  // namespace dribo
