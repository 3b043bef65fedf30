#pragma once

// Soft actor-critic over encoder representations.
//
// Each update turns a (T, N) sequence batch into (T-1)*N transitions
// (s_t, a_t, r_t, s_{t+1}). s_t comes from the online encoder and carries the
// critic gradient back into it; s_{t+1} comes from the target encoder. The
// actor and the temperature see s_t detached.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dribo/agent.hpp"
#include "dribo/batch.hpp"
#include "dribo/rssm.hpp"

namespace dribo {

struct SacConfig {
    std::size_t state_dim = 40;
    std::size_t action_dim = 1;
    std::size_t hidden = 64;
    double gamma = 0.99;
    double tau_q = 0.01;
    double tau_encoder = 0.05;
    double init_alpha = 0.1;
    /// Defaults to -action_dim when unset.
    std::optional<double> target_entropy;
    double actor_lr = 1e-3;
    double critic_lr = 1e-3;
    double alpha_lr = 1e-3;
    double encoder_lr = 1e-3;
    double log_std_min = -10.0;
    double log_std_max = 2.0;
    /// Let the Bellman residual train the encoder.
    bool critic_trains_encoder = true;

    double entropy_target() const { return target_entropy ? *target_entropy : -static_cast<double>(action_dim); }
    void validate() const;
};

struct SquashedSample {
    ndgrad::Node action;    // (rows, A), inside (-1, 1)
    ndgrad::Node log_prob;  // (rows)
};

struct SacTransitions {
    ndgrad::Node state;       // (M, S), online encoder
    ndgrad::Node next_state;  // (M, S), target encoder, constant
    ndgrad::Tensor action;    // (M, A)
    ndgrad::Tensor reward;    // (M)
    std::size_t rows() const { return action.dim(0); }
};

/// Every random draw one update consumes, so the losses are deterministic functions of parameters.
struct SacNoise {
    std::vector<ndgrad::Tensor> encoder;         // T x (N, Z)
    std::vector<ndgrad::Tensor> target_encoder;  // T x (N, Z)
    ndgrad::Tensor next_action;                  // (M, A)
    ndgrad::Tensor action;                       // (M, A)
};

class SacAgent {
public:
    SacAgent(SacConfig config, Rng& rng);
    SacAgent(const SacAgent&) = delete;
    SacAgent& operator=(const SacAgent&) = delete;

    const SacConfig& config() const noexcept { return config_; }
    ParamRegistry& actor() noexcept { return actor_; }
    ParamRegistry& critic() noexcept { return critic_; }
    ParamRegistry& critic_target() noexcept { return critic_target_; }
    ParamRegistry& temperature() noexcept { return temperature_; }
    const ParamRegistry& actor() const noexcept { return actor_; }
    const ParamRegistry& critic() const noexcept { return critic_; }
    const ParamRegistry& critic_target() const noexcept { return critic_target_; }
    const ParamRegistry& temperature() const noexcept { return temperature_; }

    double alpha() const;
    ndgrad::Node log_alpha() const { return temperature_.get("log_alpha"); }

    /// Twin Q values (rows) for states and actions, from the online or the target critic.
    std::pair<ndgrad::Node, ndgrad::Node> q_values(const ndgrad::Node& s, const ndgrad::Node& a,
                                                   bool target = false) const;
    /// Pre-squash Gaussian parameters (mean, log_std).
    std::pair<ndgrad::Node, ndgrad::Node> policy(const ndgrad::Node& s) const;
    SquashedSample sample(const ndgrad::Node& s, const ndgrad::Tensor& noise) const;
    ndgrad::Node mean_action(const ndgrad::Node& s) const;

    Adam& actor_optimizer() { return actor_opt_; }
    Adam& critic_optimizer() { return critic_opt_; }
    Adam& temperature_optimizer() { return temperature_opt_; }

private:
    SacConfig config_;
    ParamRegistry actor_;
    ParamRegistry critic_;
    ParamRegistry critic_target_;
    ParamRegistry temperature_;
    Adam actor_opt_;
    Adam critic_opt_;
    Adam temperature_opt_;
};

SacNoise draw_sac_noise(const SacAgent& agent, const EncoderConfig& encoder, std::size_t batch, std::size_t window,
                        Rng& rng);

SacTransitions encode_transitions(const RssmEncoder& model, const RssmEncoder& target_model, const SequenceBatch& batch,
                                  const SacNoise& noise);

/// Soft value target y = r + gamma * (min_i Qhat_i(s', a') - alpha log pi(a'|s')), gradient-free.
ndgrad::Node sac_target(const SacAgent& agent, const SacTransitions& tr, const SacNoise& noise);
/// mean (Q1 - y)^2 + mean (Q2 - y)^2.
ndgrad::Node sac_critic_loss(const SacAgent& agent, const SacTransitions& tr, const SacNoise& noise);
/// mean(alpha log pi(a|s) - min_i Q_i(s, a)) with s detached and alpha held fixed.
ndgrad::Node sac_actor_loss(const SacAgent& agent, const SacTransitions& tr, const SacNoise& noise);
/// -mean(alpha (log pi(a|s) + target_entropy)) with log pi held fixed.
ndgrad::Node sac_alpha_loss(const SacAgent& agent, const SacTransitions& tr, const SacNoise& noise);

std::vector<std::string> sac_metric_keys();

/// One full update: critic (and encoder), actor, temperature, then both Polyak averages.
/// Throws DomainError when any loss is non-finite, before any parameter changes.
std::vector<std::pair<std::string, double>> sac_update(SacAgent& agent, RssmEncoder& model, RssmEncoder& target_model,
                                                       Adam& encoder_optimizer, const SequenceBatch& batch, Rng& rng);

struct SacAction {
    std::vector<double> action;
    Carry next;
};

/// Filters one frame and queries the policy; deterministic mode uses the posterior mean and tanh(mean).
SacAction sac_act(const SacAgent& agent, const RssmEncoder& model, const Carry& carry, std::span<const double> frame,
                  ActMode mode, Rng& rng);

}  // namespace dribo
