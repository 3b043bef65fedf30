#pragma once

// Proximal policy optimization over encoder representations, discrete actions.
//
// Collection stores, per step, the representation the policy held one step
// earlier (s_old), the previous action and the noise used for z. An update
// recomputes s_t = step(s_old_{t-1}, a_{t-1}, o_t) with that noise, so the
// encoder is part of the policy and unchanged parameters reproduce the
// collection-time log-probabilities exactly.

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "dribo/agent.hpp"
#include "dribo/rssm.hpp"

namespace dribo {

struct PpoConfig {
    std::size_t state_dim = 40;
    std::size_t num_actions = 4;
    std::size_t hidden = 64;
    double gamma = 0.99;
    double gae_lambda = 0.95;
    double clip = 0.2;
    double entropy_coef = 0.01;
    double value_coef = 0.5;
    double lr = 5e-4;
    double max_grad_norm = 0.5;
    std::size_t epochs = 3;
    std::size_t minibatches = 4;
    bool normalize_rewards = true;
    bool normalize_advantages = true;
    bool train_encoder = true;

    void validate() const;
};

/// Running mean and variance merged batch by batch.
class RunningMeanStd {
public:
    void update(double x);
    double mean() const noexcept { return mean_; }
    double variance() const noexcept { return count_ > 0 ? m2_ / count_ : 1.0; }
    double count() const noexcept { return count_; }

private:
    double mean_ = 0.0;
    double m2_ = 0.0;
    double count_ = 0.0;
};

/// Divides rewards by the running standard deviation of the discounted return.
class RewardNormalizer {
public:
    explicit RewardNormalizer(double gamma) : gamma_(gamma) {}
    double operator()(double reward, bool episode_end);
    const RunningMeanStd& stats() const noexcept { return stats_; }

private:
    double gamma_;
    double discounted_ = 0.0;
    RunningMeanStd stats_;
};

struct PpoRollout {
    std::vector<std::vector<double>> frames;
    std::vector<std::size_t> actions;
    std::vector<double> rewards;  // as used for advantages (normalized when enabled)
    std::vector<double> old_log_probs;
    std::vector<double> values;
    std::vector<std::vector<double>> prev_states;   // s_old one step back; zeros at episode start
    std::vector<std::vector<double>> prev_actions;  // one-hot; zeros at episode start
    std::vector<std::vector<double>> noise;
    std::vector<char> terminal;  // last step of an episode

    std::size_t size() const noexcept { return actions.size(); }
    void validate(const EncoderConfig& encoder, std::size_t num_actions) const;
};

struct Advantages {
    std::vector<double> advantages;
    std::vector<double> returns;  // advantages + values
};

/// Generalized advantage estimation; the value after a terminal step is zero.
Advantages compute_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                       const std::vector<char>& terminal, double gamma, double lambda);

struct PpoHeads {
    ndgrad::Node log_probs;  // (rows, A), log-softmax
    ndgrad::Node value;      // (rows)
};

struct PpoLosses {
    ndgrad::Node total;
    ndgrad::Node policy;
    ndgrad::Node value;
    ndgrad::Node entropy;
    double clip_fraction = 0.0;
    double approx_kl = 0.0;
    double ratio_mean = 0.0;
};

class PpoAgent {
public:
    PpoAgent(PpoConfig config, Rng& rng);
    PpoAgent(const PpoAgent&) = delete;
    PpoAgent& operator=(const PpoAgent&) = delete;

    const PpoConfig& config() const noexcept { return config_; }
    ParamRegistry& params() noexcept { return params_; }
    const ParamRegistry& params() const noexcept { return params_; }
    Adam& optimizer() { return opt_; }

    PpoHeads heads(const ndgrad::Node& s) const;

private:
    PpoConfig config_;
    ParamRegistry params_;
    Adam opt_;
};

/// Clipped surrogate, value and entropy terms on the rollout rows in `rows`.
PpoLosses ppo_losses(const PpoAgent& agent, const RssmEncoder& model, const PpoRollout& rollout,
                     const std::vector<std::size_t>& rows, const std::vector<double>& advantages,
                     const std::vector<double>& returns);

/// Clipped objective term min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A) for one sample.
double clipped_objective(double ratio, double advantage, double clip);

std::vector<std::string> ppo_metric_keys();

/// `epochs` passes of `minibatches` shuffled minibatches; `after_minibatch` runs after every optimizer step.
std::vector<std::pair<std::string, double>> ppo_update(PpoAgent& agent, RssmEncoder& model, Adam& encoder_optimizer,
                                                       const PpoRollout& rollout, Rng& rng,
                                                       const std::function<void()>& after_minibatch = {});

struct PpoAction {
    std::size_t index = 0;
    std::vector<double> one_hot;
    double log_prob = 0.0;
    double value = 0.0;
    std::vector<double> prev_state;  // representation held before this step
    std::vector<double> noise;
    Carry next;
};

PpoAction ppo_act(const PpoAgent& agent, const RssmEncoder& model, const Carry& carry, std::span<const double> frame,
                  ActMode mode, Rng& rng);

}  // namespace dribo
