#pragma once

// Joint training of the encoder with an agent.
//
// Every episode is collected, pushed to the replay and followed by updates.
// A SAC episode runs K gradient steps, each an agent update on a sampled
// batch and a dribo_loss update on two fresh augmentations of the same batch.
// A PPO rollout runs its epochs of minibatches and follows every minibatch
// with one dribo_loss update on a replay sample. beta comes from the
// schedule at the current episode.
//
// A run directory holds:
//   config.ini     canonical config text
//   metrics.tsv    metric records (see metrics.hpp)
//   final.ckpt     learner after the last episode
//   ep<N>.ckpt     periodic checkpoints when run.checkpoint_every > 0
//   last_good.ckpt written only when the NaN guard aborts a run

#include <filesystem>
#include <functional>
#include <memory>
#include <vector>

#include "dribo/checkpoint.hpp"
#include "dribo/config.hpp"
#include "dribo/metrics.hpp"
#include "dribo/mi.hpp"
#include "dribo/ppo.hpp"
#include "dribo/replay.hpp"
#include "dribo/sac.hpp"
#include "dribo/worlds.hpp"

namespace dribo {

/// Encoder, contrastive critic and agent of one run.
class Learner {
public:
    explicit Learner(const RunConfig& config);
    static Learner from_checkpoint(const Checkpoint& ckpt);
    Checkpoint to_checkpoint() const;

    const RunConfig& config() const noexcept { return config_; }
    RssmEncoder& encoder() { return *encoder_; }
    const RssmEncoder& encoder() const { return *encoder_; }
    BilinearCritic& critic() { return *critic_; }
    const BilinearCritic& critic() const { return *critic_; }
    /// SAC runs only.
    SacAgent& sac() { return *sac_; }
    const SacAgent& sac() const { return *sac_; }
    RssmEncoder& target_encoder() { return *target_encoder_; }
    /// PPO runs only.
    PpoAgent& ppo() { return *ppo_; }
    const PpoAgent& ppo() const { return *ppo_; }

    bool all_finite() const;

private:
    RunConfig config_;
    std::unique_ptr<RssmEncoder> encoder_;
    std::unique_ptr<BilinearCritic> critic_;
    std::unique_ptr<SacAgent> sac_;
    std::unique_ptr<RssmEncoder> target_encoder_;
    std::unique_ptr<PpoAgent> ppo_;
};

/// One played episode. Frames are stored at render size; the agent sees their central crop.
struct PlayedEpisode {
    Episode episode;
    double total_return = 0.0;
    std::vector<std::vector<double>> states;  // representation after each step's observation
    PpoRollout rollout;                       // PPO runs only
};

/// Plays one full episode. `uniform_random` replaces the policy with uniform random actions.
/// `normalizer` (PPO) rescales the rewards stored in the rollout.
PlayedEpisode play_episode(const Learner& learner, DistractorControl& env, BackgroundMode mode, ActMode act_mode,
                           Rng& env_rng, Rng& act_rng, bool uniform_random = false,
                           RewardNormalizer* normalizer = nullptr);

/// Metric keys a run of this agent kind writes once updates have started.
std::vector<std::string> declared_metric_keys(AgentKind agent);

struct TrainResult {
    std::filesystem::path output;
    std::vector<double> episode_returns;
    std::uint64_t env_steps = 0;
    std::vector<std::pair<std::size_t, std::pair<double, double>>> evaluations;  // episode, (train, test) return
};

/// Raised by the NaN guard after last_good.ckpt has been written.
class TrainingAborted : public DomainError {
public:
    explicit TrainingAborted(const std::string& what) : DomainError(what) {}
};

using EpisodeHook = std::function<void(std::size_t episode, double episode_return)>;

TrainResult train(const RunConfig& config, const EpisodeHook& on_episode = {});

/// Test hook: runs the loop but corrupts one encoder weight to NaN before the given episode's updates.
TrainResult train_with_fault(const RunConfig& config, std::size_t poison_episode);

}  // namespace dribo
