#pragma once

// Run configuration and its text form.
//
// The file is line-oriented `key = value` grouped under section headers:
//
//   [run]
//   agent = sac
//   seed = 3
//   episodes = 120
//
//   [beta]
//   ablate = true
//
// Every key is optional; missing keys keep the defaults below. Unknown
// sections or keys, malformed numbers and failed validation are errors.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "dribo/loss.hpp"
#include "dribo/ppo.hpp"
#include "dribo/rssm.hpp"
#include "dribo/sac.hpp"
#include "dribo/views.hpp"
#include "dribo/worlds.hpp"

namespace dribo {

enum class AgentKind { sac, ppo };

struct RunSettings {
    AgentKind agent = AgentKind::sac;
    std::uint64_t seed = 1;
    std::string output = "runs/default";
    std::size_t episodes = 100;
    /// Episodes collected with uniform random actions before SAC updates start.
    std::size_t seed_episodes = 2;
    /// Gradient steps K per collected SAC episode.
    std::size_t updates_per_episode = 25;
    /// Episodes per PPO rollout.
    std::size_t rollout_episodes = 1;
    std::size_t batch_size = 8;   // N
    std::size_t window = 16;      // T
    std::size_t replay_capacity = 10000;
    /// Write a checkpoint every this many episodes; 0 only writes the final one.
    std::size_t checkpoint_every = 0;
    /// Run deterministic evaluation every this many episodes; 0 disables.
    std::size_t eval_every = 0;
    std::size_t eval_episodes = 8;
};

struct DriboSettings {
    double lr = 1e-3;
    double max_grad_norm = 100.0;
    double critic_init_noise = 0.01;
    bool block_conditioning_grad = false;
    bool shared_noise = false;
    /// Drop the dribo loss entirely (representation trained by the agent only).
    bool disabled = false;
};

struct BetaSettings {
    BetaSchedule schedule;
    /// beta = 0 at every episode: the ablation without the SKL and KL terms.
    bool ablate = false;

    double at(long episode) const { return ablate ? 0.0 : beta_at(schedule, episode); }
};

struct RunConfig {
    RunSettings run;
    DistractorConfig env;
    EncoderConfig model;
    AugmentationSpec augment;
    /// Side of the square random crop; 0 picks render_size - max(1, render_size / 7).
    std::size_t crop = 0;
    BetaSettings beta;
    DriboSettings dribo;
    SacConfig sac;
    PpoConfig ppo;

    /// Fills every derived field (observation size, action and state widths) and validates.
    void finalize();
    void validate() const;
};

/// Defaults sized for a laptop.
RunConfig default_config();
/// Wide heads, a large RSSM and a long replay buffer; slow on a single core.
RunConfig full_scale_config();

/// Applies a config text on top of `base` and finalizes. Throws ConfigError.
RunConfig parse_config(const std::string& text, RunConfig base = default_config());
RunConfig load_config(const std::filesystem::path& path, RunConfig base = default_config());

/// Canonical text: every key in a fixed order, numbers with 17 significant digits.
std::string format_config(const RunConfig& config);

/// Flat "section.key" -> value view of format_config, and its inverse.
std::map<std::string, std::string> config_to_map(const RunConfig& config);
RunConfig config_from_map(const std::map<std::string, std::string>& kv);

class ConfigError : public ContractError {
public:
    explicit ConfigError(const std::string& what) : ContractError(what) {}
};

}  // namespace dribo
