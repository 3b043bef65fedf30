#pragma once

// Finite-difference gradient suites shared by the CLI and the test binaries.

#include <string>
#include <vector>

#include "dribo/params.hpp"

namespace dribo {

struct GradCheckResult {
    std::string name;
    double max_rel_error = 0.0;
    std::size_t trials = 0;
};

inline constexpr double kGradCheckEps = 1e-5;

/// Every dispatchable op kind plus the fused helpers, on random inputs with |x| <= 2.
std::vector<GradCheckResult> op_gradient_suite(Rng& rng, std::size_t trials);
/// kl, skl, log_prob and rsample with respect to every distribution parameter.
std::vector<GradCheckResult> gaussian_gradient_suite(Rng& rng, std::size_t trials);
/// encode_sequence for T = 1..4, every encoder parameter, continuous and discrete action variants.
std::vector<GradCheckResult> rssm_gradient_suite(Rng& rng);
/// dribo_loss on an N=2, T=3 micro-batch over all encoder and critic parameters.
std::vector<GradCheckResult> loss_gradient_suite(Rng& rng);
/// Critic, actor and temperature losses of the SAC update.
std::vector<GradCheckResult> sac_gradient_suite(Rng& rng);
/// Clipped surrogate, value and entropy losses of the PPO update.
std::vector<GradCheckResult> ppo_gradient_suite(Rng& rng);

std::vector<GradCheckResult> full_gradient_suite(std::uint64_t seed);

}  // namespace dribo
