#pragma once

// State an agent carries between environment steps while acting.

#include <span>
#include <vector>

#include "dribo/rssm.hpp"

namespace dribo {

enum class ActMode { stochastic, deterministic };

struct Carry {
    LatentState state;         // (1, H) and (1, Z), constants
    ndgrad::Tensor prev_action;  // (1, action_dim)
};

/// Zero state and zero action, as at the start of every episode.
Carry initial_carry(const RssmEncoder& model);

struct FilterStep {
    LatentState state;     // detached
    ndgrad::Tensor noise;  // draw used for z (zeros in deterministic mode)
};

/// One posterior step on a single frame. Deterministic mode takes the posterior mean.
FilterStep filter_step(const RssmEncoder& model, const Carry& carry, std::span<const double> frame, ActMode mode,
                       Rng& rng);

/// Row i of a (N, D) tensor as a (1, D) tensor.
ndgrad::Tensor row_of(const ndgrad::Tensor& m, std::size_t i);

}  // namespace dribo
