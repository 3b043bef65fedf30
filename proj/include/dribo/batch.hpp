#pragma once

#include <optional>
#include <vector>

#include "dribo/ndgrad.hpp"

namespace dribo {

/// N aligned windows of length T, stored time-major so each step is a ready (N, ...) matrix.
struct SequenceBatch {
    std::size_t height = 0;  // observation frame geometry; pixels are height * width
    std::size_t width = 0;
    std::vector<ndgrad::Tensor> observations;  // T x (N, height*width), values in [0, 1]
    std::vector<ndgrad::Tensor> actions;       // T x (N, action_dim); actions[t] follows observations[t]
    ndgrad::Tensor rewards;                    // (T, N); rewards[t] follows actions[t]
    std::optional<std::vector<ndgrad::Tensor>> old_states;  // T x (N, H+Z) when collected on-policy

    std::size_t length() const noexcept { return observations.size(); }
    std::size_t batch() const { return observations.empty() ? 0 : observations.front().dim(0); }
    std::size_t obs_dim() const noexcept { return height * width; }
    std::size_t action_dim() const { return actions.empty() ? 0 : actions.front().dim(1); }

    /// Throws ContractError unless every field agrees on N, T and widths and rewards are finite.
    void validate() const;
};

}  // namespace dribo
