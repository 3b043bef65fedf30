#pragma once

// FIFO store of whole episodes sampled as fixed-length contiguous windows.

#include <cstdint>
#include <deque>
#include <optional>
#include <vector>

#include "dribo/batch.hpp"
#include "dribo/params.hpp"

namespace dribo {

/// One recorded episode. actions[t] is taken after observations[t] and earns rewards[t].
struct Episode {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::vector<double>> observations;
    std::vector<std::vector<double>> actions;
    std::vector<double> rewards;
    /// Representation the collecting policy held when it acted, one per step.
    std::optional<std::vector<std::vector<double>>> old_states;
    std::size_t background_id = 0;

    std::size_t length() const noexcept { return observations.size(); }
    void validate() const;
};

struct WindowRef {
    std::size_t episode = 0;  // position in the buffer at sampling time
    std::size_t offset = 0;
    bool operator==(const WindowRef&) const = default;
};

class SequenceReplay {
public:
    /// `capacity` counts episodes; `window` is the sequence length T every episode must cover.
    SequenceReplay(std::size_t capacity, std::size_t window);

    void push(Episode episode);
    std::size_t size() const noexcept { return episodes_.size(); }
    std::size_t capacity() const noexcept { return capacity_; }
    std::size_t window() const noexcept { return window_; }
    std::size_t total_steps() const noexcept { return steps_; }
    const Episode& episode(std::size_t i) const { return episodes_.at(i); }

    /// n windows drawn uniformly over all valid (episode, offset) pairs.
    std::vector<WindowRef> sample_refs(std::size_t n, Rng& rng) const;
    SequenceBatch gather(const std::vector<WindowRef>& refs) const;
    SequenceBatch sample(std::size_t n, Rng& rng) const { return gather(sample_refs(n, rng)); }

private:
    std::size_t capacity_;
    std::size_t window_;
    std::size_t steps_ = 0;
    std::deque<Episode> episodes_;
};

}  // namespace dribo
