#include "dribo/replay.hpp"

#include <algorithm>
#include <cmath>

namespace dribo {

namespace ng = ndgrad;

void Episode::validate() const {
    const std::size_t t = length();
    if (t == 0) throw ContractError("episode: empty");
    if (actions.size() != t || rewards.size() != t) throw ContractError("episode: observations, actions and rewards differ in length");
    for (const auto& o : observations)
        if (o.size() != height * width) throw ContractError("episode: frame size does not match geometry");
    for (const auto& a : actions)
        if (a.size() != actions.front().size() || a.empty()) throw ContractError("episode: ragged actions");
    for (double r : rewards)
        if (!std::isfinite(r)) throw ContractError("episode: non-finite reward");
    if (old_states) {
        if (old_states->size() != t) throw ContractError("episode: old states length mismatch");
        for (const auto& s : *old_states)
            if (s.size() != old_states->front().size()) throw ContractError("episode: ragged old states");
    }
}

SequenceReplay::SequenceReplay(std::size_t capacity, std::size_t window) : capacity_(capacity), window_(window) {
    if (capacity == 0 || window == 0) throw ContractError("replay: capacity and window must be positive");
}

void SequenceReplay::push(Episode episode) {
    episode.validate();
    if (episode.length() < window_)
        throw ContractError("replay: episode of length " + std::to_string(episode.length()) +
                            " is shorter than the window " + std::to_string(window_));
    if (!episodes_.empty()) {
        const Episode& first = episodes_.front();
        if (first.height != episode.height || first.width != episode.width ||
            first.actions.front().size() != episode.actions.front().size() ||
            first.old_states.has_value() != episode.old_states.has_value())
            throw ContractError("replay: episode layout differs from stored episodes");
    }
    steps_ += episode.length();
    episodes_.push_back(std::move(episode));
    while (episodes_.size() > capacity_) {
        steps_ -= episodes_.front().length();
        episodes_.pop_front();
    }
}

std::vector<WindowRef> SequenceReplay::sample_refs(std::size_t n, Rng& rng) const {
    if (episodes_.empty()) throw ContractError("replay: sampling from an empty buffer");
    if (n == 0) throw ContractError("replay: batch size must be positive");
    // Cumulative count of valid offsets lets one uniform draw pick (episode, offset).
    std::vector<std::size_t> cum;
    cum.reserve(episodes_.size());
    std::size_t total = 0;
    for (const auto& e : episodes_) {
        total += e.length() - window_ + 1;
        cum.push_back(total);
    }
    std::uniform_int_distribution<std::size_t> pick(0, total - 1);
    std::vector<WindowRef> out;
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t j = pick(rng);
        const std::size_t e = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), j) - cum.begin());
        out.push_back({e, j - (e == 0 ? 0 : cum[e - 1])});
    }
    return out;
}

SequenceBatch SequenceReplay::gather(const std::vector<WindowRef>& refs) const {
    if (refs.empty()) throw ContractError("replay: no windows requested");
    const Episode& first = episodes_.at(refs.front().episode);
    const std::size_t n = refs.size(), px = first.height * first.width, ad = first.actions.front().size();
    SequenceBatch b;
    b.height = first.height;
    b.width = first.width;
    b.observations.assign(window_, ng::Tensor({n, px}));
    b.actions.assign(window_, ng::Tensor({n, ad}));
    b.rewards = ng::Tensor({window_, n});
    if (first.old_states) b.old_states.emplace(window_, ng::Tensor({n, first.old_states->front().size()}));
    for (std::size_t i = 0; i < n; ++i) {
        const Episode& e = episodes_.at(refs[i].episode);
        if (refs[i].offset + window_ > e.length()) throw ContractError("replay: window runs past the episode");
        for (std::size_t t = 0; t < window_; ++t) {
            const std::size_t s = refs[i].offset + t;
            std::copy(e.observations[s].begin(), e.observations[s].end(),
                      b.observations[t].storage().begin() + static_cast<std::ptrdiff_t>(i * px));
            std::copy(e.actions[s].begin(), e.actions[s].end(),
                      b.actions[t].storage().begin() + static_cast<std::ptrdiff_t>(i * ad));
            b.rewards.at(t, i) = e.rewards[s];
            if (b.old_states) {
                const auto& os = (*e.old_states)[s];
                const std::size_t w = os.size();
                std::copy(os.begin(), os.end(), (*b.old_states)[t].storage().begin() + static_cast<std::ptrdiff_t>(i * w));
            }
        }
    }
    return b;
}

}  // namespace dribo
