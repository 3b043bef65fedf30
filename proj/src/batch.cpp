#include "dribo/batch.hpp"

namespace dribo {

void SequenceBatch::validate() const {
    const std::size_t t = length();
    if (t == 0) throw ContractError("sequence batch: empty");
    const std::size_t n = batch();
    if (n == 0 || obs_dim() == 0) throw ContractError("sequence batch: zero batch or frame size");
    if (actions.size() != t) throw ContractError("sequence batch: actions/observations length mismatch");
    const std::size_t ad = action_dim();
    for (std::size_t k = 0; k < t; ++k) {
        if (observations[k].shape() != ndgrad::Shape{n, obs_dim()})
            throw ContractError("sequence batch: observation " + std::to_string(k) + " has shape " +
                                ndgrad::shape_str(observations[k].shape()));
        if (actions[k].shape() != ndgrad::Shape{n, ad})
            throw ContractError("sequence batch: action " + std::to_string(k) + " has shape " +
                                ndgrad::shape_str(actions[k].shape()));
    }
    if (rewards.shape() != ndgrad::Shape{t, n}) throw ContractError("sequence batch: rewards must be (T, N)");
    if (!rewards.all_finite()) throw ContractError("sequence batch: non-finite reward");
    if (old_states) {
        if (old_states->size() != t) throw ContractError("sequence batch: old state length mismatch");
        for (const auto& s : *old_states)
            if (s.rank() != 2 || s.dim(0) != n) throw ContractError("sequence batch: old state shape mismatch");
    }
}

}  // namespace dribo
