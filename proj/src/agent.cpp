#include "dribo/agent.hpp"

#include <algorithm>

namespace dribo {

namespace ng = ndgrad;

Carry initial_carry(const RssmEncoder& model) {
    return {model.zero_state(1), ng::Tensor({1, model.config().action_dim}, 0.0)};
}

FilterStep filter_step(const RssmEncoder& model, const Carry& carry, std::span<const double> frame, ActMode mode,
                       Rng& rng) {
    if (frame.size() != model.config().obs_dim) throw ShapeError("filter_step: frame size does not match encoder");
    const ng::Tensor obs({1, frame.size()}, std::vector<double>(frame.begin(), frame.end()));
    const ng::Shape zs{1, model.config().stoch_dim};
    ng::Tensor noise = mode == ActMode::stochastic ? standard_normal(zs, rng) : ng::Tensor(zs, 0.0);
    const EncodedStep s = model.step_with_noise(carry.state, ng::Node::constant(carry.prev_action),
                                                ng::Node::constant(obs), noise);
    return {LatentState{ng::Node::constant(s.state.h.value()), ng::Node::constant(s.state.z.value())},
            std::move(noise)};
}

ng::Tensor row_of(const ng::Tensor& m, std::size_t i) {
    const std::size_t d = m.dim(1);
    std::vector<double> v(m.storage().begin() + static_cast<std::ptrdiff_t>(i * d),
                          m.storage().begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
    return ng::Tensor({1, d}, std::move(v));
}

}  // namespace dribo
