#pragma once

// Recurrent state-space encoder.
//
//   h_t = LN(GRU(h_{t-1}, [z_{t-1}; act(a_{t-1})]))      deterministic transition
//   p(z_t | h_t)                                       prior head
//   p(z_t | h_t, o_t) with o_t -> LN(MLP(o_t))          posterior head
//
// The representation handed to agents and to the contrastive critic is
// s_t = [h_t; z_t]. At t = 1 the previous state is zero and the previous
// action is the zero action.

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dribo/gaussians.hpp"
#include "dribo/params.hpp"

namespace dribo {

struct EncoderConfig {
    std::size_t obs_dim = 24 * 24;
    std::size_t embed_hidden = 64;
    std::size_t embed_dim = 32;
    std::size_t deter_dim = 32;
    std::size_t stoch_dim = 8;
    std::size_t head_hidden = 32;
    /// Width of a continuous action, or the number of categories when discrete_actions is set.
    std::size_t action_dim = 1;
    bool discrete_actions = false;
    std::size_t action_embed_hidden = 64;
    std::size_t action_embed_dim = 4;

    std::size_t state_dim() const { return deter_dim + stoch_dim; }
    std::size_t transition_action_dim() const { return discrete_actions ? action_embed_dim : action_dim; }
    void validate() const;
    std::map<std::string, std::string> to_map() const;
    static EncoderConfig from_map(const std::map<std::string, std::string>& kv);
};

struct LatentState {
    ndgrad::Node h;  // (batch, H)
    ndgrad::Node z;  // (batch, Z)

    ndgrad::Node representation() const;
    LatentState detached() const;
    std::size_t batch() const { return h.shape()[0]; }
};

struct EncodedStep {
    LatentState state;
    DiagGaussian posterior;
    DiagGaussian prior;
    ndgrad::Tensor noise;  // standard-normal draw used for z
};

/// Produces the standard-normal draw for a reparameterized sample of the given shape.
using NoiseFn = std::function<ndgrad::Tensor(const ndgrad::Shape&)>;
NoiseFn gaussian_noise(Rng& rng);
NoiseFn zero_noise();

class RssmEncoder {
public:
    RssmEncoder(EncoderConfig config, Rng& rng);
    /// Adopts parameter values from a registry with the canonical layout (e.g. a checkpoint).
    RssmEncoder(EncoderConfig config, ParamRegistry params);
    RssmEncoder(const RssmEncoder&) = delete;
    RssmEncoder& operator=(const RssmEncoder&) = delete;
    RssmEncoder(RssmEncoder&&) = default;
    RssmEncoder& operator=(RssmEncoder&&) = default;

    /// Independent copy with its own leaves (used for target encoders).
    RssmEncoder clone() const;

    const EncoderConfig& config() const noexcept { return config_; }
    ParamRegistry& params() noexcept { return params_; }
    const ParamRegistry& params() const noexcept { return params_; }

    /// (batch, obs_dim) pixels -> (batch, E) layer-normalized features.
    ndgrad::Node embed_observation(const ndgrad::Node& obs) const;
    /// Raw action rows (continuous values or one-hot) -> transition input.
    ndgrad::Node embed_action(const ndgrad::Node& action) const;
    ndgrad::Node det_step(const LatentState& prev, const ndgrad::Node& action) const;
    DiagGaussian prior(const ndgrad::Node& h) const;
    DiagGaussian posterior(const ndgrad::Node& h, const ndgrad::Node& obs) const;

    LatentState zero_state(std::size_t batch) const;
    /// One filtering step: h_t from (prev, prev_action), then z_t ~ posterior(h_t, obs).
    EncodedStep step(const LatentState& prev, const ndgrad::Node& prev_action, const ndgrad::Node& obs,
                     const NoiseFn& noise) const;
    /// Same as step() but with a caller-supplied noise draw.
    EncodedStep step_with_noise(const LatentState& prev, const ndgrad::Node& prev_action, const ndgrad::Node& obs,
                                const ndgrad::Tensor& noise) const;

    /// observations[t]: (batch, obs_dim); actions[t]: (batch, action_dim) is the action taken after
    /// observations[t], so step t conditions on actions[t-1]. The last action is not consumed.
    std::vector<EncodedStep> encode_sequence(const std::vector<ndgrad::Tensor>& observations,
                                             const std::vector<ndgrad::Tensor>& actions,
                                             const std::optional<LatentState>& initial, const NoiseFn& noise) const;

private:
    struct Weights {
        ndgrad::Node emb_w1, emb_b1, emb_w2, emb_b2, emb_ln_g, emb_ln_b;
        ndgrad::Node act_skip_w, act_skip_b, act_w1, act_b1, act_w2, act_b2;
        ndgrad::Node gru_xr, gru_xu, gru_xc, gru_hr, gru_hu, gru_hc, gru_br, gru_bu, gru_bc, gru_ln_g, gru_ln_b;
        ndgrad::Node pri_w1, pri_b1, pri_ln_g, pri_ln_b, pri_wm, pri_bm, pri_ws, pri_bs;
        ndgrad::Node post_w1, post_b1, post_ln_g, post_ln_b, post_wm, post_bm, post_ws, post_bs;
    };

    void bind();
    DiagGaussian head(const ndgrad::Node& input, const ndgrad::Node& w1, const ndgrad::Node& b1,
                      const ndgrad::Node& ln_g, const ndgrad::Node& ln_b, const ndgrad::Node& wm,
                      const ndgrad::Node& bm, const ndgrad::Node& ws, const ndgrad::Node& bs) const;

    EncoderConfig config_;
    ParamRegistry params_;
    Weights w_;
};

}  // namespace dribo
