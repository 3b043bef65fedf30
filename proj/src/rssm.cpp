#include "dribo/rssm.hpp"

#include <stdexcept>

namespace dribo {

namespace ng = ndgrad;
using ng::Node;
using ng::Tensor;

void EncoderConfig::validate() const {
    if (obs_dim == 0 || embed_hidden == 0 || embed_dim == 0 || deter_dim == 0 || stoch_dim == 0 || head_hidden == 0 ||
        action_dim == 0)
        throw ContractError("encoder config: all dimensions must be positive");
    if (discrete_actions && (action_embed_hidden == 0 || action_embed_dim == 0))
        throw ContractError("encoder config: action embedder dimensions must be positive");
}

std::map<std::string, std::string> EncoderConfig::to_map() const {
    return {
        {"obs_dim", std::to_string(obs_dim)},
        {"embed_hidden", std::to_string(embed_hidden)},
        {"embed_dim", std::to_string(embed_dim)},
        {"deter_dim", std::to_string(deter_dim)},
        {"stoch_dim", std::to_string(stoch_dim)},
        {"head_hidden", std::to_string(head_hidden)},
        {"action_dim", std::to_string(action_dim)},
        {"discrete_actions", discrete_actions ? "1" : "0"},
        {"action_embed_hidden", std::to_string(action_embed_hidden)},
        {"action_embed_dim", std::to_string(action_embed_dim)},
    };
}

EncoderConfig EncoderConfig::from_map(const std::map<std::string, std::string>& kv) {
    auto num = [&](const char* key) -> std::size_t {
        auto it = kv.find(key);
        if (it == kv.end()) throw IoError(std::string("encoder config: missing key ") + key);
        try {
            return static_cast<std::size_t>(std::stoull(it->second));
        } catch (const std::exception&) {
            throw IoError(std::string("encoder config: bad value for ") + key);
        }
    };
    EncoderConfig c;
    c.obs_dim = num("obs_dim");
    c.embed_hidden = num("embed_hidden");
    c.embed_dim = num("embed_dim");
    c.deter_dim = num("deter_dim");
    c.stoch_dim = num("stoch_dim");
    c.head_hidden = num("head_hidden");
    c.action_dim = num("action_dim");
    c.discrete_actions = num("discrete_actions") != 0;
    c.action_embed_hidden = num("action_embed_hidden");
    c.action_embed_dim = num("action_embed_dim");
    c.validate();
    return c;
}

Node LatentState::representation() const { return ng::concat({h, z}, 1); }

LatentState LatentState::detached() const { return {ng::stop_gradient(h), ng::stop_gradient(z)}; }

NoiseFn gaussian_noise(Rng& rng) {
    return [&rng](const ng::Shape& shape) { return standard_normal(shape, rng); };
}

NoiseFn zero_noise() {
    return [](const ng::Shape& shape) { return Tensor(shape, 0.0); };
}

RssmEncoder::RssmEncoder(EncoderConfig config, Rng& rng) : config_(config) {
    config_.validate();
    const auto& c = config_;
    const std::size_t ain = c.transition_action_dim();
    const std::size_t xin = c.stoch_dim + ain;
    auto zeros = [](std::size_t n) { return Tensor({n}, 0.0); };
    auto ones = [](std::size_t n) { return Tensor({n}, 1.0); };

    params_.add("embed/w1", glorot(c.obs_dim, c.embed_hidden, rng));
    params_.add("embed/b1", zeros(c.embed_hidden));
    params_.add("embed/w2", glorot(c.embed_hidden, c.embed_dim, rng));
    params_.add("embed/b2", zeros(c.embed_dim));
    params_.add("embed/ln_g", ones(c.embed_dim));
    params_.add("embed/ln_b", zeros(c.embed_dim));

    if (c.discrete_actions) {
        params_.add("action/skip_w", glorot(c.action_dim, c.action_embed_dim, rng));
        params_.add("action/skip_b", zeros(c.action_embed_dim));
        params_.add("action/w1", glorot(c.action_dim, c.action_embed_hidden, rng));
        params_.add("action/b1", zeros(c.action_embed_hidden));
        params_.add("action/w2", glorot(c.action_embed_hidden, c.action_embed_dim, rng));
        params_.add("action/b2", zeros(c.action_embed_dim));
    }

    params_.add("gru/x_reset", glorot(xin, c.deter_dim, rng));
    params_.add("gru/x_update", glorot(xin, c.deter_dim, rng));
    params_.add("gru/x_cand", glorot(xin, c.deter_dim, rng));
    params_.add("gru/h_reset", glorot(c.deter_dim, c.deter_dim, rng));
    params_.add("gru/h_update", glorot(c.deter_dim, c.deter_dim, rng));
    params_.add("gru/h_cand", glorot(c.deter_dim, c.deter_dim, rng));
    params_.add("gru/b_reset", zeros(c.deter_dim));
    params_.add("gru/b_update", zeros(c.deter_dim));
    params_.add("gru/b_cand", zeros(c.deter_dim));
    params_.add("gru/ln_g", ones(c.deter_dim));
    params_.add("gru/ln_b", zeros(c.deter_dim));

    for (const char* which : {"prior", "post"}) {
        const std::string p(which);
        const std::size_t in = (p == "prior") ? c.deter_dim : c.deter_dim + c.embed_dim;
        params_.add(p + "/w1", glorot(in, c.head_hidden, rng));
        params_.add(p + "/b1", zeros(c.head_hidden));
        params_.add(p + "/ln_g", ones(c.head_hidden));
        params_.add(p + "/ln_b", zeros(c.head_hidden));
        params_.add(p + "/w_mean", glorot(c.head_hidden, c.stoch_dim, rng));
        params_.add(p + "/b_mean", zeros(c.stoch_dim));
        params_.add(p + "/w_std", glorot(c.head_hidden, c.stoch_dim, rng));
        params_.add(p + "/b_std", zeros(c.stoch_dim));
    }
    bind();
}

RssmEncoder::RssmEncoder(EncoderConfig config, ParamRegistry params) : config_(config), params_(std::move(params)) {
    config_.validate();
    // Validate layout against a freshly initialized reference.
    Rng scratch(0);
    RssmEncoder reference(config_, scratch);
    const auto& want = reference.params_.entries();
    const auto& have = params_.entries();
    if (want.size() != have.size()) throw IoError("encoder parameters: layout does not match config");
    for (std::size_t i = 0; i < want.size(); ++i)
        if (want[i].name != have[i].name || want[i].node.shape() != have[i].node.shape())
            throw IoError("encoder parameters: mismatch at " + want[i].name);
    bind();
}

RssmEncoder RssmEncoder::clone() const { return RssmEncoder(config_, params_.clone()); }

void RssmEncoder::bind() {
    auto g = [this](const std::string& n) { return params_.get(n); };
    w_.emb_w1 = g("embed/w1");
    w_.emb_b1 = g("embed/b1");
    w_.emb_w2 = g("embed/w2");
    w_.emb_b2 = g("embed/b2");
    w_.emb_ln_g = g("embed/ln_g");
    w_.emb_ln_b = g("embed/ln_b");
    if (config_.discrete_actions) {
        w_.act_skip_w = g("action/skip_w");
        w_.act_skip_b = g("action/skip_b");
        w_.act_w1 = g("action/w1");
        w_.act_b1 = g("action/b1");
        w_.act_w2 = g("action/w2");
        w_.act_b2 = g("action/b2");
    }
    w_.gru_xr = g("gru/x_reset");
    w_.gru_xu = g("gru/x_update");
    w_.gru_xc = g("gru/x_cand");
    w_.gru_hr = g("gru/h_reset");
    w_.gru_hu = g("gru/h_update");
    w_.gru_hc = g("gru/h_cand");
    w_.gru_br = g("gru/b_reset");
    w_.gru_bu = g("gru/b_update");
    w_.gru_bc = g("gru/b_cand");
    w_.gru_ln_g = g("gru/ln_g");
    w_.gru_ln_b = g("gru/ln_b");
    w_.pri_w1 = g("prior/w1");
    w_.pri_b1 = g("prior/b1");
    w_.pri_ln_g = g("prior/ln_g");
    w_.pri_ln_b = g("prior/ln_b");
    w_.pri_wm = g("prior/w_mean");
    w_.pri_bm = g("prior/b_mean");
    w_.pri_ws = g("prior/w_std");
    w_.pri_bs = g("prior/b_std");
    w_.post_w1 = g("post/w1");
    w_.post_b1 = g("post/b1");
    w_.post_ln_g = g("post/ln_g");
    w_.post_ln_b = g("post/ln_b");
    w_.post_wm = g("post/w_mean");
    w_.post_bm = g("post/b_mean");
    w_.post_ws = g("post/w_std");
    w_.post_bs = g("post/b_std");
}

namespace {
void expect_cols(const Node& x, std::size_t cols, const char* what) {
    if (x.shape().size() != 2 || x.shape()[1] != cols)
        throw ShapeError(std::string(what) + ": expected (batch, " + std::to_string(cols) + "), got " +
                         ng::shape_str(x.shape()));
}
}  // namespace

Node RssmEncoder::embed_observation(const Node& obs) const {
    expect_cols(obs, config_.obs_dim, "embed_observation");
    const Node hidden = ng::relu(ng::linear(obs, w_.emb_w1, w_.emb_b1));
    return ng::layer_norm(ng::linear(hidden, w_.emb_w2, w_.emb_b2), w_.emb_ln_g, w_.emb_ln_b);
}

Node RssmEncoder::embed_action(const Node& action) const {
    expect_cols(action, config_.action_dim, "embed_action");
    if (!config_.discrete_actions) return action;
    // One-hidden-layer residual block: skip projection plus a ReLU branch.
    const Node skip = ng::linear(action, w_.act_skip_w, w_.act_skip_b);
    const Node branch = ng::linear(ng::relu(ng::linear(action, w_.act_w1, w_.act_b1)), w_.act_w2, w_.act_b2);
    return ng::add(skip, branch);
}

Node RssmEncoder::det_step(const LatentState& prev, const Node& action) const {
    expect_cols(prev.h, config_.deter_dim, "det_step h");
    expect_cols(prev.z, config_.stoch_dim, "det_step z");
    if (action.shape().empty() || action.shape()[0] != prev.h.shape()[0] || prev.z.shape()[0] != prev.h.shape()[0])
        throw ShapeError("det_step: batch mismatch");
    const Node x = ng::concat({prev.z, embed_action(action)}, 1);
    const Node& h = prev.h;
    const Node reset = ng::sigmoid(ng::add(ng::add(ng::matmul(x, w_.gru_xr), ng::matmul(h, w_.gru_hr)), w_.gru_br));
    const Node update = ng::sigmoid(ng::add(ng::add(ng::matmul(x, w_.gru_xu), ng::matmul(h, w_.gru_hu)), w_.gru_bu));
    const Node cand =
        ng::tanh(ng::add(ng::add(ng::matmul(x, w_.gru_xc), ng::mul(reset, ng::matmul(h, w_.gru_hc))), w_.gru_bc));
    const Node next = ng::add(h, ng::mul(update, ng::sub(cand, h)));
    return ng::layer_norm(next, w_.gru_ln_g, w_.gru_ln_b);
}

DiagGaussian RssmEncoder::head(const Node& input, const Node& w1, const Node& b1, const Node& ln_g, const Node& ln_b,
                               const Node& wm, const Node& bm, const Node& ws, const Node& bs) const {
    const Node hidden = ng::relu(ng::layer_norm(ng::linear(input, w1, b1), ln_g, ln_b));
    return DiagGaussian::from_raw(ng::linear(hidden, wm, bm), ng::linear(hidden, ws, bs));
}

DiagGaussian RssmEncoder::prior(const Node& h) const {
    expect_cols(h, config_.deter_dim, "prior");
    return head(h, w_.pri_w1, w_.pri_b1, w_.pri_ln_g, w_.pri_ln_b, w_.pri_wm, w_.pri_bm, w_.pri_ws, w_.pri_bs);
}

DiagGaussian RssmEncoder::posterior(const Node& h, const Node& obs) const {
    expect_cols(h, config_.deter_dim, "posterior");
    if (obs.shape().empty() || obs.shape()[0] != h.shape()[0]) throw ShapeError("posterior: batch mismatch");
    const Node in = ng::concat({h, embed_observation(obs)}, 1);
    return head(in, w_.post_w1, w_.post_b1, w_.post_ln_g, w_.post_ln_b, w_.post_wm, w_.post_bm, w_.post_ws,
                w_.post_bs);
}

LatentState RssmEncoder::zero_state(std::size_t batch) const {
    return {Node::constant(Tensor({batch, config_.deter_dim}, 0.0)),
            Node::constant(Tensor({batch, config_.stoch_dim}, 0.0))};
}

EncodedStep RssmEncoder::step_with_noise(const LatentState& prev, const Node& prev_action, const Node& obs,
                                         const Tensor& noise) const {
    const Node h = det_step(prev, prev_action);
    DiagGaussian post = posterior(h, obs);
    DiagGaussian pri = prior(h);
    const Node z = rsample(post, noise);
    return {LatentState{h, z}, std::move(post), std::move(pri), noise};
}

EncodedStep RssmEncoder::step(const LatentState& prev, const Node& prev_action, const Node& obs,
                              const NoiseFn& noise) const {
    return step_with_noise(prev, prev_action, obs, noise({prev.h.shape()[0], config_.stoch_dim}));
}

std::vector<EncodedStep> RssmEncoder::encode_sequence(const std::vector<Tensor>& observations,
                                                      const std::vector<Tensor>& actions,
                                                      const std::optional<LatentState>& initial,
                                                      const NoiseFn& noise) const {
    if (observations.empty()) throw ContractError("encode_sequence: empty sequence");
    if (observations.size() != actions.size())
        throw ContractError("encode_sequence: " + std::to_string(observations.size()) + " observations vs " +
                            std::to_string(actions.size()) + " actions");
    const std::size_t batch = observations[0].shape().at(0);
    LatentState state = initial ? *initial : zero_state(batch);
    Node prev_action = Node::constant(Tensor({batch, config_.action_dim}, 0.0));
    std::vector<EncodedStep> out;
    out.reserve(observations.size());
    for (std::size_t t = 0; t < observations.size(); ++t) {
        EncodedStep s = step(state, prev_action, Node::constant(observations[t]), noise);
        state = s.state;
        prev_action = Node::constant(actions[t]);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace dribo
