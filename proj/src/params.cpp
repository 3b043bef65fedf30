#include "dribo/params.hpp"

#include <algorithm>
#include <cmath>

namespace dribo {

using ndgrad::Node;
using ndgrad::Tensor;

Node ParamRegistry::add(const std::string& name, Tensor init) {
    if (contains(name)) throw ContractError("duplicate parameter name: " + name);
    Node n = Node::variable(std::move(init));
    entries_.push_back({name, n});
    return n;
}

const Node& ParamRegistry::get(const std::string& name) const {
    for (const auto& e : entries_)
        if (e.name == name) return e.node;
    throw ContractError("unknown parameter: " + name);
}

bool ParamRegistry::contains(const std::string& name) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
}

std::vector<Node> ParamRegistry::nodes() const {
    std::vector<Node> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.node);
    return out;
}

std::size_t ParamRegistry::parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.node.size();
    return n;
}

void ParamRegistry::zero_grads() {
    for (auto& e : entries_) e.node.zero_grad();
}

void ParamRegistry::copy_values_from(const ParamRegistry& other) {
    if (other.entries_.size() != entries_.size()) throw ShapeError("registry layout mismatch");
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].name != other.entries_[i].name || entries_[i].node.shape() != other.entries_[i].node.shape())
            throw ShapeError("registry layout mismatch at " + entries_[i].name);
        entries_[i].node.mutable_value() = other.entries_[i].node.value();
    }
}

void ParamRegistry::polyak_update(const ParamRegistry& online, double tau) {
    if (online.entries_.size() != entries_.size()) throw ShapeError("registry layout mismatch");
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        auto& dst = entries_[i].node.mutable_value().storage();
        const auto& src = online.entries_[i].node.value().storage();
        if (dst.size() != src.size()) throw ShapeError("registry layout mismatch at " + entries_[i].name);
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = tau * src[k] + (1.0 - tau) * dst[k];
    }
}

bool ParamRegistry::all_finite() const {
    return std::all_of(entries_.begin(), entries_.end(), [](const Entry& e) { return e.node.value().all_finite(); });
}

ParamRegistry ParamRegistry::clone() const {
    ParamRegistry out;
    for (const auto& e : entries_) out.add(e.name, e.node.value());
    return out;
}

Tensor glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    Tensor t({fan_in, fan_out});
    for (auto& v : t.storage()) v = u(rng);
    return t;
}

Tensor standard_normal(const ndgrad::Shape& shape, Rng& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Tensor t(shape);
    for (auto& v : t.storage()) v = n(rng);
    return t;
}

Adam::Adam(std::vector<Node> params, Options options) : params_(std::move(params)), options_(options) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(p.size(), 0.0);
        v_.emplace_back(p.size(), 0.0);
    }
}

void Adam::step() {
    ++t_;
    double clip = 1.0;
    if (options_.max_grad_norm > 0.0) {
        double sq = 0.0;
        for (const auto& p : params_)
            if (p.has_grad())
                for (double g : p.impl()->grad.storage()) sq += g * g;
        const double norm = std::sqrt(sq);
        if (norm > options_.max_grad_norm) clip = options_.max_grad_norm / norm;
    }
    const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i];
        if (!p.has_grad()) continue;
        const auto& g = p.impl()->grad.storage();
        auto& w = p.mutable_value().storage();
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t k = 0; k < w.size(); ++k) {
            const double gk = g[k] * clip;
            m[k] = options_.beta1 * m[k] + (1.0 - options_.beta1) * gk;
            v[k] = options_.beta2 * v[k] + (1.0 - options_.beta2) * gk * gk;
            w[k] -= options_.lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + options_.eps);
        }
    }
}

void Adam::zero_grads() {
    for (auto& p : params_) p.zero_grad();
}

double registry_grad_check(ParamRegistry& registry, const std::function<Node()>& loss, double eps,
                           std::size_t max_coords) {
    registry.zero_grads();
    Node root = loss();
    if (!std::isfinite(root.item())) throw DomainError("registry_grad_check: non-finite loss");
    ndgrad::backward(root);
    double worst = 0.0;
    for (const auto& e : registry.entries()) {
        Node p = e.node;
        const Tensor analytic = p.grad();
        auto& w = p.mutable_value().storage();
        const std::size_t n = w.size();
        const std::size_t probes = (max_coords == 0 || max_coords >= n) ? n : max_coords;
        for (std::size_t s = 0; s < probes; ++s) {
            const std::size_t k = (probes == n) ? s : (s * n) / probes;
            const double orig = w[k];
            w[k] = orig + eps;
            const double fp = loss().item();
            w[k] = orig - eps;
            const double fm = loss().item();
            w[k] = orig;
            if (!std::isfinite(fp) || !std::isfinite(fm)) throw DomainError("registry_grad_check: non-finite loss");
            const double central = (fp - fm) / (2.0 * eps);
            worst = std::max(worst, std::abs(analytic[k] - central) / std::max(1.0, std::abs(central)));
        }
    }
    registry.zero_grads();
    return worst;
}

}  // namespace dribo
