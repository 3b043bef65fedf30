#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "dribo/ndgrad.hpp"

namespace dribo {

using Rng = std::mt19937_64;

/// Ordered set of named trainable leaves.
class ParamRegistry {
public:
    struct Entry {
        std::string name;
        ndgrad::Node node;
    };

    ndgrad::Node add(const std::string& name, ndgrad::Tensor init);
    const ndgrad::Node& get(const std::string& name) const;
    bool contains(const std::string& name) const;

    const std::vector<Entry>& entries() const noexcept { return entries_; }
    std::vector<ndgrad::Node> nodes() const;
    std::size_t parameter_count() const;

    void zero_grads();
    /// Copies every value from a registry with identical names and shapes.
    void copy_values_from(const ParamRegistry& other);
    /// this = tau * online + (1 - tau) * this, elementwise.
    void polyak_update(const ParamRegistry& online, double tau);
    bool all_finite() const;
    /// Deep copy with fresh leaves (copying a registry object shares its nodes).
    ParamRegistry clone() const;

private:
    std::vector<Entry> entries_;
};

/// Glorot-uniform matrix of shape (fan_in, fan_out).
ndgrad::Tensor glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng);

/// Standard-normal tensor.
ndgrad::Tensor standard_normal(const ndgrad::Shape& shape, Rng& rng);

class Adam {
public:
    struct Options {
        double lr = 1e-3;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double max_grad_norm = 0.0;  // 0 disables clipping
    };

    Adam(std::vector<ndgrad::Node> params, Options options);
    void step();
    void zero_grads();
    double lr() const noexcept { return options_.lr; }
    void set_lr(double lr) noexcept { options_.lr = lr; }

private:
    std::vector<ndgrad::Node> params_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    Options options_;
    std::uint64_t t_ = 0;
};

/// Max relative error between backprop and central differences over the
/// coordinates of every registry parameter. `loss` must rebuild the graph from
/// the current parameter values and be deterministic. When `max_coords` is
/// nonzero each tensor is probed on at most that many evenly spaced coordinates.
double registry_grad_check(ParamRegistry& registry, const std::function<ndgrad::Node()>& loss, double eps,
                           std::size_t max_coords = 0);

}  // namespace dribo
