#pragma once

#include "dribo/ndgrad.hpp"

namespace dribo {

inline constexpr double kStddevFloor = 1e-4;

/// Diagonal Gaussian over the last axis. Shapes are (dim) or (batch, dim).
struct DiagGaussian {
    ndgrad::Node mean;
    ndgrad::Node stddev;

    /// stddev = softplus(raw) + floor, so every entry stays strictly above the floor.
    static DiagGaussian from_raw(const ndgrad::Node& mean, const ndgrad::Node& raw_stddev,
                                 double floor = kStddevFloor);
    DiagGaussian detached() const;
    const ndgrad::Shape& shape() const { return mean.shape(); }
};

/// KL(p || q) summed over the last axis: one value per batch row (shape (1) for unbatched input).
ndgrad::Node kl(const DiagGaussian& p, const DiagGaussian& q);

/// Symmetrized KL: the average of both directed divergences.
ndgrad::Node skl(const DiagGaussian& p, const DiagGaussian& q);

/// Reparameterized sample mean + stddev * noise.
ndgrad::Node rsample(const DiagGaussian& d, const ndgrad::Tensor& noise);

/// Log density summed over the last axis.
ndgrad::Node log_prob(const DiagGaussian& d, const ndgrad::Node& x);

}  // namespace dribo
