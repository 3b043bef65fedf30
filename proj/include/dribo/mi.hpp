#pragma once

// Contrastive lower bound on the mutual information between two paired views.
//
// Given M row-aligned pairs (S1[i], S2[i]), scores[i][j] = S1[i]^T W S2[j] and
//
//   I_nce = (1/M) sum_i [ scores[i][i] - log( (1/M) sum_j exp(scores[i][j]) ) ]
//
// which never exceeds log M. Every non-matching pair in the pool is a negative.

#include "dribo/params.hpp"

namespace dribo {

class BilinearCritic {
public:
    /// W initialized to the identity plus small Gaussian noise of the given scale.
    BilinearCritic(std::size_t dim, Rng& rng, double init_noise = 0.01);
    explicit BilinearCritic(ParamRegistry params);

    std::size_t dim() const noexcept { return dim_; }
    const ndgrad::Node& weight() const { return w_; }
    ParamRegistry& params() noexcept { return params_; }
    const ParamRegistry& params() const noexcept { return params_; }

private:
    ParamRegistry params_;
    ndgrad::Node w_;
    std::size_t dim_ = 0;
};

/// (M, D) x (M, D) -> (M, M) bilinear scores.
ndgrad::Node score_matrix(const ndgrad::Node& s1, const ndgrad::Node& s2, const ndgrad::Node& w);
ndgrad::Node score_matrix(const ndgrad::Node& s1, const ndgrad::Node& s2, const BilinearCritic& critic);

/// Scalar estimate from a square score matrix; requires M >= 2.
ndgrad::Node infonce(const ndgrad::Node& scores);

}  // namespace dribo
