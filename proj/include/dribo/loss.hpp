#pragma once

// Multi-view information bottleneck objective for the recurrent encoder.
//
//   total = -I_nce(pool of T*N paired representations)
//           + beta * ( mean_{i,t} SKL(post1_t^i, post2_t^i)
//                    + mean_{view,i,t} KLbal(post_t, prior_t) )
//
// KLbal(q, p) = 0.8 KL(sg(q) || p) + 0.2 KL(q || sg(p)) moves the prior faster
// than the posterior while keeping the forward value of KL(q || p).

#include <string>
#include <utility>
#include <vector>

#include "dribo/batch.hpp"
#include "dribo/mi.hpp"
#include "dribo/rssm.hpp"

namespace dribo {

inline constexpr double kPriorBalanceWeight = 0.8;

struct BetaSchedule {
    double beta_start = 1e-4;
    double beta_end = 1e-3;
    long start_episode = 10;
    long end_episode = 60;

    void validate() const;
};

/// Geometric ramp from beta_start to beta_end between the two episodes, flat outside.
double beta_at(const BetaSchedule& schedule, long episode);

/// (1/T) sum_t skl(post1[t], post2[t]), further averaged over batch rows.
ndgrad::Node skl_sequence(const std::vector<DiagGaussian>& post1, const std::vector<DiagGaussian>& post2);

/// Per-row balanced KL(post || prior).
ndgrad::Node kl_balanced(const DiagGaussian& post, const DiagGaussian& prior,
                         double prior_weight = kPriorBalanceWeight);

struct DriboLossOptions {
    /// Recompute the SKL posteriors from detached previous states so the SKL term
    /// only trains the current step.
    bool block_conditioning_grad = false;
    /// Draw one noise sample per step and reuse it for both views.
    bool shared_noise = false;
    /// Use plain KL(post || prior) instead of the balanced form. The forward value is
    /// identical; only the gradient changes, which makes the whole loss checkable
    /// against finite differences.
    bool plain_kl = false;
};

struct DriboLossOutput {
    ndgrad::Node total;
    ndgrad::Node infonce;
    ndgrad::Node skl;
    ndgrad::Node kl_balance;
    double infonce_value = 0.0;
    double skl_value = 0.0;
    double kl_balance_value = 0.0;
    double beta = 0.0;
    std::size_t pairs = 0;

    /// Stable metric keys: dribo/total, dribo/infonce, dribo/infonce_lse, dribo/skl,
    /// dribo/kl_balance, dribo/beta. infonce_lse is the log-sum-exp convention (estimate - log M).
    std::vector<std::pair<std::string, double>> metrics() const;
};

std::vector<std::string> dribo_metric_keys();

/// Both views must share N, T and bit-identical actions.
DriboLossOutput dribo_loss(const SequenceBatch& view1, const SequenceBatch& view2, const RssmEncoder& model,
                           const BilinearCritic& critic, double beta, const NoiseFn& noise,
                           const DriboLossOptions& options = {});

}  // namespace dribo
