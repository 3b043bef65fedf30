#pragma once

// Fully enumerable partially observed process used by the information-theoretic checks.
//
// Hidden state is a pair (x, d): x is the controllable state, d is a distractor
// bit that follows its own Markov chain and never sees the action. Each view
// emits a symbol from P_view(o | x, d). The policy may look at the current
// view-1 symbol only, so (x, d) -> o -> a holds at every step.

#include <cstdint>
#include <vector>

#include "dribo/errors.hpp"
#include "dribo/params.hpp"

namespace dribo {

struct TabularPOMDP {
    std::size_t num_states = 2;
    std::size_t num_actions = 2;
    std::size_t horizon = 2;
    std::size_t view1_symbols = 2;
    std::size_t view2_symbols = 2;
    /// When set, view 2 repeats the view-1 symbol instead of sampling from emission2.
    bool identical_views = false;

    std::vector<double> initial;               // [x]
    std::vector<double> transition;            // [x][a][x']
    std::vector<double> reward;                // [x][a]
    std::vector<double> distractor_initial;    // [d], d in {0, 1}
    std::vector<double> distractor_transition; // [d][d']
    std::vector<double> emission1;             // [x][d][o]
    std::vector<double> emission2;             // [x][d][o]

    static constexpr std::size_t kDistractorStates = 2;

    double p_initial(std::size_t x) const { return initial[x]; }
    double p_transition(std::size_t x, std::size_t a, std::size_t nx) const {
        return transition[(x * num_actions + a) * num_states + nx];
    }
    double r(std::size_t x, std::size_t a) const { return reward[x * num_actions + a]; }
    double p_distractor(std::size_t d, std::size_t nd) const { return distractor_transition[d * 2 + nd]; }
    double p_emit1(std::size_t x, std::size_t d, std::size_t o) const {
        return emission1[(x * 2 + d) * view1_symbols + o];
    }
    double p_emit2(std::size_t x, std::size_t d, std::size_t o) const {
        return emission2[(x * 2 + d) * view2_symbols + o];
    }

    /// Sizes within the documented limits and every table row-stochastic within 1e-12.
    void validate() const;
};

/// pi(a | t, o1_t). An open-loop policy has identical rows for every symbol.
struct TabularPolicy {
    std::size_t horizon = 0;
    std::size_t symbols = 0;
    std::size_t actions = 0;
    std::vector<double> table;  // [t][o][a]

    double prob(std::size_t t, std::size_t o, std::size_t a) const {
        return table[(t * symbols + o) * actions + a];
    }
    bool open_loop() const;
    void validate() const;

    static TabularPolicy uniform(const TabularPOMDP& m);
    /// per_step[t][a], shared by every symbol.
    static TabularPolicy open_loop_from(const TabularPOMDP& m, const std::vector<std::vector<double>>& per_step);
};

/// One trajectory atom with its probability.
struct TrajectoryAtom {
    std::vector<std::uint8_t> x, d, o1, o2, a;
    double p = 0.0;
};

inline constexpr std::size_t kDefaultAtomCap = 2'000'000;

/// Exact joint over (x, d, o1, o2, a)_{1:T}. With include_view2 = false view 2 is
/// marginalized away (o2 is left at 0). Throws ResourceError past `cap` atoms.
std::vector<TrajectoryAtom> enumerate_trajectories(const TabularPOMDP& m, const TabularPolicy& policy,
                                                   bool include_view2 = true, std::size_t cap = kDefaultAtomCap);

/// a*_t(x) from finite-horizon dynamic programming on the controllable state;
/// ties (within 1e-12) go to the lowest action index. Indexed [t][x].
std::vector<std::vector<std::size_t>> optimal_actions(const TabularPOMDP& m);

/// Marginal distribution of x_t for every t via repeated vector-matrix products.
std::vector<std::vector<double>> state_marginals(const TabularPOMDP& m, const TabularPolicy& policy);

}  // namespace dribo
