#pragma once

// Evaluation of a learner: returns under train and test backgrounds, a
// representation-consistency probe and embedding export.
//
// Embedding CSV layout, one row per (episode, step), values with 17
// significant digits:
//
//   episode,step,background_id,reward,s0,s1,...,s{D-1}
//   0,0,3,0.0012045727411024511,0.51234...,...
//
// s0.. is the representation the deterministic policy held after observing
// the frame of that step.

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "dribo/training.hpp"

namespace dribo {

/// Deterministic-policy returns over `episodes` fresh episodes.
ReturnStats evaluate_returns(const Learner& learner, BackgroundMode mode, std::size_t episodes, std::uint64_t seed,
                             std::vector<Episode>* played = nullptr);

/// Mean per-step SKL between zero-noise posteriors of two independent augmentations of the episodes.
/// Lower means the representation is less sensitive to the augmentations.
double skl_probe(const Learner& learner, const std::vector<Episode>& episodes, Rng& rng);

struct GeneralizationReport {
    ReturnStats train;
    ReturnStats test;
    double skl_probe = 0.0;  // on the test episodes
};

GeneralizationReport eval_generalization(const Learner& learner, std::size_t episodes, std::uint64_t seed);

struct EmbeddingRow {
    std::size_t episode = 0;
    std::size_t step = 0;
    std::size_t background_id = 0;
    double reward = 0.0;
    std::vector<double> state;
};

/// Plays `episodes` deterministic episodes and writes the CSV. Returns the number of data rows.
std::size_t export_embeddings(const Learner& learner, BackgroundMode mode, std::size_t episodes, std::uint64_t seed,
                              std::ostream& out);
std::vector<EmbeddingRow> read_embeddings(std::istream& in);

}  // namespace dribo
