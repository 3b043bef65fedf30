#include "dribo/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>

#include "dribo/loss.hpp"
#include "dribo/views.hpp"

namespace dribo {

namespace {

ReturnStats summarize(std::vector<double> returns) {
    ReturnStats s;
    s.returns = std::move(returns);
    const double n = static_cast<double>(s.returns.size());
    for (double r : s.returns) s.mean += r / n;
    double var = 0.0;
    for (double r : s.returns) var += (r - s.mean) * (r - s.mean);
    s.stddev = s.returns.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
    return s;
}

void require_episodes(std::size_t episodes, const char* who) {
    if (episodes == 0) throw ContractError(std::string(who) + ": episodes must be positive");
}

std::string g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

ReturnStats evaluate_returns(const Learner& learner, BackgroundMode mode, std::size_t episodes, std::uint64_t seed,
                             std::vector<Episode>* played) {
    require_episodes(episodes, "evaluate_returns");
    DistractorControl env(learner.config().env);
    Rng env_rng(seed);
    Rng act_rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<double> returns;
    for (std::size_t e = 0; e < episodes; ++e) {
        PlayedEpisode p = play_episode(learner, env, mode, ActMode::deterministic, env_rng, act_rng);
        returns.push_back(p.total_return);
        if (played) played->push_back(std::move(p.episode));
    }
    return summarize(std::move(returns));
}

double skl_probe(const Learner& learner, const std::vector<Episode>& episodes, Rng& rng) {
    require_episodes(episodes.size(), "skl_probe");
    std::size_t len = episodes.front().length();
    for (const auto& e : episodes) len = std::min(len, e.length());
    SequenceReplay pool(episodes.size(), len);
    std::vector<WindowRef> refs;
    for (std::size_t i = 0; i < episodes.size(); ++i) {
        pool.push(episodes[i]);
        refs.push_back({i, 0});
    }
    const SequenceBatch batch = pool.gather(refs);
    const AugmentationSpec& spec = learner.config().augment;
    const SequenceBatch v1 = augment_batch(batch, spec, rng);
    const SequenceBatch v2 = augment_batch(batch, spec, rng);
    auto posteriors = [&](const SequenceBatch& v) {
        std::vector<DiagGaussian> out;
        for (const auto& s : learner.encoder().encode_sequence(v.observations, v.actions, std::nullopt, zero_noise()))
            out.push_back(s.posterior);
        return out;
    };
    return skl_sequence(posteriors(v1), posteriors(v2)).item();
}

GeneralizationReport eval_generalization(const Learner& learner, std::size_t episodes, std::uint64_t seed) {
    require_episodes(episodes, "eval_generalization");
    GeneralizationReport r;
    std::vector<Episode> test_episodes;
    r.train = evaluate_returns(learner, BackgroundMode::train, episodes, seed);
    r.test = evaluate_returns(learner, BackgroundMode::test, episodes, seed, &test_episodes);
    Rng rng(seed + 1);
    r.skl_probe = skl_probe(learner, test_episodes, rng);
    return r;
}

std::size_t export_embeddings(const Learner& learner, BackgroundMode mode, std::size_t episodes, std::uint64_t seed,
                              std::ostream& out) {
    require_episodes(episodes, "export_embeddings");
    DistractorControl env(learner.config().env);
    Rng env_rng(seed);
    Rng act_rng(seed ^ 0x9e3779b97f4a7c15ULL);
    const std::size_t dim = learner.encoder().config().state_dim();
    out << "episode,step,background_id,reward";
    for (std::size_t j = 0; j < dim; ++j) out << ",s" << j;
    out << '\n';
    std::size_t rows = 0;
    for (std::size_t e = 0; e < episodes; ++e) {
        const PlayedEpisode p = play_episode(learner, env, mode, ActMode::deterministic, env_rng, act_rng);
        for (std::size_t t = 0; t < p.states.size(); ++t) {
            out << e << ',' << t << ',' << p.episode.background_id << ',' << g17(p.episode.rewards[t]);
            for (double v : p.states[t]) out << ',' << g17(v);
            out << '\n';
            ++rows;
        }
    }
    if (!out) throw IoError("export_embeddings: write failed");
    return rows;
}

std::vector<EmbeddingRow> read_embeddings(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("episode,step,background_id,reward", 0) != 0)
        throw IoError("embeddings: missing header");
    const auto columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
    std::vector<EmbeddingRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
        if (cells.size() != columns) throw IoError("embeddings: row has wrong column count");
        auto number = [&](const std::string& s) {
            char* end = nullptr;
            const double v = std::strtod(s.c_str(), &end);
            if (s.empty() || end != s.c_str() + s.size()) throw IoError("embeddings: bad number '" + s + "'");
            return v;
        };
        EmbeddingRow r;
        r.episode = static_cast<std::size_t>(number(cells[0]));
        r.step = static_cast<std::size_t>(number(cells[1]));
        r.background_id = static_cast<std::size_t>(number(cells[2]));
        r.reward = number(cells[3]);
        for (std::size_t j = 4; j < cells.size(); ++j) r.state.push_back(number(cells[j]));
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace dribo
