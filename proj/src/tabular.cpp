#include "dribo/tabular.hpp"

#include <cmath>
#include <string>

namespace dribo {

namespace {

constexpr double kRowTol = 1e-12;

void check_rows(const std::vector<double>& table, std::size_t rows, std::size_t cols, const char* what) {
    if (table.size() != rows * cols)
        throw ContractError(std::string(what) + ": expected " + std::to_string(rows * cols) + " entries, got " +
                            std::to_string(table.size()));
    for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            const double v = table[r * cols + c];
            if (!(v >= 0.0) || !std::isfinite(v)) throw ContractError(std::string(what) + ": negative or non-finite entry");
            s += v;
        }
        if (std::abs(s - 1.0) > kRowTol)
            throw ContractError(std::string(what) + ": row " + std::to_string(r) + " sums to " + std::to_string(s));
    }
}

}  // namespace

void TabularPOMDP::validate() const {
    if (num_states == 0 || num_states > 6) throw ContractError("tabular: state count must be in [1, 6]");
    if (num_actions == 0 || num_actions > 3) throw ContractError("tabular: action count must be in [1, 3]");
    if (horizon == 0 || horizon > 4) throw ContractError("tabular: horizon must be in [1, 4]");
    if (view1_symbols == 0 || view1_symbols > 8 || view2_symbols == 0 || view2_symbols > 8)
        throw ContractError("tabular: each view has between 1 and 8 symbols");
    if (identical_views && view1_symbols != view2_symbols)
        throw ContractError("tabular: identical views need equal alphabets");
    check_rows(initial, 1, num_states, "initial");
    check_rows(transition, num_states * num_actions, num_states, "transition");
    if (reward.size() != num_states * num_actions) throw ContractError("tabular: reward table size");
    check_rows(distractor_initial, 1, 2, "distractor initial");
    check_rows(distractor_transition, 2, 2, "distractor transition");
    check_rows(emission1, num_states * 2, view1_symbols, "emission1");
    if (!identical_views) check_rows(emission2, num_states * 2, view2_symbols, "emission2");
}

bool TabularPolicy::open_loop() const {
    for (std::size_t t = 0; t < horizon; ++t)
        for (std::size_t o = 1; o < symbols; ++o)
            for (std::size_t a = 0; a < actions; ++a)
                if (prob(t, o, a) != prob(t, 0, a)) return false;
    return true;
}

void TabularPolicy::validate() const { check_rows(table, horizon * symbols, actions, "policy"); }

TabularPolicy TabularPolicy::uniform(const TabularPOMDP& m) {
    TabularPolicy p{m.horizon, m.view1_symbols, m.num_actions, {}};
    p.table.assign(m.horizon * m.view1_symbols * m.num_actions, 1.0 / static_cast<double>(m.num_actions));
    return p;
}

TabularPolicy TabularPolicy::open_loop_from(const TabularPOMDP& m, const std::vector<std::vector<double>>& per_step) {
    if (per_step.size() != m.horizon) throw ContractError("open-loop policy: one row per step required");
    TabularPolicy p{m.horizon, m.view1_symbols, m.num_actions, {}};
    for (std::size_t t = 0; t < m.horizon; ++t) {
        if (per_step[t].size() != m.num_actions) throw ContractError("open-loop policy: row width");
        for (std::size_t o = 0; o < m.view1_symbols; ++o)
            p.table.insert(p.table.end(), per_step[t].begin(), per_step[t].end());
    }
    p.validate();
    return p;
}

namespace {

struct Enumerator {
    const TabularPOMDP& m;
    const TabularPolicy& pi;
    bool view2;
    std::size_t cap;
    std::vector<TrajectoryAtom> out;
    TrajectoryAtom cur;

    void step(std::size_t t, double p) {
        if (t == m.horizon) {
            if (out.size() >= cap) throw ResourceError("enumerate_trajectories: more than " + std::to_string(cap) + " atoms");
            cur.p = p;
            out.push_back(cur);
            return;
        }
        for (std::size_t x = 0; x < m.num_states; ++x) {
            const double px = t == 0 ? m.p_initial(x) : m.p_transition(cur.x[t - 1], cur.a[t - 1], x);
            if (px == 0.0) continue;
            for (std::size_t d = 0; d < 2; ++d) {
                const double pd = t == 0 ? m.distractor_initial[d] : m.p_distractor(cur.d[t - 1], d);
                if (pd == 0.0) continue;
                for (std::size_t o1 = 0; o1 < m.view1_symbols; ++o1) {
                    const double po1 = m.p_emit1(x, d, o1);
                    if (po1 == 0.0) continue;
                    const std::size_t n2 = (view2 && !m.identical_views) ? m.view2_symbols : 1;
                    for (std::size_t o2 = 0; o2 < n2; ++o2) {
                        const double po2 = (view2 && !m.identical_views) ? m.p_emit2(x, d, o2) : 1.0;
                        if (po2 == 0.0) continue;
                        for (std::size_t a = 0; a < m.num_actions; ++a) {
                            const double pa = pi.prob(t, o1, a);
                            if (pa == 0.0) continue;
                            cur.x[t] = static_cast<std::uint8_t>(x);
                            cur.d[t] = static_cast<std::uint8_t>(d);
                            cur.o1[t] = static_cast<std::uint8_t>(o1);
                            cur.o2[t] = static_cast<std::uint8_t>(view2 && m.identical_views ? o1 : o2);
                            cur.a[t] = static_cast<std::uint8_t>(a);
                            step(t + 1, p * px * pd * po1 * po2 * pa);
                        }
                    }
                }
            }
        }
    }
};

void check_policy(const TabularPOMDP& m, const TabularPolicy& pi) {
    m.validate();
    pi.validate();
    if (pi.horizon != m.horizon || pi.symbols != m.view1_symbols || pi.actions != m.num_actions)
        throw ContractError("tabular policy does not match the process");
}

}  // namespace

std::vector<TrajectoryAtom> enumerate_trajectories(const TabularPOMDP& m, const TabularPolicy& policy,
                                                   bool include_view2, std::size_t cap) {
    check_policy(m, policy);
    Enumerator e{m, policy, include_view2, cap, {}, {}};
    for (auto* v : {&e.cur.x, &e.cur.d, &e.cur.o1, &e.cur.o2, &e.cur.a}) v->assign(m.horizon, 0);
    e.step(0, 1.0);
    return std::move(e.out);
}

std::vector<std::vector<std::size_t>> optimal_actions(const TabularPOMDP& m) {
    m.validate();
    std::vector<std::vector<std::size_t>> best(m.horizon, std::vector<std::size_t>(m.num_states, 0));
    std::vector<double> value(m.num_states, 0.0);
    for (std::size_t k = m.horizon; k-- > 0;) {
        std::vector<double> next(m.num_states, 0.0);
        for (std::size_t x = 0; x < m.num_states; ++x) {
            double top = 0.0;
            for (std::size_t a = 0; a < m.num_actions; ++a) {
                double q = m.r(x, a);
                for (std::size_t nx = 0; nx < m.num_states; ++nx) q += m.p_transition(x, a, nx) * value[nx];
                if (a == 0 || q > top + 1e-12) {
                    top = q;
                    best[k][x] = a;
                }
            }
            next[x] = top;
        }
        value = std::move(next);
    }
    return best;
}

std::vector<std::vector<double>> state_marginals(const TabularPOMDP& m, const TabularPolicy& policy) {
    check_policy(m, policy);
    // Joint over (x, d) is needed because the policy reads symbols emitted from both.
    std::vector<double> xd(m.num_states * 2, 0.0);
    for (std::size_t x = 0; x < m.num_states; ++x)
        for (std::size_t d = 0; d < 2; ++d) xd[x * 2 + d] = m.initial[x] * m.distractor_initial[d];
    std::vector<std::vector<double>> out;
    for (std::size_t t = 0; t < m.horizon; ++t) {
        std::vector<double> marg(m.num_states, 0.0);
        for (std::size_t x = 0; x < m.num_states; ++x) marg[x] = xd[x * 2] + xd[x * 2 + 1];
        out.push_back(marg);
        if (t + 1 == m.horizon) break;
        // P(a | x, d) = sum_o E1(o | x, d) pi(a | t, o)
        std::vector<double> next(m.num_states * 2, 0.0);
        for (std::size_t x = 0; x < m.num_states; ++x)
            for (std::size_t d = 0; d < 2; ++d)
                for (std::size_t a = 0; a < m.num_actions; ++a) {
                    double pa = 0.0;
                    for (std::size_t o = 0; o < m.view1_symbols; ++o) pa += m.p_emit1(x, d, o) * policy.prob(t, o, a);
                    for (std::size_t nx = 0; nx < m.num_states; ++nx)
                        for (std::size_t nd = 0; nd < 2; ++nd)
                            next[nx * 2 + nd] +=
                                xd[x * 2 + d] * pa * m.p_transition(x, a, nx) * m.p_distractor(d, nd);
                }
        xd = std::move(next);
    }
    return out;
}

}  // namespace dribo
