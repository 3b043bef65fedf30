#include "dribo/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace dribo {

// ---------------------------------------------------------------------------
// JointTable

JointTable::JointTable(std::vector<std::string> names, std::vector<std::size_t> cards)
    : names_(std::move(names)), cards_(std::move(cards)) {
    if (names_.size() != cards_.size()) throw ContractError("JointTable: names and cards differ in length");
    std::uint64_t stride = 1;
    for (std::size_t i = 0; i < cards_.size(); ++i) {
        if (cards_[i] == 0) throw ContractError("JointTable: empty support for " + names_[i]);
        for (std::size_t k = 0; k < i; ++k)
            if (names_[k] == names_[i]) throw ContractError("JointTable: duplicate variable " + names_[i]);
        strides_.push_back(stride);
        if (stride > std::numeric_limits<std::uint64_t>::max() / cards_[i])
            throw ResourceError("JointTable: product support does not fit in 64 bits");
        stride *= cards_[i];
    }
}

std::uint64_t JointTable::encode(const std::vector<std::size_t>& values) const {
    if (values.size() != cards_.size()) throw ContractError("JointTable: assignment width mismatch");
    std::uint64_t key = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i] >= cards_[i]) throw ContractError("JointTable: value out of range for " + names_[i]);
        key += values[i] * strides_[i];
    }
    return key;
}

std::vector<std::size_t> JointTable::decode(std::uint64_t key) const {
    std::vector<std::size_t> v(cards_.size());
    for (std::size_t i = 0; i < cards_.size(); ++i) v[i] = static_cast<std::size_t>((key / strides_[i]) % cards_[i]);
    return v;
}

void JointTable::add(const std::vector<std::size_t>& values, double p) { add_key(encode(values), p); }

void JointTable::add_key(std::uint64_t key, double p) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw ContractError("JointTable: probability must be finite and >= 0");
    if (p > 0.0) mass_[key] += p;
}

std::size_t JointTable::index_of(const std::string& name) const {
    const auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) throw ContractError("JointTable: unknown variable " + name);
    return static_cast<std::size_t>(it - names_.begin());
}

bool JointTable::has(const std::string& name) const {
    return std::find(names_.begin(), names_.end(), name) != names_.end();
}

double JointTable::total() const {
    double s = 0.0;
    for (const auto& [k, p] : mass_) s += p;
    return s;
}

void JointTable::validate(double tol) const {
    if (std::abs(total() - 1.0) > tol) throw ContractError("JointTable: mass sums to " + std::to_string(total()));
}

namespace {

struct Projection {
    std::vector<std::size_t> index;
    std::vector<std::uint64_t> stride;
};

Projection projection(const JointTable& j, const std::vector<std::string>& vars) {
    Projection p;
    std::uint64_t stride = 1;
    for (const auto& v : vars) {
        const std::size_t i = j.index_of(v);
        if (std::find(p.index.begin(), p.index.end(), i) != p.index.end())
            throw ContractError("JointTable: variable listed twice: " + v);
        p.index.push_back(i);
        p.stride.push_back(stride);
        stride *= j.cards()[i];
    }
    return p;
}

std::uint64_t project(const Projection& p, const std::vector<std::size_t>& values) {
    std::uint64_t key = 0;
    for (std::size_t k = 0; k < p.index.size(); ++k) key += values[p.index[k]] * p.stride[k];
    return key;
}

void require_disjoint(const std::vector<std::vector<std::string>>& sets) {
    for (std::size_t a = 0; a < sets.size(); ++a)
        for (std::size_t b = a + 1; b < sets.size(); ++b)
            for (const auto& v : sets[a])
                if (std::find(sets[b].begin(), sets[b].end(), v) != sets[b].end())
                    throw ContractError("information query: variable " + v + " appears in two sets");
}

double plogp_ratio(double p, double num, double den) {
    if (p < kProbabilityFloor) return 0.0;
    return p * std::log(p * num / den);
}

}  // namespace

JointTable JointTable::marginal(const std::vector<std::string>& vars) const {
    std::vector<std::size_t> cards;
    for (const auto& v : vars) cards.push_back(cards_[index_of(v)]);
    JointTable out(vars, cards);
    const Projection proj = projection(*this, vars);
    for (const auto& [key, p] : mass_) out.mass_[project(proj, decode(key))] += p;
    return out;
}

double JointTable::probability(const std::vector<std::size_t>& values) const {
    const auto it = mass_.find(encode(values));
    return it == mass_.end() ? 0.0 : it->second;
}

double entropy(const JointTable& j, const std::vector<std::string>& vars) {
    const JointTable m = j.marginal(vars);
    double h = 0.0;
    for (const auto& [k, p] : m.mass())
        if (p >= kProbabilityFloor) h -= p * std::log(p);
    return h;
}

double conditional_mutual_info(const JointTable& j, const std::vector<std::string>& x,
                               const std::vector<std::string>& y, const std::vector<std::string>& z) {
    require_disjoint({x, y, z});
    if (x.empty() || y.empty()) throw ContractError("information query: empty variable set");
    std::vector<std::string> xz = x, yz = y, xyz = x;
    xz.insert(xz.end(), z.begin(), z.end());
    yz.insert(yz.end(), z.begin(), z.end());
    xyz.insert(xyz.end(), y.begin(), y.end());
    xyz.insert(xyz.end(), z.begin(), z.end());
    const Projection pxyz = projection(j, xyz), pxz = projection(j, xz), pyz = projection(j, yz),
                     pz = projection(j, z);

    struct Cell {
        double p = 0.0;
        std::uint64_t xz = 0, yz = 0, z = 0;
    };
    std::unordered_map<std::uint64_t, Cell> cells;
    std::unordered_map<std::uint64_t, double> mxz, myz, mz;
    for (const auto& [key, p] : j.mass()) {
        const auto v = j.decode(key);
        const std::uint64_t kxz = project(pxz, v), kyz = project(pyz, v), kz = project(pz, v);
        Cell& c = cells[project(pxyz, v)];
        c.p += p;
        c.xz = kxz;
        c.yz = kyz;
        c.z = kz;
        mxz[kxz] += p;
        myz[kyz] += p;
        mz[kz] += p;
    }
    double info = 0.0;
    for (const auto& [k, c] : cells) info += plogp_ratio(c.p, mz[c.z], mxz[c.xz] * myz[c.yz]);
    return info;
}

double mutual_info(const JointTable& j, const std::vector<std::string>& x, const std::vector<std::string>& y) {
    return conditional_mutual_info(j, x, y, {});
}

// ---------------------------------------------------------------------------
// Encoders

void EncoderTable::validate() const {
    if (latent == 0 || symbols == 0 || actions == 0) throw ContractError("encoder table: empty dimension");
    const std::size_t rows = (latent + 1) * (actions + 1) * symbols;
    if (table.size() != rows * latent) throw ContractError("encoder table: wrong size");
    for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::size_t l = 0; l < latent; ++l) {
            const double v = table[r * latent + l];
            if (!(v >= 0.0)) throw ContractError("encoder table: negative entry");
            s += v;
        }
        if (std::abs(s - 1.0) > 1e-12) throw ContractError("encoder table: row not normalized");
    }
}

EncoderTable EncoderTable::from_map(std::size_t latent, std::size_t actions, const std::vector<std::size_t>& map) {
    EncoderTable e{latent, map.size(), actions, {}};
    e.table.assign((latent + 1) * (actions + 1) * map.size() * latent, 0.0);
    for (std::size_t pl = 0; pl <= latent; ++pl)
        for (std::size_t pa = 0; pa <= actions; ++pa)
            for (std::size_t o = 0; o < map.size(); ++o) {
                if (map[o] >= latent) throw ContractError("encoder map: latent index out of range");
                e.at(pl, pa, o, map[o]) = 1.0;
            }
    return e;
}

EncoderTable EncoderTable::identity(std::size_t symbols, std::size_t actions) {
    std::vector<std::size_t> map(symbols);
    std::iota(map.begin(), map.end(), 0);
    return from_map(symbols, actions, map);
}

EncoderTable EncoderTable::constant(std::size_t symbols, std::size_t actions) {
    return from_map(1, actions, std::vector<std::size_t>(symbols, 0));
}

namespace {

std::vector<double> random_row(std::size_t n, Rng& rng, double zero_prob = 0.0) {
    std::exponential_distribution<double> e(1.0);
    std::bernoulli_distribution zero(zero_prob);
    std::vector<double> row(n);
    double s = 0.0;
    for (auto& v : row) {
        v = zero(rng) ? 0.0 : e(rng) + 1e-3;
        s += v;
    }
    if (s == 0.0) {
        row[0] = 1.0;
        s = 1.0;
    }
    for (auto& v : row) v /= s;
    return row;
}

void append_rows(std::vector<double>& out, std::size_t rows, std::size_t cols, Rng& rng, double zero_prob = 0.0) {
    for (std::size_t r = 0; r < rows; ++r) {
        const auto row = random_row(cols, rng, zero_prob);
        out.insert(out.end(), row.begin(), row.end());
    }
}

}  // namespace

EncoderTable EncoderTable::random(std::size_t latent, std::size_t symbols, std::size_t actions, Rng& rng) {
    EncoderTable e{latent, symbols, actions, {}};
    append_rows(e.table, (latent + 1) * (actions + 1) * symbols, latent, rng, 0.3);
    return e;
}

// ---------------------------------------------------------------------------
// Joint construction

std::string var(const std::string& prefix, std::size_t t) { return prefix + "_" + std::to_string(t); }

std::vector<std::string> seq(const std::string& prefix, std::size_t horizon) { return seq(prefix, 1, horizon); }

std::vector<std::string> seq(const std::string& prefix, std::size_t first, std::size_t last) {
    std::vector<std::string> out;
    for (std::size_t t = first; t <= last; ++t) out.push_back(var(prefix, t));
    return out;
}

namespace {

enum Slot : std::size_t { kX, kD, kO1, kO2, kA, kAstar, kLat1, kLat2, kSlots };
const char* const kSlotNames[kSlots] = {"x", "d", "o1", "o2", "a", "astar", "lat1", "lat2"};

struct JointBuilder {
    const TabularPOMDP& m;
    const TabularPolicy& pi;
    const EncoderTable* enc1;
    const EncoderTable* enc2;
    std::vector<std::vector<std::size_t>> astar;
    std::size_t cap;
    std::size_t leaves = 0;
    std::vector<std::size_t> values;            // full assignment, slot-major per step
    std::vector<std::size_t> keep_index;        // full index for each kept variable
    std::vector<std::uint64_t> keep_stride;
    JointTable* out = nullptr;

    std::size_t& v(std::size_t t, Slot s) { return values[t * kSlots + s]; }

    void leaf(double p) {
        if (++leaves > cap) throw ResourceError("build_joint: more than " + std::to_string(cap) + " atoms");
        std::uint64_t key = 0;
        for (std::size_t k = 0; k < keep_index.size(); ++k) key += values[keep_index[k]] * keep_stride[k];
        out->add_key(key, p);
    }

    void step(std::size_t t, double p) {
        if (t == m.horizon) {
            leaf(p);
            return;
        }
        for (std::size_t x = 0; x < m.num_states; ++x) {
            const double px = t == 0 ? m.p_initial(x) : m.p_transition(v(t - 1, kX), v(t - 1, kA), x);
            if (px == 0.0) continue;
            v(t, kX) = x;
            v(t, kAstar) = astar.empty() ? 0 : astar[t][x];
            for (std::size_t d = 0; d < 2; ++d) {
                const double pd = t == 0 ? m.distractor_initial[d] : m.p_distractor(v(t - 1, kD), d);
                if (pd == 0.0) continue;
                v(t, kD) = d;
                emit1(t, p * px * pd);
            }
        }
    }

    void emit1(std::size_t t, double p) {
        for (std::size_t o1 = 0; o1 < m.view1_symbols; ++o1) {
            const double po = m.p_emit1(v(t, kX), v(t, kD), o1);
            if (po == 0.0) continue;
            v(t, kO1) = o1;
            if (m.identical_views) {
                v(t, kO2) = o1;
                act(t, p * po);
                continue;
            }
            for (std::size_t o2 = 0; o2 < m.view2_symbols; ++o2) {
                const double po2 = m.p_emit2(v(t, kX), v(t, kD), o2);
                if (po2 == 0.0) continue;
                v(t, kO2) = o2;
                act(t, p * po * po2);
            }
        }
    }

    void act(std::size_t t, double p) {
        for (std::size_t a = 0; a < m.num_actions; ++a) {
            const double pa = pi.prob(t, v(t, kO1), a);
            if (pa == 0.0) continue;
            v(t, kA) = a;
            encode1(t, p * pa);
        }
    }

    void encode1(std::size_t t, double p) {
        if (!enc1) return encode2(t, p);
        const std::size_t pl = t == 0 ? enc1->latent : v(t - 1, kLat1);
        const std::size_t pa = t == 0 ? enc1->actions : v(t - 1, kA);
        for (std::size_t l = 0; l < enc1->latent; ++l) {
            const double pe = enc1->prob(pl, pa, v(t, kO1), l);
            if (pe == 0.0) continue;
            v(t, kLat1) = l;
            encode2(t, p * pe);
        }
    }

    void encode2(std::size_t t, double p) {
        if (!enc2) return step(t + 1, p);
        const std::size_t pl = t == 0 ? enc2->latent : v(t - 1, kLat2);
        const std::size_t pa = t == 0 ? enc2->actions : v(t - 1, kA);
        for (std::size_t l = 0; l < enc2->latent; ++l) {
            const double pe = enc2->prob(pl, pa, v(t, kO2), l);
            if (pe == 0.0) continue;
            v(t, kLat2) = l;
            step(t + 1, p * pe);
        }
    }
};

void check_encoder(const EncoderTable& e, std::size_t symbols, std::size_t actions, const char* which) {
    e.validate();
    if (e.symbols != symbols || e.actions != actions)
        throw ContractError(std::string("encoder for ") + which + " does not match the process alphabet");
}

}  // namespace

JointTable build_joint(const TabularPOMDP& m, const TabularPolicy& policy, const EncoderTable* enc1,
                       const EncoderTable* enc2, const std::vector<std::string>& keep, std::size_t cap) {
    m.validate();
    policy.validate();
    if (policy.horizon != m.horizon || policy.symbols != m.view1_symbols || policy.actions != m.num_actions)
        throw ContractError("build_joint: policy does not match the process");
    if (enc1) check_encoder(*enc1, m.view1_symbols, m.num_actions, "view 1");
    if (enc2) check_encoder(*enc2, m.view2_symbols, m.num_actions, "view 2");

    JointBuilder b{m, policy, enc1, enc2, {}, cap, 0, {}, {}, {}, nullptr};
    b.values.assign(m.horizon * kSlots, 0);
    std::vector<std::size_t> cards;
    bool want_astar = false;
    for (const auto& name : keep) {
        const auto us = name.rfind('_');
        if (us == std::string::npos) throw ContractError("build_joint: malformed variable " + name);
        const std::string prefix = name.substr(0, us);
        const std::size_t t = std::stoul(name.substr(us + 1));
        if (t == 0 || t > m.horizon) throw ContractError("build_joint: step out of range in " + name);
        std::size_t slot = kSlots;
        for (std::size_t s = 0; s < kSlots; ++s)
            if (prefix == kSlotNames[s]) slot = s;
        if (slot == kSlots) throw ContractError("build_joint: unknown variable " + name);
        if (slot == kLat1 && !enc1) throw ContractError("build_joint: " + name + " needs a view-1 encoder");
        if (slot == kLat2 && !enc2) throw ContractError("build_joint: " + name + " needs a view-2 encoder");
        want_astar |= slot == kAstar;
        const std::size_t card = slot == kX ? m.num_states
                                 : slot == kD ? 2
                                 : slot == kO1 ? m.view1_symbols
                                 : slot == kO2 ? m.view2_symbols
                                 : slot == kA || slot == kAstar ? m.num_actions
                                 : slot == kLat1 ? enc1->latent
                                                 : enc2->latent;
        cards.push_back(card);
        b.keep_index.push_back((t - 1) * kSlots + slot);
    }
    JointTable out(keep, cards);
    std::uint64_t stride = 1;
    for (std::size_t c : cards) {
        b.keep_stride.push_back(stride);
        stride *= c;
    }
    if (want_astar) b.astar = optimal_actions(m);
    b.out = &out;
    b.step(0, 1.0);
    return out;
}

// ---------------------------------------------------------------------------
// Checks

ChainRuleReport verify_chain_rule(const JointTable& j, const std::vector<std::string>& s_vars,
                                  const std::vector<std::string>& o_vars, const std::vector<std::string>& astar_vars) {
    ChainRuleReport r;
    r.lhs = mutual_info(j, o_vars, s_vars);
    r.conditional = conditional_mutual_info(j, s_vars, o_vars, astar_vars);
    r.relevant = mutual_info(j, s_vars, astar_vars);
    r.coinformation = r.relevant - conditional_mutual_info(j, s_vars, astar_vars, o_vars);
    r.gap = std::abs(r.lhs - (r.conditional + r.relevant));
    r.identity_gap = std::abs(r.lhs - (r.conditional + r.coinformation));
    return r;
}

FactorizedBoundReport verify_factorized_bound(const TabularPOMDP& m, const TabularPolicy& policy, const EncoderTable& enc) {
    const std::size_t T = m.horizon;
    std::vector<std::string> keep = seq("lat1", T);
    for (const auto& n : seq("o1", T)) keep.push_back(n);
    for (const auto& n : seq("a", T)) keep.push_back(n);
    const JointTable j = build_joint(m, policy, &enc, nullptr, keep);
    FactorizedBoundReport r;
    r.lhs = conditional_mutual_info(j, seq("lat1", T), seq("o1", T), seq("a", T));
    for (std::size_t t = 1; t <= T; ++t) {
        std::vector<std::string> cond;
        if (t > 1) cond = {var("lat1", t - 1), var("a", t - 1)};
        r.rhs += conditional_mutual_info(j, {var("lat1", t)}, {var("o1", t)}, cond);
    }
    r.holds = r.lhs >= r.rhs - 1e-9;
    return r;
}

SufficiencyReport verify_sufficiency(const TabularPOMDP& m, const TabularPolicy& policy, const EncoderTable& enc) {
    const std::size_t T = m.horizon;
    std::vector<std::string> keep = seq("lat1", T);
    for (const auto& n : seq("o1", T)) keep.push_back(n);
    for (const auto& n : seq("astar", T)) keep.push_back(n);
    const JointTable j = build_joint(m, policy, &enc, nullptr, keep);
    SufficiencyReport r;
    r.obs_info = mutual_info(j, seq("o1", T), seq("astar", T));
    r.rep_info = mutual_info(j, seq("lat1", T), seq("astar", T));
    r.gap = std::abs(r.obs_info - r.rep_info);
    r.sufficient = r.gap < 1e-9;
    return r;
}

MultiviewSplitReport verify_multiview_split(const TabularPOMDP& m, const TabularPolicy& policy,
                                            const EncoderTable& enc1) {
    const std::size_t T = m.horizon;
    std::vector<std::string> keep = {var("lat1", T), var("o1", T), var("o2", T)};
    std::vector<std::string> cond;
    if (T > 1) cond = {var("lat1", T - 1), var("a", T - 1)};
    keep.insert(keep.end(), cond.begin(), cond.end());
    const JointTable j = build_joint(m, policy, &enc1, nullptr, keep);
    std::vector<std::string> cond_o2 = cond;
    cond_o2.push_back(var("o2", T));
    MultiviewSplitReport r;
    r.lhs = conditional_mutual_info(j, {var("lat1", T)}, {var("o1", T)}, cond);
    r.exclusive = conditional_mutual_info(j, {var("lat1", T)}, {var("o1", T)}, cond_o2);
    r.shared = conditional_mutual_info(j, {var("o2", T)}, {var("lat1", T)}, cond);
    r.gap = std::abs(r.lhs - (r.exclusive + r.shared));
    return r;
}

CrossViewBoundReport verify_cross_view_bound(const TabularPOMDP& m, const TabularPolicy& policy,
                                             const EncoderTable& enc1, const EncoderTable& enc2) {
    if (m.horizon != 1) throw ContractError("verify_cross_view_bound: single-step processes only");
    const JointTable j = build_joint(m, policy, &enc1, &enc2, {"lat1_1", "lat2_1", "o2_1"});
    CrossViewBoundReport r;
    r.rep_obs = mutual_info(j, {"lat1_1"}, {"o2_1"});
    r.rep_rep = mutual_info(j, {"lat1_1"}, {"lat2_1"});
    r.slack = r.rep_obs - r.rep_rep;
    return r;
}

// ---------------------------------------------------------------------------
// Instances

namespace instances {

TabularPOMDP random_process(Rng& rng, std::size_t states, std::size_t actions, std::size_t horizon,
                            std::size_t symbols1, std::size_t symbols2) {
    TabularPOMDP m;
    m.num_states = states;
    m.num_actions = actions;
    m.horizon = horizon;
    m.view1_symbols = symbols1;
    m.view2_symbols = symbols2;
    append_rows(m.initial, 1, states, rng);
    append_rows(m.transition, states * actions, states, rng, 0.2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t i = 0; i < states * actions; ++i) m.reward.push_back(u(rng));
    append_rows(m.distractor_initial, 1, 2, rng);
    append_rows(m.distractor_transition, 2, 2, rng);
    append_rows(m.emission1, states * 2, symbols1, rng, 0.3);
    append_rows(m.emission2, states * 2, symbols2, rng, 0.3);
    m.validate();
    return m;
}

TabularPOMDP revealing_process(Rng& rng, std::size_t states, std::size_t actions, std::size_t horizon,
                               std::size_t symbols, std::vector<std::size_t>& symbol_class) {
    const std::size_t classes = states * 2;
    if (symbols < classes) throw ContractError("revealing_process: need at least one symbol per (x, d) class");
    TabularPOMDP m = random_process(rng, states, actions, horizon, symbols, symbols);
    // Every class owns at least one symbol; the rest are assigned at random.
    symbol_class.assign(symbols, 0);
    std::vector<std::size_t> order(symbols);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::uniform_int_distribution<std::size_t> pick(0, classes - 1);
    for (std::size_t k = 0; k < symbols; ++k) symbol_class[order[k]] = k < classes ? k : pick(rng);
    for (auto* em : {&m.emission1, &m.emission2}) {
        em->assign(classes * symbols, 0.0);
        for (std::size_t c = 0; c < classes; ++c) {
            std::vector<std::size_t> owned;
            for (std::size_t o = 0; o < symbols; ++o)
                if (symbol_class[o] == c) owned.push_back(o);
            const auto row = random_row(owned.size(), rng);
            for (std::size_t k = 0; k < owned.size(); ++k) (*em)[c * symbols + owned[k]] = row[k];
        }
    }
    m.validate();
    return m;
}

TabularPolicy random_open_loop(const TabularPOMDP& m, Rng& rng) {
    std::vector<std::vector<double>> rows;
    for (std::size_t t = 0; t < m.horizon; ++t) rows.push_back(random_row(m.num_actions, rng));
    return TabularPolicy::open_loop_from(m, rows);
}

TabularPolicy random_reactive(const TabularPOMDP& m, Rng& rng) {
    TabularPolicy p{m.horizon, m.view1_symbols, m.num_actions, {}};
    append_rows(p.table, m.horizon * m.view1_symbols, m.num_actions, rng, 0.3);
    return p;
}

}  // namespace instances

// ---------------------------------------------------------------------------
// Suite

namespace {

std::string label(const std::string& base, std::size_t i) {
    std::ostringstream s;
    s << base << "[" << i << "]";
    return s.str();
}

// Sufficient encoders for a revealing process: the (x, d) class is always recoverable from the latent.
EncoderTable sufficient_encoder(const TabularPOMDP& m, const std::vector<std::size_t>& symbol_class,
                                std::size_t variant, Rng& rng) {
    const std::size_t classes = m.num_states * 2;
    switch (variant % 3) {
        case 0: {
            // Injective relabeling of the symbol.
            std::vector<std::size_t> perm(m.view1_symbols);
            std::iota(perm.begin(), perm.end(), 0);
            std::shuffle(perm.begin(), perm.end(), rng);
            return EncoderTable::from_map(m.view1_symbols, m.num_actions, perm);
        }
        case 1:
            return EncoderTable::from_map(classes, m.num_actions, symbol_class);
        default: {
            // Class label, with up to two classes randomly split into a duplicate label whose
            // probability depends on the previous latent and action.
            const std::size_t extra = std::min<std::size_t>(2, 6 - std::min<std::size_t>(6, classes));
            EncoderTable e = EncoderTable::from_map(classes + extra, m.num_actions, symbol_class);
            std::uniform_real_distribution<double> u(0.05, 0.95);
            for (std::size_t k = 0; k < extra; ++k) {
                const std::size_t split_class = k;
                for (std::size_t pl = 0; pl <= e.latent; ++pl)
                    for (std::size_t pa = 0; pa <= e.actions; ++pa) {
                        const double q = u(rng);
                        for (std::size_t o = 0; o < e.symbols; ++o)
                            if (symbol_class[o] == split_class) {
                                e.at(pl, pa, o, split_class) = 1.0 - q;
                                e.at(pl, pa, o, classes + k) = q;
                            }
                    }
            }
            return e;
        }
    }
}

}  // namespace

std::vector<CheckRecord> run_oracle_suite(const OracleSuiteOptions& opt) {
    std::vector<CheckRecord> out;
    Rng rng(opt.seed);
    std::uniform_int_distribution<std::size_t> two_three(2, 3);

    // Two-view split identity on generic processes and encoders.
    for (std::size_t i = 0; i < opt.split_instances; ++i) {
        const std::size_t horizon = 1 + i % 2;
        const auto m = instances::random_process(rng, two_three(rng), two_three(rng), horizon, 2 + i % 3, 2 + (i + 1) % 3);
        const auto pi = instances::random_reactive(m, rng);
        const auto enc = EncoderTable::random(two_three(rng), m.view1_symbols, m.num_actions, rng);
        const auto r = verify_multiview_split(m, pi, enc);
        out.push_back({label("multiview_split", i), r.lhs, r.exclusive + r.shared, r.gap, r.gap < opt.tolerance});
    }

    // Factorized lower bound with sufficient encoders under open-loop action sequences.
    for (std::size_t i = 0; i < opt.factorized_instances; ++i) {
        const std::size_t states = two_three(rng);
        std::vector<std::size_t> symbol_class;
        const auto m = instances::revealing_process(rng, states, two_three(rng), two_three(rng), 6, symbol_class);
        const auto pi = instances::random_open_loop(m, rng);
        const auto enc = sufficient_encoder(m, symbol_class, i, rng);
        const auto r = verify_factorized_bound(m, pi, enc);
        out.push_back({label("factorized_bound", i), r.lhs, r.rhs, r.lhs - r.rhs, r.holds});
    }

    // Counterexample search outside the hypothesis: logged, never asserted.
    std::size_t violations = 0;
    double worst = 0.0;
    for (std::size_t i = 0; i < opt.counterexample_instances; ++i) {
        const auto m = instances::random_process(rng, 2, 2, 2, 3, 2);
        const auto pi = instances::random_reactive(m, rng);
        const auto enc = EncoderTable::random(3, m.view1_symbols, m.num_actions, rng);
        const auto r = verify_factorized_bound(m, pi, enc);
        if (!r.holds) ++violations;
        worst = std::min(worst, r.lhs - r.rhs);
    }
    out.push_back({"factorized_bound_generic_search(violations=" + std::to_string(violations) + "/" +
                       std::to_string(opt.counterexample_instances) + ")",
                   0.0, 0.0, worst, true, false});

    // Sufficiency verdicts for identity, constant and distractor-dropping encoders.
    {
        std::vector<std::size_t> symbol_class;
        auto m = instances::revealing_process(rng, 3, 2, 2, 6, symbol_class);
        // Best action alternates with x so a* is informative.
        for (std::size_t x = 0; x < m.num_states; ++x)
            for (std::size_t a = 0; a < m.num_actions; ++a) m.reward[x * m.num_actions + a] = (a == x % 2) ? 1.0 : 0.0;
        const auto pi = instances::random_reactive(m, rng);
        std::vector<std::size_t> drop(m.view1_symbols);
        for (std::size_t o = 0; o < drop.size(); ++o) drop[o] = symbol_class[o] / 2;
        const auto id = verify_sufficiency(m, pi, EncoderTable::identity(m.view1_symbols, m.num_actions));
        const auto cst = verify_sufficiency(m, pi, EncoderTable::constant(m.view1_symbols, m.num_actions));
        const auto dd = verify_sufficiency(m, pi, EncoderTable::from_map(m.num_states, m.num_actions, drop));
        out.push_back({"sufficiency_identity", id.obs_info, id.rep_info, id.gap, id.sufficient});
        out.push_back({"sufficiency_constant_is_insufficient", cst.obs_info, cst.rep_info, cst.gap,
                       !cst.sufficient && std::abs(cst.gap - cst.obs_info) < opt.tolerance && cst.obs_info > 1e-3});
        out.push_back({"sufficiency_drop_distractor", dd.obs_info, dd.rep_info, dd.gap, dd.sufficient});

        const auto keep = [&] {
            std::vector<std::string> k = seq("lat1", 2);
            for (const auto& n : seq("o1", 2)) k.push_back(n);
            for (const auto& n : seq("astar", 2)) k.push_back(n);
            return k;
        }();
        for (const auto& [name, enc] :
             {std::pair<std::string, EncoderTable>{"identity", EncoderTable::identity(m.view1_symbols, m.num_actions)},
              {"drop_distractor", EncoderTable::from_map(m.num_states, m.num_actions, drop)},
              {"stochastic", EncoderTable::random(3, m.view1_symbols, m.num_actions, rng)}}) {
            const auto j = build_joint(m, pi, &enc, nullptr, keep);
            const auto r = verify_chain_rule(j, seq("lat1", 2), seq("o1", 2), seq("astar", 2));
            // The two-term form needs s to be a function of o; a stochastic encoder that also reads the
            // sampled action only satisfies the co-information form.
            if (name == "stochastic")
                out.push_back({"chain_rule_coinformation_" + name, r.lhs, r.conditional + r.coinformation,
                               r.identity_gap, r.identity_gap < opt.tolerance});
            else
                out.push_back({"chain_rule_" + name, r.lhs, r.conditional + r.relevant, r.gap, r.gap < opt.tolerance});
        }
    }

    // Cross-view bound and its tightness.
    for (std::size_t i = 0; i < opt.bound_instances; ++i) {
        const auto m = instances::random_process(rng, two_three(rng), 2, 1, 2 + i % 3, 2 + (i + 2) % 3);
        const auto pi = instances::random_reactive(m, rng);
        const auto e1 = EncoderTable::random(two_three(rng), m.view1_symbols, m.num_actions, rng);
        const auto e2 = EncoderTable::random(two_three(rng), m.view2_symbols, m.num_actions, rng);
        const auto r = verify_cross_view_bound(m, pi, e1, e2);
        out.push_back({label("cross_view_bound", i), r.rep_obs, r.rep_rep, r.slack, r.slack >= -opt.tolerance});
        const auto tight = verify_cross_view_bound(m, pi, e1, EncoderTable::identity(m.view2_symbols, m.num_actions));
        out.push_back({label("cross_view_bound_tight", i), tight.rep_obs, tight.rep_rep, tight.slack,
                       std::abs(tight.slack) < opt.tolerance});
    }
    return out;
}

}  // namespace dribo
