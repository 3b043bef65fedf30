#include "dribo/worlds.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dribo {

void DistractorConfig::validate() const {
    if (render_size < 4 || render_size > 128) throw ContractError("distractor: render size must be in [4, 128]");
    if (episode_length == 0) throw ContractError("distractor: episode length must be positive");
    if (discrete_actions && discrete_count < 2) throw ContractError("distractor: need at least two discrete actions");
    if (train_pool == 0 || test_pool == 0) throw ContractError("distractor: background pools must be non-empty");
    if (!(dt > 0.0) || !(gravity >= 0.0) || !(damping >= 0.0) || !(max_torque > 0.0) || !(reset_spread >= 0.0))
        throw ContractError("distractor: bad physics constants");
}

DistractorConfig DistractorConfig::small() {
    DistractorConfig c;
    c.render_size = 8;
    c.fixed_background = true;
    return c;
}

DistractorConfig DistractorConfig::discrete4() {
    DistractorConfig c;
    c.discrete_actions = true;
    c.discrete_count = 4;
    return c;
}

Background::Background(std::size_t id, std::size_t size, Rng& phase_rng, bool frozen)
    : id_(id), size_(size), frozen_(frozen) {
    // Generator parameters come from a stream keyed by the id, so a given id always
    // produces the same kind of motion.
    Rng gen(0x9e3779b97f4a7c15ULL ^ (static_cast<std::uint64_t>(id) * 0x100000001b3ULL));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double two_pi = 2.0 * std::numbers::pi;
    base_ = 0.2 + 0.2 * u(gen);
    const std::size_t n_gratings = 2 + id % 2;
    for (std::size_t k = 0; k < n_gratings; ++k) {
        const double orient = two_pi * u(gen);
        const double freq = (1.0 + 3.0 * u(gen)) * two_pi / static_cast<double>(size);
        gratings_.push_back({freq * std::cos(orient), freq * std::sin(orient), 0.1 + 0.4 * u(gen),
                             0.05 + 0.12 * u(gen), two_pi * u(phase_rng)});
    }
    const std::size_t n_blobs = 1 + id % 3;
    const double s = static_cast<double>(size);
    for (std::size_t k = 0; k < n_blobs; ++k) {
        const double speed = (0.3 + 0.9 * u(gen)) * s / 28.0;
        const double dir = two_pi * u(gen);
        blobs_.push_back({s * u(phase_rng), s * u(phase_rng), speed * std::cos(dir), speed * std::sin(dir),
                          (1.5 + 3.0 * u(gen)) * s / 28.0, 0.15 + 0.25 * u(gen)});
    }
}

void Background::advance() {
    if (frozen_) return;
    const double s = static_cast<double>(size_);
    for (auto& g : gratings_) g.phase = std::fmod(g.phase + g.speed, 2.0 * std::numbers::pi);
    for (auto& b : blobs_) {
        b.x += b.vx;
        b.y += b.vy;
        if (b.x < 0.0 || b.x > s) {
            b.vx = -b.vx;
            b.x = std::clamp(b.x, 0.0, s);
        }
        if (b.y < 0.0 || b.y > s) {
            b.vy = -b.vy;
            b.y = std::clamp(b.y, 0.0, s);
        }
    }
}

std::vector<double> Background::layer() const {
    std::vector<double> out(size_ * size_, base_);
    for (std::size_t r = 0; r < size_; ++r)
        for (std::size_t c = 0; c < size_; ++c) {
            const double x = static_cast<double>(c) + 0.5, y = static_cast<double>(r) + 0.5;
            double v = base_;
            for (const auto& g : gratings_) v += g.amplitude * std::sin(g.kx * x + g.ky * y + g.phase);
            for (const auto& b : blobs_) {
                const double d2 = (x - b.x) * (x - b.x) + (y - b.y) * (y - b.y);
                if (d2 < b.radius * b.radius) v += b.brightness;
            }
            out[r * size_ + c] = std::clamp(v, 0.0, 0.75);
        }
    return out;
}

DistractorControl::DistractorControl(DistractorConfig config) : config_(config) { config_.validate(); }

std::vector<double> DistractorControl::reset(BackgroundMode mode, Rng& rng) {
    std::uniform_real_distribution<double> spread(-config_.reset_spread, config_.reset_spread);
    angle_ = spread(rng);
    velocity_ = spread(rng);
    std::size_t id = 0;
    if (!config_.fixed_background) {
        const std::size_t pool = mode == BackgroundMode::train ? config_.train_pool : config_.test_pool;
        const std::size_t offset = mode == BackgroundMode::train ? 0 : config_.train_pool;
        id = offset + std::uniform_int_distribution<std::size_t>(0, pool - 1)(rng);
    }
    background_ = Background(id, config_.render_size, rng, config_.fixed_background);
    time_ = 0;
    started_ = true;
    done_ = false;
    return render();
}

double DistractorControl::torque(std::span<const double> action) const {
    if (!config_.discrete_actions) {
        if (action.size() != 1) throw ContractError("distractor: continuous action must have one entry");
        if (!(action[0] >= -1.0 && action[0] <= 1.0)) throw ContractError("distractor: torque outside [-1, 1]");
        return action[0];
    }
    if (action.size() != config_.discrete_count) throw ContractError("distractor: discrete action must be one-hot");
    std::size_t hot = action.size();
    for (std::size_t k = 0; k < action.size(); ++k) {
        if (action[k] == 1.0 && hot == action.size()) hot = k;
        else if (action[k] != 0.0) throw ContractError("distractor: discrete action must be one-hot");
    }
    if (hot == action.size()) throw ContractError("distractor: discrete action must be one-hot");
    return -1.0 + 2.0 * static_cast<double>(hot) / static_cast<double>(config_.discrete_count - 1);
}

StepResult DistractorControl::step(std::span<const double> action) {
    if (!started_) throw ContractError("distractor: step before reset");
    if (done_) throw ContractError("distractor: step after the episode ended");
    const double u = torque(action);
    // Semi-implicit Euler: velocity first, then angle with the new velocity.
    const double acc = -config_.gravity * std::sin(angle_) - config_.damping * velocity_ + config_.max_torque * u;
    velocity_ += config_.dt * acc;
    angle_ += config_.dt * velocity_;
    angle_ = std::remainder(angle_, 2.0 * std::numbers::pi);
    background_.advance();
    ++time_;
    done_ = time_ >= config_.episode_length;
    return {render(), reward_for(angle_), done_};
}

void DistractorControl::set_physics(double angle, double velocity) {
    angle_ = angle;
    velocity_ = velocity;
}

std::vector<double> DistractorControl::render() const {
    const std::size_t n = config_.render_size;
    const double s = static_cast<double>(n);
    std::vector<double> frame = background_.layer();
    const double cx = 0.5 * s, cy = 0.5 * s;
    const double len = 0.42 * s;
    const double tx = cx + len * std::sin(angle_), ty = cy + len * std::cos(angle_);
    const double half = std::max(0.5, 0.06 * s);
    const double dx = tx - cx, dy = ty - cy, l2 = dx * dx + dy * dy;
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) {
            const double px = static_cast<double>(c) + 0.5, py = static_cast<double>(r) + 0.5;
            const double t = std::clamp(((px - cx) * dx + (py - cy) * dy) / l2, 0.0, 1.0);
            const double ex = px - (cx + t * dx), ey = py - (cy + t * dy);
            const double alpha = std::clamp(half + 0.5 - std::sqrt(ex * ex + ey * ey), 0.0, 1.0);
            double& v = frame[r * n + c];
            v = v * (1.0 - alpha) + alpha;
        }
    return frame;
}

ReturnStats random_policy_returns(const DistractorConfig& config, BackgroundMode mode, std::size_t episodes,
                                  std::uint64_t seed) {
    DistractorControl env(config);
    Rng rng(seed);
    ReturnStats out;
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_int_distribution<std::size_t> pick(0, config.action_dim() - 1);
    for (std::size_t e = 0; e < episodes; ++e) {
        env.reset(mode, rng);
        double ret = 0.0;
        std::vector<double> a(config.action_dim(), 0.0);
        while (!env.done()) {
            if (config.discrete_actions) {
                std::fill(a.begin(), a.end(), 0.0);
                a[pick(rng)] = 1.0;
            } else {
                a[0] = u(rng);
            }
            ret += env.step(a).reward;
        }
        out.returns.push_back(ret);
    }
    for (double r : out.returns) out.mean += r / static_cast<double>(episodes);
    double var = 0.0;
    for (double r : out.returns) var += (r - out.mean) * (r - out.mean);
    out.stddev = episodes > 1 ? std::sqrt(var / static_cast<double>(episodes - 1)) : 0.0;
    return out;
}

}  // namespace dribo
