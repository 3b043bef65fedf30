#pragma once

// Rendered pendulum whose background moves on its own.
//
// The plant is a damped pendulum driven by a bounded torque; angle 0 hangs
// straight down and the reward (1 - cos angle) / 2 peaks when the pole points
// up. Frames are grayscale in [0, 1]: a moving textured background from a
// pool of generators with the pole drawn on top. The background never sees
// the action, so everything it contributes to a frame is task-irrelevant.
// Train and test modes draw generators from disjoint id ranges.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "dribo/errors.hpp"
#include "dribo/params.hpp"

namespace dribo {

enum class BackgroundMode { train, test };

struct DistractorConfig {
    std::size_t render_size = 28;
    std::size_t episode_length = 50;
    /// Discrete variant: action is a one-hot vector over `discrete_count` evenly spaced torques.
    bool discrete_actions = false;
    std::size_t discrete_count = 4;
    /// Generator ids [0, train_pool) serve training; [train_pool, train_pool + test_pool) serve testing.
    std::size_t train_pool = 8;
    std::size_t test_pool = 8;
    /// Static background from generator 0 in both modes.
    bool fixed_background = false;

    double dt = 0.1;
    double gravity = 6.0;
    double damping = 0.5;
    double max_torque = 8.0;
    /// Half-width of the initial angle and velocity ranges.
    double reset_spread = 0.2;

    std::size_t action_dim() const { return discrete_actions ? discrete_count : 1; }
    void validate() const;

    /// 8x8 render with a fixed background.
    static DistractorConfig small();
    /// Four discrete torques.
    static DistractorConfig discrete4();
};

struct StepResult {
    std::vector<double> observation;
    double reward = 0.0;
    bool done = false;
};

/// Autonomous background generator: a few drifting gratings and bouncing blobs.
class Background {
public:
    Background() = default;
    /// `phase_rng` only sets the starting phases; the motion itself is fixed by the id.
    Background(std::size_t id, std::size_t size, Rng& phase_rng, bool frozen);

    std::size_t id() const noexcept { return id_; }
    void advance();
    std::vector<double> layer() const;

private:
    struct Grating {
        double kx, ky, speed, amplitude, phase;
    };
    struct Blob {
        double x, y, vx, vy, radius, brightness;
    };

    std::size_t id_ = 0;
    std::size_t size_ = 0;
    bool frozen_ = false;
    double base_ = 0.3;
    std::vector<Grating> gratings_;
    std::vector<Blob> blobs_;
};

class DistractorControl {
public:
    explicit DistractorControl(DistractorConfig config);

    const DistractorConfig& config() const noexcept { return config_; }
    std::size_t frame_size() const { return config_.render_size; }

    std::vector<double> reset(BackgroundMode mode, Rng& rng);
    StepResult step(std::span<const double> action);

    /// Torque in [-1, 1] that an action stands for.
    double torque(std::span<const double> action) const;

    double angle() const noexcept { return angle_; }
    double velocity() const noexcept { return velocity_; }
    bool done() const noexcept { return done_; }
    std::size_t time() const noexcept { return time_; }
    std::size_t background_id() const noexcept { return background_.id(); }
    std::vector<double> background_layer() const { return background_.layer(); }
    std::vector<double> render() const;
    /// Overrides the plant state; used by tests and probes.
    void set_physics(double angle, double velocity);

    static double reward_for(double angle) { return 0.5 * (1.0 - std::cos(angle)); }

private:
    DistractorConfig config_;
    Background background_;
    double angle_ = 0.0;
    double velocity_ = 0.0;
    std::size_t time_ = 0;
    bool started_ = false;
    bool done_ = false;
};

/// Random policy returns over `episodes` episodes, used as the learning baseline.
struct ReturnStats {
    double mean = 0.0;
    double stddev = 0.0;
    std::vector<double> returns;
};
ReturnStats random_policy_returns(const DistractorConfig& config, BackgroundMode mode, std::size_t episodes,
                                  std::uint64_t seed);

}  // namespace dribo
