#pragma once

// Two-view generation by random augmentation of grayscale frame sequences.
//
// A transform is drawn once per sequence and applied to every frame of it, so
// the encoder sees a consistent view across time. The pipeline order is
// crop, flip, cutout, intensity, grayscale mix.

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "dribo/batch.hpp"
#include "dribo/params.hpp"

namespace dribo {

enum class FlipAxis { horizontal, vertical };

struct AugmentationSpec {
    std::size_t source_height = 28;
    std::size_t source_width = 28;
    /// Random crop window; equal to the source size disables cropping.
    std::size_t target_height = 24;
    std::size_t target_width = 24;
    /// Mirror with probability flip_prob along flip_axis.
    double flip_prob = 0.0;
    FlipAxis flip_axis = FlipAxis::horizontal;
    /// Zero-filled rectangle with sides drawn from [1, cutout_max]; 0 disables.
    std::size_t cutout_max = 0;
    /// Pixel gain drawn from [intensity_low, intensity_high], result clipped to [0, 1].
    double intensity_low = 1.0;
    double intensity_high = 1.0;
    /// With this probability the frame is pulled halfway toward its mean intensity.
    double grayscale_prob = 0.0;
    /// Draw a new transform for every frame instead of once per sequence.
    bool per_frame = false;

    void validate() const;
    bool crops() const { return target_height < source_height || target_width < source_width; }
};

/// Concrete parameters of one transform instance.
struct TransformDraw {
    std::size_t crop_y = 0;
    std::size_t crop_x = 0;
    bool flipped = false;
    std::size_t cut_y = 0;
    std::size_t cut_x = 0;
    std::size_t cut_h = 0;  // 0 when no cutout
    std::size_t cut_w = 0;
    double gain = 1.0;
    bool gray = false;

    bool operator==(const TransformDraw&) const = default;
};

TransformDraw sample_transform(const AugmentationSpec& spec, Rng& rng);

/// Applies a transform to one source frame of source_height * source_width pixels.
std::vector<double> apply_transform(std::span<const double> frame, const AugmentationSpec& spec,
                                    const TransformDraw& draw);

/// Mirrors a height x width frame in place of a copy.
std::vector<double> flip_frame(std::span<const double> frame, std::size_t height, std::size_t width, FlipAxis axis);

/// frames: T frames of one sequence. When `draws` is set it receives every transform used.
std::vector<std::vector<double>> augment_sequence(const std::vector<std::vector<double>>& frames,
                                                  const AugmentationSpec& spec, Rng& rng,
                                                  std::vector<TransformDraw>* draws = nullptr);

/// Augments every sequence of a batch independently; actions, rewards and old states are copied.
SequenceBatch augment_batch(const SequenceBatch& batch, const AugmentationSpec& spec, Rng& rng);

/// Two independent augmentations of the same batch.
std::pair<SequenceBatch, SequenceBatch> make_two_views(const SequenceBatch& batch, const AugmentationSpec& spec,
                                                       Rng& rng);

/// Deterministic view used when acting and evaluating: the central crop, no other transform.
std::vector<double> center_crop(std::span<const double> frame, const AugmentationSpec& spec);
SequenceBatch center_crop_batch(const SequenceBatch& batch, const AugmentationSpec& spec);

}  // namespace dribo
