#include "dribo/views.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dribo {

namespace ng = ndgrad;

void AugmentationSpec::validate() const {
    if (source_height == 0 || source_width == 0) throw ContractError("augmentation: empty source frame");
    if (target_height == 0 || target_width == 0 || target_height > source_height || target_width > source_width)
        throw ContractError("augmentation: target size must be within the source size");
    const auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!prob(flip_prob) || !prob(grayscale_prob)) throw ContractError("augmentation: probabilities must be in [0, 1]");
    if (cutout_max > std::min(target_height, target_width))
        throw ContractError("augmentation: cutout larger than the target frame");
    if (!(intensity_low > 0.0) || !(intensity_high >= intensity_low) || !std::isfinite(intensity_high))
        throw ContractError("augmentation: need 0 < intensity_low <= intensity_high");
}

TransformDraw sample_transform(const AugmentationSpec& spec, Rng& rng) {
    TransformDraw d;
    // The number of draws per transform depends on the spec only, never on earlier outcomes.
    std::uniform_int_distribution<std::size_t> y(0, spec.source_height - spec.target_height);
    std::uniform_int_distribution<std::size_t> x(0, spec.source_width - spec.target_width);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    d.crop_y = y(rng);
    d.crop_x = x(rng);
    d.flipped = u(rng) < spec.flip_prob;
    if (spec.cutout_max > 0) {
        std::uniform_int_distribution<std::size_t> side(1, spec.cutout_max);
        d.cut_h = side(rng);
        d.cut_w = side(rng);
        d.cut_y = std::uniform_int_distribution<std::size_t>(0, spec.target_height - d.cut_h)(rng);
        d.cut_x = std::uniform_int_distribution<std::size_t>(0, spec.target_width - d.cut_w)(rng);
    }
    d.gain = spec.intensity_low + (spec.intensity_high - spec.intensity_low) * u(rng);
    d.gray = u(rng) < spec.grayscale_prob;
    return d;
}

std::vector<double> flip_frame(std::span<const double> frame, std::size_t height, std::size_t width, FlipAxis axis) {
    if (frame.size() != height * width) throw ContractError("flip_frame: frame size does not match geometry");
    std::vector<double> out(frame.size());
    for (std::size_t r = 0; r < height; ++r)
        for (std::size_t c = 0; c < width; ++c) {
            const std::size_t sr = axis == FlipAxis::vertical ? height - 1 - r : r;
            const std::size_t sc = axis == FlipAxis::horizontal ? width - 1 - c : c;
            out[r * width + c] = frame[sr * width + sc];
        }
    return out;
}

std::vector<double> apply_transform(std::span<const double> frame, const AugmentationSpec& spec,
                                    const TransformDraw& d) {
    if (frame.size() != spec.source_height * spec.source_width)
        throw ContractError("augmentation: frame has " + std::to_string(frame.size()) + " pixels, expected " +
                            std::to_string(spec.source_height * spec.source_width));
    const std::size_t th = spec.target_height, tw = spec.target_width;
    std::vector<double> out(th * tw);
    for (std::size_t r = 0; r < th; ++r)
        for (std::size_t c = 0; c < tw; ++c) out[r * tw + c] = frame[(r + d.crop_y) * spec.source_width + c + d.crop_x];
    if (d.flipped) out = flip_frame(out, th, tw, spec.flip_axis);
    for (std::size_t r = d.cut_y; r < d.cut_y + d.cut_h; ++r)
        for (std::size_t c = d.cut_x; c < d.cut_x + d.cut_w; ++c) out[r * tw + c] = 0.0;
    if (d.gain != 1.0)
        for (double& v : out) v = std::clamp(v * d.gain, 0.0, 1.0);
    if (d.gray) {
        const double m = std::accumulate(out.begin(), out.end(), 0.0) / static_cast<double>(out.size());
        for (double& v : out) v = 0.5 * v + 0.5 * m;
    }
    return out;
}

std::vector<std::vector<double>> augment_sequence(const std::vector<std::vector<double>>& frames,
                                                  const AugmentationSpec& spec, Rng& rng,
                                                  std::vector<TransformDraw>* draws) {
    spec.validate();
    std::vector<std::vector<double>> out;
    out.reserve(frames.size());
    TransformDraw d;
    for (std::size_t t = 0; t < frames.size(); ++t) {
        if (t == 0 || spec.per_frame) {
            d = sample_transform(spec, rng);
            if (draws) draws->push_back(d);
        }
        out.push_back(apply_transform(frames[t], spec, d));
    }
    return out;
}

namespace {

std::span<const double> row(const ng::Tensor& t, std::size_t i) {
    const std::size_t w = t.dim(1);
    return t.data().subspan(i * w, w);
}

SequenceBatch with_frames(const SequenceBatch& batch, const AugmentationSpec& spec) {
    batch.validate();
    if (batch.height != spec.source_height || batch.width != spec.source_width)
        throw ContractError("augmentation: batch frames are " + std::to_string(batch.height) + "x" +
                            std::to_string(batch.width) + ", spec expects " + std::to_string(spec.source_height) +
                            "x" + std::to_string(spec.source_width));
    SequenceBatch out;
    out.height = spec.target_height;
    out.width = spec.target_width;
    out.actions = batch.actions;
    out.rewards = batch.rewards;
    out.old_states = batch.old_states;
    out.observations.assign(batch.length(), ng::Tensor({batch.batch(), out.obs_dim()}));
    return out;
}

}  // namespace

SequenceBatch augment_batch(const SequenceBatch& batch, const AugmentationSpec& spec, Rng& rng) {
    spec.validate();
    SequenceBatch out = with_frames(batch, spec);
    const std::size_t n = batch.batch(), px = out.obs_dim();
    for (std::size_t i = 0; i < n; ++i) {
        TransformDraw d;
        for (std::size_t t = 0; t < batch.length(); ++t) {
            if (t == 0 || spec.per_frame) d = sample_transform(spec, rng);
            const auto f = apply_transform(row(batch.observations[t], i), spec, d);
            std::copy(f.begin(), f.end(), out.observations[t].storage().begin() + static_cast<std::ptrdiff_t>(i * px));
        }
    }
    return out;
}

std::pair<SequenceBatch, SequenceBatch> make_two_views(const SequenceBatch& batch, const AugmentationSpec& spec,
                                                       Rng& rng) {
    SequenceBatch first = augment_batch(batch, spec, rng);
    SequenceBatch second = augment_batch(batch, spec, rng);
    return {std::move(first), std::move(second)};
}

std::vector<double> center_crop(std::span<const double> frame, const AugmentationSpec& spec) {
    spec.validate();
    TransformDraw d;
    d.crop_y = (spec.source_height - spec.target_height) / 2;
    d.crop_x = (spec.source_width - spec.target_width) / 2;
    return apply_transform(frame, spec, d);
}

SequenceBatch center_crop_batch(const SequenceBatch& batch, const AugmentationSpec& spec) {
    SequenceBatch out = with_frames(batch, spec);
    const std::size_t px = out.obs_dim();
    for (std::size_t t = 0; t < batch.length(); ++t)
        for (std::size_t i = 0; i < batch.batch(); ++i) {
            const auto f = center_crop(row(batch.observations[t], i), spec);
            std::copy(f.begin(), f.end(), out.observations[t].storage().begin() + static_cast<std::ptrdiff_t>(i * px));
        }
    return out;
}

}  // namespace dribo
