#include <numeric>
#include <set>

#include "doctest.h"
#include "dribo/views.hpp"

using namespace dribo;

namespace {

// Pixel value equals its row-major index, so any crop is identifiable.
std::vector<double> ramp(std::size_t h, std::size_t w) {
    std::vector<double> f(h * w);
    std::iota(f.begin(), f.end(), 0.0);
    return f;
}

AugmentationSpec crop_spec(std::size_t src, std::size_t dst) {
    AugmentationSpec s;
    s.source_height = s.source_width = src;
    s.target_height = s.target_width = dst;
    return s;
}

SequenceBatch ramp_batch(std::size_t n, std::size_t t, std::size_t side) {
    SequenceBatch b;
    b.height = b.width = side;
    for (std::size_t k = 0; k < t; ++k) {
        ndgrad::Tensor o({n, side * side});
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = static_cast<double>((i + k) % 97) / 97.0;
        b.observations.push_back(o);
        ndgrad::Tensor a({n, 1});
        for (std::size_t i = 0; i < n; ++i) a[i] = 0.1 * static_cast<double>(i) - 0.05 * static_cast<double>(k);
        b.actions.push_back(a);
    }
    b.rewards = ndgrad::Tensor({t, n});
    for (std::size_t i = 0; i < b.rewards.size(); ++i) b.rewards[i] = static_cast<double>(i);
    return b;
}

}  // namespace

TEST_CASE("center crop takes the middle window") {
    const auto out = center_crop(ramp(4, 4), crop_spec(4, 2));
    CHECK(out == std::vector<double>{5, 6, 9, 10});
}

TEST_CASE("a crop at a given offset copies that window") {
    const AugmentationSpec spec = crop_spec(5, 3);
    TransformDraw d;
    d.crop_y = 2;
    d.crop_x = 1;
    const auto out = apply_transform(ramp(5, 5), spec, d);
    CHECK(out == std::vector<double>{11, 12, 13, 16, 17, 18, 21, 22, 23});
}

TEST_CASE("flips mirror the requested axis and are involutions") {
    const auto f = ramp(2, 3);
    CHECK(flip_frame(f, 2, 3, FlipAxis::horizontal) == std::vector<double>{2, 1, 0, 5, 4, 3});
    CHECK(flip_frame(f, 2, 3, FlipAxis::vertical) == std::vector<double>{3, 4, 5, 0, 1, 2});
    for (auto axis : {FlipAxis::horizontal, FlipAxis::vertical})
        CHECK(flip_frame(flip_frame(f, 2, 3, axis), 2, 3, axis) == f);
    CHECK_THROWS_AS(flip_frame(f, 3, 3, FlipAxis::vertical), ContractError);
}

TEST_CASE("cutout zeroes exactly its rectangle") {
    AugmentationSpec spec = crop_spec(4, 4);
    spec.cutout_max = 2;
    TransformDraw d;
    d.cut_y = 1;
    d.cut_x = 2;
    d.cut_h = 2;
    d.cut_w = 1;
    std::vector<double> f(16, 0.5);
    const auto out = apply_transform(f, spec, d);
    for (std::size_t i = 0; i < 16; ++i) {
        const bool inside = (i == 6 || i == 10);
        CHECK(out[i] == (inside ? 0.0 : 0.5));
    }
}

TEST_CASE("intensity gain clips to the unit range and gray mix keeps the mean") {
    AugmentationSpec spec = crop_spec(2, 2);
    spec.intensity_high = 3.0;
    TransformDraw d;
    d.gain = 2.0;
    const std::vector<double> f{0.1, 0.2, 0.6, 0.9};
    CHECK(apply_transform(f, spec, d) == std::vector<double>{0.2, 0.4, 1.0, 1.0});

    TransformDraw g;
    g.gray = true;
    const auto out = apply_transform(f, spec, g);
    const double mean = 0.45;
    for (std::size_t i = 0; i < 4; ++i) CHECK(out[i] == doctest::Approx(0.5 * f[i] + 0.5 * mean).epsilon(1e-15));
    CHECK(std::accumulate(out.begin(), out.end(), 0.0) / 4.0 == doctest::Approx(mean).epsilon(1e-15));
}

TEST_CASE("every crop offset is reachable") {
    const AugmentationSpec spec = crop_spec(6, 4);
    Rng rng(3);
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (int i = 0; i < 2000; ++i) {
        const auto d = sample_transform(spec, rng);
        CHECK(d.crop_y <= 2);
        CHECK(d.crop_x <= 2);
        seen.insert({d.crop_y, d.crop_x});
    }
    CHECK(seen.size() == 9);
}

TEST_CASE("one transform per sequence unless per_frame is set") {
    AugmentationSpec spec = crop_spec(6, 4);
    spec.flip_prob = 0.5;
    const std::vector<std::vector<double>> frames(5, ramp(6, 6));
    Rng rng(1);
    std::vector<TransformDraw> draws;
    const auto out = augment_sequence(frames, spec, rng, &draws);
    CHECK(draws.size() == 1);
    for (const auto& f : out) CHECK(f == out.front());

    spec.per_frame = true;
    draws.clear();
    augment_sequence(frames, spec, rng, &draws);
    CHECK(draws.size() == 5);
}

TEST_CASE("augment_batch keeps actions and rewards and changes only pixels") {
    AugmentationSpec spec = crop_spec(6, 4);
    spec.cutout_max = 2;
    spec.intensity_low = 0.8;
    spec.intensity_high = 1.2;
    const SequenceBatch b = ramp_batch(3, 4, 6);
    Rng rng(9);
    const auto [v1, v2] = make_two_views(b, spec, rng);
    for (const auto* v : {&v1, &v2}) {
        CHECK(v->height == 4);
        CHECK(v->width == 4);
        REQUIRE(v->length() == 4);
        for (std::size_t t = 0; t < 4; ++t) {
            CHECK(v->observations[t].shape() == ndgrad::Shape{3, 16});
            CHECK(v->actions[t].storage() == b.actions[t].storage());
            for (double p : v->observations[t].storage()) {
                CHECK(p >= 0.0);
                CHECK(p <= 1.0);
            }
        }
        CHECK(v->rewards.storage() == b.rewards.storage());
    }
    bool differ = false;
    for (std::size_t t = 0; t < 4; ++t) differ = differ || v1.observations[t].storage() != v2.observations[t].storage();
    CHECK(differ);
}

TEST_CASE("views are reproducible from the seed") {
    AugmentationSpec spec = crop_spec(6, 4);
    spec.flip_prob = 0.5;
    const SequenceBatch b = ramp_batch(2, 3, 6);
    Rng r1(5), r2(5);
    const auto a = make_two_views(b, spec, r1);
    const auto c = make_two_views(b, spec, r2);
    for (std::size_t t = 0; t < 3; ++t) {
        CHECK(a.first.observations[t].storage() == c.first.observations[t].storage());
        CHECK(a.second.observations[t].storage() == c.second.observations[t].storage());
    }
}

TEST_CASE("center_crop_batch matches per-frame center crops") {
    const AugmentationSpec spec = crop_spec(6, 4);
    const SequenceBatch b = ramp_batch(2, 2, 6);
    const SequenceBatch c = center_crop_batch(b, spec);
    for (std::size_t t = 0; t < 2; ++t)
        for (std::size_t i = 0; i < 2; ++i) {
            const auto& src = b.observations[t].storage();
            const std::vector<double> frame(src.begin() + static_cast<std::ptrdiff_t>(i * 36),
                                            src.begin() + static_cast<std::ptrdiff_t>((i + 1) * 36));
            const auto want = center_crop(frame, spec);
            const auto& got = c.observations[t].storage();
            CHECK(std::vector<double>(got.begin() + static_cast<std::ptrdiff_t>(i * 16),
                                      got.begin() + static_cast<std::ptrdiff_t>((i + 1) * 16)) == want);
        }
}

TEST_CASE("invalid specs and mismatched frames are rejected") {
    AugmentationSpec s = crop_spec(4, 5);
    CHECK_THROWS_AS(s.validate(), ContractError);
    s = crop_spec(4, 4);
    s.flip_prob = 1.5;
    CHECK_THROWS_AS(s.validate(), ContractError);
    s = crop_spec(4, 2);
    s.cutout_max = 3;
    CHECK_THROWS_AS(s.validate(), ContractError);
    s = crop_spec(4, 4);
    s.intensity_low = 0.0;
    CHECK_THROWS_AS(s.validate(), ContractError);
    CHECK_THROWS_AS(center_crop(ramp(3, 3), crop_spec(4, 2)), ContractError);
    Rng rng(1);
    CHECK_THROWS_AS(augment_batch(ramp_batch(1, 1, 5), crop_spec(6, 4), rng), ContractError);
}
