#include "doctest.h"

#include "gccpm/augment.hpp"
#include "gccpm/data.hpp"

#include <cmath>
#include <set>

using namespace gccpm;

namespace {

Image noise_image(std::mt19937_64& rng, int w, int h)
{
    Image img(w, h);
    std::uniform_int_distribution<int> px(0, 255);
    for (auto& v : img.pixels)
        v = static_cast<std::uint8_t>(px(rng));
    return img;
}

Sample random_sample(std::mt19937_64& rng, int size)
{
    Sample s;
    s.image = noise_image(rng, size, size);
    std::uniform_real_distribution<double> coord(0.2 * size, 0.8 * size);
    for (auto& p : s.keypoints.points)
        p = {coord(rng), coord(rng), Visibility::visible};
    s.keypoints.head_size = 10;
    return s;
}

double dist(const Keypoint& a, const Keypoint& b) { return std::hypot(a.x - b.x, a.y - b.y); }

} // namespace

TEST_CASE("geometric: identity parameters leave sample unchanged")
{
    std::mt19937_64 rng(1);
    auto s = random_sample(rng, 64);
    auto cfg = AugmentConfig::none(64);
    auto out = apply_geometric(s, {}, cfg);
    CHECK(out.image == s.image);
    for (int j = 0; j < kNumKeypoints; ++j) {
        CHECK(out.keypoints.points[j].x == doctest::Approx(s.keypoints.points[j].x).epsilon(1e-12));
        CHECK(out.keypoints.points[j].y == doctest::Approx(s.keypoints.points[j].y).epsilon(1e-12));
    }
}

TEST_CASE("geometric: smaller source is centred on the canvas")
{
    std::mt19937_64 rng(2);
    auto s = random_sample(rng, 48);
    auto cfg = AugmentConfig::none(64);
    auto out = apply_geometric(s, {}, cfg);
    CHECK(out.image.width == 64);
    for (int j = 0; j < kNumKeypoints; ++j) {
        CHECK(out.keypoints.points[j].x == doctest::Approx(s.keypoints.points[j].x + 8));
        CHECK(out.keypoints.points[j].y == doctest::Approx(s.keypoints.points[j].y + 8));
    }
    CHECK(out.image.rgb(0, 0) == cfg.fill_color);
    CHECK(out.image.rgb(63, 63) == cfg.fill_color);
    CHECK(out.image.rgb(8, 8) == s.image.rgb(0, 0));
}

TEST_CASE("geometric: flip twice restores keypoints and indices")
{
    std::mt19937_64 rng(3);
    auto s = random_sample(rng, 64);
    auto cfg = AugmentConfig::none(64);
    GeometricParams p;
    p.flip = true;
    auto once = apply_geometric(s, p, cfg);
    // Left wrist lands in the right-wrist slot, mirrored.
    CHECK(once.keypoints.points[15].x == doctest::Approx(63 - s.keypoints.points[10].x));
    auto twice = apply_geometric(once, p, cfg);
    CHECK(twice.image == s.image);
    for (int j = 0; j < kNumKeypoints; ++j) {
        CHECK(twice.keypoints.points[j].x == doctest::Approx(s.keypoints.points[j].x).epsilon(1e-12));
        CHECK(twice.keypoints.points[j].y == doctest::Approx(s.keypoints.points[j].y).epsilon(1e-12));
    }
}

TEST_CASE("geometric: scale 0.75 maps a 256-tall subject to 192 rows")
{
    Sample s;
    s.image = Image(256, 256, {255, 255, 255});
    s.keypoints.points[0] = {127.5, 0.0, Visibility::visible};
    s.keypoints.points[1] = {127.5, 255.0, Visibility::visible};
    auto cfg = AugmentConfig::none(256);
    cfg.fill_color = {0, 0, 0};
    GeometricParams p;
    p.scale = 0.75;
    auto out = apply_geometric(s, p, cfg);
    int rows = 0, first = -1;
    for (int y = 0; y < 256; ++y)
        if (out.image.at(128, y, 0) >= 128) {
            ++rows;
            if (first < 0)
                first = y;
        }
    CHECK(rows == 192);
    CHECK(first == 32);
    CHECK(out.keypoints.points[0].y == doctest::Approx(127.5 - 0.75 * 127.5));
    CHECK(dist(out.keypoints.points[0], out.keypoints.points[1]) == doctest::Approx(0.75 * 255));
}

TEST_CASE("geometric: pairwise distances scale by u")
{
    std::mt19937_64 rng(4);
    auto cfg = AugmentConfig::none(64);
    cfg.scale_min = 0.75;
    cfg.scale_max = 1.25;
    cfg.rotation_deg = 40;
    cfg.flip_prob = 0.5;
    double worst = 0;
    for (int trial = 0; trial < 200; ++trial) {
        auto s = random_sample(rng, 64);
        const auto p = sample_geometric(rng, cfg);
        CHECK(p.scale >= 0.75);
        CHECK(p.scale <= 1.25);
        CHECK(std::abs(p.rotation_deg) <= 40.0);
        auto out = apply_geometric(s, p, cfg);
        const auto perm = flip_permutation(kNumKeypoints, cfg.flip_pairs);
        for (int i = 0; i < kNumKeypoints; ++i)
            for (int j = i + 1; j < kNumKeypoints; ++j) {
                const int oi = p.flip ? perm[i] : i, oj = p.flip ? perm[j] : j;
                const double d0 = dist(s.keypoints.points[i], s.keypoints.points[j]);
                const double d1 = dist(out.keypoints.points[oi], out.keypoints.points[oj]);
                worst = std::max(worst, std::abs(d1 - p.scale * d0) / (p.scale * d0));
            }
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("geometric: points leaving the canvas become occluded")
{
    Sample s;
    s.image = Image(64, 64);
    s.keypoints.points[0] = {1.0, 32.0, Visibility::visible};
    s.keypoints.points[1] = {32.0, 32.0, Visibility::visible};
    auto cfg = AugmentConfig::none(64);
    GeometricParams p;
    p.scale = 1.25;
    auto out = apply_geometric(s, p, cfg);
    CHECK(out.keypoints.points[0].visibility == Visibility::occluded);
    CHECK(out.keypoints.points[1].visibility == Visibility::visible);
    CHECK(out.keypoints.points[2].visibility == Visibility::absent);
}

TEST_CASE("body mask: bounded sides, uniform colour, locality")
{
    std::mt19937_64 rng(5);
    AugmentConfig cfg = AugmentConfig::none(256);
    cfg.body_mask.enabled = true;
    const double bound = cfg.body_mask.max_side_frac * 256;
    const auto img = noise_image(rng, 256, 256);
    for (int trial = 0; trial < 100; ++trial) {
        Quad q;
        auto out = body_mask(img, rng, cfg, &q);
        CHECK(q.width <= bound);
        CHECK(q.height <= bound);
        CHECK(std::abs(q.cx - 127.5) <= 0.1 * 256);
        CHECK(std::abs(q.cy - 127.5) <= 0.1 * 256);
        int changed = 0;
        std::set<std::array<int, 3>> colours;
        for (int y = 0; y < 256; ++y)
            for (int x = 0; x < 256; ++x) {
                const bool inside = q.contains(x, y);
                if (out.rgb(x, y) != img.rgb(x, y)) {
                    ++changed;
                    CHECK(inside);
                }
                if (inside) {
                    const auto c = out.rgb(x, y);
                    colours.insert({c[0], c[1], c[2]});
                } else if (out.rgb(x, y) != img.rgb(x, y)) {
                    FAIL("pixel outside the quadrangle changed");
                }
            }
        CHECK(colours.size() <= 1);
        CHECK(changed <= bound * bound);
    }
}

TEST_CASE("body mask: seed determinism")
{
    std::mt19937_64 a(9), b(9), src(1);
    AugmentConfig cfg = AugmentConfig::none(64);
    cfg.body_mask.enabled = true;
    const auto img = noise_image(src, 64, 64);
    CHECK(body_mask(img, a, cfg) == body_mask(img, b, cfg));
}

TEST_CASE("keypoint mask: zero keypoints, annotations kept, patches centred")
{
    std::mt19937_64 rng(6);
    AugmentConfig cfg = AugmentConfig::none(64);
    cfg.keypoint_mask.enabled = true;
    cfg.keypoint_mask.max_keypoints = 0;
    auto s = random_sample(rng, 64);
    CHECK(keypoint_mask(s, rng, cfg).image == s.image);

    cfg.keypoint_mask.max_keypoints = 4;
    cfg.keypoint_mask.patch_size_px = 8;
    for (int trial = 0; trial < 20; ++trial) {
        auto t = random_sample(rng, 64);
        for (auto& p : t.keypoints.points)
            p.visibility = Visibility::absent;
        t.keypoints.points[3] = {30.0, 20.0, Visibility::visible};
        auto out = keypoint_mask(t, rng, cfg);
        CHECK(out.keypoints.points[3].x == 30.0);
        CHECK(out.keypoints.points[3].visibility == Visibility::visible);
        int x0 = 64, x1 = -1, y0 = 64, y1 = -1;
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x)
                if (out.image.rgb(x, y) == cfg.fill_color && !(t.image.rgb(x, y) == cfg.fill_color)) {
                    x0 = std::min(x0, x), x1 = std::max(x1, x);
                    y0 = std::min(y0, y), y1 = std::max(y1, y);
                }
        CHECK(x1 - x0 + 1 == 8);
        CHECK(y1 - y0 + 1 == 8);
        CHECK((x0 + x1) / 2.0 == doctest::Approx(30.0).epsilon(0.02));
        CHECK((y0 + y1) / 2.0 == doctest::Approx(20.0).epsilon(0.03));
    }
}

TEST_CASE("channel permutation")
{
    std::mt19937_64 rng(7);
    const auto img = noise_image(rng, 16, 16);
    CHECK(apply_channel_permutation(img, {0, 1, 2}) == img);
    Image gray(16, 16);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
            const auto v = static_cast<std::uint8_t>(x * 16 + y);
            gray.set(x, y, {v, v, v});
        }
    std::set<std::array<int, 3>> seen;
    for (int i = 0; i < 200; ++i) {
        std::array<int, 3> perm{};
        CHECK(channel_permute(gray, rng, &perm) == gray);
        seen.insert(perm);
        std::array<int, 3> inv{};
        for (int c = 0; c < 3; ++c)
            inv[perm[c]] = c;
        CHECK(apply_channel_permutation(apply_channel_permutation(img, perm), inv) == img);
    }
    CHECK(seen.size() == 6);
}

TEST_CASE("augment: determinism and occlusion under the body mask")
{
    SynthConfig sc;
    sc.seed = 3;
    const auto samples = gen_dataset(sc, 10);
    AugmentConfig cfg = AugmentConfig::none(64);
    cfg.rotation_deg = 40;
    cfg.flip_prob = 0.5;
    cfg.permute_channels = true;
    cfg.body_mask.enabled = true;
    cfg.keypoint_mask.enabled = true;
    int occluded = 0;
    for (const auto& s : samples) {
        std::mt19937_64 a(11), b(11);
        auto x = augment(s, a, cfg), y = augment(s, b, cfg);
        CHECK(x.image == y.image);
        for (int j = 0; j < kNumKeypoints; ++j) {
            CHECK(x.keypoints.points[j].x == y.keypoints.points[j].x);
            CHECK(x.keypoints.points[j].visibility == y.keypoints.points[j].visibility);
            occluded += x.keypoints.points[j].visibility == Visibility::occluded;
        }
    }
    CHECK(occluded > 0);
}
