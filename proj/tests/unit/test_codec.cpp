#include "doctest.h"

#include "gccpm/codec.hpp"
#include "gccpm/model.hpp"
#include "gccpm/ops.hpp"
#include "oracles.hpp"

#include <cmath>

using namespace gccpm;

namespace {

KeypointSet grid_aligned(std::mt19937_64& rng, const CodecConfig& cfg)
{
    KeypointSet kps;
    std::uniform_int_distribution<int> cell(0, cfg.heatmap_size - 1);
    for (auto& p : kps.points) {
        p.x = cell(rng) * cfg.output_stride;
        p.y = cell(rng) * cfg.output_stride;
        p.visibility = Visibility::visible;
    }
    kps.head_size = 10;
    return kps;
}

} // namespace

TEST_CASE("encode: peak and one-sigma value")
{
    CodecConfig cfg;
    KeypointSet kps;
    kps.points[0] = {16.0 * 8, 16.0 * 8, Visibility::visible};
    kps.points[1] = {3.0 * 8, 5.0 * 8, Visibility::occluded};
    auto maps = encode_heatmaps(kps, cfg);
    CHECK(maps.shape() == Shape{16, 32, 32});
    auto at = [&](int c, int v, int u) { return maps.data()[(c * 32 + v) * 32 + u]; };
    CHECK(at(0, 16, 16) == 1.0f);
    CHECK(at(0, 16, 18) == doctest::Approx(std::exp(-0.5)).epsilon(1e-6));
    CHECK(at(1, 5, 3) == 1.0f);
    for (int i = 0; i < 32 * 32; ++i)
        CHECK(maps.data()[2 * 1024 + i] == 0.0f);
}

TEST_CASE("encode: background channel")
{
    CodecConfig cfg;
    cfg.background = true;
    KeypointSet kps;
    kps.points[4] = {80, 80, Visibility::visible};
    auto maps = encode_heatmaps(kps, cfg);
    CHECK(maps.dim(0) == 17);
    CHECK(maps.data()[16 * 1024 + 10 * 32 + 10] == 0.0f);
    CHECK(maps.data()[16 * 1024] == doctest::Approx(1.0f));
    auto dec = decode_heatmaps(maps, cfg);
    CHECK(dec.points.size() == 16);
}

TEST_CASE("encode is translation covariant and decode inverts grid-aligned keypoints")
{
    CodecConfig cfg;
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        auto kps = grid_aligned(rng, cfg);
        auto dec = decode_heatmaps(encode_heatmaps(kps, cfg), cfg);
        for (int j = 0; j < kNumKeypoints; ++j) {
            CHECK(dec.points[j].x == kps.points[j].x);
            CHECK(dec.points[j].y == kps.points[j].y);
            CHECK(dec.points[j].confidence == 1.0);
        }
    }
    KeypointSet a;
    a.points[0] = {40, 48, Visibility::visible};
    KeypointSet b = a;
    b.points[0].x += 3 * 8;
    b.points[0].y += 2 * 8;
    auto ma = encode_heatmaps(a, cfg), mb = encode_heatmaps(b, cfg);
    for (int v = 0; v + 2 < 32; ++v)
        for (int u = 0; u + 3 < 32; ++u)
            CHECK(ma.data()[v * 32 + u] == mb.data()[(v + 2) * 32 + u + 3]);
}

TEST_CASE("decode: constant map, quarter shift rule")
{
    CodecConfig cfg;
    Tensor flat({16, 32, 32}, 0.3f);
    auto dec = decode_heatmaps(flat, cfg);
    CHECK(dec.points[0].x == 0.0);
    CHECK(dec.points[0].y == 0.0);

    Tensor m({1, 32, 32});
    m.mutable_data()[10 * 32 + 10] = 0.9f;
    m.mutable_data()[10 * 32 + 11] = 0.8f;
    CodecConfig one = cfg;
    one.flip_pairs.clear();
    auto d = decode_heatmaps(m, one);
    CHECK(d.points[0].x == doctest::Approx(10.25 * 8));
    CHECK(d.points[0].y == doctest::Approx(10.0 * 8));
    CHECK(d.points[0].confidence == doctest::Approx(0.9));
}

TEST_CASE("decode error is at most half a stride inside the decodable box")
{
    CodecConfig cfg;
    std::mt19937_64 rng(5);
    const double hi = (cfg.heatmap_size - 0.5) * cfg.output_stride;
    std::uniform_real_distribution<double> u(0.0, hi);
    for (int trial = 0; trial < 200; ++trial) {
        KeypointSet kps;
        for (auto& p : kps.points)
            p = {u(rng), u(rng), Visibility::visible};
        auto dec = decode_heatmaps(encode_heatmaps(kps, cfg), cfg);
        for (int j = 0; j < kNumKeypoints; ++j) {
            CHECK(std::abs(dec.points[j].x - kps.points[j].x) <= 0.5 * cfg.output_stride);
            CHECK(std::abs(dec.points[j].y - kps.points[j].y) <= 0.5 * cfg.output_stride);
        }
    }
}

TEST_CASE("codec config validation")
{
    CodecConfig cfg;
    cfg.sigma = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = CodecConfig{};
    cfg.flip_pairs.push_back({0, 7});
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = CodecConfig{};
    cfg.flip_pairs.push_back({16, 7});
    CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("flip permutation pairs")
{
    auto p = flip_permutation(16, mpii_flip_pairs());
    CHECK(p[0] == 5);
    CHECK(p[5] == 0);
    CHECK(p[6] == 6);
    CHECK(p[12] == 13);
    CHECK(keypoint_names()[12] == "r_shoulder");
}

namespace {

HeatmapFn model_fn(const Model& m)
{
    return [&m](const Tensor& x) { return m.forward(x).back(); };
}

} // namespace

TEST_CASE("flip average is an exact mirror/swap symmetry")
{
    auto mc = ModelConfig::tiny();
    mc.num_refinement_stages = 0;
    Model m = build_model(mc);
    CodecConfig cfg;
    cfg.heatmap_size = 8;
    std::mt19937_64 rng(3);
    auto img = oracle::random_tensor<float>({1, 3, 64, 64}, rng, -0.5, 0.5);
    auto a = flip_average(model_fn(m), img, cfg);
    auto b = flip_average(model_fn(m), flip_horizontal(img), cfg);
    auto b_back = permute_channels(flip_horizontal(b), flip_permutation(16, cfg.flip_pairs));
    CHECK(std::equal(a.data().begin(), a.data().end(), b_back.data().begin()));
}

TEST_CASE("flip average of constant and identity-like functions")
{
    CodecConfig cfg;
    cfg.heatmap_size = 4;
    std::mt19937_64 rng(8);
    auto constant = oracle::random_tensor<float>({1, 16, 4, 4}, rng);
    HeatmapFn fixed = [&](const Tensor&) { return constant; };
    auto avg = flip_average(fixed, Tensor({1, 3, 4, 4}), cfg);
    auto expected = scale(add(constant, permute_channels(flip_horizontal(constant), flip_permutation(16, cfg.flip_pairs))),
                          0.5f);
    CHECK(std::equal(avg.data().begin(), avg.data().end(), expected.data().begin()));

    // Identity "model" on 16-channel inputs: averaging is idempotent on already-averaged maps.
    HeatmapFn identity = [](const Tensor& x) { return x; };
    auto x = oracle::random_tensor<float>({1, 16, 4, 4}, rng);
    auto once = flip_average(identity, x, cfg);
    auto twice = flip_average(identity, once, cfg);
    for (std::size_t i = 0; i < once.numel(); ++i)
        CHECK(twice.data()[i] == doctest::Approx(once.data()[i]).epsilon(1e-6));
}

TEST_CASE("multiscale average")
{
    auto mc = ModelConfig::tiny();
    mc.num_refinement_stages = 0;
    Model m = build_model(mc);
    CodecConfig cfg;
    cfg.heatmap_size = 8;
    std::mt19937_64 rng(12);
    auto img = oracle::random_tensor<float>({1, 3, 64, 64}, rng, -0.5, 0.5);
    NoGradGuard guard;
    auto single = m.forward(img).back();
    auto one = multiscale_average(model_fn(m), img, {1.0}, cfg);
    CHECK(std::equal(one.data().begin(), one.data().end(), single.data().begin()));

    int calls = 0;
    auto constant = oracle::random_tensor<float>({1, 16, 8, 8}, rng);
    for (auto& v : constant.mutable_data())
        v = 0.25f;
    HeatmapFn fixed = [&](const Tensor&) {
        ++calls;
        return constant;
    };
    auto avg = multiscale_average(fixed, img, {0.75, 1.0, 1.25}, cfg);
    CHECK(calls == 3);
    for (float v : avg.data())
        CHECK(v == doctest::Approx(0.25f));
    CHECK_THROWS_AS(multiscale_average(fixed, img, {}, cfg), Error);
}

TEST_CASE("resample about the centre")
{
    Tensor x({1, 1, 5, 5});
    for (int i = 0; i < 25; ++i)
        x.mutable_data()[i] = static_cast<float>(i);
    auto same = resample_about(x, 1.0, 2.0, false);
    CHECK(std::equal(same.data().begin(), same.data().end(), x.data().begin()));
    auto zoom = resample_about(x, 0.5, 2.0, true);
    CHECK(zoom.data()[2 * 5 + 2] == 12.0f);
    CHECK(zoom.data()[2 * 5 + 4] == doctest::Approx(13.0f));
    auto shrink = resample_about(x, 2.0, 2.0, false, -1.0f);
    CHECK(shrink.data()[0] == -1.0f);
    CHECK(shrink.data()[1 * 5 + 1] == 0.0f);
}
