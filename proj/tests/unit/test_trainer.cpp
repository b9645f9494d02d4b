#include "doctest.h"

#include "gccpm/checkpoint.hpp"
#include "gccpm/data.hpp"
#include "gccpm/error.hpp"
#include "gccpm/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

using namespace gccpm;
namespace fs = std::filesystem;

namespace {

std::vector<Sample> tiny_set(int n, std::uint64_t seed = 1)
{
    SynthConfig sc;
    sc.seed = seed;
    sc.grid_align = 8;
    return gen_dataset(sc, n);
}

TrainConfig short_run(int iters)
{
    TrainConfig tc;
    tc.max_iters = iters;
    tc.eval_interval = 10;
    tc.batch_size = 4;
    tc.seed = 3;
    return tc;
}

} // namespace

TEST_CASE("train: zero iterations returns the initialised model")
{
    const auto mc = ModelConfig::tiny();
    const auto data = tiny_set(4);
    auto r = train(mc, short_run(0), codec_for(mc), AugmentConfig::none(64), data);
    CHECK(r.history.entries.empty());
    const Model fresh = build_model(mc);
    const auto a = r.model.parameters(), b = fresh.parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto x = a[i].tensor.data(), y = b[i].tensor.data();
        CHECK(std::equal(x.begin(), x.end(), y.begin()));
    }
}

TEST_CASE("train: same seed gives an identical history; loss mostly falls early on")
{
    const auto mc = ModelConfig::tiny();
    const auto data = tiny_set(12);
    auto tc = short_run(100);
    const auto a = train(mc, tc, codec_for(mc), AugmentConfig::none(64), data);
    const auto b = train(mc, tc, codec_for(mc), AugmentConfig::none(64), data);
    CHECK(a.history == b.history);
    REQUIRE(a.history.entries.size() == 10);
    int down = 0;
    for (std::size_t i = 1; i < a.history.entries.size(); ++i) {
        CHECK(a.history.entries[i].iteration > a.history.entries[i - 1].iteration);
        down += a.history.entries[i].val_loss <= a.history.entries[i - 1].val_loss;
    }
    CHECK(down >= 0.8 * 9);
    CHECK(a.final_train_loss < a.initial_train_loss);
}

TEST_CASE("train: augmented runs are deterministic too")
{
    const auto mc = ModelConfig::tiny();
    const auto data = tiny_set(6);
    auto tc = short_run(20);
    tc.augment = true;
    auto ac = AugmentConfig::none(64);
    ac.rotation_deg = 40;
    ac.flip_prob = 0.5;
    ac.body_mask.enabled = true;
    ac.permute_channels = true;
    const auto a = train(mc, tc, codec_for(mc), ac, data);
    const auto b = train(mc, tc, codec_for(mc), ac, data);
    CHECK(a.history == b.history);
}

TEST_CASE("train: plateau schedule divides lr by ten at most twice")
{
    const auto mc = ModelConfig::tiny();
    const auto data = tiny_set(4);
    auto tc = short_run(120);
    tc.eval_interval = 5;
    tc.plateau_patience = 2;
    tc.plateau_threshold = 0.5; // nothing short of halving counts as progress
    const auto r = train(mc, tc, codec_for(mc), AugmentConfig::none(64), data);
    double prev = tc.lr;
    std::vector<double> rates;
    for (const auto& e : r.history.entries) {
        CHECK(e.lr <= prev);
        prev = e.lr;
        if (rates.empty() || rates.back() != e.lr)
            rates.push_back(e.lr);
    }
    REQUIRE(rates.size() == 3);
    CHECK(rates[1] == doctest::Approx(tc.lr / 10));
    CHECK(rates[2] == doctest::Approx(tc.lr / 100));
}

TEST_CASE("train: writes checkpoints and history")
{
    const auto dir = fs::temp_directory_path() / "gccpm_test_trainer";
    fs::remove_all(dir);
    const auto mc = ModelConfig::tiny();
    const auto data = tiny_set(4);
    TrainOptions opts;
    opts.output_dir = dir;
    int calls = 0;
    opts.on_eval = [&](const HistoryEntry&) { ++calls; };
    const auto r = train(mc, short_run(20), codec_for(mc), AugmentConfig::none(64), data, {}, opts);
    CHECK(calls == 2);
    CHECK(fs::exists(dir / "best.json"));
    CHECK(fs::exists(dir / "final.bin"));
    const Model back = load_checkpoint(dir / "final.json");
    CHECK(dataset_loss(back, data, codec_for(mc)) == dataset_loss(r.model, data, codec_for(mc)));
    std::ifstream in(dir / "history.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "iteration,train_loss,val_loss,mean_pckh,lr");
    fs::remove_all(dir);
}

TEST_CASE("train: config and dataset errors")
{
    const auto mc = ModelConfig::tiny();
    auto tc = short_run(5);
    CHECK_THROWS_AS(train(mc, tc, codec_for(mc), AugmentConfig::none(64), {}), Error);
    tc.lr = 0;
    CHECK_THROWS_AS(tc.validate(), Error);
    tc = short_run(5);
    tc.max_iters = -1;
    CHECK_THROWS_AS(tc.validate(), Error);
    const auto small = SynthConfig::for_size(32);
    CHECK_THROWS_AS(train(mc, short_run(5), codec_for(mc), AugmentConfig::none(64), gen_dataset(small, 2)), Error);
}

TEST_CASE("train: NaN weights abort naming the first non-finite layer")
{
    // An absurd learning rate drives the weights to overflow.
    auto mc = ModelConfig::tiny();
    auto tc = short_run(50);
    tc.lr = 1e38;
    const auto data = tiny_set(4);
    try {
        train(mc, tc, codec_for(mc), AugmentConfig::none(64), data);
        FAIL("expected divergence");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::numeric);
        CHECK(std::string(e.what()).find("first non-finite layer '") != std::string::npos);
    }
}

TEST_CASE("evaluate: scales {1} equals plain, flip is exact on a mirror-consistent model")
{
    const auto mc = ModelConfig::tiny();
    const Model model = build_model(mc);
    const auto data = tiny_set(6);
    const auto codec = codec_for(mc);
    const auto plain = evaluate(model, data, codec);
    const auto one = evaluate(model, data, codec, false, {1.0});
    CHECK(plain.per_joint_pckh == one.per_joint_pckh);
    CHECK(plain.auc == one.auc);

    // 8x8 average pooling and a 1x1 head whose paired channels share weights:
    // mirroring commutes with the network and the pair swap leaves it unchanged.
    GraphBuilder b("custom", 3, 64, 5);
    int x = b.pool("pool", b.input(), PoolKind::avg, 8, 8);
    x = b.conv("head", x, kNumKeypoints, {1, 1}, 1, 1, false);
    b.mark_output(x);
    Model sym = b.finish();
    auto w = sym.mutable_layers()[1].weight.mutable_data();
    for (auto [l, r] : mpii_flip_pairs())
        for (int c = 0; c < 3; ++c)
            w[static_cast<std::size_t>(r) * 3 + c] = w[static_cast<std::size_t>(l) * 3 + c];

    std::vector<Sample> symmetric;
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<int> px(0, 255);
    for (int i = 0; i < 4; ++i) {
        Sample s;
        s.image = Image(64, 64);
        for (int y = 0; y < 64; ++y)
            for (int xx = 0; xx < 32; ++xx) {
                const Rgb c{static_cast<std::uint8_t>(px(rng)), static_cast<std::uint8_t>(px(rng)),
                            static_cast<std::uint8_t>(px(rng))};
                s.image.set(xx, y, c);
                s.image.set(63 - xx, y, c);
            }
        s.keypoints = data[static_cast<std::size_t>(i)].keypoints;
        for (auto [l, r] : mpii_flip_pairs()) {
            s.keypoints.points[r] = s.keypoints.points[l];
            s.keypoints.points[r].x = 63 - s.keypoints.points[l].x;
        }
        symmetric.push_back(s);
    }
    const auto without = evaluate(sym, symmetric, codec);
    const auto with = evaluate(sym, symmetric, codec, true);
    CHECK(without.per_joint_pckh == with.per_joint_pckh);
    CHECK(without.auc == with.auc);
    for (const auto& s : symmetric) {
        const Tensor img = image_to_tensor(s.image);
        const auto fn = final_stage_fn(sym);
        const auto f = fn(img), g = flip_average(fn, img, codec);
        CHECK(std::equal(f.data().begin(), f.data().end(), g.data().begin()));
    }
}

TEST_CASE("evaluate: errors")
{
    const auto mc = ModelConfig::tiny();
    const Model model = build_model(mc);
    CHECK_THROWS_AS(evaluate(model, {}, codec_for(mc)), Error);
    auto data = tiny_set(1);
    data[0].keypoints.head_size = 0;
    CHECK_THROWS_AS(evaluate(model, data, codec_for(mc)), Error);
    CHECK_THROWS_AS(evaluate(model, tiny_set(1), codec_for(mc), false, {0.0}), Error);
}
