#include "gccpm/model.hpp"

#include <algorithm>
#include <cmath>

namespace gccpm {

const char* to_string(ContextKind kind)
{
    switch (kind) {
    case ContextKind::none: return "none";
    case ContextKind::aspp: return "aspp";
    case ContextKind::pyramid_pooling: return "pyramid_pooling";
    case ContextKind::u_shaped: return "u_shaped";
    }
    return "unknown";
}

ContextKind parse_context_kind(const std::string& text)
{
    if (text == "none")
        return ContextKind::none;
    if (text == "aspp")
        return ContextKind::aspp;
    if (text == "pyramid_pooling" || text == "ppm")
        return ContextKind::pyramid_pooling;
    if (text == "u_shaped")
        return ContextKind::u_shaped;
    fail(ErrorKind::config, "unknown context kind '" + text + "' (none, aspp, pyramid_pooling, u_shaped)");
}

void ContextConfig::validate(int map_size) const
{
    auto bad = [](const std::string& what) { fail(ErrorKind::config, "invalid context config: " + what); };
    switch (kind) {
    case ContextKind::none:
        break;
    case ContextKind::aspp:
        if (aspp.mid_channels <= 0)
            bad("aspp.mid_channels must be positive");
        if (aspp.rates.empty())
            bad("aspp.rates must not be empty");
        for (std::size_t i = 0; i < aspp.rates.size(); ++i) {
            if (aspp.rates[i] < 1)
                bad("aspp rates must all be >= 1");
            if (i > 0 && aspp.rates[i] <= aspp.rates[i - 1])
                bad("aspp rates must be strictly increasing");
        }
        break;
    case ContextKind::pyramid_pooling:
        if (ppm.divisors.empty())
            bad("ppm.divisors must not be empty");
        if (ppm.branch_channels <= 0)
            bad("ppm.branch_channels must be positive");
        if (ppm.branch_kernel <= 0 || ppm.branch_kernel % 2 == 0)
            bad("ppm.branch_kernel must be a positive odd number");
        for (int d : ppm.divisors) {
            if (d < 1 || map_size / d < 1)
                bad("ppm divisor " + std::to_string(d) + " reduces a " + std::to_string(map_size) +
                    " map below 1x1");
            if (map_size % d != 0)
                bad("map size " + std::to_string(map_size) + " is not divisible by ppm divisor " + std::to_string(d));
        }
        break;
    case ContextKind::u_shaped:
        if (u_shaped.depth < 1)
            bad("u_shaped.depth must be >= 1");
        if (static_cast<int>(u_shaped.widths.size()) != u_shaped.depth)
            bad("u_shaped.widths must have one entry per level (" + std::to_string(u_shaped.depth) + ")");
        for (int w : u_shaped.widths)
            if (w <= 0)
                bad("u_shaped widths must be positive");
        if ((1 << u_shaped.depth) > map_size)
            bad("u_shaped depth " + std::to_string(u_shaped.depth) + " exceeds log2 of map size " +
                std::to_string(map_size));
        if (map_size % (1 << u_shaped.depth) != 0)
            bad("map size " + std::to_string(map_size) + " is not divisible by 2^depth");
        break;
    }
}

void ModelConfig::validate() const
{
    auto bad = [](const std::string& what) { fail(ErrorKind::config, "invalid model config: " + what); };
    if (input_size <= 0)
        bad("input_size must be positive");
    if (output_stride != 2 && output_stride != 4 && output_stride != 8 && output_stride != 16)
        bad("output_stride must be one of 2, 4, 8, 16");
    if (heatmap_size * output_stride != input_size)
        bad("heatmap_size * output_stride must equal input_size (" + std::to_string(heatmap_size) + " * " +
            std::to_string(output_stride) + " != " + std::to_string(input_size) + ")");
    if (num_keypoints <= 0)
        bad("num_keypoints must be positive");
    if (num_refinement_stages < 0)
        bad("num_refinement_stages must be >= 0");
    if (!(backbone_width > 0.0))
        bad("backbone_width must be positive");
    if (feature_channels <= 0)
        bad("feature_channels must be positive");
    context.validate(heatmap_size);
}

ModelConfig ModelConfig::tiny()
{
    ModelConfig cfg;
    cfg.input_size = 64;
    cfg.output_stride = 8;
    cfg.heatmap_size = 8;
    cfg.backbone_width = 0.25;
    cfg.feature_channels = 32;
    cfg.num_refinement_stages = 1;
    cfg.context.aspp = {64, {1, 2, 3, 4}};
    cfg.context.ppm = {{2, 4, 8}, 8, 3};
    cfg.context.u_shaped = {3, {32, 32, 32}};
    return cfg;
}

namespace {

int scaled_width(int base, double multiplier)
{
    return std::max(4, static_cast<int>(std::lround(base * multiplier)));
}

struct BackboneBlock {
    const char* name;
    int out;
    bool downsample;
};

// Depthwise-separable blocks after the stride-2 stem (MobileNet naming, cut after two conv5 blocks).
constexpr BackboneBlock kBackbone[] = {
    {"conv2_1", 64, false},  {"conv2_2", 128, true}, {"conv3_1", 128, false}, {"conv3_2", 256, true},
    {"conv4_1", 256, false}, {"conv4_2", 512, true}, {"conv5_1", 512, false}, {"conv5_2", 512, false},
};

int build_backbone(GraphBuilder& b, const ModelConfig& cfg)
{
    int x = b.conv("backbone.conv1", b.input(), scaled_width(32, cfg.backbone_width), {3, 3}, 2);
    int stride = 2;
    int dilation = 1;
    for (const auto& block : kBackbone) {
        int s = 1;
        if (block.downsample) {
            if (stride * 2 <= cfg.output_stride) {
                s = 2;
                stride *= 2;
            } else {
                // Stride removed: following convolutions are dilated to keep the receptive field.
                dilation *= 2;
            }
        }
        const int channels = b.channels(x);
        const std::string base = std::string("backbone.") + block.name;
        // The block whose stride was removed keeps its own dilation; the change applies afterwards.
        const int block_dilation = (block.downsample && s == 1) ? dilation / 2 : dilation;
        x = b.conv(base + ".dw", x, channels, {3, 3}, s, block_dilation, true, channels);
        x = b.conv(base + ".pw", x, scaled_width(block.out, cfg.backbone_width), {1, 1});
    }
    return b.conv("features.reduce", x, cfg.feature_channels, {1, 1});
}

} // namespace

int build_refinement_block(GraphBuilder& b, const std::string& prefix, int in, int channels)
{
    const int initial = b.conv(prefix + ".initial", in, channels, {1, 1});
    int t = b.conv(prefix + ".trunk0", initial, channels, {3, 3});
    t = b.conv(prefix + ".trunk1", t, channels, {3, 3}, 1, 2);
    return b.add(prefix + ".sum", initial, t);
}

int build_context_module(GraphBuilder& b, const std::string& prefix, const ContextConfig& cfg, int in,
                         int out_channels, int map_size)
{
    if (b.spatial(in) != map_size)
        fail(ErrorKind::config, "context module: map_size " + std::to_string(map_size) + " does not match input " +
                                    std::to_string(b.spatial(in)));
    cfg.validate(map_size);
    switch (cfg.kind) {
    case ContextKind::none:
        return in;
    case ContextKind::aspp: {
        int total = -1;
        for (std::size_t i = 0; i < cfg.aspp.rates.size(); ++i) {
            const int rate = cfg.aspp.rates[i];
            const std::string p = prefix + ".branch" + std::to_string(i);
            int t = b.conv(p + ".atrous", in, cfg.aspp.mid_channels, {3, 3}, 1, rate);
            t = b.conv(p + ".fc1", t, cfg.aspp.mid_channels, {1, 1});
            t = b.conv(p + ".fc2", t, out_channels, {1, 1}, 1, 1, false);
            total = total < 0 ? t : b.add(prefix + ".sum" + std::to_string(i), total, t);
        }
        return total;
    }
    case ContextKind::pyramid_pooling: {
        std::vector<int> parts{in};
        for (std::size_t i = 0; i < cfg.ppm.divisors.size(); ++i) {
            const int d = cfg.ppm.divisors[i];
            const int kernel = map_size / d;
            const std::string p = prefix + ".level" + std::to_string(i);
            int t = b.pool(p + ".pool", in, PoolKind::avg, kernel, kernel);
            t = b.conv(p + ".conv", t, cfg.ppm.branch_channels, {cfg.ppm.branch_kernel, cfg.ppm.branch_kernel});
            t = b.upsample(p + ".up", t, map_size / b.spatial(t), UpsampleMode::bilinear);
            parts.push_back(t);
        }
        const int cat = b.concat(prefix + ".concat", parts);
        return b.conv(prefix + ".fuse", cat, out_channels, {1, 1});
    }
    case ContextKind::u_shaped: {
        const auto& widths = cfg.u_shaped.widths;
        std::vector<int> skips;
        int prev = in;
        for (int level = 0; level < cfg.u_shaped.depth; ++level) {
            const std::string p = prefix + ".enc" + std::to_string(level + 1);
            int t = b.conv(p + ".down", prev, widths[level], {3, 3}, 2);
            t = b.conv(p + ".conv", t, widths[level], {3, 3});
            skips.push_back(t);
            prev = t;
        }
        int up = prev;
        for (int level = cfg.u_shaped.depth - 2; level >= 0; --level) {
            const std::string p = prefix + ".dec" + std::to_string(level + 1);
            const int u = b.upsample(p + ".up", up, 2, UpsampleMode::bilinear);
            const int cat = b.concat(p + ".concat", {skips[level], u});
            int t = b.conv(p + ".conv0", cat, widths[level], {3, 3});
            up = b.conv(p + ".conv1", t, widths[level], {3, 3});
        }
        const std::string p = prefix + ".dec0";
        const int u = b.upsample(p + ".up", up, 2, UpsampleMode::bilinear);
        const int cat = b.concat(p + ".concat", {in, u});
        const int t = b.conv(p + ".conv0", cat, widths[0], {3, 3});
        return b.conv(p + ".conv1", t, out_channels, {3, 3});
    }
    }
    return in;
}

Model build_model(const ModelConfig& config)
{
    config.validate();
    GraphBuilder b("gccpm", 3, config.input_size, config.seed);
    b.set_config(config);
    const int k = config.heatmap_channels();
    const int f = config.feature_channels;

    b.set_stage(-1);
    const int features = build_backbone(b, config);
    if (b.spatial(features) != config.heatmap_size)
        fail(ErrorKind::config, "backbone produced " + std::to_string(b.spatial(features)) + " maps, expected " +
                                    std::to_string(config.heatmap_size));

    b.set_stage(0);
    int t = features;
    for (int i = 0; i < 3; ++i)
        t = b.conv("stage0.trunk" + std::to_string(i), t, f, {3, 3});
    t = b.conv("stage0.head0", t, f, {1, 1});
    int heatmaps = b.conv("stage0.heatmaps", t, k, {1, 1}, 1, 1, false);
    b.mark_output(heatmaps);

    for (int s = 1; s <= config.num_refinement_stages; ++s) {
        b.set_stage(s);
        const std::string p = "stage" + std::to_string(s);
        int x = b.concat(p + ".input", {features, heatmaps});
        if (config.context.kind != ContextKind::none)
            x = build_context_module(b, p + ".context", config.context, x, f, config.heatmap_size);
        for (int i = 0; i < 3; ++i)
            x = build_refinement_block(b, p + ".block" + std::to_string(i), x, f);
        x = b.conv(p + ".head0", x, f, {1, 1});
        heatmaps = b.conv(p + ".heatmaps", x, k, {1, 1}, 1, 1, false);
        b.mark_output(heatmaps);
    }
    return b.finish();
}

Model build_context_model(const ContextConfig& cfg, int in_channels, int out_channels, int map_size,
                          std::uint64_t seed)
{
    GraphBuilder b("context", in_channels, map_size, seed);
    const int out = build_context_module(b, "context", cfg, b.input(), out_channels, map_size);
    if (out == b.input())
        fail(ErrorKind::config, "context kind 'none' has no layers to build");
    b.mark_output(out);
    return b.finish();
}

Model build_bottleneck_stack(int channels, int depth, int map_size, std::uint64_t seed)
{
    if (depth < 1)
        fail(ErrorKind::config, "bottleneck stack depth must be >= 1");
    if (channels < 2 || channels % 2 != 0)
        fail(ErrorKind::config, "bottleneck stack channels must be even and >= 2");
    GraphBuilder b("bottleneck", channels, map_size, seed);
    int x = b.input();
    for (int u = 0; u < depth; ++u) {
        const std::string p = "unit" + std::to_string(u);
        int t = b.conv(p + ".reduce", x, channels / 2, {1, 1});
        t = b.conv(p + ".conv", t, channels / 2, {3, 3});
        t = b.conv(p + ".expand", t, channels, {1, 1}, 1, 1, false);
        x = b.add(p + ".sum", x, t, true);
    }
    b.mark_output(x);
    return b.finish();
}

ContextConfig reference_context(ContextKind kind)
{
    ContextConfig cfg;
    cfg.kind = kind;
    return cfg;
}

} // namespace gccpm
