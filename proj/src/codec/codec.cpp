#include "gccpm/codec.hpp"

#include "gccpm/ops.hpp"

#include <algorithm>
#include <cmath>

namespace gccpm {

const std::vector<std::string>& keypoint_names()
{
    static const std::vector<std::string> names{
        "r_ankle", "r_knee",     "r_hip",     "l_hip",   "l_knee",     "l_ankle",     "pelvis",     "thorax",
        "upper_neck", "head_top", "r_wrist", "r_elbow", "r_shoulder", "l_shoulder", "l_elbow", "l_wrist",
    };
    return names;
}

std::vector<std::pair<int, int>> mpii_flip_pairs()
{
    return {{0, 5}, {1, 4}, {2, 3}, {10, 15}, {11, 14}, {12, 13}};
}

void CodecConfig::validate(int num_keypoints) const
{
    auto bad = [](const std::string& what) { fail(ErrorKind::config, "invalid codec config: " + what); };
    if (heatmap_size <= 0)
        bad("heatmap_size must be positive");
    if (output_stride <= 0)
        bad("output_stride must be positive");
    if (!(sigma > 0.0))
        bad("sigma must be positive");
    std::vector<bool> seen(static_cast<std::size_t>(num_keypoints), false);
    for (auto [l, r] : flip_pairs) {
        if (l < 0 || r < 0 || l >= num_keypoints || r >= num_keypoints)
            bad("flip pair (" + std::to_string(l) + "," + std::to_string(r) + ") out of range");
        if (l == r || seen[l] || seen[r])
            bad("flip pairs must be disjoint");
        seen[l] = seen[r] = true;
    }
}

Tensor encode_heatmaps(const KeypointSet& kps, const CodecConfig& cfg)
{
    const int k = static_cast<int>(kps.points.size());
    const int h = cfg.heatmap_size;
    const int channels = k + (cfg.background ? 1 : 0);
    Tensor maps({channels, h, h});
    auto out = maps.mutable_data();
    const double denom = 2.0 * cfg.sigma * cfg.sigma;
    const std::size_t plane = static_cast<std::size_t>(h) * h;
    for (int c = 0; c < k; ++c) {
        const auto& p = kps.points[c];
        if (p.visibility == Visibility::absent)
            continue;
        const double cu = p.x / cfg.output_stride;
        const double cv = p.y / cfg.output_stride;
        float* dst = out.data() + c * plane;
        for (int v = 0; v < h; ++v)
            for (int u = 0; u < h; ++u) {
                const double d2 = (u - cu) * (u - cu) + (v - cv) * (v - cv);
                dst[v * h + u] = static_cast<float>(std::exp(-d2 / denom));
            }
    }
    if (cfg.background) {
        float* bg = out.data() + k * plane;
        for (std::size_t i = 0; i < plane; ++i) {
            float m = 0.0f;
            for (int c = 0; c < k; ++c)
                m = std::max(m, out[c * plane + i]);
            bg[i] = 1.0f - m;
        }
    }
    return maps;
}

KeypointSet decode_heatmaps(const Tensor& maps, const CodecConfig& cfg)
{
    const auto& s = maps.shape();
    const bool batched = s.size() == 4;
    if (!(s.size() == 3 || (batched && s[0] == 1)))
        fail(ErrorKind::shape, "decode_heatmaps: expected K x h x w or 1 x K x h x w, got " + shape_string(s));
    const int channels = s[s.size() - 3];
    const int h = s[s.size() - 2];
    const int w = s[s.size() - 1];
    const int k = channels - (cfg.background ? 1 : 0);
    if (k <= 0)
        fail(ErrorKind::shape, "decode_heatmaps: no keypoint channels");

    KeypointSet kps;
    kps.points.assign(static_cast<std::size_t>(k), Keypoint{});
    const auto data = maps.data();
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int c = 0; c < k; ++c) {
        const float* m = data.data() + c * plane;
        std::size_t best = 0;
        for (std::size_t i = 1; i < plane; ++i)
            if (m[i] > m[best])
                best = i;
        const int bu = static_cast<int>(best % w);
        const int bv = static_cast<int>(best / w);
        double u = bu;
        double v = bv;
        if (bu > 0 && bu < w - 1) {
            const float l = m[best - 1], r = m[best + 1];
            u += r > l ? 0.25 : (l > r ? -0.25 : 0.0);
        }
        if (bv > 0 && bv < h - 1) {
            const float t = m[best - w], b = m[best + w];
            v += b > t ? 0.25 : (t > b ? -0.25 : 0.0);
        }
        auto& p = kps.points[c];
        p.x = u * cfg.output_stride;
        p.y = v * cfg.output_stride;
        p.visibility = Visibility::visible;
        p.confidence = m[best];
    }
    return kps;
}

std::vector<int> flip_permutation(int channels, const std::vector<std::pair<int, int>>& pairs)
{
    std::vector<int> perm(static_cast<std::size_t>(channels));
    for (int i = 0; i < channels; ++i)
        perm[i] = i;
    for (auto [l, r] : pairs) {
        if (l >= channels || r >= channels)
            continue;
        perm[l] = r;
        perm[r] = l;
    }
    return perm;
}

namespace {

Tensor as_batch(const Tensor& maps)
{
    return maps.rank() == 3 ? maps.reshape({1, maps.dim(0), maps.dim(1), maps.dim(2)}) : maps;
}

} // namespace

Tensor flip_average(const HeatmapFn& fn, const Tensor& image, const CodecConfig& cfg)
{
    NoGradGuard guard;
    const Tensor direct = as_batch(fn(image));
    const Tensor mirrored = as_batch(fn(flip_horizontal(image)));
    const Tensor back = permute_channels(flip_horizontal(mirrored), flip_permutation(mirrored.dim(1), cfg.flip_pairs));
    return scale(add(direct, back), 0.5f);
}

Tensor resample_about(const Tensor& maps, double s, double center, bool clamp, float fill)
{
    const auto& sh = maps.shape();
    if (sh.size() != 4)
        fail(ErrorKind::shape, "resample_about: expected N x C x H x W, got " + shape_string(sh));
    const int planes = sh[0] * sh[1];
    const int h = sh[2];
    const int w = sh[3];
    Tensor out(sh);
    auto dst = out.mutable_data();
    const auto src = maps.data();
    for (int p = 0; p < planes; ++p) {
        const float* in = src.data() + static_cast<std::size_t>(p) * h * w;
        float* o = dst.data() + static_cast<std::size_t>(p) * h * w;
        auto read = [&](int y, int x) -> double {
            if (clamp) {
                y = std::clamp(y, 0, h - 1);
                x = std::clamp(x, 0, w - 1);
            } else if (y < 0 || y >= h || x < 0 || x >= w) {
                return fill;
            }
            return in[y * w + x];
        };
        for (int i = 0; i < h; ++i) {
            const double sy = center + s * (i - center);
            const int y0 = static_cast<int>(std::floor(sy));
            const double fy = sy - y0;
            for (int j = 0; j < w; ++j) {
                const double sx = center + s * (j - center);
                const int x0 = static_cast<int>(std::floor(sx));
                const double fx = sx - x0;
                const double top = read(y0, x0) * (1 - fx) + read(y0, x0 + 1) * fx;
                const double bottom = read(y0 + 1, x0) * (1 - fx) + read(y0 + 1, x0 + 1) * fx;
                o[i * w + j] = static_cast<float>(top * (1 - fy) + bottom * fy);
            }
        }
    }
    return out;
}

Tensor multiscale_average(const HeatmapFn& fn, const Tensor& image, const std::vector<double>& scales,
                          const CodecConfig& cfg, bool flip)
{
    if (scales.empty())
        fail(ErrorKind::config, "multiscale_average: empty scale list");
    for (double s : scales)
        if (!(s > 0.0))
            fail(ErrorKind::config, "multiscale_average: scales must be positive");
    NoGradGuard guard;
    const double image_center = (image.dim(3) - 1) / 2.0;
    const double map_center = image_center / cfg.output_stride;
    Tensor total;
    for (double s : scales) {
        Tensor maps;
        if (s == 1.0) {
            maps = as_batch(flip ? flip_average(fn, image, cfg) : fn(image));
        } else {
            const Tensor scaled = resample_about(image, 1.0 / s, image_center, false, 0.0f);
            maps = as_batch(flip ? flip_average(fn, scaled, cfg) : fn(scaled));
            maps = resample_about(maps, s, map_center, true);
        }
        total = total.defined() ? add(total, maps) : maps;
    }
    if (scales.size() == 1)
        return total;
    return scale(total, static_cast<float>(1.0 / scales.size()));
}

} // namespace gccpm
