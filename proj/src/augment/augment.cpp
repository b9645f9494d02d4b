#include "gccpm/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace gccpm {

void AugmentConfig::validate() const
{
    auto bad = [](const std::string& what) { fail(ErrorKind::config, "invalid augment config: " + what); };
    if (input_size <= 0)
        bad("input_size must be positive");
    if (!(scale_min > 0.0) || scale_min > scale_max)
        bad("scale range must be positive and ordered");
    if (rotation_deg < 0.0)
        bad("rotation_deg must be >= 0");
    if (flip_prob < 0.0 || flip_prob > 1.0)
        bad("flip_prob must be in [0, 1]");
    if (!(body_mask.max_side_frac > 0.0) || body_mask.max_side_frac > 1.0)
        bad("body_mask.max_side_frac must be in (0, 1]");
    if (body_mask.center_jitter_frac < 0.0 || body_mask.center_jitter_frac > 0.5)
        bad("body_mask.center_jitter_frac must be in [0, 0.5]");
    if (keypoint_mask.patch_size_px <= 0)
        bad("keypoint_mask.patch_size_px must be positive");
    if (keypoint_mask.max_keypoints < 0)
        bad("keypoint_mask.max_keypoints must be >= 0");
}

AugmentConfig AugmentConfig::mpii()
{
    AugmentConfig cfg;
    cfg.rotation_deg = 30.0;
    return cfg;
}

AugmentConfig AugmentConfig::none(int input_size)
{
    AugmentConfig cfg;
    cfg.input_size = input_size;
    cfg.scale_min = cfg.scale_max = 1.0;
    cfg.rotation_deg = 0.0;
    cfg.flip_prob = 0.0;
    return cfg;
}

Affine Affine::inverse() const
{
    const double det = a * d - b * c;
    if (det == 0.0)
        fail(ErrorKind::numeric, "affine map is singular");
    Affine inv;
    inv.a = d / det;
    inv.b = -b / det;
    inv.c = -c / det;
    inv.d = a / det;
    inv.tx = -(inv.a * tx + inv.b * ty);
    inv.ty = -(inv.c * tx + inv.d * ty);
    return inv;
}

GeometricParams sample_geometric(std::mt19937_64& rng, const AugmentConfig& cfg)
{
    GeometricParams p;
    p.scale = std::uniform_real_distribution<double>(cfg.scale_min, cfg.scale_max)(rng);
    p.rotation_deg = std::uniform_real_distribution<double>(-cfg.rotation_deg, cfg.rotation_deg)(rng);
    p.flip = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < cfg.flip_prob;
    return p;
}

Affine geometric_transform(const GeometricParams& params, int src_width, int src_height, int out_size)
{
    const double theta = params.rotation_deg * std::numbers::pi / 180.0;
    const double cs = std::cos(theta) * params.scale;
    const double sn = std::sin(theta) * params.scale;
    const double fx = params.flip ? -1.0 : 1.0;
    Affine m;
    m.a = cs * fx;
    m.b = -sn;
    m.c = sn * fx;
    m.d = cs;
    const double sx = (src_width - 1) / 2.0;
    const double sy = (src_height - 1) / 2.0;
    const double o = (out_size - 1) / 2.0;
    m.tx = o - (m.a * sx + m.b * sy);
    m.ty = o - (m.c * sx + m.d * sy);
    return m;
}

Sample apply_geometric(const Sample& sample, const GeometricParams& params, const AugmentConfig& cfg)
{
    const int size = cfg.input_size;
    const Image& src = sample.image;
    const Affine fwd = geometric_transform(params, src.width, src.height, size);
    const Affine inv = fwd.inverse();

    Sample out;
    out.image = Image(size, size, cfg.fill_color);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const auto [px, py] = inv.apply(x, y);
            if (px <= -1.0 || py <= -1.0 || px >= src.width || py >= src.height)
                continue;
            const int x0 = static_cast<int>(std::floor(px));
            const int y0 = static_cast<int>(std::floor(py));
            const double ax = px - x0;
            const double ay = py - y0;
            for (int c = 0; c < 3; ++c) {
                auto tap = [&](int xx, int yy) -> double {
                    return src.contains(xx, yy) ? src.at(xx, yy, c) : cfg.fill_color[c];
                };
                const double v = (tap(x0, y0) * (1 - ax) + tap(x0 + 1, y0) * ax) * (1 - ay) +
                                 (tap(x0, y0 + 1) * (1 - ax) + tap(x0 + 1, y0 + 1) * ax) * ay;
                out.image.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
            }
        }
    }

    out.keypoints = sample.keypoints;
    out.keypoints.head_size = sample.keypoints.head_size * params.scale;
    for (auto& p : out.keypoints.points) {
        const auto [qx, qy] = fwd.apply(p.x, p.y);
        p.x = qx;
        p.y = qy;
        if (p.visibility != Visibility::absent && (qx < 0 || qy < 0 || qx > size - 1 || qy > size - 1))
            p.visibility = Visibility::occluded;
    }
    if (params.flip) {
        const int k = static_cast<int>(out.keypoints.points.size());
        for (auto [l, r] : cfg.flip_pairs)
            if (l < k && r < k)
                std::swap(out.keypoints.points[l], out.keypoints.points[r]);
    }
    return out;
}

Sample geometric_augment(const Sample& sample, std::mt19937_64& rng, const AugmentConfig& cfg)
{
    return apply_geometric(sample, sample_geometric(rng, cfg), cfg);
}

std::array<std::pair<double, double>, 4> Quad::corners() const
{
    const double ux = std::cos(angle), uy = std::sin(angle);
    const double hw = width / 2, hh = height / 2;
    std::array<std::pair<double, double>, 4> out;
    const double sx[4] = {-1, 1, 1, -1};
    const double sy[4] = {-1, -1, 1, 1};
    for (int i = 0; i < 4; ++i)
        out[i] = {cx + sx[i] * hw * ux - sy[i] * hh * uy, cy + sx[i] * hw * uy + sy[i] * hh * ux};
    return out;
}

bool Quad::contains(double x, double y) const
{
    const double dx = x - cx, dy = y - cy;
    const double ux = std::cos(angle), uy = std::sin(angle);
    const double along = dx * ux + dy * uy;
    const double across = -dx * uy + dy * ux;
    return std::abs(along) <= width / 2 && std::abs(across) <= height / 2;
}

Quad sample_body_mask(std::mt19937_64& rng, const AugmentConfig& cfg)
{
    const double size = cfg.input_size;
    const double max_side = cfg.body_mask.max_side_frac * size;
    // One pixel of slack: a convex region with sides a, b covers at most (a + 1)(b + 1) pixel centres.
    const double hi = std::max(max_side - 1.0, 1.0);
    const double lo = std::min(max_side / 4.0, hi);
    std::uniform_real_distribution<double> side(lo, hi);
    const double jitter = cfg.body_mask.center_jitter_frac * size;
    std::uniform_real_distribution<double> offset(-jitter, jitter);
    std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
    std::uniform_int_distribution<int> channel(0, 255);

    Quad q;
    q.width = side(rng);
    q.height = side(rng);
    q.cx = (size - 1) / 2.0 + offset(rng);
    q.cy = (size - 1) / 2.0 + offset(rng);
    q.angle = angle(rng);
    for (auto& c : q.color)
        c = static_cast<std::uint8_t>(channel(rng));
    return q;
}

Image draw_quad(const Image& image, const Quad& quad)
{
    Image out = image;
    double x_lo = 1e300, x_hi = -1e300, y_lo = 1e300, y_hi = -1e300;
    for (auto [x, y] : quad.corners()) {
        x_lo = std::min(x_lo, x);
        x_hi = std::max(x_hi, x);
        y_lo = std::min(y_lo, y);
        y_hi = std::max(y_hi, y);
    }
    const int x0 = std::max(0, static_cast<int>(std::floor(x_lo)));
    const int x1 = std::min(image.width - 1, static_cast<int>(std::ceil(x_hi)));
    const int y0 = std::max(0, static_cast<int>(std::floor(y_lo)));
    const int y1 = std::min(image.height - 1, static_cast<int>(std::ceil(y_hi)));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x)
            if (quad.contains(x, y))
                out.set(x, y, quad.color);
    return out;
}

Image body_mask(const Image& image, std::mt19937_64& rng, const AugmentConfig& cfg, Quad* drawn)
{
    const Quad q = sample_body_mask(rng, cfg);
    if (drawn)
        *drawn = q;
    return draw_quad(image, q);
}

Sample keypoint_mask(const Sample& sample, std::mt19937_64& rng, const AugmentConfig& cfg)
{
    Sample out = sample;
    std::vector<int> candidates;
    for (int j = 0; j < static_cast<int>(sample.keypoints.points.size()); ++j)
        if (sample.keypoints.points[j].visibility == Visibility::visible)
            candidates.push_back(j);
    const int limit = std::min<int>(cfg.keypoint_mask.max_keypoints, static_cast<int>(candidates.size()));
    if (limit <= 0)
        return out;
    const int count = std::uniform_int_distribution<int>(1, limit)(rng);
    std::shuffle(candidates.begin(), candidates.end(), rng);
    const int patch = cfg.keypoint_mask.patch_size_px;
    for (int i = 0; i < count; ++i) {
        const auto& p = sample.keypoints.points[candidates[i]];
        // Square of patch x patch pixels whose centre is the keypoint.
        const int x0 = static_cast<int>(std::lround(p.x - (patch - 1) / 2.0));
        const int y0 = static_cast<int>(std::lround(p.y - (patch - 1) / 2.0));
        for (int y = y0; y < y0 + patch; ++y)
            for (int x = x0; x < x0 + patch; ++x)
                if (out.image.contains(x, y))
                    out.image.set(x, y, cfg.fill_color);
    }
    return out;
}

Image apply_channel_permutation(const Image& image, const std::array<int, 3>& perm)
{
    Image out = image;
    for (std::size_t i = 0; i < image.pixels.size(); i += 3)
        for (int c = 0; c < 3; ++c)
            out.pixels[i + c] = image.pixels[i + perm[c]];
    return out;
}

Image channel_permute(const Image& image, std::mt19937_64& rng, std::array<int, 3>* perm)
{
    static constexpr std::array<std::array<int, 3>, 6> orders{
        {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
    const auto& chosen = orders[std::uniform_int_distribution<int>(0, 5)(rng)];
    if (perm)
        *perm = chosen;
    return apply_channel_permutation(image, chosen);
}

Sample augment(const Sample& sample, std::mt19937_64& rng, const AugmentConfig& cfg)
{
    Sample out = geometric_augment(sample, rng, cfg);
    if (cfg.body_mask.enabled) {
        Quad q;
        out.image = body_mask(out.image, rng, cfg, &q);
        for (auto& p : out.keypoints.points)
            if (p.visibility == Visibility::visible && q.contains(p.x, p.y))
                p.visibility = Visibility::occluded;
    }
    if (cfg.keypoint_mask.enabled)
        out = keypoint_mask(out, rng, cfg);
    if (cfg.permute_channels)
        out.image = channel_permute(out.image, rng);
    return out;
}

} // namespace gccpm
