#include "gccpm/data.hpp"

#include <algorithm>
#include <cmath>

namespace gccpm {

const char* to_string(Background b)
{
    return b == Background::noise ? "noise" : "solid";
}

Background parse_background(const std::string& text)
{
    if (text == "solid")
        return Background::solid;
    if (text == "noise")
        return Background::noise;
    fail(ErrorKind::config, "unknown background '" + text + "' (solid, noise)");
}

void SynthConfig::validate() const
{
    auto bad = [](const std::string& what) { fail(ErrorKind::config, "invalid synth config: " + what); };
    if (image_size < 16)
        bad("image_size must be >= 16");
    const std::pair<const char*, Range> lengths[] = {
        {"limb_thickness", limb_thickness}, {"torso", torso}, {"neck", neck},       {"head", head},
        {"shoulder_half", shoulder_half},   {"hip_half", hip_half}, {"upper_arm", upper_arm}, {"forearm", forearm},
        {"thigh", thigh},                   {"shin", shin},
    };
    for (const auto& [name, r] : lengths)
        if (!(r.lo > 0.0) || r.hi < r.lo)
            bad(std::string(name) + " range must be positive and ordered");
    const std::pair<const char*, Range> angles[] = {
        {"torso_lean", torso_lean}, {"arm_swing", arm_swing}, {"elbow_bend", elbow_bend},
        {"leg_swing", leg_swing},   {"knee_bend", knee_bend},
    };
    for (const auto& [name, r] : angles)
        if (r.hi < r.lo)
            bad(std::string(name) + " range must be ordered");
    if (figures < 1)
        bad("figures must be >= 1");
    if (margin_frac < 0.05 || margin_frac >= 0.5)
        bad("margin_frac must be in [0.05, 0.5)");
    if (grid_align < 0)
        bad("grid_align must be >= 0");
}

SynthConfig SynthConfig::for_size(int image_size)
{
    SynthConfig cfg;
    const double k = image_size / 64.0;
    for (Range* r : {&cfg.limb_thickness, &cfg.torso, &cfg.neck, &cfg.head, &cfg.shoulder_half, &cfg.hip_half,
                     &cfg.upper_arm, &cfg.forearm, &cfg.thigh, &cfg.shin}) {
        r->lo *= k;
        r->hi *= k;
    }
    cfg.image_size = image_size;
    return cfg;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index)
{
    // splitmix64 of the pair
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

namespace {

struct Vec {
    double x, y;
};

Vec operator+(Vec a, Vec b) { return {a.x + b.x, a.y + b.y}; }
Vec operator-(Vec a, Vec b) { return {a.x - b.x, a.y - b.y}; }
Vec operator*(double s, Vec a) { return {s * a.x, s * a.y}; }
double norm(Vec a) { return std::hypot(a.x, a.y); }

double uniform(std::mt19937_64& rng, Range r)
{
    return r.lo == r.hi ? r.lo : std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

struct Figure {
    std::array<Vec, kNumKeypoints> joints;
    double thickness;
};

// Joint indices in MPII order.
enum Joint {
    r_ankle, r_knee, r_hip, l_hip, l_knee, l_ankle, pelvis, thorax,
    upper_neck, head_top, r_wrist, r_elbow, r_shoulder, l_shoulder, l_elbow, l_wrist,
};

Figure pose(std::mt19937_64& rng, const SynthConfig& cfg, Vec origin)
{
    Figure f;
    f.thickness = uniform(rng, cfg.limb_thickness);
    auto& j = f.joints;
    const double lean = uniform(rng, cfg.torso_lean);
    const Vec up{std::sin(lean), -std::cos(lean)};
    // The figure faces the viewer: its right side is image-left.
    const Vec right{-std::cos(lean), -std::sin(lean)};
    j[pelvis] = origin;
    j[thorax] = j[pelvis] + uniform(rng, cfg.torso) * up;
    j[upper_neck] = j[thorax] + uniform(rng, cfg.neck) * up;
    j[head_top] = j[upper_neck] + uniform(rng, cfg.head) * up;
    const double shoulder = uniform(rng, cfg.shoulder_half);
    j[r_shoulder] = j[thorax] + shoulder * right;
    j[l_shoulder] = j[thorax] - shoulder * right;
    const double hip = uniform(rng, cfg.hip_half);
    j[r_hip] = j[pelvis] + hip * right;
    j[l_hip] = j[pelvis] - hip * right;

    // Limb angle 0 points straight down; positive angles swing outward.
    auto limb = [&](Vec start, double angle, double outward, double length) {
        const Vec dir{outward * std::sin(angle), std::cos(angle)};
        return start + length * dir;
    };
    for (int side = 0; side < 2; ++side) {
        const double outward = side == 0 ? -1.0 : 1.0;
        const int sh = side == 0 ? r_shoulder : l_shoulder;
        const int el = side == 0 ? r_elbow : l_elbow;
        const int wr = side == 0 ? r_wrist : l_wrist;
        const int hp = side == 0 ? r_hip : l_hip;
        const int kn = side == 0 ? r_knee : l_knee;
        const int an = side == 0 ? r_ankle : l_ankle;
        const double arm = uniform(rng, cfg.arm_swing);
        j[el] = limb(j[sh], arm, outward, uniform(rng, cfg.upper_arm));
        j[wr] = limb(j[el], arm + uniform(rng, cfg.elbow_bend), outward, uniform(rng, cfg.forearm));
        const double leg = uniform(rng, cfg.leg_swing);
        j[kn] = limb(j[hp], leg, outward, uniform(rng, cfg.thigh));
        j[an] = limb(j[kn], leg + uniform(rng, cfg.knee_bend), outward, uniform(rng, cfg.shin));
    }
    return f;
}

// Shrinks the figure if it cannot fit, then applies the smallest shift that keeps
// every joint `margin` away from the border.
void fit(Figure& f, double size, double margin)
{
    auto bounds = [&] {
        std::array<double, 4> b{1e300, -1e300, 1e300, -1e300};
        for (auto p : f.joints) {
            b[0] = std::min(b[0], p.x);
            b[1] = std::max(b[1], p.x);
            b[2] = std::min(b[2], p.y);
            b[3] = std::max(b[3], p.y);
        }
        return b;
    };
    auto b = bounds();
    const double lo = margin;
    const double hi = size - 1 - margin;
    const double extent = std::max(b[1] - b[0], b[3] - b[2]);
    if (extent > hi - lo) {
        const double k = (hi - lo) / extent;
        const Vec c{(b[0] + b[1]) / 2, (b[2] + b[3]) / 2};
        for (auto& p : f.joints)
            p = c + k * (p - c);
        f.thickness *= k;
        b = bounds();
    }
    const Vec shift{std::max(lo - b[0], std::min(0.0, hi - b[1])), std::max(lo - b[2], std::min(0.0, hi - b[3]))};
    for (auto& p : f.joints)
        p = p + shift;
}

void snap(Figure& f, int grid, double size, double margin)
{
    if (grid <= 0)
        return;
    const double lo = std::ceil(margin / grid) * grid;
    const double hi = std::floor((size - 1 - margin) / grid) * grid;
    const Vec head_dir = f.joints[head_top] - f.joints[upper_neck];
    for (auto& p : f.joints) {
        p.x = std::clamp(std::round(p.x / grid) * grid, lo, hi);
        p.y = std::clamp(std::round(p.y / grid) * grid, lo, hi);
    }
    // A head collapsed onto the neck would leave head_size at zero; push the
    // head top one cell along its dominant direction.
    auto& top = f.joints[head_top];
    const auto& neck = f.joints[upper_neck];
    if (top.x == neck.x && top.y == neck.y) {
        const bool vertical = std::abs(head_dir.y) >= std::abs(head_dir.x);
        double& axis = vertical ? top.y : top.x;
        const double dir = (vertical ? head_dir.y : head_dir.x) < 0 ? -1.0 : 1.0;
        axis += (axis + dir * grid >= lo && axis + dir * grid <= hi) ? dir * grid : -dir * grid;
    }
}

void draw_segment(Image& img, Vec a, Vec b, double thickness, Rgb color)
{
    const double r = thickness / 2;
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - r)));
    const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + r)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - r)));
    const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + r)));
    const Vec d = b - a;
    const double len2 = d.x * d.x + d.y * d.y;
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const Vec p{x - a.x, y - a.y};
            const double t = len2 > 0 ? std::clamp((p.x * d.x + p.y * d.y) / len2, 0.0, 1.0) : 0.0;
            const double dx = p.x - t * d.x, dy = p.y - t * d.y;
            if (dx * dx + dy * dy <= r * r)
                img.set(x, y, color);
        }
}

void draw_disc(Image& img, Vec c, double radius, Rgb color)
{
    draw_segment(img, c, c, 2 * radius, color);
}

constexpr Rgb kRight{220, 60, 60};
constexpr Rgb kLeft{60, 110, 230};
constexpr Rgb kCentre{235, 225, 120};
constexpr Rgb kHead{240, 240, 240};

void draw_figure(Image& img, const Figure& f)
{
    const auto& j = f.joints;
    const double t = f.thickness;
    draw_segment(img, j[pelvis], j[thorax], t * 1.5, kCentre);
    draw_segment(img, j[thorax], j[upper_neck], t, kCentre);
    draw_segment(img, j[r_hip], j[l_hip], t, kCentre);
    draw_segment(img, j[r_shoulder], j[l_shoulder], t, kCentre);
    const std::pair<int, int> right[] = {{r_shoulder, r_elbow}, {r_elbow, r_wrist}, {r_hip, r_knee}, {r_knee, r_ankle}};
    const std::pair<int, int> left[] = {{l_shoulder, l_elbow}, {l_elbow, l_wrist}, {l_hip, l_knee}, {l_knee, l_ankle}};
    for (auto [a, b] : right)
        draw_segment(img, j[a], j[b], t, kRight);
    for (auto [a, b] : left)
        draw_segment(img, j[a], j[b], t, kLeft);
    const Vec head_center = 0.5 * (j[upper_neck] + j[head_top]);
    const Vec half = j[head_top] - head_center;
    draw_disc(img, head_center, std::sqrt(half.x * half.x + half.y * half.y), kHead);
}

} // namespace

Sample gen_synthetic(std::mt19937_64& rng, const SynthConfig& cfg, std::vector<KeypointSet>* distractors)
{
    const double size = cfg.image_size;
    Sample s;
    s.image = Image(cfg.image_size, cfg.image_size);
    if (cfg.background == Background::solid) {
        std::uniform_int_distribution<int> tone(0, 90);
        s.image = Image(cfg.image_size, cfg.image_size,
                        {static_cast<std::uint8_t>(tone(rng)), static_cast<std::uint8_t>(tone(rng)),
                         static_cast<std::uint8_t>(tone(rng))});
    } else {
        std::uniform_int_distribution<int> tone(0, 110);
        for (auto& p : s.image.pixels)
            p = static_cast<std::uint8_t>(tone(rng));
    }

    const Vec center{(size - 1) / 2, (size - 1) / 2};
    const double jitter = 0.04 * size;
    std::uniform_real_distribution<double> off(-jitter, jitter);
    Figure main = pose(rng, cfg, center + Vec{off(rng), off(rng) + 0.1 * size});
    fit(main, size, cfg.margin_frac * size);
    snap(main, cfg.grid_align, size, cfg.margin_frac * size);

    // Distractors sit well away from the centre and are drawn underneath. A
    // placement whose pelvis would be as close to the centre as the annotated
    // one is redrawn.
    std::uniform_real_distribution<double> angle(0.0, 2 * 3.141592653589793);
    std::uniform_real_distribution<double> radius(0.38 * size, 0.5 * size);
    const double main_dist = norm(main.joints[pelvis] - center);
    for (int i = 1; i < cfg.figures; ++i) {
        for (int attempt = 0; attempt < 64; ++attempt) {
            const double a = angle(rng);
            const double r = radius(rng);
            Figure d = pose(rng, cfg, main.joints[pelvis] + Vec{r * std::cos(a), r * std::sin(a)});
            if (norm(d.joints[pelvis] - center) <= main_dist + 1.0)
                continue;
            draw_figure(s.image, d);
            if (distractors) {
                KeypointSet k;
                for (int j = 0; j < kNumKeypoints; ++j)
                    k.points[j] = {d.joints[j].x, d.joints[j].y, Visibility::visible, 0.0};
                distractors->push_back(k);
            }
            break;
        }
    }
    draw_figure(s.image, main);

    for (int k = 0; k < kNumKeypoints; ++k)
        s.keypoints.points[k] = {main.joints[k].x, main.joints[k].y, Visibility::visible, 0.0};
    const Vec head = main.joints[head_top] - main.joints[upper_neck];
    s.keypoints.head_size = 2.0 * std::sqrt(head.x * head.x + head.y * head.y);
    return s;
}

std::vector<Sample> gen_dataset(const SynthConfig& cfg, int count)
{
    cfg.validate();
    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(std::max(count, 0)));
    for (int i = 0; i < count; ++i) {
        std::mt19937_64 rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(i)));
        out.push_back(gen_synthetic(rng, cfg));
    }
    return out;
}

} // namespace gccpm
