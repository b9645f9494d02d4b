#pragma once

// Training-time augmentations. Every function is pure given its rng stream.

#include "gccpm/codec.hpp"
#include "gccpm/image.hpp"

#include <array>
#include <random>
#include <utility>
#include <vector>

namespace gccpm {

struct BodyMaskConfig {
    bool enabled = false;
    // Each side of the quadrangle is at most max_side_frac * input_size.
    double max_side_frac = 0.3;
    // Centre offset from the image centre, per axis, at most this fraction of input_size.
    double center_jitter_frac = 0.1;
};

struct KeypointMaskConfig {
    bool enabled = false;
    int patch_size_px = 16;
    int max_keypoints = 4;
};

struct AugmentConfig {
    int input_size = 256;
    double scale_min = 0.75;
    double scale_max = 1.25;
    double rotation_deg = 40.0;
    double flip_prob = 0.5;
    bool permute_channels = false;
    Rgb fill_color{128, 128, 128};
    BodyMaskConfig body_mask;
    KeypointMaskConfig keypoint_mask;
    std::vector<std::pair<int, int>> flip_pairs = mpii_flip_pairs();

    void validate() const;
    /// Rotation limited to +-30 degrees.
    static AugmentConfig mpii();
    /// Identity geometry, no masks, no permutation.
    static AugmentConfig none(int input_size);
};

struct Sample {
    Image image;
    KeypointSet keypoints;
};

struct GeometricParams {
    double scale = 1.0;
    double rotation_deg = 0.0;
    bool flip = false;
};

/// Maps source pixel coordinates to output coordinates:
/// q = c_out + R(theta) * scale * F * (p - c_src), F mirroring x when flipping.
struct Affine {
    double a = 1, b = 0, c = 0, d = 1, tx = 0, ty = 0;

    std::pair<double, double> apply(double x, double y) const { return {a * x + b * y + tx, c * x + d * y + ty}; }
    Affine inverse() const;
};

GeometricParams sample_geometric(std::mt19937_64& rng, const AugmentConfig& cfg);
Affine geometric_transform(const GeometricParams& params, int src_width, int src_height, int out_size);

/// Warps onto an input_size canvas filled with fill_color (bilinear), moves the
/// keypoints with the same map, swaps flip pairs when mirrored, and marks points
/// that leave the canvas as occluded.
Sample apply_geometric(const Sample& sample, const GeometricParams& params, const AugmentConfig& cfg);
Sample geometric_augment(const Sample& sample, std::mt19937_64& rng, const AugmentConfig& cfg);

/// Rotated rectangle with one fill colour.
struct Quad {
    double cx = 0, cy = 0;
    double width = 0, height = 0;
    double angle = 0;
    Rgb color{0, 0, 0};

    std::array<std::pair<double, double>, 4> corners() const;
    /// Pixel-centre test.
    bool contains(double x, double y) const;
};

Quad sample_body_mask(std::mt19937_64& rng, const AugmentConfig& cfg);
Image draw_quad(const Image& image, const Quad& quad);
/// Draws one sampled quadrangle; `drawn` receives it when non-null.
Image body_mask(const Image& image, std::mt19937_64& rng, const AugmentConfig& cfg, Quad* drawn = nullptr);

/// Covers up to max_keypoints random visible keypoints with fill_color squares
/// centred on them. Annotations are left as they are.
Sample keypoint_mask(const Sample& sample, std::mt19937_64& rng, const AugmentConfig& cfg);

Image apply_channel_permutation(const Image& image, const std::array<int, 3>& perm);
/// out channel i = in channel perm[i], perm uniform over the 6 orders.
Image channel_permute(const Image& image, std::mt19937_64& rng, std::array<int, 3>* perm = nullptr);

/// Geometric, then body mask (keypoints under the quadrangle become occluded),
/// then keypoint mask, then channel permutation, each when enabled.
Sample augment(const Sample& sample, std::mt19937_64& rng, const AugmentConfig& cfg);

} // namespace gccpm
