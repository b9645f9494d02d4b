#pragma once

// Keypoint <-> heatmap conversion and test-time averaging.
//
// Coordinates are in input-image pixels; heatmap cell (u, v) covers pixel
// coordinate (u * output_stride, v * output_stride).

#include "gccpm/tensor.hpp"

#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace gccpm {

constexpr int kNumKeypoints = 16;

// Numeric values follow the annotation files: 0 absent, 1 occluded, 2 visible.
enum class Visibility { absent = 0, occluded = 1, visible = 2 };

struct Keypoint {
    double x = 0.0;
    double y = 0.0;
    Visibility visibility = Visibility::absent;
    double confidence = 0.0;
};

struct KeypointSet {
    std::vector<Keypoint> points = std::vector<Keypoint>(kNumKeypoints);
    double head_size = 0.0;
};

/// MPII joint order: r_ankle .. l_wrist.
const std::vector<std::string>& keypoint_names();
/// Left/right pairs in MPII order (ankles, knees, hips, wrists, elbows, shoulders).
std::vector<std::pair<int, int>> mpii_flip_pairs();

struct CodecConfig {
    int heatmap_size = 32;
    int output_stride = 8;
    double sigma = 2.0;
    std::vector<std::pair<int, int>> flip_pairs = mpii_flip_pairs();
    // Extra last channel holding 1 - max over keypoint channels.
    bool background = false;

    void validate(int num_keypoints = kNumKeypoints) const;
};

/// K x h x h Gaussian targets (K = points + background).
Tensor encode_heatmaps(const KeypointSet& kps, const CodecConfig& cfg);

/// Argmax decode with a quarter-cell shift toward the larger neighbour on each
/// axis. Accepts K x h x h or 1 x K x h x h; a background channel is skipped.
/// Confidence is the peak value; all decoded points are marked visible.
KeypointSet decode_heatmaps(const Tensor& maps, const CodecConfig& cfg);

/// out[i] = in[perm[i]] swaps every flip pair; identity elsewhere.
std::vector<int> flip_permutation(int channels, const std::vector<std::pair<int, int>>& pairs);

/// Maps a 1 x 3 x S x S image batch to the final 1 x K x h x h heatmaps.
using HeatmapFn = std::function<Tensor(const Tensor&)>;

/// 0.5 * (f(I) + swap(mirror(f(mirror(I))))).
Tensor flip_average(const HeatmapFn& fn, const Tensor& image, const CodecConfig& cfg);

/// Scales the image about its centre (zero fill is the normalised pad colour),
/// resamples each heatmap back to the unscaled frame and averages with equal
/// weights. With `flip`, each scale uses flip_average.
Tensor multiscale_average(const HeatmapFn& fn, const Tensor& image, const std::vector<double>& scales,
                          const CodecConfig& cfg, bool flip = false);

/// Bilinear resampling of N x C x H x W maps about `center` (same on both axes):
/// out(p) = in(center + s * (p - center)). Samples outside the map read `fill`,
/// or the nearest edge value when `clamp` is set.
Tensor resample_about(const Tensor& maps, double s, double center, bool clamp, float fill = 0.0f);

} // namespace gccpm
