#pragma once

// Occlusion probing of the effective receptive field: paste a fixed random
// patch at every probe position and measure how much a keypoint's heatmap moves.

#include "gccpm/image.hpp"
#include "gccpm/model.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace gccpm {

enum class ErfAggregation { sum_abs, value_at_peak };

const char* to_string(ErfAggregation a);
ErfAggregation parse_erf_aggregation(const std::string& text);

struct ErfConfig {
    int window = 11;
    int stride = 4;
    ErfAggregation aggregation = ErfAggregation::sum_abs;
    // Aggregate over every heatmap channel instead of the probed one.
    bool all_channels = false;
    std::uint64_t seed = 0;
    // Worker threads; 0 reads GCCPM_NUM_THREADS and falls back to 1.
    int threads = 0;
    // Probe positions per forward pass.
    int batch = 8;

    void validate(int image_size) const;
};

struct ErfMap {
    int grid_width = 0;
    int grid_height = 0;
    int image_size = 0;
    int window = 0;
    int stride = 0;
    int keypoint_index = 0;
    // Heatmap cell of the probed keypoint's maximum on the unmasked image.
    int ref_u = 0;
    int ref_v = 0;
    ErfAggregation aggregation = ErfAggregation::sum_abs;
    bool all_channels = false;
    std::vector<double> importance; // row-major grid_height x grid_width

    double at(int gx, int gy) const { return importance[static_cast<std::size_t>(gy) * grid_width + gx]; }
    /// Top-left pixel of the probe window at grid index g; the last index is
    /// clamped so the window stays inside the image.
    int probe_origin(int g) const;
};

/// ceil((size - window) / stride) + 1.
int erf_grid_size(int image_size, int window, int stride);

/// `image` is 1 x C x S x S (already normalised). The probed output is the model's last output.
ErfMap estimate_erf(const Model& model, const Tensor& image, int keypoint_index, const ErfConfig& cfg);

struct ErfBox {
    // Inclusive grid-cell bounds.
    int gx0 = 0, gy0 = 0, gx1 = 0, gy1 = 0;
    // Pixel box covered by the windows of those cells, half-open.
    int px0 = 0, py0 = 0, px1 = 0, py1 = 0;
    double mass = 0.0;          // fraction of total importance inside
    double area_fraction = 0.0; // box cells / grid cells
};

/// Smallest axis-aligned grid box holding at least mass_fraction of the total
/// importance; ties go to the larger mass, then the first box in scan order.
ErfBox erf_stats(const ErfMap& map, double mass_fraction = 0.95);

struct SignTest {
    int positive = 0;
    int negative = 0;
    int ties = 0;
    // One-sided P(X >= positive) for X ~ Binomial(positive + negative, 1/2).
    double p_value = 1.0;
};

SignTest sign_test(const std::vector<double>& differences);

/// Grayscale map at image resolution: each pixel averages the importance of the
/// windows covering it, scaled so the maximum is 255.
std::vector<std::uint8_t> erf_heat_image(const ErfMap& map);
/// `image` with the box outlined in green and the probed cell's centre marked.
Image erf_overlay(const Image& image, const ErfMap& map, const ErfBox& box, int output_stride);
/// Columns px, py (window centre in pixels), importance.
std::string erf_csv(const ErfMap& map);

} // namespace gccpm
