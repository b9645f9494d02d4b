#pragma once

// Parameter / multiply-accumulate accounting and a per-layer wall-clock profiler.
// One multiply-accumulate is counted as one FLOP; pooling, upsampling, concat,
// add and activations count zero.

#include "gccpm/model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace gccpm {

enum class OpKind { conv1x1, conv3x3, depthwise, pool, upsample, other };

const char* to_string(OpKind kind);
OpKind op_kind(const Layer& layer);

struct LayerStats {
    std::string layer_name;
    OpKind op_kind = OpKind::other;
    std::uint64_t params = 0;
    std::uint64_t params_without_bias = 0;
    std::uint64_t macs = 0;
    double mean_time = 0.0;
    double time_share = 0.0;
};

/// Per-layer parameter counts (macs left at zero).
std::vector<LayerStats> count_params(const Model& model);
/// Per-layer parameter and MAC counts; conv MACs = params_without_bias * H_out * W_out.
std::vector<LayerStats> count_macs(const Model& model, const Shape& input_shape);

struct Totals {
    std::uint64_t params = 0;
    std::uint64_t params_without_bias = 0;
    std::uint64_t macs = 0;
    double time = 0.0;
};
Totals totals(const std::vector<LayerStats>& stats);

struct ProfileOptions {
    int warmup = 1;
    int iters = 5;
    std::uint64_t seed = 0;
};

/// Mean forward wall time per layer over `iters` timed passes after `warmup`
/// discarded ones, on a seeded random input. Layers run sequentially on the
/// calling thread. time_share = mean_time / sum of mean_time.
std::vector<LayerStats> profile(const Model& model, const Shape& input_shape, const ProfileOptions& options = {});

struct KindSummary {
    OpKind kind = OpKind::other;
    int layers = 0;
    std::uint64_t params = 0;
    std::uint64_t macs = 0;
    double time_share = 0.0;
};
/// One row per op kind in enum order, including kinds with no layers.
std::vector<KindSummary> group_by_kind(const std::vector<LayerStats>& stats);

/// Aligned text table; timing columns appear when `timed` is set.
std::string format_layer_table(const std::vector<LayerStats>& stats, bool timed);
/// Columns: layer_name,op_kind,params,macs,mean_time_s,time_share.
std::string format_layer_csv(const std::vector<LayerStats>& stats);
std::string format_kind_table(const std::vector<KindSummary>& kinds);

struct ContextComplexity {
    ContextKind kind = ContextKind::none;
    std::uint64_t params = 0;
    std::uint64_t params_without_bias = 0;
    std::uint64_t macs = 0;
    double reference_params = 0.0;
    double reference_macs = 0.0;
};

/// Channels and map size of the reference context-module comparison.
constexpr int kReferenceChannels = 128;
constexpr int kReferenceMapSize = 32;

/// ASPP, U-shaped and pyramid pooling built from `cfgs` (kind must match) as
/// standalone 128 -> 128 modules on 32 x 32 maps, with their reference values.
std::vector<ContextComplexity> context_complexity(const std::vector<ContextConfig>& cfgs);
std::vector<ContextComplexity> context_complexity();
std::string format_context_table(const std::vector<ContextComplexity>& rows);

} // namespace gccpm
