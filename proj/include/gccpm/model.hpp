#pragma once

// Network description and execution.
//
// A Model is a flat, topologically ordered list of named layers. Each layer
// reads the outputs of earlier layers (or the model input, id kModelInput)
// and owns at most one weight and one bias tensor. Forward execution, shape
// inference, complexity accounting, profiling and checkpointing all walk the
// same list.

#include "gccpm/ops.hpp"
#include "gccpm/tensor.hpp"

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace gccpm {

enum class ContextKind { none, aspp, pyramid_pooling, u_shaped };

const char* to_string(ContextKind kind);
ContextKind parse_context_kind(const std::string& text);

struct AsppConfig {
    int mid_channels = 1024;
    std::vector<int> rates{3, 6, 9, 12};
};

struct PyramidPoolingConfig {
    // Level i pools with kernel (h / divisors[i], w / divisors[i]) and equal stride.
    std::vector<int> divisors{2, 4, 8, 16};
    int branch_channels = 32;
    int branch_kernel = 3;
};

struct UShapedConfig {
    int depth = 3;
    // widths[i] is the channel count at level i + 1 (resolution / 2^(i+1)).
    std::vector<int> widths{320, 128, 128};
};

struct ContextConfig {
    ContextKind kind = ContextKind::none;
    AsppConfig aspp;
    PyramidPoolingConfig ppm;
    UShapedConfig u_shaped;

    /// Throws ErrorKind::config naming the first violated invariant for this map size.
    void validate(int map_size) const;
};

struct ModelConfig {
    int input_size = 256;
    int output_stride = 8;
    int heatmap_size = 32;
    int num_keypoints = 16;
    bool include_background_map = false;
    double backbone_width = 1.0;
    int feature_channels = 128;
    int num_refinement_stages = 5;
    ContextConfig context;
    std::uint64_t seed = 0;

    int heatmap_channels() const { return num_keypoints + (include_background_map ? 1 : 0); }
    int num_stages() const { return 1 + num_refinement_stages; }

    void validate() const;

    /// Desk-scale profile used for training experiments: 64 px input, 8x8 heatmaps,
    /// quarter-width backbone, 32 feature channels, one refinement stage.
    static ModelConfig tiny();
};

enum class LayerKind { conv, pool, upsample, concat, add };

const char* to_string(LayerKind kind);

struct Layer {
    std::string name;
    LayerKind kind = LayerKind::conv;
    std::vector<int> inputs;
    bool relu = false;
    ConvSpec conv;
    PoolSpec pool;
    int factor = 1;
    UpsampleMode mode = UpsampleMode::bilinear;
    Tensor weight;
    std::optional<Tensor> bias;
    // Stage this layer belongs to: -1 backbone, 0 initial stage, s >= 1 refinement stage s.
    int stage = -1;

    std::size_t param_count() const;
};

struct NamedParameter {
    std::string name;
    Tensor tensor;
};

/// Called after each layer with its index, output and wall time of the layer op.
using LayerHook = std::function<void(std::size_t layer, const Tensor& output, double seconds)>;

class Model {
public:
    static constexpr int kModelInput = -1;

    Model() = default;

    /// Free-form kind tag: "gccpm", "context", "bottleneck" or "custom".
    const std::string& kind() const { return kind_; }
    int input_channels() const { return input_channels_; }
    int input_size() const { return input_size_; }
    const std::optional<ModelConfig>& config() const { return config_; }
    const std::vector<Layer>& layers() const { return layers_; }
    std::vector<Layer>& mutable_layers() { return layers_; }
    /// Layer indices whose outputs forward() returns, in order (one per stage for pose networks).
    const std::vector<int>& outputs() const { return outputs_; }

    std::vector<NamedParameter> parameters() const;
    std::vector<Tensor> parameter_tensors() const;
    std::size_t parameter_count() const;
    void zero_grad();
    void set_requires_grad(bool value);
    /// Deep copy of layers and parameter values.
    Model clone() const;

    /// Input is N x input_channels x input_size x input_size. Returns the output layers' values.
    std::vector<Tensor> forward(const Tensor& input, const LayerHook& hook = {}) const;

    /// Output shape of every layer for the given input shape, without computing values.
    std::vector<Shape> infer_shapes(const Shape& input_shape) const;

    /// Index of the first layer whose output contains NaN/Inf for this input, or -1.
    int first_non_finite_layer(const Tensor& input) const;

private:
    friend class GraphBuilder;

    std::string kind_ = "custom";
    int input_channels_ = 3;
    int input_size_ = 0;
    std::optional<ModelConfig> config_;
    std::vector<Layer> layers_;
    std::vector<int> outputs_;
};

/// Incrementally appends layers to a Model while tracking channel counts and
/// spatial sizes, so that build-time geometry errors surface immediately.
class GraphBuilder {
public:
    GraphBuilder(std::string kind, int input_channels, int input_size, std::uint64_t seed);

    int input() const { return Model::kModelInput; }
    int channels(int value) const;
    int spatial(int value) const;

    void set_stage(int stage) { stage_ = stage; }

    int conv(const std::string& name, int in, int out_channels, std::pair<int, int> kernel, int stride = 1,
             int dilation = 1, bool relu = true, int groups = 1);
    int pool(const std::string& name, int in, PoolKind kind, int kernel, int stride);
    int upsample(const std::string& name, int in, int factor, UpsampleMode mode = UpsampleMode::bilinear);
    int concat(const std::string& name, const std::vector<int>& ins);
    int add(const std::string& name, int a, int b, bool relu = false);

    void mark_output(int value);
    void set_config(const ModelConfig& cfg);

    Model finish();

private:
    struct Info {
        int channels;
        int size;
    };
    int push(Layer layer, Info info);
    const Info& info(int value) const;

    Model model_;
    Info input_info_;
    std::vector<Info> infos_;
    std::uint64_t rng_state_;
    int stage_ = -1;
};

/// Baseline pose network: backbone -> feature reduction -> initial stage ->
/// refinement stages, each optionally fronted by a context module.
Model build_model(const ModelConfig& config);

/// Appends one refinement block (1x1 conv, 3x3 conv, 3x3 conv with dilation 2,
/// residual add of the 1x1 and last outputs); 7x7 receptive field.
int build_refinement_block(GraphBuilder& builder, const std::string& prefix, int in, int channels);

/// Appends a context module reading `in` (map_size x map_size) and returns its
/// output value id; output has out_channels and the same spatial size.
int build_context_module(GraphBuilder& builder, const std::string& prefix, const ContextConfig& cfg, int in,
                         int out_channels, int map_size);

/// Standalone context module as a model (input in_channels x map_size x map_size).
Model build_context_model(const ContextConfig& cfg, int in_channels, int out_channels, int map_size,
                          std::uint64_t seed = 0);

/// Residual bottleneck units (1x1 reduce to channels/2, 3x3, 1x1 expand, skip add + ReLU).
Model build_bottleneck_stack(int channels, int depth, int map_size = 32, std::uint64_t seed = 0);

/// Reference context configurations on 128-channel 32x32 maps used for complexity reporting.
ContextConfig reference_context(ContextKind kind);

} // namespace gccpm
