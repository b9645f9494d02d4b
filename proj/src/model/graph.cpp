#include "gccpm/model.hpp"

#include <cmath>
#include <random>
#include <unordered_set>

namespace gccpm {

const char* to_string(LayerKind kind)
{
    switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::pool: return "pool";
    case LayerKind::upsample: return "upsample";
    case LayerKind::concat: return "concat";
    case LayerKind::add: return "add";
    }
    return "unknown";
}

std::size_t Layer::param_count() const
{
    std::size_t n = weight.defined() ? weight.numel() : 0;
    if (bias)
        n += bias->numel();
    return n;
}

std::vector<NamedParameter> Model::parameters() const
{
    std::vector<NamedParameter> out;
    for (const auto& layer : layers_) {
        if (layer.weight.defined())
            out.push_back({layer.name + ".weight", layer.weight});
        if (layer.bias)
            out.push_back({layer.name + ".bias", *layer.bias});
    }
    return out;
}

std::vector<Tensor> Model::parameter_tensors() const
{
    std::vector<Tensor> out;
    for (auto& p : parameters())
        out.push_back(p.tensor);
    return out;
}

std::size_t Model::parameter_count() const
{
    std::size_t n = 0;
    for (const auto& layer : layers_)
        n += layer.param_count();
    return n;
}

void Model::zero_grad()
{
    for (auto& p : parameters())
        p.tensor.zero_grad();
}

void Model::set_requires_grad(bool value)
{
    for (auto& p : parameters())
        p.tensor.set_requires_grad(value);
}

Model Model::clone() const
{
    Model copy = *this;
    for (auto& layer : copy.layers_) {
        if (layer.weight.defined()) {
            const bool rg = layer.weight.requires_grad();
            layer.weight = layer.weight.clone();
            layer.weight.set_requires_grad(rg);
        }
        if (layer.bias) {
            const bool rg = layer.bias->requires_grad();
            layer.bias = layer.bias->clone();
            layer.bias->set_requires_grad(rg);
        }
    }
    return copy;
}

namespace {

Tensor run_layer(const Layer& layer, const std::vector<const Tensor*>& ins)
{
    Tensor out;
    switch (layer.kind) {
    case LayerKind::conv:
        out = conv2d(*ins[0], layer.weight, layer.bias, layer.conv);
        break;
    case LayerKind::pool:
        out = pool2d(*ins[0], layer.pool);
        break;
    case LayerKind::upsample:
        out = upsample(*ins[0], layer.factor, layer.mode);
        break;
    case LayerKind::concat: {
        std::vector<Tensor> parts;
        parts.reserve(ins.size());
        for (const auto* t : ins)
            parts.push_back(*t);
        out = concat(parts, 1);
        break;
    }
    case LayerKind::add:
        out = add(*ins[0], *ins[1]);
        break;
    }
    if (layer.relu)
        out = relu(out);
    return out;
}

} // namespace

std::vector<Tensor> Model::forward(const Tensor& input, const LayerHook& hook) const
{
    if (input.rank() != 4 || input.dim(1) != input_channels_ || input.dim(2) != input_size_ ||
        input.dim(3) != input_size_)
        fail(ErrorKind::shape, "model expects input N x " + std::to_string(input_channels_) + " x " +
                                   std::to_string(input_size_) + " x " + std::to_string(input_size_) + ", got " +
                                   shape_string(input.shape()));

    // Drop intermediate values after their last consumer when no graph is being recorded.
    std::vector<int> last_use(layers_.size(), -1);
    for (std::size_t i = 0; i < layers_.size(); ++i)
        for (int in : layers_[i].inputs)
            if (in >= 0)
                last_use[in] = static_cast<int>(i);
    for (int o : outputs_)
        last_use[o] = static_cast<int>(layers_.size());
    const bool release = NoGradGuard::enabled();

    std::vector<Tensor> values(layers_.size());
    std::vector<const Tensor*> ins;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const Layer& layer = layers_[i];
        ins.clear();
        for (int in : layer.inputs)
            ins.push_back(in == kModelInput ? &input : &values[in]);
        if (hook) {
            const auto start = std::chrono::steady_clock::now();
            values[i] = run_layer(layer, ins);
            const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
            hook(i, values[i], elapsed.count());
        } else {
            values[i] = run_layer(layer, ins);
        }
        if (release) {
            for (int in : layer.inputs)
                if (in >= 0 && last_use[in] == static_cast<int>(i))
                    values[in] = Tensor();
        }
    }
    std::vector<Tensor> out;
    out.reserve(outputs_.size());
    for (int o : outputs_)
        out.push_back(values[o]);
    return out;
}

std::vector<Shape> Model::infer_shapes(const Shape& input_shape) const
{
    if (input_shape.size() != 4 || input_shape[1] != input_channels_)
        fail(ErrorKind::shape, "infer_shapes: expected N x " + std::to_string(input_channels_) + " x H x W, got " +
                                   shape_string(input_shape));
    std::vector<Shape> shapes(layers_.size());
    auto get = [&](int v) -> const Shape& { return v == kModelInput ? input_shape : shapes[v]; };
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const Layer& layer = layers_[i];
        const Shape& a = get(layer.inputs.at(0));
        switch (layer.kind) {
        case LayerKind::conv: {
            if (a[1] != layer.conv.in_channels)
                fail(ErrorKind::shape, "infer_shapes: layer " + layer.name + " channel mismatch");
            auto [h, w] = layer.conv.output_size(a[2], a[3]);
            if (h <= 0 || w <= 0)
                fail(ErrorKind::shape, "infer_shapes: layer " + layer.name + " has non-positive output for input " +
                                           shape_string(a));
            shapes[i] = {a[0], layer.conv.out_channels, h, w};
            break;
        }
        case LayerKind::pool: {
            auto [h, w] = layer.pool.output_size(a[2], a[3]);
            if (h <= 0 || w <= 0)
                fail(ErrorKind::shape, "infer_shapes: layer " + layer.name + " pool kernel exceeds input");
            shapes[i] = {a[0], a[1], h, w};
            break;
        }
        case LayerKind::upsample:
            shapes[i] = {a[0], a[1], a[2] * layer.factor, a[3] * layer.factor};
            break;
        case LayerKind::concat: {
            Shape s = a;
            s[1] = 0;
            for (int in : layer.inputs) {
                const Shape& b = get(in);
                if (b[0] != a[0] || b[2] != a[2] || b[3] != a[3])
                    fail(ErrorKind::shape, "infer_shapes: layer " + layer.name + " concatenates mismatched maps");
                s[1] += b[1];
            }
            shapes[i] = s;
            break;
        }
        case LayerKind::add:
            if (get(layer.inputs.at(1)) != a)
                fail(ErrorKind::shape, "infer_shapes: layer " + layer.name + " adds mismatched shapes");
            shapes[i] = a;
            break;
        }
    }
    return shapes;
}

int Model::first_non_finite_layer(const Tensor& input) const
{
    NoGradGuard guard;
    int found = -1;
    // Values are produced in order, so the first hit is the first offending layer.
    forward(input, [&](std::size_t i, const Tensor& out, double) {
        if (found < 0 && !all_finite(out))
            found = static_cast<int>(i);
    });
    return found;
}

namespace {

std::uint64_t fnv1a(const std::string& text, std::uint64_t seed)
{
    std::uint64_t h = 1469598103934665603ull ^ seed;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

} // namespace

GraphBuilder::GraphBuilder(std::string kind, int input_channels, int input_size, std::uint64_t seed)
    : input_info_{input_channels, input_size}, rng_state_(seed)
{
    model_.kind_ = std::move(kind);
    model_.input_channels_ = input_channels;
    model_.input_size_ = input_size;
}

const GraphBuilder::Info& GraphBuilder::info(int value) const
{
    if (value == Model::kModelInput)
        return input_info_;
    if (value < 0 || value >= static_cast<int>(infos_.size()))
        fail(ErrorKind::config, "graph builder: unknown value id " + std::to_string(value));
    return infos_[value];
}

int GraphBuilder::channels(int value) const
{
    return info(value).channels;
}

int GraphBuilder::spatial(int value) const
{
    return info(value).size;
}

int GraphBuilder::push(Layer layer, Info info)
{
    for (const auto& existing : model_.layers_)
        if (existing.name == layer.name)
            fail(ErrorKind::config, "duplicate layer name '" + layer.name + "'");
    layer.stage = stage_;
    model_.layers_.push_back(std::move(layer));
    infos_.push_back(info);
    return static_cast<int>(model_.layers_.size()) - 1;
}

int GraphBuilder::conv(const std::string& name, int in, int out_channels, std::pair<int, int> kernel, int stride,
                       int dilation, bool relu, int groups)
{
    const Info& src = info(in);
    Layer layer;
    layer.name = name;
    layer.kind = LayerKind::conv;
    layer.inputs = {in};
    layer.relu = relu;
    layer.conv.in_channels = src.channels;
    layer.conv.out_channels = out_channels;
    layer.conv.kernel = kernel;
    layer.conv.stride = {stride, stride};
    layer.conv.dilation = dilation;
    layer.conv.groups = groups;
    layer.conv.padding = ConvSpec::same_padding(kernel, dilation);
    layer.conv.has_bias = true;
    layer.conv.validate();
    const auto [h, w] = layer.conv.output_size(src.size, src.size);
    if (h <= 0 || h != w)
        fail(ErrorKind::config, "layer " + name + ": invalid output size for " + std::to_string(src.size) + " input");

    // He (fan-in) Gaussian init from a per-layer stream so that weights depend only on (seed, name).
    const int fan_in = (src.channels / groups) * kernel.first * kernel.second;
    std::mt19937_64 rng(fnv1a(name, rng_state_));
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_in));
    layer.weight = Tensor(layer.conv.weight_shape());
    for (auto& v : layer.weight.mutable_data())
        v = static_cast<float>(normal(rng));
    layer.bias = Tensor(Shape{out_channels});
    return push(std::move(layer), {out_channels, h});
}

int GraphBuilder::pool(const std::string& name, int in, PoolKind kind, int kernel, int stride)
{
    const Info& src = info(in);
    Layer layer;
    layer.name = name;
    layer.kind = LayerKind::pool;
    layer.inputs = {in};
    layer.pool = PoolSpec{kind, {kernel, kernel}, {stride, stride}, {0, 0}};
    const auto [h, w] = layer.pool.output_size(src.size, src.size);
    if (kernel <= 0 || kernel > src.size || h <= 0)
        fail(ErrorKind::config, "layer " + name + ": pool kernel " + std::to_string(kernel) + " invalid for " +
                                    std::to_string(src.size) + " input");
    return push(std::move(layer), {src.channels, h});
}

int GraphBuilder::upsample(const std::string& name, int in, int factor, UpsampleMode mode)
{
    const Info& src = info(in);
    if (factor < 1)
        fail(ErrorKind::config, "layer " + name + ": upsample factor must be >= 1");
    Layer layer;
    layer.name = name;
    layer.kind = LayerKind::upsample;
    layer.inputs = {in};
    layer.factor = factor;
    layer.mode = mode;
    return push(std::move(layer), {src.channels, src.size * factor});
}

int GraphBuilder::concat(const std::string& name, const std::vector<int>& ins)
{
    if (ins.empty())
        fail(ErrorKind::config, "layer " + name + ": concat needs inputs");
    int channels_total = 0;
    const int size = info(ins.front()).size;
    for (int in : ins) {
        if (info(in).size != size)
            fail(ErrorKind::config, "layer " + name + ": concat of maps with different sizes");
        channels_total += info(in).channels;
    }
    Layer layer;
    layer.name = name;
    layer.kind = LayerKind::concat;
    layer.inputs = ins;
    return push(std::move(layer), {channels_total, size});
}

int GraphBuilder::add(const std::string& name, int a, int b, bool relu)
{
    if (info(a).channels != info(b).channels || info(a).size != info(b).size)
        fail(ErrorKind::config, "layer " + name + ": add of mismatched maps");
    Layer layer;
    layer.name = name;
    layer.kind = LayerKind::add;
    layer.inputs = {a, b};
    layer.relu = relu;
    return push(std::move(layer), info(a));
}

void GraphBuilder::mark_output(int value)
{
    info(value);
    if (value == Model::kModelInput)
        fail(ErrorKind::config, "model input cannot be an output");
    model_.outputs_.push_back(value);
}

void GraphBuilder::set_config(const ModelConfig& cfg)
{
    model_.config_ = cfg;
}

Model GraphBuilder::finish()
{
    if (model_.outputs_.empty() && !model_.layers_.empty())
        model_.outputs_.push_back(static_cast<int>(model_.layers_.size()) - 1);
    return std::move(model_);
}

} // namespace gccpm
