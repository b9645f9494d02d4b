#include "gccpm/analyzer.hpp"

#include <array>
#include <cstdio>
#include <random>
#include <sstream>

namespace gccpm {

const char* to_string(OpKind kind)
{
    switch (kind) {
    case OpKind::conv1x1: return "conv1x1";
    case OpKind::conv3x3: return "conv3x3";
    case OpKind::depthwise: return "depthwise";
    case OpKind::pool: return "pool";
    case OpKind::upsample: return "upsample";
    case OpKind::other: return "other";
    }
    return "other";
}

OpKind op_kind(const Layer& layer)
{
    switch (layer.kind) {
    case LayerKind::conv: {
        const auto& c = layer.conv;
        if (c.groups > 1 && c.groups == c.in_channels && c.groups == c.out_channels)
            return OpKind::depthwise;
        if (c.kernel == std::pair{1, 1})
            return OpKind::conv1x1;
        if (c.kernel == std::pair{3, 3})
            return OpKind::conv3x3;
        return OpKind::other;
    }
    case LayerKind::pool: return OpKind::pool;
    case LayerKind::upsample: return OpKind::upsample;
    default: return OpKind::other;
    }
}

namespace {

LayerStats base_stats(const Layer& layer)
{
    LayerStats s;
    s.layer_name = layer.name;
    s.op_kind = op_kind(layer);
    if (layer.kind == LayerKind::conv) {
        const auto& c = layer.conv;
        s.params_without_bias = static_cast<std::uint64_t>(c.out_channels) * (c.in_channels / c.groups) *
                                c.kernel.first * c.kernel.second;
        s.params = s.params_without_bias + (c.has_bias ? c.out_channels : 0);
    }
    return s;
}

} // namespace

std::vector<LayerStats> count_params(const Model& model)
{
    std::vector<LayerStats> out;
    out.reserve(model.layers().size());
    for (const auto& layer : model.layers())
        out.push_back(base_stats(layer));
    return out;
}

std::vector<LayerStats> count_macs(const Model& model, const Shape& input_shape)
{
    const auto shapes = model.infer_shapes(input_shape);
    auto out = count_params(model);
    for (std::size_t i = 0; i < out.size(); ++i)
        if (model.layers()[i].kind == LayerKind::conv)
            out[i].macs = out[i].params_without_bias * static_cast<std::uint64_t>(shapes[i][0]) *
                          static_cast<std::uint64_t>(shapes[i][2]) * static_cast<std::uint64_t>(shapes[i][3]);
    return out;
}

Totals totals(const std::vector<LayerStats>& stats)
{
    Totals t;
    for (const auto& s : stats) {
        t.params += s.params;
        t.params_without_bias += s.params_without_bias;
        t.macs += s.macs;
        t.time += s.mean_time;
    }
    return t;
}

std::vector<LayerStats> profile(const Model& model, const Shape& input_shape, const ProfileOptions& options)
{
    if (options.iters < 1)
        fail(ErrorKind::config, "profile: iters must be >= 1");
    if (options.warmup < 0)
        fail(ErrorKind::config, "profile: warmup must be >= 0");
    auto stats = count_macs(model, input_shape);

    std::mt19937_64 rng(options.seed);
    std::uniform_real_distribution<float> u(-0.5f, 0.5f);
    Tensor input(input_shape);
    for (auto& v : input.mutable_data())
        v = u(rng);

    NoGradGuard guard;
    std::vector<double> elapsed(stats.size(), 0.0);
    for (int it = 0; it < options.warmup + options.iters; ++it) {
        const bool timed = it >= options.warmup;
        model.forward(input, [&](std::size_t layer, const Tensor&, double seconds) {
            if (timed)
                elapsed[layer] += seconds;
        });
    }
    double total = 0.0;
    for (std::size_t i = 0; i < stats.size(); ++i) {
        stats[i].mean_time = elapsed[i] / options.iters;
        total += stats[i].mean_time;
    }
    for (auto& s : stats)
        s.time_share = total > 0.0 ? s.mean_time / total : 1.0 / static_cast<double>(stats.size());
    return stats;
}

std::vector<KindSummary> group_by_kind(const std::vector<LayerStats>& stats)
{
    constexpr std::array kinds{OpKind::conv1x1, OpKind::conv3x3, OpKind::depthwise,
                               OpKind::pool,    OpKind::upsample, OpKind::other};
    std::vector<KindSummary> out;
    for (OpKind k : kinds) {
        KindSummary row;
        row.kind = k;
        for (const auto& s : stats) {
            if (s.op_kind != k)
                continue;
            ++row.layers;
            row.params += s.params;
            row.macs += s.macs;
            row.time_share += s.time_share;
        }
        out.push_back(row);
    }
    return out;
}

namespace {

std::string printf_string(const char* fmt, auto... args)
{
    const int n = std::snprintf(nullptr, 0, fmt, args...);
    std::string s(static_cast<std::size_t>(n), '\0');
    std::snprintf(s.data(), s.size() + 1, fmt, args...);
    return s;
}

std::size_t name_width(const std::vector<LayerStats>& stats)
{
    std::size_t w = 5;
    for (const auto& s : stats)
        w = std::max(w, s.layer_name.size());
    return w;
}

} // namespace

std::string format_layer_table(const std::vector<LayerStats>& stats, bool timed)
{
    const int w = static_cast<int>(name_width(stats));
    std::ostringstream out;
    out << printf_string("%-*s  %-9s  %12s  %16s", w, "layer", "op_kind", "params", "macs");
    if (timed)
        out << printf_string("  %12s  %10s", "mean_time_s", "time_share");
    out << '\n';
    for (const auto& s : stats) {
        out << printf_string("%-*s  %-9s  %12llu  %16llu", w, s.layer_name.c_str(), to_string(s.op_kind),
                             static_cast<unsigned long long>(s.params), static_cast<unsigned long long>(s.macs));
        if (timed)
            out << printf_string("  %12.6e  %10.6f", s.mean_time, s.time_share);
        out << '\n';
    }
    const Totals t = totals(stats);
    out << printf_string("%-*s  %-9s  %12llu  %16llu", w, "total", "", static_cast<unsigned long long>(t.params),
                         static_cast<unsigned long long>(t.macs));
    if (timed)
        out << printf_string("  %12.6e  %10.6f", t.time, 1.0);
    out << '\n';
    out << printf_string("%-*s  %-9s  %12llu\n", w, "total_nobias", "",
                         static_cast<unsigned long long>(t.params_without_bias));
    return out.str();
}

std::string format_layer_csv(const std::vector<LayerStats>& stats)
{
    std::ostringstream out;
    out << "layer_name,op_kind,params,macs,mean_time_s,time_share\n";
    for (const auto& s : stats)
        out << s.layer_name << ',' << to_string(s.op_kind) << ',' << s.params << ',' << s.macs << ','
            << printf_string("%.9e", s.mean_time) << ',' << printf_string("%.9f", s.time_share) << '\n';
    return out.str();
}

std::string format_kind_table(const std::vector<KindSummary>& kinds)
{
    std::ostringstream out;
    out << printf_string("%-9s  %6s  %12s  %16s  %10s\n", "op_kind", "layers", "params", "macs", "time_share");
    for (const auto& k : kinds)
        out << printf_string("%-9s  %6d  %12llu  %16llu  %10.6f\n", to_string(k.kind), k.layers,
                             static_cast<unsigned long long>(k.params), static_cast<unsigned long long>(k.macs),
                             k.time_share);
    return out.str();
}

std::vector<ContextComplexity> context_complexity(const std::vector<ContextConfig>& cfgs)
{
    std::vector<ContextComplexity> rows;
    for (const auto& cfg : cfgs) {
        const Model m = build_context_model(cfg, kReferenceChannels, kReferenceChannels, kReferenceMapSize);
        const Totals t = totals(count_macs(m, {1, kReferenceChannels, kReferenceMapSize, kReferenceMapSize}));
        ContextComplexity row;
        row.kind = cfg.kind;
        row.params = t.params;
        row.params_without_bias = t.params_without_bias;
        row.macs = t.macs;
        switch (cfg.kind) {
        case ContextKind::aspp:
            row.reference_params = 9.52e6;
            row.reference_macs = 9.75e9;
            break;
        case ContextKind::pyramid_pooling:
            row.reference_params = 0.2e6;
            row.reference_macs = 0.07e9;
            break;
        case ContextKind::u_shaped:
            row.reference_params = 6.44e6;
            row.reference_macs = 2.53e9;
            break;
        case ContextKind::none:
            break;
        }
        rows.push_back(row);
    }
    return rows;
}

std::vector<ContextComplexity> context_complexity()
{
    return context_complexity({reference_context(ContextKind::aspp), reference_context(ContextKind::u_shaped),
                               reference_context(ContextKind::pyramid_pooling)});
}

std::string format_context_table(const std::vector<ContextComplexity>& rows)
{
    std::ostringstream out;
    out << printf_string("%-16s  %12s  %12s  %10s  %10s  %10s\n", "module", "params_1e6", "nobias_1e6",
                         "ref_1e6", "gmacs", "ref_gmacs");
    for (const auto& r : rows)
        out << printf_string("%-16s  %12.4f  %12.4f  %10.2f  %10.4f  %10.2f\n", to_string(r.kind), r.params / 1e6,
                             r.params_without_bias / 1e6, r.reference_params / 1e6, r.macs / 1e9,
                             r.reference_macs / 1e9);
    return out.str();
}

} // namespace gccpm
