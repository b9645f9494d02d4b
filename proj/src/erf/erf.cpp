#include "gccpm/erf.hpp"

#include "gccpm/error.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <random>
#include <sstream>
#include <thread>

namespace gccpm {

const char* to_string(ErfAggregation a)
{
    return a == ErfAggregation::sum_abs ? "sum_abs" : "value_at_peak";
}

ErfAggregation parse_erf_aggregation(const std::string& text)
{
    if (text == "sum_abs")
        return ErfAggregation::sum_abs;
    if (text == "value_at_peak")
        return ErfAggregation::value_at_peak;
    fail(ErrorKind::config, "unknown erf aggregation '" + text + "' (expected sum_abs or value_at_peak)");
}

void ErfConfig::validate(int image_size) const
{
    if (window < 1)
        fail(ErrorKind::config, "erf window must be >= 1");
    if (window > image_size)
        fail(ErrorKind::config, "erf window " + std::to_string(window) + " exceeds image side " +
                                    std::to_string(image_size));
    if (stride < 1)
        fail(ErrorKind::config, "erf stride must be >= 1");
    if (batch < 1)
        fail(ErrorKind::config, "erf batch must be >= 1");
    if (threads < 0)
        fail(ErrorKind::config, "erf threads must be >= 0");
}

int erf_grid_size(int image_size, int window, int stride)
{
    return (image_size - window + stride - 1) / stride + 1;
}

int ErfMap::probe_origin(int g) const
{
    return std::min(g * stride, image_size - window);
}

namespace {

int resolve_threads(int requested)
{
    if (requested > 0)
        return requested;
    if (const char* env = std::getenv("GCCPM_NUM_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0)
            return n;
    }
    return 1;
}

} // namespace

ErfMap estimate_erf(const Model& model, const Tensor& image, int keypoint_index, const ErfConfig& cfg)
{
    if (image.rank() != 4 || image.dim(0) != 1 || image.dim(2) != image.dim(3))
        fail(ErrorKind::shape, "estimate_erf expects a 1 x C x S x S image");
    const int channels = image.dim(1);
    const int size = image.dim(2);
    cfg.validate(size);

    ErfMap map;
    map.image_size = size;
    map.window = cfg.window;
    map.stride = cfg.stride;
    map.keypoint_index = keypoint_index;
    map.aggregation = cfg.aggregation;
    map.all_channels = cfg.all_channels;
    map.grid_width = map.grid_height = erf_grid_size(size, cfg.window, cfg.stride);

    Tensor base;
    {
        NoGradGuard guard;
        base = model.forward(image).back();
    }
    if (base.rank() != 4 || keypoint_index < 0 || keypoint_index >= base.dim(1))
        fail(ErrorKind::config, "keypoint index " + std::to_string(keypoint_index) + " out of range");
    const int hc = base.dim(1), hh = base.dim(2), hw = base.dim(3);
    const std::size_t plane = static_cast<std::size_t>(hh) * hw;
    const auto bd = base.data();
    {
        const float* ch = bd.data() + keypoint_index * plane;
        const auto best = std::max_element(ch, ch + plane) - ch;
        map.ref_u = static_cast<int>(best % hw);
        map.ref_v = static_cast<int>(best / hw);
    }

    // One patch, reused at every position, uniform over the image's value range.
    const auto px = image.data();
    const auto [lo_it, hi_it] = std::minmax_element(px.begin(), px.end());
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<float> value(*lo_it, *hi_it > *lo_it ? *hi_it : std::nextafter(*lo_it, 1e30f));
    std::vector<float> patch(static_cast<std::size_t>(channels) * cfg.window * cfg.window);
    for (auto& v : patch)
        v = value(rng);

    const int positions = map.grid_width * map.grid_height;
    map.importance.assign(static_cast<std::size_t>(positions), 0.0);
    const std::size_t image_numel = image.numel();
    const int c_lo = cfg.all_channels ? 0 : keypoint_index;
    const int c_hi = cfg.all_channels ? hc : keypoint_index + 1;

    std::atomic<int> next{0};
    auto worker = [&] {
        NoGradGuard guard;
        for (;;) {
            const int first = next.fetch_add(cfg.batch);
            if (first >= positions)
                return;
            const int count = std::min(cfg.batch, positions - first);
            Tensor batch({count, channels, size, size});
            auto bdst = batch.mutable_data();
            for (int b = 0; b < count; ++b) {
                float* dst = bdst.data() + b * image_numel;
                std::copy(px.begin(), px.end(), dst);
                const int p = first + b;
                const int ox = map.probe_origin(p % map.grid_width);
                const int oy = map.probe_origin(p / map.grid_width);
                for (int c = 0; c < channels; ++c)
                    for (int y = 0; y < cfg.window; ++y)
                        std::copy_n(&patch[(static_cast<std::size_t>(c) * cfg.window + y) * cfg.window], cfg.window,
                                    dst + (static_cast<std::size_t>(c) * size + oy + y) * size + ox);
            }
            const Tensor out = model.forward(batch).back();
            const auto od = out.data();
            for (int b = 0; b < count; ++b) {
                double acc = 0.0;
                for (int c = c_lo; c < c_hi; ++c) {
                    const float* o = od.data() + (static_cast<std::size_t>(b) * hc + c) * plane;
                    const float* r = bd.data() + static_cast<std::size_t>(c) * plane;
                    if (cfg.aggregation == ErfAggregation::sum_abs) {
                        for (std::size_t i = 0; i < plane; ++i)
                            acc += std::abs(static_cast<double>(o[i]) - r[i]);
                    } else {
                        const std::size_t i = static_cast<std::size_t>(map.ref_v) * hw + map.ref_u;
                        acc += std::abs(static_cast<double>(o[i]) - r[i]);
                    }
                }
                map.importance[static_cast<std::size_t>(first + b)] = acc;
            }
        }
    };

    const int threads = std::min(resolve_threads(cfg.threads), std::max(1, positions / cfg.batch));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int t = 0; t < threads; ++t)
            pool.emplace_back(worker);
    }
    return map;
}

ErfBox erf_stats(const ErfMap& map, double mass_fraction)
{
    if (!(mass_fraction > 0.0 && mass_fraction <= 1.0))
        fail(ErrorKind::config, "mass_fraction must be in (0, 1]");
    const int w = map.grid_width, h = map.grid_height;
    double total = 0.0;
    for (double v : map.importance) {
        if (v < 0 || !std::isfinite(v))
            fail(ErrorKind::numeric, "erf importance must be finite and non-negative");
        total += v;
    }
    if (total <= 0.0)
        fail(ErrorKind::numeric, "erf map is all zero; no receptive field to measure");

    // Column prefix sums: P[y][x] = sum of rows < y in column x.
    std::vector<double> prefix(static_cast<std::size_t>(h + 1) * w, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            prefix[static_cast<std::size_t>(y + 1) * w + x] = prefix[static_cast<std::size_t>(y) * w + x] + map.at(x, y);

    // Compare in units of the total with a little slack for summation order.
    const double target = mass_fraction * total * (1.0 - 1e-12);
    ErfBox best;
    long best_area = std::numeric_limits<long>::max();
    double best_mass = -1.0;
    std::vector<double> col(static_cast<std::size_t>(w));
    for (int y0 = 0; y0 < h; ++y0)
        for (int y1 = y0; y1 < h; ++y1) {
            for (int x = 0; x < w; ++x)
                col[x] = prefix[static_cast<std::size_t>(y1 + 1) * w + x] - prefix[static_cast<std::size_t>(y0) * w + x];
            // For each x0 the narrowest x1 reaching the target; x1 never decreases with x0.
            int x1 = -1;
            double run = 0.0;
            for (int x0 = 0; x0 < w; ++x0) {
                if (x0 > 0)
                    run -= col[x0 - 1];
                if (x1 < x0 - 1) {
                    x1 = x0 - 1;
                    run = 0.0;
                }
                while (run < target && x1 + 1 < w)
                    run += col[++x1];
                if (run < target)
                    break;
                const long area = static_cast<long>(x1 - x0 + 1) * (y1 - y0 + 1);
                if (area < best_area || (area == best_area && run > best_mass)) {
                    best_area = area;
                    best_mass = run;
                    best.gx0 = x0, best.gx1 = x1, best.gy0 = y0, best.gy1 = y1;
                }
            }
        }
    // Recompute the mass exactly for the winner.
    double mass = 0.0;
    for (int y = best.gy0; y <= best.gy1; ++y)
        for (int x = best.gx0; x <= best.gx1; ++x)
            mass += map.at(x, y);
    best.mass = mass / total;
    best.area_fraction = static_cast<double>(best_area) / (static_cast<double>(w) * h);
    best.px0 = map.probe_origin(best.gx0);
    best.py0 = map.probe_origin(best.gy0);
    best.px1 = map.probe_origin(best.gx1) + map.window;
    best.py1 = map.probe_origin(best.gy1) + map.window;
    return best;
}

SignTest sign_test(const std::vector<double>& differences)
{
    SignTest t;
    for (double d : differences) {
        if (d > 0)
            ++t.positive;
        else if (d < 0)
            ++t.negative;
        else
            ++t.ties;
    }
    const int n = t.positive + t.negative;
    // Sum of C(n, k) / 2^n for k >= positive, in log space.
    double p = 0.0;
    for (int k = t.positive; k <= n; ++k)
        p += std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) - n * std::log(2.0));
    t.p_value = std::min(1.0, p);
    return t;
}

std::vector<std::uint8_t> erf_heat_image(const ErfMap& map)
{
    const int s = map.image_size;
    std::vector<double> sum(static_cast<std::size_t>(s) * s, 0.0);
    std::vector<int> cover(sum.size(), 0);
    for (int gy = 0; gy < map.grid_height; ++gy)
        for (int gx = 0; gx < map.grid_width; ++gx) {
            const int ox = map.probe_origin(gx), oy = map.probe_origin(gy);
            for (int y = oy; y < oy + map.window; ++y)
                for (int x = ox; x < ox + map.window; ++x) {
                    sum[static_cast<std::size_t>(y) * s + x] += map.at(gx, gy);
                    ++cover[static_cast<std::size_t>(y) * s + x];
                }
        }
    double peak = 0.0;
    for (std::size_t i = 0; i < sum.size(); ++i) {
        if (cover[i])
            sum[i] /= cover[i];
        peak = std::max(peak, sum[i]);
    }
    std::vector<std::uint8_t> out(sum.size(), 0);
    if (peak > 0)
        for (std::size_t i = 0; i < sum.size(); ++i)
            out[i] = static_cast<std::uint8_t>(std::lround(255.0 * sum[i] / peak));
    return out;
}

Image erf_overlay(const Image& image, const ErfMap& map, const ErfBox& box, int output_stride)
{
    Image out = image;
    const Rgb green{0, 255, 0};
    for (int x = box.px0; x < box.px1; ++x) {
        if (out.contains(x, box.py0))
            out.set(x, box.py0, green);
        if (out.contains(x, box.py1 - 1))
            out.set(x, box.py1 - 1, green);
    }
    for (int y = box.py0; y < box.py1; ++y) {
        if (out.contains(box.px0, y))
            out.set(box.px0, y, green);
        if (out.contains(box.px1 - 1, y))
            out.set(box.px1 - 1, y, green);
    }
    const int cx = map.ref_u * output_stride, cy = map.ref_v * output_stride;
    for (int d = -2; d <= 2; ++d) {
        if (out.contains(cx + d, cy))
            out.set(cx + d, cy, {255, 0, 0});
        if (out.contains(cx, cy + d))
            out.set(cx, cy + d, {255, 0, 0});
    }
    return out;
}

std::string erf_csv(const ErfMap& map)
{
    std::ostringstream out;
    out.precision(17);
    out << "px,py,importance\n";
    for (int gy = 0; gy < map.grid_height; ++gy)
        for (int gx = 0; gx < map.grid_width; ++gx)
            out << map.probe_origin(gx) + (map.window - 1) / 2.0 << "," << map.probe_origin(gy) + (map.window - 1) / 2.0
                << "," << map.at(gx, gy) << "\n";
    return out.str();
}

} // namespace gccpm
