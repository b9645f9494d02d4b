#include "gccpm/config.hpp"

#include "gccpm/error.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace gccpm {

RunConfig RunConfig::defaults()
{
    RunConfig c;
    c.model = ModelConfig::tiny();
    c.codec = codec_for(c.model);
    c.augment = AugmentConfig::none(c.model.input_size);
    c.synth = SynthConfig::for_size(c.model.input_size);
    c.apply_seed(0);
    return c;
}

void RunConfig::apply_seed(std::uint64_t root)
{
    seed = root;
    model.seed = derive_seed(root, 1);
    train.seed = derive_seed(root, 2);
    synth.seed = derive_seed(root, 3);
}

void RunConfig::validate() const
{
    if (schema_version != kSchemaVersion)
        fail(ErrorKind::config, "unsupported schema_version " + std::to_string(schema_version) + " (expected " +
                                    std::to_string(kSchemaVersion) + ")");
    model.validate();
    if (model.num_keypoints != kNumKeypoints)
        fail(ErrorKind::config, "model.num_keypoints must be " + std::to_string(kNumKeypoints));
    codec.validate(model.num_keypoints);
    augment.validate();
    train.validate();
    synth.validate();
    if (codec.heatmap_size != model.heatmap_size || codec.output_stride != model.output_stride)
        fail(ErrorKind::config, "codec heatmap_size/output_stride must match the model");
    if (codec.background != model.include_background_map)
        fail(ErrorKind::config, "codec.background must equal model.include_background_map");
    if (augment.input_size != model.input_size)
        fail(ErrorKind::config, "augment.input_size must equal model.input_size");
    if (synth.image_size != model.input_size)
        fail(ErrorKind::config, "synth.image_size must equal model.input_size");
}

namespace {

class Reader {
public:
    explicit Reader(std::string source) : source_(std::move(source)) {}

    [[noreturn]] void error(const YAML::Node& node, const std::string& path, const std::string& what) const
    {
        fail(ErrorKind::config, source_ + ":" + std::to_string(node.Mark().line + 1) + ": " + path + ": " + what);
    }

    void require_map(const YAML::Node& node, const std::string& path) const
    {
        if (!node.IsMap())
            error(node, path, "expected a mapping");
    }

    void allow(const YAML::Node& node, const std::string& path, const std::set<std::string>& keys) const
    {
        require_map(node, path);
        for (const auto& kv : node) {
            const auto key = kv.first.as<std::string>();
            if (!keys.count(key))
                error(kv.first, path.empty() ? key : path + "." + key, "unknown key");
        }
    }

    template <class T>
    void get(const YAML::Node& map, const std::string& path, const std::string& key, T& out) const
    {
        const YAML::Node v = map[key];
        if (!v)
            return;
        const std::string full = path.empty() ? key : path + "." + key;
        try {
            out = v.as<T>();
        } catch (const YAML::Exception&) {
            error(v, full, "wrong type");
        }
    }

    void get_range(const YAML::Node& map, const std::string& path, const std::string& key, Range& out) const
    {
        const YAML::Node v = map[key];
        if (!v)
            return;
        std::vector<double> pair;
        get(map, path, key, pair);
        if (pair.size() != 2)
            error(v, path + "." + key, "expected [lo, hi]");
        out = {pair[0], pair[1]};
    }

    void get_pairs(const YAML::Node& map, const std::string& path, const std::string& key,
                   std::vector<std::pair<int, int>>& out) const
    {
        const YAML::Node v = map[key];
        if (!v)
            return;
        std::vector<std::vector<int>> raw;
        get(map, path, key, raw);
        out.clear();
        for (const auto& p : raw) {
            if (p.size() != 2)
                error(v, path + "." + key, "expected a list of [left, right] pairs");
            out.emplace_back(p[0], p[1]);
        }
    }

    template <class Parse>
    void get_enum(const YAML::Node& map, const std::string& path, const std::string& key, Parse parse) const
    {
        const YAML::Node v = map[key];
        if (!v)
            return;
        std::string text;
        get(map, path, key, text);
        try {
            parse(text);
        } catch (const Error& e) {
            error(v, path + "." + key, e.what());
        }
    }

    // Runs a section-level validate() and re-throws with the section's line.
    template <class F>
    void check(const YAML::Node& node, const std::string& path, F&& f) const
    {
        try {
            f();
        } catch (const Error& e) {
            error(node, path, e.what());
        }
    }

private:
    std::string source_;
};

void read_model(const Reader& r, const YAML::Node& n, ModelConfig& m)
{
    r.allow(n, "model",
            {"preset", "input_size", "output_stride", "heatmap_size", "num_keypoints", "include_background_map",
             "backbone_width", "feature_channels", "num_refinement_stages", "context"});
    if (n["preset"]) {
        std::string preset;
        r.get(n, "model", "preset", preset);
        if (preset == "tiny")
            m = ModelConfig::tiny();
        else if (preset == "full")
            m = ModelConfig{};
        else
            r.error(n["preset"], "model.preset", "expected tiny or full");
    }
    r.get(n, "model", "input_size", m.input_size);
    r.get(n, "model", "output_stride", m.output_stride);
    if (n["input_size"] && !n["heatmap_size"])
        m.heatmap_size = m.input_size / m.output_stride;
    r.get(n, "model", "heatmap_size", m.heatmap_size);
    r.get(n, "model", "num_keypoints", m.num_keypoints);
    r.get(n, "model", "include_background_map", m.include_background_map);
    r.get(n, "model", "backbone_width", m.backbone_width);
    r.get(n, "model", "feature_channels", m.feature_channels);
    r.get(n, "model", "num_refinement_stages", m.num_refinement_stages);
    if (const auto c = n["context"]) {
        r.allow(c, "model.context", {"kind", "aspp", "ppm", "u_shaped"});
        r.get_enum(c, "model.context", "kind", [&](const std::string& t) { m.context.kind = parse_context_kind(t); });
        if (const auto a = c["aspp"]) {
            r.allow(a, "model.context.aspp", {"mid_channels", "rates"});
            r.get(a, "model.context.aspp", "mid_channels", m.context.aspp.mid_channels);
            r.get(a, "model.context.aspp", "rates", m.context.aspp.rates);
        }
        if (const auto p = c["ppm"]) {
            r.allow(p, "model.context.ppm", {"divisors", "branch_channels", "branch_kernel"});
            r.get(p, "model.context.ppm", "divisors", m.context.ppm.divisors);
            r.get(p, "model.context.ppm", "branch_channels", m.context.ppm.branch_channels);
            r.get(p, "model.context.ppm", "branch_kernel", m.context.ppm.branch_kernel);
        }
        if (const auto u = c["u_shaped"]) {
            r.allow(u, "model.context.u_shaped", {"depth", "widths"});
            r.get(u, "model.context.u_shaped", "depth", m.context.u_shaped.depth);
            r.get(u, "model.context.u_shaped", "widths", m.context.u_shaped.widths);
        }
    }
}

void read_codec(const Reader& r, const YAML::Node& n, CodecConfig& c)
{
    r.allow(n, "codec", {"heatmap_size", "output_stride", "sigma", "background", "flip_pairs"});
    r.get(n, "codec", "heatmap_size", c.heatmap_size);
    r.get(n, "codec", "output_stride", c.output_stride);
    r.get(n, "codec", "sigma", c.sigma);
    r.get(n, "codec", "background", c.background);
    r.get_pairs(n, "codec", "flip_pairs", c.flip_pairs);
}

void read_augment(const Reader& r, const YAML::Node& n, AugmentConfig& a)
{
    r.allow(n, "augment",
            {"input_size", "scale_range", "rotation_deg", "flip_prob", "permute_channels", "fill_color", "body_mask",
             "keypoint_mask", "flip_pairs"});
    r.get(n, "augment", "input_size", a.input_size);
    if (const auto s = n["scale_range"]) {
        Range range;
        r.get_range(n, "augment", "scale_range", range);
        a.scale_min = range.lo;
        a.scale_max = range.hi;
    }
    r.get(n, "augment", "rotation_deg", a.rotation_deg);
    r.get(n, "augment", "flip_prob", a.flip_prob);
    r.get(n, "augment", "permute_channels", a.permute_channels);
    if (const auto f = n["fill_color"]) {
        std::vector<int> rgb;
        r.get(n, "augment", "fill_color", rgb);
        if (rgb.size() != 3)
            r.error(f, "augment.fill_color", "expected [r, g, b]");
        for (int i = 0; i < 3; ++i) {
            if (rgb[i] < 0 || rgb[i] > 255)
                r.error(f, "augment.fill_color", "components must be in [0, 255]");
            a.fill_color[i] = static_cast<std::uint8_t>(rgb[i]);
        }
    }
    if (const auto b = n["body_mask"]) {
        r.allow(b, "augment.body_mask", {"enabled", "max_side_frac", "center_jitter_frac"});
        r.get(b, "augment.body_mask", "enabled", a.body_mask.enabled);
        r.get(b, "augment.body_mask", "max_side_frac", a.body_mask.max_side_frac);
        r.get(b, "augment.body_mask", "center_jitter_frac", a.body_mask.center_jitter_frac);
    }
    if (const auto k = n["keypoint_mask"]) {
        r.allow(k, "augment.keypoint_mask", {"enabled", "patch_size_px", "max_keypoints"});
        r.get(k, "augment.keypoint_mask", "enabled", a.keypoint_mask.enabled);
        r.get(k, "augment.keypoint_mask", "patch_size_px", a.keypoint_mask.patch_size_px);
        r.get(k, "augment.keypoint_mask", "max_keypoints", a.keypoint_mask.max_keypoints);
    }
    r.get_pairs(n, "augment", "flip_pairs", a.flip_pairs);
}

void read_train(const Reader& r, const YAML::Node& n, TrainConfig& t)
{
    r.allow(n, "train",
            {"lr", "lr_decay_factor", "max_decays", "plateau_threshold", "plateau_patience", "batch_size", "max_iters",
             "eval_interval", "augment"});
    r.get(n, "train", "lr", t.lr);
    r.get(n, "train", "lr_decay_factor", t.lr_decay_factor);
    r.get(n, "train", "max_decays", t.max_decays);
    r.get(n, "train", "plateau_threshold", t.plateau_threshold);
    r.get(n, "train", "plateau_patience", t.plateau_patience);
    r.get(n, "train", "batch_size", t.batch_size);
    r.get(n, "train", "max_iters", t.max_iters);
    r.get(n, "train", "eval_interval", t.eval_interval);
    r.get(n, "train", "augment", t.augment);
}

void read_synth(const Reader& r, const YAML::Node& n, SynthConfig& s)
{
    r.allow(n, "synth",
            {"image_size", "limb_thickness", "torso", "neck", "head", "shoulder_half", "hip_half", "upper_arm",
             "forearm", "thigh", "shin", "torso_lean", "arm_swing", "elbow_bend", "leg_swing", "knee_bend",
             "background", "figures", "margin_frac", "grid_align"});
    if (n["image_size"]) {
        int size = s.image_size;
        r.get(n, "synth", "image_size", size);
        if (size <= 0)
            r.error(n["image_size"], "synth.image_size", "must be positive");
        const auto keep = s;
        s = SynthConfig::for_size(size);
        s.background = keep.background, s.figures = keep.figures, s.margin_frac = keep.margin_frac;
        s.grid_align = keep.grid_align, s.seed = keep.seed;
    }
    r.get_range(n, "synth", "limb_thickness", s.limb_thickness);
    r.get_range(n, "synth", "torso", s.torso);
    r.get_range(n, "synth", "neck", s.neck);
    r.get_range(n, "synth", "head", s.head);
    r.get_range(n, "synth", "shoulder_half", s.shoulder_half);
    r.get_range(n, "synth", "hip_half", s.hip_half);
    r.get_range(n, "synth", "upper_arm", s.upper_arm);
    r.get_range(n, "synth", "forearm", s.forearm);
    r.get_range(n, "synth", "thigh", s.thigh);
    r.get_range(n, "synth", "shin", s.shin);
    r.get_range(n, "synth", "torso_lean", s.torso_lean);
    r.get_range(n, "synth", "arm_swing", s.arm_swing);
    r.get_range(n, "synth", "elbow_bend", s.elbow_bend);
    r.get_range(n, "synth", "leg_swing", s.leg_swing);
    r.get_range(n, "synth", "knee_bend", s.knee_bend);
    r.get_enum(n, "synth", "background", [&](const std::string& t) { s.background = parse_background(t); });
    r.get(n, "synth", "figures", s.figures);
    r.get(n, "synth", "margin_frac", s.margin_frac);
    r.get(n, "synth", "grid_align", s.grid_align);
}

} // namespace

RunConfig parse_run_config(const std::string& text, const std::string& source)
{
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::Exception& e) {
        fail(ErrorKind::config, source + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg);
    }
    const Reader r(source);
    if (!root.IsMap())
        fail(ErrorKind::config, source + ": config must be a mapping");
    r.allow(root, "", {"schema_version", "seed", "model", "codec", "augment", "train", "synth"});
    if (!root["schema_version"])
        fail(ErrorKind::config, source + ": missing schema_version");

    RunConfig cfg = RunConfig::defaults();
    r.get(root, "", "schema_version", cfg.schema_version);
    if (cfg.schema_version != kSchemaVersion)
        r.error(root["schema_version"], "schema_version",
                "unsupported version " + std::to_string(cfg.schema_version) + " (expected " +
                    std::to_string(kSchemaVersion) + ")");
    std::uint64_t seed = 0;
    r.get(root, "", "seed", seed);

    if (const auto m = root["model"])
        read_model(r, m, cfg.model);
    // Sections not given follow the model's geometry.
    cfg.codec = codec_for(cfg.model, cfg.codec.sigma);
    cfg.augment.input_size = cfg.model.input_size;
    cfg.synth = SynthConfig::for_size(cfg.model.input_size);
    if (const auto c = root["codec"])
        read_codec(r, c, cfg.codec);
    if (const auto a = root["augment"])
        read_augment(r, a, cfg.augment);
    if (const auto t = root["train"])
        read_train(r, t, cfg.train);
    if (const auto s = root["synth"])
        read_synth(r, s, cfg.synth);
    cfg.apply_seed(seed);

    const struct {
        const char* name;
        std::function<void()> check;
    } sections[] = {
        {"model", [&] { cfg.model.validate(); }},
        {"codec", [&] { cfg.codec.validate(cfg.model.num_keypoints); }},
        {"augment", [&] { cfg.augment.validate(); }},
        {"train", [&] { cfg.train.validate(); }},
        {"synth", [&] { cfg.synth.validate(); }},
    };
    for (const auto& s : sections)
        r.check(root[s.name] ? root[s.name] : root, s.name, s.check);
    r.check(root, "config", [&] { cfg.validate(); });
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        fail(ErrorKind::io, "cannot open config " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str(), path.string());
}

namespace {

void emit_range(YAML::Emitter& out, const char* key, Range r)
{
    out << YAML::Key << key << YAML::Value << YAML::Flow << YAML::BeginSeq << r.lo << r.hi << YAML::EndSeq;
}

void emit_pairs(YAML::Emitter& out, const char* key, const std::vector<std::pair<int, int>>& pairs)
{
    out << YAML::Key << key << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (auto [l, r] : pairs)
        out << YAML::Flow << YAML::BeginSeq << l << r << YAML::EndSeq;
    out << YAML::EndSeq;
}

} // namespace

std::string format_run_config(const RunConfig& c)
{
    YAML::Emitter out;
    out.SetDoublePrecision(17);
    out << YAML::BeginMap;
    out << YAML::Key << "schema_version" << YAML::Value << c.schema_version;
    out << YAML::Key << "seed" << YAML::Value << c.seed;

    const auto& m = c.model;
    out << YAML::Key << "model" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "input_size" << YAML::Value << m.input_size;
    out << YAML::Key << "output_stride" << YAML::Value << m.output_stride;
    out << YAML::Key << "heatmap_size" << YAML::Value << m.heatmap_size;
    out << YAML::Key << "num_keypoints" << YAML::Value << m.num_keypoints;
    out << YAML::Key << "include_background_map" << YAML::Value << m.include_background_map;
    out << YAML::Key << "backbone_width" << YAML::Value << m.backbone_width;
    out << YAML::Key << "feature_channels" << YAML::Value << m.feature_channels;
    out << YAML::Key << "num_refinement_stages" << YAML::Value << m.num_refinement_stages;
    out << YAML::Key << "context" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "kind" << YAML::Value << to_string(m.context.kind);
    out << YAML::Key << "aspp" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "mid_channels" << YAML::Value << m.context.aspp.mid_channels;
    out << YAML::Key << "rates" << YAML::Value << YAML::Flow << m.context.aspp.rates;
    out << YAML::EndMap;
    out << YAML::Key << "ppm" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "divisors" << YAML::Value << YAML::Flow << m.context.ppm.divisors;
    out << YAML::Key << "branch_channels" << YAML::Value << m.context.ppm.branch_channels;
    out << YAML::Key << "branch_kernel" << YAML::Value << m.context.ppm.branch_kernel;
    out << YAML::EndMap;
    out << YAML::Key << "u_shaped" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "depth" << YAML::Value << m.context.u_shaped.depth;
    out << YAML::Key << "widths" << YAML::Value << YAML::Flow << m.context.u_shaped.widths;
    out << YAML::EndMap;
    out << YAML::EndMap;
    out << YAML::EndMap;

    out << YAML::Key << "codec" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "heatmap_size" << YAML::Value << c.codec.heatmap_size;
    out << YAML::Key << "output_stride" << YAML::Value << c.codec.output_stride;
    out << YAML::Key << "sigma" << YAML::Value << c.codec.sigma;
    out << YAML::Key << "background" << YAML::Value << c.codec.background;
    emit_pairs(out, "flip_pairs", c.codec.flip_pairs);
    out << YAML::EndMap;

    const auto& a = c.augment;
    out << YAML::Key << "augment" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "input_size" << YAML::Value << a.input_size;
    emit_range(out, "scale_range", {a.scale_min, a.scale_max});
    out << YAML::Key << "rotation_deg" << YAML::Value << a.rotation_deg;
    out << YAML::Key << "flip_prob" << YAML::Value << a.flip_prob;
    out << YAML::Key << "permute_channels" << YAML::Value << a.permute_channels;
    out << YAML::Key << "fill_color" << YAML::Value << YAML::Flow << YAML::BeginSeq << int(a.fill_color[0])
        << int(a.fill_color[1]) << int(a.fill_color[2]) << YAML::EndSeq;
    out << YAML::Key << "body_mask" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "enabled" << YAML::Value << a.body_mask.enabled;
    out << YAML::Key << "max_side_frac" << YAML::Value << a.body_mask.max_side_frac;
    out << YAML::Key << "center_jitter_frac" << YAML::Value << a.body_mask.center_jitter_frac;
    out << YAML::EndMap;
    out << YAML::Key << "keypoint_mask" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "enabled" << YAML::Value << a.keypoint_mask.enabled;
    out << YAML::Key << "patch_size_px" << YAML::Value << a.keypoint_mask.patch_size_px;
    out << YAML::Key << "max_keypoints" << YAML::Value << a.keypoint_mask.max_keypoints;
    out << YAML::EndMap;
    emit_pairs(out, "flip_pairs", a.flip_pairs);
    out << YAML::EndMap;

    const auto& t = c.train;
    out << YAML::Key << "train" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "lr" << YAML::Value << t.lr;
    out << YAML::Key << "lr_decay_factor" << YAML::Value << t.lr_decay_factor;
    out << YAML::Key << "max_decays" << YAML::Value << t.max_decays;
    out << YAML::Key << "plateau_threshold" << YAML::Value << t.plateau_threshold;
    out << YAML::Key << "plateau_patience" << YAML::Value << t.plateau_patience;
    out << YAML::Key << "batch_size" << YAML::Value << t.batch_size;
    out << YAML::Key << "max_iters" << YAML::Value << t.max_iters;
    out << YAML::Key << "eval_interval" << YAML::Value << t.eval_interval;
    out << YAML::Key << "augment" << YAML::Value << t.augment;
    out << YAML::EndMap;

    const auto& s = c.synth;
    out << YAML::Key << "synth" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "image_size" << YAML::Value << s.image_size;
    emit_range(out, "limb_thickness", s.limb_thickness);
    emit_range(out, "torso", s.torso);
    emit_range(out, "neck", s.neck);
    emit_range(out, "head", s.head);
    emit_range(out, "shoulder_half", s.shoulder_half);
    emit_range(out, "hip_half", s.hip_half);
    emit_range(out, "upper_arm", s.upper_arm);
    emit_range(out, "forearm", s.forearm);
    emit_range(out, "thigh", s.thigh);
    emit_range(out, "shin", s.shin);
    emit_range(out, "torso_lean", s.torso_lean);
    emit_range(out, "arm_swing", s.arm_swing);
    emit_range(out, "elbow_bend", s.elbow_bend);
    emit_range(out, "leg_swing", s.leg_swing);
    emit_range(out, "knee_bend", s.knee_bend);
    out << YAML::Key << "background" << YAML::Value << to_string(s.background);
    out << YAML::Key << "figures" << YAML::Value << s.figures;
    out << YAML::Key << "margin_frac" << YAML::Value << s.margin_frac;
    out << YAML::Key << "grid_align" << YAML::Value << s.grid_align;
    out << YAML::EndMap;

    out << YAML::EndMap;
    return std::string(out.c_str()) + "\n";
}

} // namespace gccpm
