#include "gccpm/cli.hpp"

#include "gccpm/analyzer.hpp"
#include "gccpm/checkpoint.hpp"
#include "gccpm/config.hpp"
#include "gccpm/data.hpp"
#include "gccpm/erf.hpp"
#include "gccpm/error.hpp"
#include "gccpm/trainer.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

namespace gccpm {

namespace fs = std::filesystem;

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;

    std::string out;
    std::string data;
    std::string val;
    std::string checkpoint;
    std::string csv;
    int count = 50;
    std::optional<int> max_iters;

    bool flip = false;
    std::vector<double> scales;

    bool reference = false;

    bool bottleneck = false;
    int warmup = 1;
    int iters = 5;

    std::string keypoint = "0";
    int window = 11;
    int stride = 4;
    std::string aggregation = "sum_abs";
    bool all_channels = false;
    double mass = 0.95;
    int sample = 0;
    std::string image;
};

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream f(path);
    if (!f)
        fail(ErrorKind::io, "cannot write " + path.string());
    f << text;
    if (!f)
        fail(ErrorKind::io, "failed writing " + path.string());
}

fs::path prepare_out(const std::string& dir, const RunConfig& cfg)
{
    const fs::path p(dir);
    fs::create_directories(p);
    write_text(p / "config.yaml", format_run_config(cfg));
    return p;
}

RunConfig resolve_config(const Options& o)
{
    RunConfig cfg = o.config.empty() ? RunConfig::defaults() : load_run_config(o.config);
    if (o.seed)
        cfg.apply_seed(*o.seed);
    cfg.validate();
    return cfg;
}

std::vector<Sample> dataset(const Options& o, const std::string& path, const RunConfig& cfg, std::uint64_t stream)
{
    if (!path.empty())
        return read_dataset(path);
    auto sc = cfg.synth;
    sc.seed = derive_seed(cfg.seed, stream);
    return gen_dataset(sc, o.count);
}

int parse_keypoint(const std::string& text)
{
    const auto& names = keypoint_names();
    const auto it = std::find(names.begin(), names.end(), text);
    if (it != names.end())
        return static_cast<int>(it - names.begin());
    try {
        std::size_t used = 0;
        const int k = std::stoi(text, &used);
        if (used == text.size() && k >= 0 && k < kNumKeypoints)
            return k;
    } catch (const std::exception&) {
    }
    fail(ErrorKind::usage, "--keypoint must be an index 0-15 or a joint name, got '" + text + "'");
}

Model model_for(const Options& o, const RunConfig& cfg)
{
    return o.checkpoint.empty() ? build_model(cfg.model) : load_checkpoint(o.checkpoint);
}

void cmd_synth(const Options& o, std::ostream& out)
{
    const auto cfg = resolve_config(o);
    auto sc = cfg.synth;
    sc.seed = derive_seed(cfg.seed, 10);
    const auto samples = gen_dataset(sc, o.count);
    const auto dir = prepare_out(o.out, cfg);
    write_dataset(dir, samples);
    out << "wrote " << samples.size() << " samples to " << (dir / "annotations.yaml").string() << "\n";
}

void cmd_train(const Options& o, std::ostream& out)
{
    auto cfg = resolve_config(o);
    if (o.max_iters)
        cfg.train.max_iters = *o.max_iters;
    cfg.train.validate();
    const auto train_set = dataset(o, o.data, cfg, 10);
    const auto val_set = o.val.empty() ? std::vector<Sample>{} : read_dataset(o.val);
    const auto dir = prepare_out(o.out, cfg);
    TrainOptions opts;
    opts.output_dir = dir;
    opts.on_eval = [&](const HistoryEntry& e) {
        out << "iter " << e.iteration << " train_loss " << e.train_loss << " val_loss " << e.val_loss << " pckh "
            << e.mean_pckh << " lr " << e.lr << "\n";
    };
    const auto r = train(cfg.model, cfg.train, cfg.codec, cfg.augment, train_set, val_set, opts);
    const auto eval = evaluate(r.model, val_set.empty() ? train_set : val_set, cfg.codec);
    std::ostringstream report;
    report << "samples " << train_set.size() << "\n"
           << "iterations " << cfg.train.max_iters << "\n"
           << "initial_train_loss " << r.initial_train_loss << "\n"
           << "final_train_loss " << r.final_train_loss << "\n"
           << "loss_ratio " << (r.initial_train_loss > 0 ? r.final_train_loss / r.initial_train_loss : 0.0) << "\n"
           << "best_iteration " << r.best_iteration << "\n\n"
           << eval.format_table();
    write_text(dir / "report.txt", report.str());
    if (cfg.train.max_iters == 0)
        save_checkpoint(r.model, dir / "final.json");
    out << report.str();
}

void cmd_eval(const Options& o, std::ostream& out)
{
    const auto cfg = resolve_config(o);
    const Model model = load_checkpoint(o.checkpoint);
    const auto data = dataset(o, o.data, cfg, 11);
    const auto codec = codec_for(*model.config(), cfg.codec.sigma);
    const auto result = evaluate(model, data, codec, o.flip, o.scales);
    out << result.format_table();
    if (!o.csv.empty())
        write_text(o.csv, result.csv_header() + "\n" + result.csv_row() + "\n");
}

void cmd_analyze(const Options& o, std::ostream& out)
{
    if (o.reference) {
        out << format_context_table(context_complexity());
        return;
    }
    const auto cfg = resolve_config(o);
    const Model model = model_for(o, cfg);
    const Shape input{1, model.input_channels(), model.input_size(), model.input_size()};
    const auto stats = count_macs(model, input);
    out << format_layer_table(stats, false);
    out << "\n" << format_kind_table(group_by_kind(stats));
    if (!o.csv.empty())
        write_text(o.csv, format_layer_csv(stats));
}

void cmd_profile(const Options& o, std::ostream& out)
{
    const auto cfg = resolve_config(o);
    const Model model = o.bottleneck ? build_bottleneck_stack(256, 4, 32, cfg.model.seed) : model_for(o, cfg);
    const Shape input{1, model.input_channels(), model.input_size(), model.input_size()};
    ProfileOptions po;
    po.warmup = o.warmup;
    po.iters = o.iters;
    po.seed = derive_seed(cfg.seed, 12);
    const auto stats = profile(model, input, po);
    out << format_layer_table(stats, true);
    out << "\n" << format_kind_table(group_by_kind(stats));
    if (!o.csv.empty())
        write_text(o.csv, format_layer_csv(stats));
}

void cmd_erf(const Options& o, std::ostream& out)
{
    const auto cfg = resolve_config(o);
    const int keypoint = parse_keypoint(o.keypoint);
    const Model model = model_for(o, cfg);
    Image image;
    if (!o.image.empty()) {
        image = read_png(o.image);
    } else {
        auto sc = cfg.synth;
        sc.image_size = model.input_size();
        std::mt19937_64 rng(derive_seed(derive_seed(cfg.seed, 13), static_cast<std::uint64_t>(o.sample)));
        image = gen_synthetic(rng, sc).image;
    }
    if (image.width != model.input_size() || image.height != model.input_size())
        fail(ErrorKind::shape, "erf image must be " + std::to_string(model.input_size()) + " px square");
    ErfConfig ec;
    ec.window = o.window;
    ec.stride = o.stride;
    ec.aggregation = parse_erf_aggregation(o.aggregation);
    ec.all_channels = o.all_channels;
    ec.seed = derive_seed(cfg.seed, 14);
    const auto map = estimate_erf(model, image_to_tensor(image), keypoint, ec);
    const auto box = erf_stats(map, o.mass);

    const auto dir = prepare_out(o.out, cfg);
    write_png_gray(dir / "erf.png", map.image_size, map.image_size, erf_heat_image(map));
    const int stride = model.config() ? model.config()->output_stride : model.input_size() / 8;
    write_png(dir / "erf_overlay.png", erf_overlay(image, map, box, stride));
    write_text(dir / "erf.csv", erf_csv(map));
    std::ostringstream report;
    report << "keypoint " << keypoint << " " << keypoint_names()[static_cast<std::size_t>(keypoint)] << "\n"
           << "window " << map.window << "\nstride " << map.stride << "\n"
           << "aggregation " << to_string(map.aggregation) << "\n"
           << "channels " << (map.all_channels ? "all" : "probed") << "\n"
           << "grid " << map.grid_width << "x" << map.grid_height << "\n"
           << "reference_cell " << map.ref_u << "," << map.ref_v << "\n"
           << "mass_fraction " << o.mass << "\n"
           << "box_px " << box.px0 << "," << box.py0 << "," << box.px1 << "," << box.py1 << "\n"
           << "box_mass " << box.mass << "\n"
           << "area_fraction " << box.area_fraction << "\n";
    write_text(dir / "erf.txt", report.str());
    out << report.str();
}

Image draw_keypoints(Image img, const KeypointSet& kps)
{
    for (int j = 0; j < kNumKeypoints; ++j) {
        const auto& p = kps.points[static_cast<std::size_t>(j)];
        if (p.visibility == Visibility::absent)
            continue;
        const Rgb c = p.visibility == Visibility::visible ? Rgb{255, 255, 0} : Rgb{255, 0, 255};
        const int x = static_cast<int>(std::lround(p.x)), y = static_cast<int>(std::lround(p.y));
        for (int d = -1; d <= 1; ++d) {
            if (img.contains(x + d, y))
                img.set(x + d, y, c);
            if (img.contains(x, y + d))
                img.set(x, y + d, c);
        }
    }
    return img;
}

void cmd_augment_preview(const Options& o, std::ostream& out)
{
    const auto cfg = resolve_config(o);
    const auto samples = dataset(o, o.data, cfg, 15);
    const auto dir = prepare_out(o.out, cfg);
    std::vector<Sample> augmented;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        std::mt19937_64 rng(derive_seed(derive_seed(cfg.seed, 16), i));
        auto a = augment(samples[i], rng, cfg.augment);
        char name[32];
        std::snprintf(name, sizeof name, "preview_%04zu.png", i);
        write_png(dir / name, draw_keypoints(a.image, a.keypoints));
        augmented.push_back(std::move(a));
    }
    std::vector<AnnotationRecord> records;
    for (std::size_t i = 0; i < augmented.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "preview_%04zu.png", i);
        records.push_back({name, augmented[i].keypoints});
    }
    save_annotations(dir / "annotations.yaml", records);
    out << "wrote " << augmented.size() << " previews to " << dir.string() << "\n";
}

std::string one_line(std::string s)
{
    std::replace(s.begin(), s.end(), '\n', ' ');
    while (!s.empty() && s.back() == ' ')
        s.pop_back();
    return s;
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    Options o;
    CLI::App app{"Single-person pose estimation lab: synthetic data, training, evaluation, complexity and "
                 "receptive-field analysis.",
                 "gccpm"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Print help for every subcommand");
    app.add_option("--config", o.config, "Run configuration (YAML); built-in desk-scale defaults when omitted")
        ->check(CLI::ExistingFile);
    app.add_option("--seed", o.seed, "Root seed for every random stream; overrides the config seed");

    auto* synth = app.add_subcommand("synth", "Generate a synthetic stick-figure dataset");
    synth->add_option("--out", o.out, "Output directory")->required();
    synth->add_option("--count", o.count, "Number of samples")->check(CLI::PositiveNumber);

    auto* train_cmd = app.add_subcommand("train", "Train a model; writes checkpoints, history.csv and report.txt");
    train_cmd->add_option("--out", o.out, "Output directory")->required();
    train_cmd->add_option("--data", o.data, "Training annotations; synthetic samples when omitted");
    train_cmd->add_option("--val", o.val, "Validation annotations; the training set when omitted");
    train_cmd->add_option("--count", o.count, "Synthetic training samples when --data is omitted")
        ->check(CLI::PositiveNumber);
    train_cmd->add_option("--max-iters", o.max_iters, "Override train.max_iters");

    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint with PCKh@0.5 and AUC");
    eval_cmd->add_option("--checkpoint", o.checkpoint, "Checkpoint manifest (.json)")->required();
    eval_cmd->add_option("--data", o.data, "Annotations; synthetic samples when omitted");
    eval_cmd->add_option("--count", o.count, "Synthetic samples when --data is omitted")->check(CLI::PositiveNumber);
    eval_cmd->add_flag("--flip", o.flip, "Average with the mirrored input");
    eval_cmd->add_option("--scales", o.scales, "Comma-separated input scales to average, e.g. 0.75,1.0,1.25")
        ->delimiter(',');
    eval_cmd->add_option("--csv", o.csv, "Also write the result as CSV");

    auto* analyze = app.add_subcommand("analyze", "Parameter and multiply-accumulate counts per layer");
    analyze->add_flag("--reference", o.reference,
                      "Compare the ASPP, U-shaped and pyramid pooling modules on 128-channel 32x32 maps against "
                      "reference counts");
    analyze->add_option("--checkpoint", o.checkpoint, "Analyze a checkpoint instead of the configured model");
    analyze->add_option("--csv", o.csv, "Also write the per-layer table as CSV");

    auto* prof = app.add_subcommand("profile", "Per-layer forward timing grouped by op kind (single thread)");
    prof->add_option("--checkpoint", o.checkpoint, "Profile a checkpoint instead of the configured model");
    prof->add_flag("--bottleneck", o.bottleneck, "Profile the residual bottleneck reference stack");
    prof->add_option("--warmup", o.warmup, "Untimed passes")->check(CLI::NonNegativeNumber);
    prof->add_option("--iters", o.iters, "Timed passes")->check(CLI::PositiveNumber);
    prof->add_option("--csv", o.csv, "Also write the per-layer table as CSV");

    auto* erf = app.add_subcommand("erf", "Occlusion-probe the effective receptive field of one keypoint");
    erf->add_option("--out", o.out, "Output directory")->required();
    erf->add_option("--checkpoint", o.checkpoint, "Checkpoint; a freshly initialised model when omitted");
    erf->add_option("--image", o.image, "Input PNG; a synthetic sample when omitted");
    erf->add_option("--sample", o.sample, "Synthetic sample index when --image is omitted");
    erf->add_option("--keypoint", o.keypoint, "Keypoint index or name");
    erf->add_option("--window", o.window, "Probe window side in pixels")->check(CLI::PositiveNumber);
    erf->add_option("--stride", o.stride, "Probe stride in pixels")->check(CLI::PositiveNumber);
    erf->add_option("--aggregation", o.aggregation, "sum_abs or value_at_peak");
    erf->add_flag("--all-channels", o.all_channels, "Aggregate over every heatmap channel");
    erf->add_option("--mass", o.mass, "Mass fraction for the receptive-field box");

    auto* preview = app.add_subcommand("augment-preview", "Render augmented samples with keypoints for inspection");
    preview->add_option("--out", o.out, "Output directory")->required();
    preview->add_option("--data", o.data, "Annotations; synthetic samples when omitted");
    preview->add_option("--count", o.count, "Synthetic samples when --data is omitted")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: kind=usage message=" << one_line(e.what()) << "\n";
        return 2;
    }

    try {
        if (*synth)
            cmd_synth(o, out);
        else if (*train_cmd)
            cmd_train(o, out);
        else if (*eval_cmd)
            cmd_eval(o, out);
        else if (*analyze)
            cmd_analyze(o, out);
        else if (*prof)
            cmd_profile(o, out);
        else if (*erf)
            cmd_erf(o, out);
        else if (*preview)
            cmd_augment_preview(o, out);
    } catch (const Error& e) {
        err << "error: kind=" << to_string(e.kind()) << " message=" << one_line(e.what()) << "\n";
        return e.kind() == ErrorKind::usage ? 2 : 1;
    } catch (const std::exception& e) {
        err << "error: kind=internal message=" << one_line(e.what()) << "\n";
        return 1;
    }
    return 0;
}

} // namespace gccpm
