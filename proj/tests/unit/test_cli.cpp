#include "doctest.h"

#include "gccpm/analyzer.hpp"
#include "gccpm/cli.hpp"
#include "gccpm/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace gccpm;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(std::vector<std::string> args)
{
    args.insert(args.begin(), "gccpm");
    std::vector<const char*> argv;
    for (const auto& a : args)
        argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

// Compares against tests/golden/<name>; GCCPM_UPDATE_GOLDEN=1 rewrites the file.
void check_golden(const std::string& name, const std::string& actual)
{
    const fs::path path = fs::path(GCCPM_GOLDEN_DIR) / name;
    if (const char* update = std::getenv("GCCPM_UPDATE_GOLDEN"); update && std::string(update) == "1") {
        std::ofstream(path, std::ios::binary) << actual;
        return;
    }
    REQUIRE_MESSAGE(fs::exists(path), "missing golden file " << path.string());
    CHECK(slurp(path) == actual);
}

fs::path scratch(const std::string& name)
{
    auto dir = fs::temp_directory_path() / ("gccpm_test_cli_" + name);
    fs::remove_all(dir);
    return dir;
}

bool one_error_line(const std::string& err)
{
    return err.rfind("error: kind=", 0) == 0 && err.find(" message=") != std::string::npos &&
           err.find('\n') == err.size() - 1;
}

} // namespace

TEST_CASE("cli: --help output is golden for every command")
{
    for (const std::string cmd : {"", "synth", "train", "eval", "analyze", "profile", "erf", "augment-preview"}) {
        auto r = cmd.empty() ? run({"--help"}) : run({cmd, "--help"});
        CHECK(r.code == 0);
        check_golden("help_" + (cmd.empty() ? std::string("main") : cmd) + ".txt", r.out);
    }
    const auto erf = run({"erf", "--help"}).out;
    CHECK(erf.find("--window INT:POSITIVE [11]") != std::string::npos);
    CHECK(erf.find("--stride INT:POSITIVE [4]") != std::string::npos);
}

TEST_CASE("cli: usage errors exit nonzero with one line and no side effects")
{
    const auto dir = scratch("usage");
    auto r = run({"synth", "--out", dir.string(), "--frobnicate"});
    CHECK(r.code == 2);
    CHECK(one_error_line(r.err));
    CHECK(r.err.find("kind=usage") != std::string::npos);
    CHECK(!fs::exists(dir));
    r = run({});
    CHECK(r.code == 2);
    CHECK(one_error_line(r.err));
    r = run({"erf", "--out", dir.string(), "--keypoint", "nose"});
    CHECK(r.code == 2);
    CHECK(one_error_line(r.err));
    CHECK(!fs::exists(dir));
}

TEST_CASE("cli: bad config reports the first violated invariant")
{
    const auto dir = scratch("badcfg");
    fs::create_directories(dir);
    std::ofstream(dir / "c.yaml") << "schema_version: 1\ntrain:\n  lr: 0\n";
    const auto r = run({"--config", (dir / "c.yaml").string(), "synth", "--out", (dir / "out").string()});
    CHECK(r.code == 1);
    CHECK(one_error_line(r.err));
    CHECK(r.err.find("kind=config") != std::string::npos);
    CHECK(r.err.find("lr must be > 0") != std::string::npos);
    CHECK(!fs::exists(dir / "out"));
    fs::remove_all(dir);
}

TEST_CASE("cli: analyze --reference rows and ordering")
{
    const auto r = run({"analyze", "--reference"});
    REQUIRE(r.code == 0);
    std::istringstream in(r.out);
    std::string line;
    std::getline(in, line);
    std::vector<std::string> names;
    std::vector<double> params, macs;
    while (std::getline(in, line)) {
        std::istringstream row(line);
        std::string name;
        double p, nb, rp, m, rm;
        row >> name >> p >> nb >> rp >> m >> rm;
        names.push_back(name);
        params.push_back(p);
        macs.push_back(m);
    }
    REQUIRE(names == std::vector<std::string>{"aspp", "u_shaped", "pyramid_pooling"});
    CHECK(params[0] > params[1]);
    CHECK(params[1] > params[2]);
    CHECK(macs[0] > macs[1]);
    CHECK(macs[1] > macs[2]);
}

TEST_CASE("cli: synth is reproducible from its seed and copies the config")
{
    const auto a = scratch("synth_a"), b = scratch("synth_b");
    REQUIRE(run({"--seed", "9", "synth", "--out", a.string(), "--count", "3"}).code == 0);
    REQUIRE(run({"--seed", "9", "synth", "--out", b.string(), "--count", "3"}).code == 0);
    CHECK(slurp(a / "annotations.yaml") == slurp(b / "annotations.yaml"));
    CHECK(slurp(a / "images/000002.png") == slurp(b / "images/000002.png"));
    const auto cfg = load_run_config(a / "config.yaml");
    CHECK(cfg.seed == 9);
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("cli: train, eval, erf and augment-preview end to end")
{
    const auto dir = scratch("e2e");
    fs::create_directories(dir);
    std::ofstream(dir / "run.yaml") << "schema_version: 1\ntrain:\n  batch_size: 2\n  eval_interval: 2\n";
    const std::string cfg = (dir / "run.yaml").string();
    REQUIRE(run({"--config", cfg, "synth", "--out", (dir / "data").string(), "--count", "4"}).code == 0);
    auto r = run({"--config", cfg, "train", "--out", (dir / "train").string(), "--data",
                  (dir / "data/annotations.yaml").string(), "--max-iters", "4"});
    REQUIRE(r.code == 0);
    CHECK(fs::exists(dir / "train/final.json"));
    CHECK(fs::exists(dir / "train/history.csv"));
    CHECK(fs::exists(dir / "train/config.yaml"));
    CHECK(r.out.find("final_train_loss") != std::string::npos);

    r = run({"eval", "--checkpoint", (dir / "train/final.json").string(), "--data",
             (dir / "data/annotations.yaml").string(), "--flip", "--scales", "0.75,1.0,1.25", "--csv",
             (dir / "eval.csv").string()});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("mean") != std::string::npos);
    CHECK(fs::exists(dir / "eval.csv"));

    r = run({"erf", "--out", (dir / "erf").string(), "--checkpoint", (dir / "train/final.json").string(),
             "--keypoint", "l_wrist", "--stride", "8"});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("window 11") != std::string::npos);
    for (const char* f : {"erf.png", "erf_overlay.png", "erf.csv", "erf.txt", "config.yaml"})
        CHECK(fs::exists(dir / "erf" / f));

    r = run({"augment-preview", "--out", (dir / "prev").string(), "--count", "2"});
    REQUIRE(r.code == 0);
    CHECK(fs::exists(dir / "prev/preview_0001.png"));

    r = run({"eval", "--checkpoint", (dir / "missing.json").string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("kind=io") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("profile report format is golden")
{
    std::vector<LayerStats> stats;
    const char* names[] = {"unit0.reduce", "unit0.conv", "unit0.expand", "unit0.sum"};
    const OpKind kinds[] = {OpKind::conv1x1, OpKind::conv3x3, OpKind::conv1x1, OpKind::other};
    const double times[] = {0.002, 0.003, 0.004, 0.001};
    for (int i = 0; i < 4; ++i) {
        LayerStats s;
        s.layer_name = names[i];
        s.op_kind = kinds[i];
        s.params = s.params_without_bias = static_cast<std::uint64_t>(1000 * (i + 1));
        s.macs = static_cast<std::uint64_t>(100000 * (i + 1));
        s.mean_time = times[i];
        s.time_share = times[i] / 0.01;
        stats.push_back(s);
    }
    check_golden("profile_report.txt", format_layer_table(stats, true) + "\n" + format_kind_table(group_by_kind(stats)));
    check_golden("profile_report.csv", format_layer_csv(stats));
}
