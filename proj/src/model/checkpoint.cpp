#include "gccpm/checkpoint.hpp"

#include "gccpm/error.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace gccpm {

static_assert(std::endian::native == std::endian::little, "checkpoint blobs assume a little-endian host");

using nlohmann::json;

namespace {

json config_to_json(const ModelConfig& c)
{
    return {
        {"input_size", c.input_size},
        {"output_stride", c.output_stride},
        {"heatmap_size", c.heatmap_size},
        {"num_keypoints", c.num_keypoints},
        {"include_background_map", c.include_background_map},
        {"backbone_width", c.backbone_width},
        {"feature_channels", c.feature_channels},
        {"num_refinement_stages", c.num_refinement_stages},
        {"seed", c.seed},
        {"context",
         {{"kind", to_string(c.context.kind)},
          {"aspp", {{"mid_channels", c.context.aspp.mid_channels}, {"rates", c.context.aspp.rates}}},
          {"ppm",
           {{"divisors", c.context.ppm.divisors},
            {"branch_channels", c.context.ppm.branch_channels},
            {"branch_kernel", c.context.ppm.branch_kernel}}},
          {"u_shaped", {{"depth", c.context.u_shaped.depth}, {"widths", c.context.u_shaped.widths}}}}},
    };
}

ModelConfig config_from_json(const json& j)
{
    ModelConfig c;
    j.at("input_size").get_to(c.input_size);
    j.at("output_stride").get_to(c.output_stride);
    j.at("heatmap_size").get_to(c.heatmap_size);
    j.at("num_keypoints").get_to(c.num_keypoints);
    j.at("include_background_map").get_to(c.include_background_map);
    j.at("backbone_width").get_to(c.backbone_width);
    j.at("feature_channels").get_to(c.feature_channels);
    j.at("num_refinement_stages").get_to(c.num_refinement_stages);
    j.at("seed").get_to(c.seed);
    const auto& ctx = j.at("context");
    c.context.kind = parse_context_kind(ctx.at("kind").get<std::string>());
    ctx.at("aspp").at("mid_channels").get_to(c.context.aspp.mid_channels);
    ctx.at("aspp").at("rates").get_to(c.context.aspp.rates);
    ctx.at("ppm").at("divisors").get_to(c.context.ppm.divisors);
    ctx.at("ppm").at("branch_channels").get_to(c.context.ppm.branch_channels);
    ctx.at("ppm").at("branch_kernel").get_to(c.context.ppm.branch_kernel);
    ctx.at("u_shaped").at("depth").get_to(c.context.u_shaped.depth);
    ctx.at("u_shaped").at("widths").get_to(c.context.u_shaped.widths);
    return c;
}

json read_manifest(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        fail(ErrorKind::io, "cannot open checkpoint manifest " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        fail(ErrorKind::io, "malformed checkpoint manifest " + path.string() + ": " + e.what());
    }
    if (j.value("format", "") != "gccpm-checkpoint")
        fail(ErrorKind::io, path.string() + " is not a gccpm checkpoint manifest");
    if (j.value("version", 0) != kCheckpointVersion)
        fail(ErrorKind::io, path.string() + ": unsupported checkpoint version");
    if (j.value("precision", "") != "float32")
        fail(ErrorKind::io, path.string() + ": unsupported precision");
    return j;
}

} // namespace

std::filesystem::path blob_path(const std::filesystem::path& manifest)
{
    auto p = manifest;
    p.replace_extension(".bin");
    return p;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path)
{
    json params = json::array();
    std::size_t offset = 0;
    const auto named = model.parameters();
    for (const auto& p : named) {
        params.push_back({{"name", p.name}, {"shape", p.tensor.shape()}, {"offset", offset}, {"count", p.tensor.numel()}});
        offset += p.tensor.numel();
    }
    json manifest{
        {"format", "gccpm-checkpoint"},
        {"version", kCheckpointVersion},
        {"precision", "float32"},
        {"byte_order", "little"},
        {"model_kind", model.kind()},
        {"num_stages", model.outputs().size()},
        {"blob", blob_path(path).filename().string()},
        {"total_count", offset},
        {"parameters", params},
    };
    if (model.config())
        manifest["config"] = config_to_json(*model.config());

    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream blob(blob_path(path), std::ios::binary);
    if (!blob)
        fail(ErrorKind::io, "cannot write checkpoint blob " + blob_path(path).string());
    for (const auto& p : named) {
        const auto d = p.tensor.data();
        blob.write(reinterpret_cast<const char*>(d.data()), static_cast<std::streamsize>(d.size_bytes()));
    }
    std::ofstream out(path);
    if (!out)
        fail(ErrorKind::io, "cannot write checkpoint manifest " + path.string());
    out << manifest.dump(1) << "\n";
    if (!out || !blob)
        fail(ErrorKind::io, "failed writing checkpoint " + path.string());
}

void load_checkpoint_into(Model& model, const std::filesystem::path& path)
{
    const json manifest = read_manifest(path);
    const std::string where = path.string();

    const auto stages = manifest.value("num_stages", std::size_t{0});
    if (stages != model.outputs().size())
        fail(ErrorKind::shape, where + ": checkpoint has " + std::to_string(stages) + " stage outputs, model has " +
                                   std::to_string(model.outputs().size()));

    std::map<std::string, Tensor> targets;
    for (auto& p : model.parameters())
        targets.emplace(p.name, p.tensor);

    const auto& entries = manifest.at("parameters");
    if (entries.size() != targets.size())
        fail(ErrorKind::shape, where + ": checkpoint has " + std::to_string(entries.size()) +
                                   " parameters, model has " + std::to_string(targets.size()));

    const auto blob_file = path.parent_path() / manifest.at("blob").get<std::string>();
    std::ifstream blob(blob_file, std::ios::binary | std::ios::ate);
    if (!blob)
        fail(ErrorKind::io, "cannot open checkpoint blob " + blob_file.string());
    const auto bytes = static_cast<std::size_t>(blob.tellg());
    const auto total = manifest.at("total_count").get<std::size_t>();
    if (bytes != total * sizeof(float))
        fail(ErrorKind::io, blob_file.string() + ": expected " + std::to_string(total * sizeof(float)) +
                                " bytes, found " + std::to_string(bytes) + " (truncated or corrupt)");
    blob.seekg(0);

    for (const auto& e : entries) {
        const auto name = e.at("name").get<std::string>();
        const auto it = targets.find(name);
        if (it == targets.end())
            fail(ErrorKind::shape, where + ": unknown parameter '" + name + "'");
        const auto shape = e.at("shape").get<Shape>();
        if (shape != it->second.shape()) {
            std::ostringstream msg;
            msg << where << ": shape mismatch for '" << name << "'";
            fail(ErrorKind::shape, msg.str());
        }
        const auto offset = e.at("offset").get<std::size_t>();
        const auto count = e.at("count").get<std::size_t>();
        if (count != it->second.numel() || offset + count > total)
            fail(ErrorKind::io, where + ": bad extent for '" + name + "'");
        auto dst = it->second.mutable_data();
        blob.seekg(static_cast<std::streamoff>(offset * sizeof(float)));
        blob.read(reinterpret_cast<char*>(dst.data()), static_cast<std::streamsize>(count * sizeof(float)));
        if (!blob)
            fail(ErrorKind::io, blob_file.string() + ": short read for '" + name + "'");
    }
}

Model load_checkpoint(const std::filesystem::path& path)
{
    const json manifest = read_manifest(path);
    if (!manifest.contains("config"))
        fail(ErrorKind::config, path.string() + ": checkpoint of kind '" + manifest.value("model_kind", "?") +
                                    "' carries no model config; use load_checkpoint_into");
    ModelConfig cfg;
    try {
        cfg = config_from_json(manifest.at("config"));
    } catch (const json::exception& e) {
        fail(ErrorKind::config, path.string() + ": bad model config: " + e.what());
    }
    Model model = build_model(cfg);
    load_checkpoint_into(model, path);
    return model;
}

} // namespace gccpm
