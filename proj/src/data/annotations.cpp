#include "gccpm/data.hpp"

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace gccpm {

void validate_record(const AnnotationRecord& record, const std::string& where, int width, int height)
{
    auto bad = [&](const std::string& what) { fail(ErrorKind::config, where + ": " + what); };
    if (record.keypoints.points.size() != kNumKeypoints)
        bad("expected " + std::to_string(kNumKeypoints) + " keypoints, got " +
            std::to_string(record.keypoints.points.size()));
    if (!(record.keypoints.head_size > 0.0))
        bad("head_size must be positive");
    for (std::size_t j = 0; j < record.keypoints.points.size(); ++j) {
        const auto& p = record.keypoints.points[j];
        if (!std::isfinite(p.x) || !std::isfinite(p.y))
            bad("keypoint " + std::to_string(j) + " has a non-finite coordinate");
        if (width > 0 && height > 0 && p.visibility != Visibility::absent &&
            (p.x < 0 || p.y < 0 || p.x > width - 1 || p.y > height - 1))
            bad("keypoint " + std::to_string(j) + " lies outside the " + std::to_string(width) + "x" +
                std::to_string(height) + " image");
    }
}

namespace {

std::string at_line(const std::string& source, const YAML::Node& node)
{
    const auto mark = node.Mark();
    return source + ":" + std::to_string(mark.line + 1);
}

template <class T>
T scalar(const YAML::Node& node, const std::string& key, const std::string& where)
{
    const YAML::Node v = node[key];
    if (!v)
        fail(ErrorKind::config, where + ": missing field '" + key + "'");
    try {
        return v.as<T>();
    } catch (const YAML::Exception&) {
        fail(ErrorKind::config, where + ": field '" + key + "' has the wrong type");
    }
}

} // namespace

std::vector<AnnotationRecord> parse_annotations(const std::string& text, const std::string& source)
{
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::Exception& e) {
        fail(ErrorKind::config, source + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg);
    }
    std::vector<AnnotationRecord> out;
    if (!root || root.IsNull())
        return out;
    if (!root.IsSequence())
        fail(ErrorKind::config, at_line(source, root) + ": annotation document must be a list of records");
    for (std::size_t i = 0; i < root.size(); ++i) {
        const YAML::Node rec = root[i];
        const std::string where = at_line(source, rec) + ": record " + std::to_string(i);
        if (!rec.IsMap())
            fail(ErrorKind::config, where + ": record must be a mapping");
        for (const auto& kv : rec) {
            const auto key = kv.first.as<std::string>();
            if (key != "image" && key != "head_size" && key != "keypoints")
                fail(ErrorKind::config, where + ": unknown field '" + key + "'");
        }
        AnnotationRecord r;
        r.image = scalar<std::string>(rec, "image", where);
        r.keypoints.head_size = scalar<double>(rec, "head_size", where);
        const YAML::Node kps = rec["keypoints"];
        if (!kps || !kps.IsSequence())
            fail(ErrorKind::config, where + ": 'keypoints' must be a list");
        if (kps.size() != kNumKeypoints)
            fail(ErrorKind::config, where + ": expected " + std::to_string(kNumKeypoints) + " keypoints, got " +
                                        std::to_string(kps.size()));
        for (std::size_t j = 0; j < kps.size(); ++j) {
            const std::string kw = at_line(source, kps[j]) + ": record " + std::to_string(i) + " keypoint " +
                                   std::to_string(j);
            if (!kps[j].IsMap())
                fail(ErrorKind::config, kw + ": keypoint must be a mapping {x, y, visibility}");
            auto& p = r.keypoints.points[j];
            p.x = scalar<double>(kps[j], "x", kw);
            p.y = scalar<double>(kps[j], "y", kw);
            const int v = scalar<int>(kps[j], "visibility", kw);
            if (v < 0 || v > 2)
                fail(ErrorKind::config, kw + ": visibility must be 0, 1 or 2");
            p.visibility = static_cast<Visibility>(v);
        }
        validate_record(r, where);
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<AnnotationRecord> load_annotations(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in || std::filesystem::is_directory(path))
        fail(ErrorKind::io, "cannot open annotation file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_annotations(buf.str(), path.string());
}

namespace {

std::string shortest(double v)
{
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    std::string s(buf, res.ptr);
    // Keep floats recognisable as floats in YAML.
    if (s.find_first_of(".eEn") == std::string::npos)
        s += ".0";
    return s;
}

} // namespace

std::string format_annotations(const std::vector<AnnotationRecord>& records)
{
    if (records.empty())
        return "[]\n";
    std::ostringstream out;
    for (const auto& r : records) {
        out << "- image: \"" << r.image << "\"\n";
        out << "  head_size: " << shortest(r.keypoints.head_size) << "\n";
        out << "  keypoints:\n";
        for (const auto& p : r.keypoints.points)
            out << "    - {x: " << shortest(p.x) << ", y: " << shortest(p.y)
                << ", visibility: " << static_cast<int>(p.visibility) << "}\n";
    }
    return out.str();
}

void save_annotations(const std::filesystem::path& path, const std::vector<AnnotationRecord>& records)
{
    std::ofstream out(path);
    if (!out)
        fail(ErrorKind::io, "cannot write annotation file " + path.string());
    out << format_annotations(records);
    if (!out)
        fail(ErrorKind::io, "failed writing " + path.string());
}

void write_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples)
{
    std::filesystem::create_directories(dir / "images");
    std::vector<AnnotationRecord> records;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "images/%06zu.png", i);
        write_png(dir / name, samples[i].image);
        records.push_back({name, samples[i].keypoints});
    }
    save_annotations(dir / "annotations.yaml", records);
}

std::vector<Sample> read_dataset(const std::filesystem::path& path)
{
    const auto annotations = std::filesystem::is_directory(path) ? path / "annotations.yaml" : path;
    const auto records = load_annotations(annotations);
    const auto base = annotations.parent_path();
    std::vector<Sample> out;
    for (std::size_t i = 0; i < records.size(); ++i) {
        Sample s;
        s.image = read_png(base / records[i].image);
        s.keypoints = records[i].keypoints;
        validate_record(records[i], annotations.string() + ": record " + std::to_string(i), s.image.width,
                        s.image.height);
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace gccpm
