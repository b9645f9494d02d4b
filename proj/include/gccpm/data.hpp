#pragma once

// Synthetic stick-figure data, annotation documents and PNG files.

#include "gccpm/augment.hpp"
#include "gccpm/codec.hpp"
#include "gccpm/image.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace gccpm {

enum class Background { solid, noise };

const char* to_string(Background b);
Background parse_background(const std::string& text);

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

/// Lengths are in pixels for the configured image_size.
struct SynthConfig {
    int image_size = 64;
    Range limb_thickness{2.0, 3.0};
    Range torso{12.0, 15.0};       // pelvis -> thorax
    Range neck{3.0, 4.0};          // thorax -> upper neck
    Range head{5.0, 6.5};          // upper neck -> head top
    Range shoulder_half{4.5, 6.0}; // thorax -> shoulder, sideways
    Range hip_half{3.0, 4.5};      // pelvis -> hip, sideways
    Range upper_arm{7.0, 9.0};
    Range forearm{6.0, 8.0};
    Range thigh{9.0, 11.0};
    Range shin{8.0, 10.0};
    // Radians. Limb directions are measured from straight down; torso from straight up.
    Range torso_lean{-0.25, 0.25};
    Range arm_swing{-2.6, 2.6};
    Range elbow_bend{-1.6, 1.6};
    Range leg_swing{-0.7, 0.7};
    Range knee_bend{-1.2, 1.2};
    Background background = Background::solid;
    // Total figures drawn; only the one nearest the centre is annotated.
    int figures = 1;
    // Minimum distance between annotated keypoints and the image border, fraction of the side.
    double margin_frac = 0.1;
    // Snap joints to multiples of this many pixels (0 disables).
    int grid_align = 0;
    std::uint64_t seed = 0;

    void validate() const;
    /// Lengths scaled from the 64 px defaults to `image_size` pixels.
    static SynthConfig for_size(int image_size);
};

/// Renders one sample from the rng stream. Keypoints are exact; head_size is
/// twice the head-top to upper-neck distance. Distractor joints are appended to
/// `distractors` when non-null.
Sample gen_synthetic(std::mt19937_64& rng, const SynthConfig& cfg, std::vector<KeypointSet>* distractors = nullptr);

/// Sample i draws from its own stream seeded by derive_seed(cfg.seed, i).
std::vector<Sample> gen_dataset(const SynthConfig& cfg, int count);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

struct AnnotationRecord {
    std::string image;
    KeypointSet keypoints;
};

/// Throws ErrorKind::config naming the record when an invariant fails. With
/// positive extents, visible/occluded keypoints must lie inside the image.
void validate_record(const AnnotationRecord& record, const std::string& where, int width = 0, int height = 0);

/// YAML: a top-level list of {image, head_size, keypoints: 16 x {x, y, visibility}}.
std::vector<AnnotationRecord> parse_annotations(const std::string& text, const std::string& source = "<string>");
std::vector<AnnotationRecord> load_annotations(const std::filesystem::path& path);
std::string format_annotations(const std::vector<AnnotationRecord>& records);
void save_annotations(const std::filesystem::path& path, const std::vector<AnnotationRecord>& records);

Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& image);
/// Single-channel 8-bit PNG.
void write_png_gray(const std::filesystem::path& path, int width, int height, const std::vector<std::uint8_t>& values);

/// Writes images/NNNNNN.png and annotations.yaml under `dir`.
void write_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples);
/// Reads an annotation document (or `dir`/annotations.yaml) and the images it names,
/// relative to the document's directory.
std::vector<Sample> read_dataset(const std::filesystem::path& path);

} // namespace gccpm
