#pragma once

// Run configuration: one YAML document with a schema version, a seed and the
// model, codec, augment, train and synth sections. Unknown keys are rejected.

#include "gccpm/augment.hpp"
#include "gccpm/codec.hpp"
#include "gccpm/data.hpp"
#include "gccpm/model.hpp"
#include "gccpm/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace gccpm {

inline constexpr int kSchemaVersion = 1;

struct RunConfig {
    int schema_version = kSchemaVersion;
    // Root of every random stream; sections receive derived seeds.
    std::uint64_t seed = 0;
    ModelConfig model = ModelConfig::tiny();
    CodecConfig codec;
    AugmentConfig augment;
    TrainConfig train;
    SynthConfig synth;

    /// Desk-scale defaults: tiny model, codec/augment/synth sized to it.
    static RunConfig defaults();

    /// Copies derived seeds into model, train and synth.
    void apply_seed(std::uint64_t root);
    /// Section invariants plus cross-section agreement (image sizes, heatmap geometry).
    void validate() const;
};

/// `source` names the document in error messages ("file:line: key: problem").
RunConfig parse_run_config(const std::string& text, const std::string& source = "<string>");
RunConfig load_run_config(const std::filesystem::path& path);
/// Complete document; parse_run_config(format_run_config(c)) reproduces c.
std::string format_run_config(const RunConfig& cfg);

} // namespace gccpm
