#pragma once

// Checkpoints: a JSON manifest (`<name>.json`) naming every parameter with its
// shape and offset, next to a flat little-endian float32 blob (`<name>.bin`).

#include "gccpm/model.hpp"

#include <filesystem>

namespace gccpm {

inline constexpr int kCheckpointVersion = 1;

/// `path` is the manifest; the blob goes next to it with extension .bin.
void save_checkpoint(const Model& model, const std::filesystem::path& path);

/// Rebuilds a pose network from the stored ModelConfig and restores its parameters.
Model load_checkpoint(const std::filesystem::path& path);

/// Restores parameters into an existing model. Every manifest entry must name a
/// parameter of `model` with the same shape, and the two sets must coincide.
void load_checkpoint_into(Model& model, const std::filesystem::path& path);

std::filesystem::path blob_path(const std::filesystem::path& manifest);

} // namespace gccpm
