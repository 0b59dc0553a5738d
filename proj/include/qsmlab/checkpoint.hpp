#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>

#include "qsmlab/adam.hpp"
#include "qsmlab/tensor.hpp"

namespace qsmlab::ad {

// Checkpoint = `<path>.json` manifest (names, shapes, dtype, offsets, optional
// Adam state, free-form metadata) + `<path>.bin` little-endian f64 payload.
void save_checkpoint(const std::filesystem::path& path, const ParameterRegistry& params,
                     const AdamState* adam = nullptr, const nlohmann::json& metadata = {});

struct LoadedCheckpoint {
  nlohmann::json metadata;
  std::optional<AdamState> adam;
};

// Loads values into `params`, which must already hold tensors with the same
// names and shapes.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, ParameterRegistry& params);

nlohmann::json read_checkpoint_manifest(const std::filesystem::path& path);

std::filesystem::path checkpoint_manifest_path(const std::filesystem::path& path);
std::filesystem::path checkpoint_payload_path(const std::filesystem::path& path);

}  // namespace qsmlab::ad
