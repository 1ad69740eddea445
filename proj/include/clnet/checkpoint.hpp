#pragma once

// Checkpoint directory layout:
//   manifest.txt  - header lines (format name/version, step, config hash)
//                   plus one line per tensor: name dtype shape file offset
//   tensors.bin   - raw little-endian float32 blobs, row-major
//   model.json    - encoder config / preset / loss settings needed to
//                   rebuild the model before loading tensors
//
// The manifest is validated in full (every expected tensor present exactly
// once, shapes match, blob large enough, offsets non-overlapping) before
// any tensor bytes are read.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "clnet/model.hpp"

#include "json.hpp"

namespace clnet {

struct TensorEntry {
    std::string name;
    std::string dtype; // "f32"
    std::vector<int> shape;
    std::string file;
    uint64_t offset = 0;
};

struct CheckpointManifest {
    int format_version = 1;
    int64_t step = 0;
    std::string config_hash;
    std::vector<TensorEntry> entries;
};

void save_checkpoint(const std::string& dir, Model<float>& model, int64_t step,
                     const std::string& config_hash, const nlohmann::json& model_json,
                     std::optional<float> log_tau = std::nullopt);

// Rebuilds the model from model.json and loads every tensor. Throws
// ValidationError (naming the offending tensor) on any mismatch.
Model<float> load_checkpoint(const std::string& dir, CheckpointManifest* manifest_out = nullptr,
                             std::optional<float>* log_tau_out = nullptr,
                             nlohmann::json* model_json_out = nullptr);

nlohmann::json model_to_json(const Model<float>& model, double tau, bool tau_learnable,
                             const std::string& direction);
Model<float> model_from_json(const nlohmann::json& j);

} // namespace clnet
