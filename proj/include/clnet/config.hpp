#pragma once

// Run configuration: JSON file merged over documented defaults, with
// unknown keys rejected. The config hash is a 64-bit FNV-1a over the
// canonical serialization of the merged config (nlohmann::json keeps object
// keys sorted, so the hash is independent of key order in the file).

#include <cstdint>
#include <string>

#include "clnet/encoder.hpp"

#include "json.hpp"

namespace clnet {

nlohmann::json default_config();

// Deep-merges `file` over `base`, rejecting keys absent from the defaults.
nlohmann::json merge_config(const nlohmann::json& base, const nlohmann::json& file,
                            const std::string& path_prefix = "");

// Loads the file (or returns defaults when path is empty), applies the
// CLNET_SEED environment override.
nlohmann::json load_run_config(const std::string& path);

uint64_t fnv1a64(const std::string& s);
std::string config_hash(const nlohmann::json& merged);

EncoderConfig encoder_from_json(const nlohmann::json& j);
nlohmann::json encoder_to_json(const EncoderConfig& cfg);

} // namespace clnet
