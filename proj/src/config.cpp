#include "clnet/config.hpp"

#include <cstdlib>
#include <fstream>

#include "clnet/errors.hpp"

namespace clnet {

nlohmann::json default_config() {
    return nlohmann::json{
        {"seed", 0},
        {"threads", 0},
        {"encoder",
         {{"stage_channels", {16, 32, 64, 128}},
          {"stage_strides", {2, 2, 2, 2}},
          {"ground_input_hw", {32, 128}},
          {"satellite_input_hw", {64, 64}},
          {"embedding_dim", 128},
          {"weight_sharing", "separate"}}},
        {"data",
         {{"source", "synthetic"},
          {"mode", "center_aligned"},
          {"train_size", 512},
          {"eval_size", 128},
          {"dataset_seed", 0},
          {"noise_sigma", 0.02},
          {"world_extent", 64.0},
          {"root", ""},
          {"manifest", "manifest.csv"}}},
        {"train",
         {{"epochs", 40},
          {"batch_size", 16},
          {"base_lr", 0.001},
          {"weight_decay", 0.01},
          {"warmup_frac", 0.05},
          {"warmup_steps", -1},
          {"tau", 0.07},
          {"tau_learnable", false},
          {"direction", "symmetric"},
          {"preset", "full"},
          {"augment", true}}},
        {"eval", {{"hit_rate", false}, {"ap", false}}},
        {"viz", {{"level", 1}, {"view", "both"}, {"upscale", 8}}},
    };
}

nlohmann::json merge_config(const nlohmann::json& base, const nlohmann::json& file,
                            const std::string& path_prefix) {
    nlohmann::json out = base;
    for (auto it = file.begin(); it != file.end(); ++it) {
        const std::string path = path_prefix.empty() ? it.key() : path_prefix + "." + it.key();
        if (!base.contains(it.key()))
            throw ValidationError("unknown config key '" + path + "'");
        if (base[it.key()].is_object() && it.value().is_object())
            out[it.key()] = merge_config(base[it.key()], it.value(), path);
        else
            out[it.key()] = it.value();
    }
    return out;
}

nlohmann::json load_run_config(const std::string& path) {
    nlohmann::json merged = default_config();
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw ValidationError("cannot open config file '" + path + "'");
        nlohmann::json file;
        try {
            in >> file;
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError("config file '" + path + "' is not valid JSON: " + e.what());
        }
        merged = merge_config(merged, file);
    }
    if (const char* env = std::getenv("CLNET_SEED")) {
        try {
            merged["seed"] = std::stoll(env);
        } catch (const std::exception&) {
            throw ValidationError("CLNET_SEED is not an integer: '" + std::string(env) + "'");
        }
    }
    return merged;
}

uint64_t fnv1a64(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string config_hash(const nlohmann::json& merged) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(merged.dump())));
    return std::string(buf);
}

EncoderConfig encoder_from_json(const nlohmann::json& j) {
    EncoderConfig cfg;
    if (j.contains("stage_channels")) {
        auto v = j.at("stage_channels").get<std::vector<int>>();
        if (v.size() != kNumStages) throw ValidationError("encoder.stage_channels needs 4 entries");
        std::copy(v.begin(), v.end(), cfg.stage_channels.begin());
    }
    if (j.contains("stage_strides")) {
        auto v = j.at("stage_strides").get<std::vector<int>>();
        if (v.size() != kNumStages) throw ValidationError("encoder.stage_strides needs 4 entries");
        std::copy(v.begin(), v.end(), cfg.stage_strides.begin());
    }
    auto read_hw = [&](const char* key, std::pair<int, int>& dst) {
        if (!j.contains(key)) return;
        auto v = j.at(key).get<std::vector<int>>();
        if (v.size() != 2) throw ValidationError(std::string("encoder.") + key + " needs 2 entries");
        dst = {v[0], v[1]};
    };
    read_hw("ground_input_hw", cfg.ground_input_hw);
    read_hw("satellite_input_hw", cfg.satellite_input_hw);
    if (j.contains("embedding_dim")) cfg.embedding_dim = j.at("embedding_dim").get<int>();
    if (j.contains("weight_sharing")) {
        const std::string s = j.at("weight_sharing").get<std::string>();
        if (s != "shared" && s != "separate")
            throw ValidationError("encoder.weight_sharing must be 'shared' or 'separate'");
        cfg.shared_weights = (s == "shared");
    }
    cfg.validate();
    return cfg;
}

nlohmann::json encoder_to_json(const EncoderConfig& cfg) {
    return nlohmann::json{
        {"stage_channels", cfg.stage_channels},
        {"stage_strides", cfg.stage_strides},
        {"ground_input_hw", {cfg.ground_input_hw.first, cfg.ground_input_hw.second}},
        {"satellite_input_hw", {cfg.satellite_input_hw.first, cfg.satellite_input_hw.second}},
        {"embedding_dim", cfg.embedding_dim},
        {"weight_sharing", cfg.shared_weights ? "shared" : "separate"},
    };
}

} // namespace clnet
