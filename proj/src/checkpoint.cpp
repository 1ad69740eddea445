#include "clnet/checkpoint.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "clnet/config.hpp"
#include "clnet/errors.hpp"

namespace fs = std::filesystem;

namespace clnet {

namespace {

constexpr const char* kFormatName = "clnet-checkpoint";
constexpr int kFormatVersion = 1;
constexpr const char* kBlobFile = "tensors.bin";

std::string shape_to_string(const std::vector<int>& shape) {
    if (shape.empty()) return "scalar";
    std::string s;
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s;
}

std::vector<int> shape_from_string(const std::string& s) {
    if (s == "scalar") return {};
    std::vector<int> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, 'x')) out.push_back(std::stoi(tok));
    return out;
}

size_t shape_elems(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) n *= static_cast<size_t>(d);
    return n;
}

} // namespace

nlohmann::json model_to_json(const Model<float>& model, double tau, bool tau_learnable,
                             const std::string& direction) {
    return nlohmann::json{
        {"encoder", encoder_to_json(model.cfg)},
        {"preset", model.preset.id},
        {"tau", tau},
        {"tau_learnable", tau_learnable},
        {"direction", direction},
    };
}

Model<float> model_from_json(const nlohmann::json& j) {
    EncoderConfig cfg = encoder_from_json(j.at("encoder"));
    AblationPreset preset = AblationPreset::from_id(j.at("preset").get<int>());
    Model<float> model(cfg, preset);
    model.init(0); // shapes only; every tensor is overwritten by the loader
    return model;
}

void save_checkpoint(const std::string& dir, Model<float>& model, int64_t step,
                     const std::string& config_hash, const nlohmann::json& model_json,
                     std::optional<float> log_tau) {
    fs::create_directories(dir);
    auto params = model_parameters(model);

    std::ofstream blob(fs::path(dir) / kBlobFile, std::ios::binary);
    if (!blob) throw IoError("cannot write " + (fs::path(dir) / kBlobFile).string());
    std::ofstream manifest(fs::path(dir) / "manifest.txt");
    if (!manifest) throw IoError("cannot write " + (fs::path(dir) / "manifest.txt").string());

    manifest << kFormatName << " " << kFormatVersion << "\n";
    manifest << "step " << step << "\n";
    manifest << "config_hash " << (config_hash.empty() ? "none" : config_hash) << "\n";

    uint64_t offset = 0;
    auto dump = [&](const std::string& name, const float* data, size_t count,
                    const std::vector<int>& shape) {
        manifest << "tensor " << name << " f32 " << shape_to_string(shape) << " " << kBlobFile
                 << " " << offset << "\n";
        blob.write(reinterpret_cast<const char*>(data),
                   static_cast<std::streamsize>(count * sizeof(float)));
        offset += count * sizeof(float);
    };
    for (const auto& p : params) dump(p.name, p.data, p.size, p.shape);
    if (log_tau) dump("loss.log_tau", &*log_tau, 1, {1});

    if (!blob || !manifest) throw IoError("failed writing checkpoint to '" + dir + "'");
    blob.close();
    manifest.close();

    std::ofstream mj(fs::path(dir) / "model.json");
    if (!mj) throw IoError("cannot write model.json in '" + dir + "'");
    mj << model_json.dump(2) << "\n";
}

Model<float> load_checkpoint(const std::string& dir, CheckpointManifest* manifest_out,
                             std::optional<float>* log_tau_out, nlohmann::json* model_json_out) {
    const fs::path root(dir);
    std::ifstream mf(root / "manifest.txt");
    if (!mf) throw ValidationError("checkpoint '" + dir + "': missing manifest.txt");

    CheckpointManifest manifest;
    std::string line;
    if (!std::getline(mf, line)) throw ValidationError("checkpoint '" + dir + "': empty manifest");
    {
        std::stringstream ss(line);
        std::string name;
        int version = -1;
        ss >> name >> version;
        if (name != kFormatName)
            throw ValidationError("checkpoint '" + dir + "': not a " + std::string(kFormatName) +
                                  " manifest");
        if (version != kFormatVersion)
            throw ValidationError("checkpoint '" + dir + "': format version " +
                                  std::to_string(version) + " unsupported (expected " +
                                  std::to_string(kFormatVersion) + ")");
        manifest.format_version = version;
    }
    while (std::getline(mf, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string kind;
        ss >> kind;
        if (kind == "step") {
            ss >> manifest.step;
        } else if (kind == "config_hash") {
            ss >> manifest.config_hash;
        } else if (kind == "tensor") {
            TensorEntry e;
            std::string shape;
            ss >> e.name >> e.dtype >> shape >> e.file >> e.offset;
            if (ss.fail()) throw ValidationError("checkpoint '" + dir + "': malformed tensor line: " + line);
            e.shape = shape_from_string(shape);
            manifest.entries.push_back(std::move(e));
        } else {
            throw ValidationError("checkpoint '" + dir + "': unknown manifest line: " + line);
        }
    }

    std::ifstream mjf(root / "model.json");
    if (!mjf) throw ValidationError("checkpoint '" + dir + "': missing model.json");
    nlohmann::json model_json;
    try {
        mjf >> model_json;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("checkpoint '" + dir + "': bad model.json: " + e.what());
    }

    Model<float> model = model_from_json(model_json);
    auto params = model_parameters(model);
    const bool tau_learnable = model_json.value("tau_learnable", false);

    // Full validation pass before reading any tensor bytes.
    std::map<std::string, const TensorEntry*> by_name;
    for (const auto& e : manifest.entries) {
        if (!by_name.emplace(e.name, &e).second)
            throw ValidationError("checkpoint '" + dir + "': duplicate tensor '" + e.name + "'");
        if (e.dtype != "f32")
            throw ValidationError("checkpoint '" + dir + "': tensor '" + e.name +
                                  "' has unsupported dtype '" + e.dtype + "'");
    }
    std::vector<std::pair<const TensorEntry*, TensorRef<float>>> plan;
    for (const auto& p : params) {
        auto it = by_name.find(p.name);
        if (it == by_name.end())
            throw ValidationError("checkpoint '" + dir + "': missing tensor '" + p.name + "'");
        const TensorEntry& e = *it->second;
        if (shape_elems(e.shape) != p.size)
            throw ValidationError("checkpoint '" + dir + "': tensor '" + p.name + "' has shape " +
                                  shape_to_string(e.shape) + ", model expects " +
                                  shape_to_string(p.shape));
        plan.emplace_back(&e, p);
        by_name.erase(it);
    }
    std::optional<float> log_tau;
    if (tau_learnable) {
        auto it = by_name.find("loss.log_tau");
        if (it == by_name.end())
            throw ValidationError("checkpoint '" + dir + "': missing tensor 'loss.log_tau'");
        log_tau = 0.0f;
        by_name.erase(it);
    }
    if (!by_name.empty())
        throw ValidationError("checkpoint '" + dir + "': unexpected tensor '" +
                              by_name.begin()->first + "'");

    // Blob size / overlap validation.
    std::map<std::string, uint64_t> file_sizes;
    auto file_size = [&](const std::string& name) -> uint64_t {
        auto it = file_sizes.find(name);
        if (it != file_sizes.end()) return it->second;
        std::error_code ec;
        const uint64_t sz = fs::file_size(root / name, ec);
        if (ec) throw ValidationError("checkpoint '" + dir + "': missing blob file '" + name + "'");
        file_sizes[name] = sz;
        return sz;
    };
    std::vector<std::pair<uint64_t, uint64_t>> ranges;
    for (const auto& e : manifest.entries) {
        const uint64_t bytes = shape_elems(e.shape) * sizeof(float);
        if (e.offset + bytes > file_size(e.file))
            throw ValidationError("checkpoint '" + dir + "': tensor '" + e.name +
                                  "' truncated in '" + e.file + "'");
        ranges.emplace_back(e.offset, e.offset + bytes);
    }
    std::sort(ranges.begin(), ranges.end());
    for (size_t i = 1; i < ranges.size(); ++i)
        if (ranges[i].first < ranges[i - 1].second)
            throw ValidationError("checkpoint '" + dir + "': overlapping tensor offsets");

    // Load.
    std::ifstream blob(root / kBlobFile, std::ios::binary);
    if (!blob) throw ValidationError("checkpoint '" + dir + "': missing " + std::string(kBlobFile));
    auto read_into = [&](const TensorEntry& e, float* dst, size_t count) {
        blob.seekg(static_cast<std::streamoff>(e.offset));
        blob.read(reinterpret_cast<char*>(dst),
                  static_cast<std::streamsize>(count * sizeof(float)));
        if (blob.gcount() != static_cast<std::streamsize>(count * sizeof(float)))
            throw ValidationError("checkpoint '" + dir + "': short read on tensor '" + e.name + "'");
    };
    for (auto& [entry, ref] : plan) read_into(*entry, ref.data, ref.size);
    if (log_tau) {
        for (const auto& e : manifest.entries)
            if (e.name == "loss.log_tau") read_into(e, &*log_tau, 1);
    }

    model.mark_dirty();
    if (manifest_out) *manifest_out = manifest;
    if (log_tau_out) *log_tau_out = log_tau;
    if (model_json_out) *model_json_out = model_json;
    return model;
}

} // namespace clnet
