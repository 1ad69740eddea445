#include "clnet/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "clnet/checkpoint.hpp"
#include "clnet/errors.hpp"
#include "clnet/optim.hpp"

namespace fs = std::filesystem;

namespace clnet {

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (batch_size < 2) throw ConfigError("train: batch_size must be >= 2 (InfoNCE needs a negative)");
    if (!(base_lr > 0)) throw ConfigError("train: base_lr must be > 0");
    if (!(tau > 0)) throw ConfigError("train: tau must be > 0");
    if (warmup_frac < 0 || warmup_frac >= 1) throw ConfigError("train: warmup_frac must be in [0,1)");
    AblationPreset::from_id(preset_id); // throws on bad id
}

nlohmann::json TrainConfig::to_json() const {
    return nlohmann::json{
        {"epochs", epochs},
        {"batch_size", batch_size},
        {"base_lr", base_lr},
        {"weight_decay", weight_decay},
        {"warmup_frac", warmup_frac},
        {"warmup_steps", warmup_steps},
        {"tau", tau},
        {"tau_learnable", tau_learnable},
        {"direction", direction == LossDirection::g2s
                          ? "g2s"
                          : (direction == LossDirection::s2g ? "s2g" : "symmetric")},
        {"preset", preset_id == 5 ? "full" : std::to_string(preset_id)},
        {"augment", augment},
    };
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig cfg;
    if (j.contains("epochs")) cfg.epochs = j.at("epochs").get<int>();
    if (j.contains("batch_size")) cfg.batch_size = j.at("batch_size").get<int>();
    if (j.contains("base_lr")) cfg.base_lr = j.at("base_lr").get<double>();
    if (j.contains("weight_decay")) cfg.weight_decay = j.at("weight_decay").get<double>();
    if (j.contains("warmup_frac")) cfg.warmup_frac = j.at("warmup_frac").get<double>();
    if (j.contains("warmup_steps")) cfg.warmup_steps = j.at("warmup_steps").get<int64_t>();
    if (j.contains("tau")) cfg.tau = j.at("tau").get<double>();
    if (j.contains("tau_learnable")) cfg.tau_learnable = j.at("tau_learnable").get<bool>();
    if (j.contains("direction")) cfg.direction = direction_from_string(j.at("direction").get<std::string>());
    if (j.contains("preset")) {
        const auto& p = j.at("preset");
        cfg.preset_id = p.is_number() ? p.get<int>() : AblationPreset::from_string(p.get<std::string>()).id;
    }
    if (j.contains("augment")) cfg.augment = j.at("augment").get<bool>();
    cfg.validate();
    return cfg;
}

void write_loss_csv(const std::string& path, const std::vector<HistoryRow>& history) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write loss history to '" + path + "'");
    out << "step,loss,lr\n";
    char buf[96];
    for (const auto& row : history) {
        std::snprintf(buf, sizeof(buf), "%lld,%.9g,%.9g\n", static_cast<long long>(row.step),
                      row.loss, row.lr);
        out << buf;
    }
}

TrainResult train(Model<float>& model, const PairDataset& data, const TrainConfig& cfg,
                  const std::string& out_dir, const std::string& config_hash) {
    cfg.validate();
    if (data.size() == 0) throw ConfigError("train: dataset is empty");
    if (data.size() < cfg.batch_size)
        throw ConfigError("train: dataset (" + std::to_string(data.size()) +
                          " pairs) smaller than batch_size " + std::to_string(cfg.batch_size));

    model = Model<float>(model.cfg, AblationPreset::from_id(cfg.preset_id));
    model.init(cfg.seed);

    const int steps_per_epoch = data.size() / cfg.batch_size;
    const int64_t total_steps = static_cast<int64_t>(steps_per_epoch) * cfg.epochs;
    int64_t warmup = cfg.warmup_steps >= 0
                         ? cfg.warmup_steps
                         : static_cast<int64_t>(std::llround(cfg.warmup_frac * static_cast<double>(total_steps)));
    if (warmup >= total_steps)
        throw ConfigError("train: warmup_steps (" + std::to_string(warmup) +
                          ") must be < total steps (" + std::to_string(total_steps) + ")");

    AdamW<float> opt(cfg.weight_decay);
    float log_tau = static_cast<float>(std::log(cfg.tau));
    const bool can_augment = cfg.augment && data.mode() == DatasetMode::center_aligned;

    TrainResult result;
    result.total_steps = total_steps;
    std::vector<int> indices(static_cast<size_t>(data.size()));
    std::iota(indices.begin(), indices.end(), 0);

    int64_t step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(mix_seed(cfg.seed, rng_stream::kShuffle, static_cast<uint64_t>(epoch)));
        for (size_t i = indices.size(); i > 1; --i)
            std::swap(indices[i - 1], indices[shuffle_rng.uniform_index(i)]);

        for (int b = 0; b < steps_per_epoch; ++b) {
            std::vector<Tensor3<float>> ground, satellite;
            ground.reserve(static_cast<size_t>(cfg.batch_size));
            satellite.reserve(static_cast<size_t>(cfg.batch_size));
            for (int s = 0; s < cfg.batch_size; ++s) {
                const int idx = indices[static_cast<size_t>(b * cfg.batch_size + s)];
                PairRecord rec = data.get(idx);
                if (can_augment)
                    rec = augment_pair(rec, mix_seed(cfg.seed, rng_stream::kAugment,
                                                     static_cast<uint64_t>(epoch),
                                                     static_cast<uint64_t>(idx)));
                ground.push_back(std::move(rec.ground));
                satellite.push_back(std::move(rec.satellite));
            }

            const float tau = cfg.tau_learnable ? std::exp(log_tau) : static_cast<float>(cfg.tau);
            ModelGrads<float> grads;
            float dlogtau = 0.0f;
            const float loss = batch_loss(model, ground, satellite, tau, cfg.direction, &grads,
                                          cfg.tau_learnable ? &dlogtau : nullptr);
            ++step;
            if (!std::isfinite(loss))
                throw NumericError("train: non-finite loss at step " + std::to_string(step));

            const double lr = lr_schedule(step, total_steps, warmup, cfg.base_lr);
            auto params = model_parameters(model);
            auto grad_refs = model_gradients(model, grads);
            if (cfg.tau_learnable) {
                params.push_back({"loss.log_tau", &log_tau, 1, {1}});
                grad_refs.push_back({"loss.log_tau", &dlogtau, 1, {1}});
            }
            opt.step(params, grad_refs, lr);
            model.mark_dirty();
            result.history.push_back({step, static_cast<double>(loss), lr});
        }
    }
    result.final_tau = cfg.tau_learnable ? std::exp(static_cast<double>(log_tau)) : cfg.tau;

    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_loss_csv((fs::path(out_dir) / "loss.csv").string(), result.history);
        const std::string dir_name = direction_from_string("symmetric") == cfg.direction
                                         ? "symmetric"
                                         : (cfg.direction == LossDirection::g2s ? "g2s" : "s2g");
        nlohmann::json mj = model_to_json(model, result.final_tau, cfg.tau_learnable, dir_name);
        save_checkpoint((fs::path(out_dir) / "checkpoint").string(), model, step, config_hash, mj,
                        cfg.tau_learnable ? std::optional<float>(log_tau) : std::nullopt);
    }
    return result;
}

} // namespace clnet
