#pragma once

// End-to-end training: initialize branches, ground maps and the converter,
// then per batch run both views through extract+refine, pool, apply the
// contrastive loss and update every parameter under AdamW with the
// warmup+cosine schedule. Emits a checkpoint directory and a loss history
// CSV (step,loss,lr). Deterministic per (config, seed, thread count); with
// the stock kernels, per thread count as well.

#include <cstdint>
#include <string>
#include <vector>

#include "clnet/model.hpp"
#include "clnet/synthdata.hpp"

#include "json.hpp"

namespace clnet {

struct TrainConfig {
    int epochs = 40;
    int batch_size = 16;
    double base_lr = 0.001;
    double weight_decay = 0.01;
    double warmup_frac = 0.05; // used when warmup_steps < 0
    int64_t warmup_steps = -1;
    double tau = 0.07;
    bool tau_learnable = false;
    LossDirection direction = LossDirection::symmetric;
    int preset_id = 5;
    uint64_t seed = 0;
    bool augment = true;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

struct HistoryRow {
    int64_t step; // 1-based
    double loss;
    double lr;
};

struct TrainResult {
    std::vector<HistoryRow> history;
    int64_t total_steps = 0;
    double final_tau = 0.07;
};

// Trains a freshly initialized model in place. When out_dir is non-empty,
// writes out_dir/checkpoint/{manifest.txt,tensors.bin,model.json} and
// out_dir/loss.csv.
TrainResult train(Model<float>& model, const PairDataset& data, const TrainConfig& cfg,
                  const std::string& out_dir, const std::string& config_hash);

void write_loss_csv(const std::string& path, const std::vector<HistoryRow>& history);

} // namespace clnet
