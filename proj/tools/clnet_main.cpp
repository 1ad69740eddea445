// clnet command-line entry point.
//
// Subcommands: synth | train | embed | eval | viz | ablate. Options come
// from a JSON config file plus flag overrides (flags win); CLNET_SEED in
// the environment overrides the config seed, explicit --seed beats both.
// Exit codes: 0 ok, 2 usage, 3 validation/config/io, 4 numeric failure.

#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "clnet/checkpoint.hpp"
#include "clnet/config.hpp"
#include "clnet/errors.hpp"
#include "clnet/evaluator.hpp"
#include "clnet/image_io.hpp"
#include "clnet/model.hpp"
#include "clnet/synthdata.hpp"
#include "clnet/trainer.hpp"
#include "clnet/viz.hpp"

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOpts {
    std::string config_path;
    std::optional<int64_t> seed;
    std::optional<int> threads;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "JSON config file (defaults apply when omitted)");
    cmd->add_option("--seed", opts.seed, "Override config seed (beats CLNET_SEED)");
    cmd->add_option("--threads", opts.threads, "Worker threads, 0 = all cores [default: 0]");
}

json resolve_config(const CommonOpts& opts) {
    json cfg = clnet::load_run_config(opts.config_path);
    if (opts.seed) cfg["seed"] = *opts.seed;
    if (opts.threads) cfg["threads"] = *opts.threads;
    return cfg;
}

void apply_threads(const json& cfg) {
#if defined(_OPENMP)
    const int threads = cfg.value("threads", 0);
    if (threads > 0) omp_set_num_threads(threads);
#else
    (void)cfg;
#endif
}

clnet::DatasetSpec dataset_spec_from(const json& cfg, const clnet::EncoderConfig& enc,
                                     clnet::Split split) {
    const json& d = cfg.at("data");
    clnet::DatasetSpec spec;
    const std::string mode = d.value("mode", "center_aligned");
    if (mode == "center_aligned")
        spec.mode = clnet::DatasetMode::center_aligned;
    else if (mode == "offset")
        spec.mode = clnet::DatasetMode::offset;
    else
        throw clnet::ValidationError("data.mode must be center_aligned|offset, got '" + mode + "'");
    spec.dataset_seed = d.value("dataset_seed", 0);
    spec.size = split == clnet::Split::train ? d.value("train_size", 512) : d.value("eval_size", 128);
    spec.noise_sigma = d.value("noise_sigma", 0.02);
    spec.world_extent = d.value("world_extent", 64.0);
    spec.sizes.ground_h = enc.ground_input_hw.first;
    spec.sizes.ground_w = enc.ground_input_hw.second;
    spec.sizes.sat_h = enc.satellite_input_hw.first;
    spec.sizes.sat_w = enc.satellite_input_hw.second;
    spec.split = split;
    return spec;
}

std::unique_ptr<clnet::PairDataset> open_dataset(const json& cfg, const clnet::EncoderConfig& enc,
                                                 clnet::Split split) {
    const json& d = cfg.at("data");
    const std::string source = d.value("source", "synthetic");
    if (source == "synthetic")
        return std::make_unique<clnet::SyntheticDataset>(dataset_spec_from(cfg, enc, split));
    if (source == "directory") {
        const std::string root = d.value("root", "");
        if (root.empty()) throw clnet::ValidationError("data.root required for directory datasets");
        return std::make_unique<clnet::DirectoryDataset>(
            clnet::load_directory_dataset(root, d.value("manifest", "manifest.csv")));
    }
    throw clnet::ValidationError("data.source must be synthetic|directory, got '" + source + "'");
}

std::string iso_timestamp() {
    char buf[32];
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return std::string(buf);
}

int cmd_synth(const CommonOpts& common, const std::string& out_dir, int n, bool vigor, bool force,
              const std::string& split_name) {
    json cfg = resolve_config(common);
    apply_threads(cfg);
    if (n > 0) cfg["data"][split_name == "eval" ? "eval_size" : "train_size"] = n;
    if (vigor) cfg["data"]["mode"] = "offset";
    cfg["data"]["dataset_seed"] = cfg["seed"].get<int64_t>();

    if (fs::exists(out_dir) && !fs::is_empty(out_dir) && !force)
        throw clnet::ValidationError("output directory '" + out_dir +
                                     "' is not empty (pass --force to overwrite)");
    const clnet::EncoderConfig enc = clnet::encoder_from_json(cfg.at("encoder"));
    const clnet::Split split = split_name == "eval" ? clnet::Split::eval : clnet::Split::train;
    clnet::SyntheticDataset data(dataset_spec_from(cfg, enc, split));
    clnet::write_dataset(data, out_dir);
    std::cout << "wrote " << data.size() << " pairs to " << out_dir << "\n";
    return 0;
}

int cmd_train(const CommonOpts& common, const std::string& out_dir, const std::string& preset) {
    json cfg = resolve_config(common);
    apply_threads(cfg);
    if (!preset.empty()) cfg["train"]["preset"] = preset;
    cfg["data"]["dataset_seed"] = cfg["seed"].get<int64_t>();

    const clnet::EncoderConfig enc = clnet::encoder_from_json(cfg.at("encoder"));
    clnet::TrainConfig tc = clnet::TrainConfig::from_json(cfg.at("train"));
    tc.seed = cfg["seed"].get<uint64_t>();
    auto data = open_dataset(cfg, enc, clnet::Split::train);

    clnet::Model<float> model(enc, clnet::AblationPreset::from_id(tc.preset_id));
    const std::string hash = clnet::config_hash(cfg);
    clnet::TrainResult res = clnet::train(model, *data, tc, out_dir, hash);
    std::printf("trained preset %s for %lld steps; first loss %.4f, last loss %.4f\n",
                model.preset.name().c_str(), static_cast<long long>(res.total_steps),
                res.history.front().loss, res.history.back().loss);
    std::cout << "checkpoint: " << (fs::path(out_dir) / "checkpoint").string() << "\n";
    return 0;
}

int cmd_embed(const CommonOpts& common, const std::string& checkpoint, const std::string& view_s,
              const std::string& out_path, const std::string& data_root,
              const std::string& split_name) {
    json cfg = resolve_config(common);
    apply_threads(cfg);
    cfg["data"]["dataset_seed"] = cfg["seed"].get<int64_t>();
    if (!data_root.empty()) {
        cfg["data"]["source"] = "directory";
        cfg["data"]["root"] = data_root;
    }
    clnet::Model<float> model = clnet::load_checkpoint(checkpoint);
    const clnet::View view = clnet::view_from_string(view_s);
    auto data = open_dataset(cfg, model.cfg,
                             split_name == "train" ? clnet::Split::train : clnet::Split::eval);

    std::vector<clnet::Tensor3<float>> images;
    std::vector<std::string> ids;
    for (int i = 0; i < data->size(); ++i) {
        clnet::PairRecord rec = data->get(i);
        images.push_back(view == clnet::View::ground ? std::move(rec.ground)
                                                     : std::move(rec.satellite));
        ids.push_back(rec.pair_id);
    }
    clnet::EmbeddingMatrix m = clnet::embed_corpus(model, images, ids, view);
    clnet::write_embeddings(out_path, m);
    std::cout << "wrote " << m.data.rows << "x" << m.data.cols << " embeddings to " << out_path
              << "\n";
    return 0;
}

std::map<std::string, std::set<std::string>> semi_positive_map(const std::string& manifest_root,
                                                               const std::string& manifest_file,
                                                               bool include_self) {
    clnet::DirectoryDataset ds = clnet::load_directory_dataset(manifest_root, manifest_file);
    std::map<std::string, std::set<std::string>> out;
    for (const auto& row : ds.rows()) {
        std::set<std::string> s(row.semi_positive_ids.begin(), row.semi_positive_ids.end());
        if (include_self) s.insert(row.pair_id);
        out[row.pair_id] = std::move(s);
    }
    return out;
}

int cmd_eval(const CommonOpts& common, const std::string& queries_path, const std::string& refs_path,
             const std::string& out_path, bool want_hit_rate, bool want_ap,
             const std::string& manifest_root, const std::string& manifest_file) {
    json cfg = resolve_config(common);
    apply_threads(cfg);
    clnet::EmbeddingMatrix queries = clnet::read_embeddings(queries_path);
    clnet::EmbeddingMatrix refs = clnet::read_embeddings(refs_path);
    clnet::RetrievalResult result = clnet::rank_references(queries, refs);

    std::map<std::string, std::string> truth;
    for (const auto& id : queries.ids) truth[id] = id; // positive = same pair id

    clnet::MetricsReport report;
    report.recall_at_1 = clnet::recall_at_k(result, truth, 1);
    report.recall_at_5 = clnet::recall_at_k(result, truth, 5);
    report.recall_at_10 = clnet::recall_at_k(result, truth, 10);
    report.recall_at_1pct = clnet::recall_at_k(result, truth, clnet::top_percent_k(refs.data.rows));
    report.n_queries = queries.data.rows;
    report.n_references = refs.data.rows;
    report.config_hash = clnet::config_hash(cfg);
    report.timestamp = iso_timestamp();

    if (want_hit_rate || want_ap) {
        if (manifest_root.empty())
            throw clnet::ValidationError("--hit-rate/--ap need --manifest-root (for semi-positive ids)");
        auto positives = semi_positive_map(manifest_root, manifest_file, true);
        for (const auto& id : queries.ids) {
            auto it = positives.find(id);
            if (it == positives.end() || it->second.size() <= 1)
                throw clnet::ValidationError("manifest lacks semi-positive ids for query '" + id +
                                             "' (required by --hit-rate/--ap)");
        }
        if (want_hit_rate) report.hit_rate = clnet::hit_rate(result, positives);
        if (want_ap) report.average_precision = clnet::average_precision(result, positives);
    }

    const json j = report.to_json();
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        if (!out) throw clnet::IoError("cannot write report to '" + out_path + "'");
        out << j.dump(2) << "\n";
    }
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_viz(const CommonOpts& common, const std::string& checkpoint, int level,
            const std::string& view_s, const std::string& out_prefix, int upscale) {
    json cfg = resolve_config(common);
    apply_threads(cfg);
    if (level < 1 || level > 4)
        throw clnet::UsageError("viz level must be in 1..4, got " + std::to_string(level));
    clnet::Model<float> model = clnet::load_checkpoint(checkpoint);
    model.prepare(); // satellite maps via the converter

    auto write_one = [&](clnet::View v) {
        const auto& map = v == clnet::View::ground ? model.ground_maps[level - 1]
                                                   : model.satellite_maps[level - 1];
        clnet::Tensor3<float> img = clnet::render_heatmap(map.grid, level, upscale);
        const std::string path =
            out_prefix + "_" + clnet::view_name(v) + "_level" + std::to_string(level) + ".ppm";
        clnet::write_ppm(path, img);
        std::cout << "wrote " << path << "\n";
    };
    if (view_s == "both" || view_s == "ground") write_one(clnet::View::ground);
    if (view_s == "both" || view_s == "satellite") write_one(clnet::View::satellite);
    if (view_s != "both" && view_s != "ground" && view_s != "satellite")
        throw clnet::UsageError("viz view must be ground|satellite|both");
    return 0;
}

int cmd_ablate(const CommonOpts& common, const std::string& out_dir, const std::string& presets_s,
               const std::string& seeds_s) {
    json cfg = resolve_config(common);
    apply_threads(cfg);
    auto parse_list = [](const std::string& s) {
        std::vector<int> out;
        std::stringstream ss(s);
        std::string tok;
        while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
        if (out.empty()) throw clnet::UsageError("empty list");
        return out;
    };
    const std::vector<int> presets = parse_list(presets_s);
    const std::vector<int> seeds = parse_list(seeds_s);
    for (int p : presets) clnet::AblationPreset::from_id(p);

    const clnet::EncoderConfig enc = clnet::encoder_from_json(cfg.at("encoder"));
    fs::create_directories(out_dir);
    json summary = json::array();
    for (int seed : seeds) {
        json run_cfg = cfg;
        run_cfg["seed"] = seed;
        run_cfg["data"]["dataset_seed"] = seed;
        for (int preset : presets) {
            run_cfg["train"]["preset"] = std::to_string(preset);
            clnet::TrainConfig tc = clnet::TrainConfig::from_json(run_cfg.at("train"));
            tc.seed = static_cast<uint64_t>(seed);
            auto train_data = open_dataset(run_cfg, enc, clnet::Split::train);
            clnet::Model<float> model(enc, clnet::AblationPreset::from_id(preset));
            clnet::TrainResult res = clnet::train(model, *train_data, tc, "", "");

            auto eval_data = open_dataset(run_cfg, enc, clnet::Split::eval);
            std::vector<clnet::Tensor3<float>> g_imgs, s_imgs;
            std::vector<std::string> ids;
            for (int i = 0; i < eval_data->size(); ++i) {
                clnet::PairRecord rec = eval_data->get(i);
                g_imgs.push_back(std::move(rec.ground));
                s_imgs.push_back(std::move(rec.satellite));
                ids.push_back(rec.pair_id);
            }
            auto eq = clnet::embed_corpus(model, g_imgs, ids, clnet::View::ground);
            auto er = clnet::embed_corpus(model, s_imgs, ids, clnet::View::satellite);
            auto ranking = clnet::rank_references(eq, er);
            std::map<std::string, std::string> truth;
            for (const auto& id : ids) truth[id] = id;
            const double r1 = clnet::recall_at_k(ranking, truth, 1);
            const double r5 = clnet::recall_at_k(ranking, truth, 5);
            std::printf("preset %d seed %d: R@1 %.4f R@5 %.4f (final loss %.4f)\n", preset, seed,
                        r1, r5, res.history.back().loss);
            summary.push_back({{"preset", preset},
                               {"seed", seed},
                               {"recall_at_1", r1},
                               {"recall_at_5", r5},
                               {"final_loss", res.history.back().loss}});
        }
    }
    std::ofstream out(fs::path(out_dir) / "ablation_summary.json");
    out << summary.dump(2) << "\n";
    std::cout << "wrote " << (fs::path(out_dir) / "ablation_summary.json").string() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"clnet: cross-view correspondence learning on synthetic paired views"};
    app.require_subcommand(1);

    CommonOpts common;

    auto* synth = app.add_subcommand("synth", "Generate a synthetic pair dataset on disk");
    std::string synth_out = "dataset";
    int synth_n = 0;
    bool synth_vigor = false, synth_force = false;
    std::string synth_split = "train";
    add_common(synth, common);
    synth->add_option("--out", synth_out, "Output directory")->capture_default_str();
    synth->add_option("--n", synth_n, "Number of pairs (0 = config value) [default: 0]");
    synth->add_flag("--vigor", synth_vigor, "Offset mode: 4 overlapping crops per scene");
    synth->add_flag("--force", synth_force, "Allow writing into a non-empty directory");
    synth->add_option("--split", synth_split, "Dataset split: train|eval")->capture_default_str();

    auto* train = app.add_subcommand("train", "Train a model, write checkpoint + loss CSV");
    std::string train_out = "run";
    std::string train_preset;
    add_common(train, common);
    train->add_option("--out", train_out, "Output directory")->capture_default_str();
    train->add_option("--preset", train_preset, "Ablation preset 1..6 or 'full'");

    auto* embed = app.add_subcommand("embed", "Embed a corpus with a trained checkpoint");
    std::string embed_ckpt, embed_view = "ground", embed_out = "embeddings.bin";
    std::string embed_data_root, embed_split = "eval";
    add_common(embed, common);
    embed->add_option("--checkpoint", embed_ckpt, "Checkpoint directory")->required();
    embed->add_option("--view", embed_view, "View to embed: ground|satellite")->capture_default_str();
    embed->add_option("--out", embed_out, "Output embedding file")->capture_default_str();
    embed->add_option("--data-root", embed_data_root, "Directory dataset root (default: synthetic)");
    embed->add_option("--split", embed_split, "Synthetic split: train|eval")->capture_default_str();

    auto* eval = app.add_subcommand("eval", "Rank references for queries and report metrics");
    std::string eval_queries, eval_refs, eval_out;
    bool eval_hit = false, eval_ap = false;
    std::string eval_manifest_root, eval_manifest = "manifest.csv";
    add_common(eval, common);
    eval->add_option("--queries", eval_queries, "Query embedding file")->required();
    eval->add_option("--refs", eval_refs, "Reference embedding file")->required();
    eval->add_option("--out", eval_out, "Metrics report JSON path (also printed)");
    eval->add_flag("--hit-rate", eval_hit, "Report Hit Rate (needs semi-positive ids)");
    eval->add_flag("--ap", eval_ap, "Report average precision over positive+semi-positive sets");
    eval->add_option("--manifest-root", eval_manifest_root, "Dataset dir with the pair manifest");
    eval->add_option("--manifest", eval_manifest, "Manifest file name")->capture_default_str();

    auto* viz = app.add_subcommand("viz", "Export neural-map heatmaps from a checkpoint");
    std::string viz_ckpt, viz_view = "both", viz_out = "neural_map";
    int viz_level = 1, viz_upscale = 8;
    add_common(viz, common);
    viz->add_option("--checkpoint", viz_ckpt, "Checkpoint directory")->required();
    viz->add_option("--level", viz_level, "Feature level 1..4")->capture_default_str();
    viz->add_option("--view", viz_view, "ground|satellite|both")->capture_default_str();
    viz->add_option("--out", viz_out, "Output path prefix")->capture_default_str();
    viz->add_option("--upscale", viz_upscale, "Nearest-neighbor upscale factor")->capture_default_str();

    auto* ablate = app.add_subcommand("ablate", "Train+evaluate a preset/seed grid");
    std::string ablate_out = "ablation", ablate_presets = "1,3,5", ablate_seeds = "0,1,2";
    add_common(ablate, common);
    ablate->add_option("--out", ablate_out, "Output directory")->capture_default_str();
    ablate->add_option("--presets", ablate_presets, "Comma-separated preset ids")->capture_default_str();
    ablate->add_option("--seeds", ablate_seeds, "Comma-separated seeds")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) return app.exit(e);
        std::cerr << "clnet: error[usage]: " << e.what() << "\n";
        return 2;
    }

    try {
        if (*synth) return cmd_synth(common, synth_out, synth_n, synth_vigor, synth_force, synth_split);
        if (*train) return cmd_train(common, train_out, train_preset);
        if (*embed) return cmd_embed(common, embed_ckpt, embed_view, embed_out, embed_data_root, embed_split);
        if (*eval) return cmd_eval(common, eval_queries, eval_refs, eval_out, eval_hit, eval_ap,
                                   eval_manifest_root, eval_manifest);
        if (*viz) return cmd_viz(common, viz_ckpt, viz_level, viz_view, viz_out, viz_upscale);
        if (*ablate) return cmd_ablate(common, ablate_out, ablate_presets, ablate_seeds);
    } catch (const clnet::UsageError& e) {
        std::cerr << "clnet: error[usage]: " << e.what() << "\n";
        return 2;
    } catch (const clnet::NumericError& e) {
        std::cerr << "clnet: error[numeric]: " << e.what() << "\n";
        return 4;
    } catch (const clnet::ConfigError& e) {
        std::cerr << "clnet: error[config]: " << e.what() << "\n";
        return 3;
    } catch (const clnet::ValidationError& e) {
        std::cerr << "clnet: error[validation]: " << e.what() << "\n";
        return 3;
    } catch (const clnet::IoError& e) {
        std::cerr << "clnet: error[io]: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "clnet: error[internal]: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
