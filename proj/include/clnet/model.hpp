#pragma once

// Two-branch encoder with per-level feature refinement. The refinement
// wiring is controlled by an ablation preset:
//
//   id  norm  residual weight source  converter
//   #1   -    none     neural map     -          f' = f . N
//   #2   -    none     neural map     yes        f' = f . N
//   #3   -    f        neural map     yes        f' = f . N + f
//   #4   -    f        feature map    yes        f' = f . f + f
//   #5  yes   f        neural map     yes        f' = f . N' + f   (full model)
//   #6  yes   f        feature map    yes        f' = f . s(f^) + f
//
// N' / s(.) is the per-channel l2 + spatial softmax normalization. Refined
// features feed the next stage. Satellite maps come from the converter
// whenever it is enabled; only preset #1 learns them directly.

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "clnet/correspondence.hpp"
#include "clnet/encoder.hpp"
#include "clnet/errors.hpp"
#include "clnet/objective.hpp"

namespace clnet {

enum class GfrResidualSource { none, neural_map, feature_map };

struct AblationPreset {
    int id = 5;
    bool use_gfr = true;
    bool use_norm = true;
    GfrResidualSource residual_source = GfrResidualSource::neural_map;
    bool use_nec = true;

    bool has_residual() const { return residual_source != GfrResidualSource::none; }
    bool weight_from_feature() const { return residual_source == GfrResidualSource::feature_map; }

    static AblationPreset from_id(int id) {
        switch (id) {
        case 1: return {1, true, false, GfrResidualSource::none, false};
        case 2: return {2, true, false, GfrResidualSource::none, true};
        case 3: return {3, true, false, GfrResidualSource::neural_map, true};
        case 4: return {4, true, false, GfrResidualSource::feature_map, true};
        case 5: return {5, true, true, GfrResidualSource::neural_map, true};
        case 6: return {6, true, true, GfrResidualSource::feature_map, true};
        default:
            throw UsageError("unknown ablation preset " + std::to_string(id) +
                             " (expected 1..6 or 'full')");
        }
    }

    static AblationPreset from_string(const std::string& s) {
        if (s == "full") return from_id(5);
        try {
            size_t pos = 0;
            const int id = std::stoi(s, &pos);
            if (pos == s.size()) return from_id(id);
        } catch (const std::exception&) {
        }
        throw UsageError("unknown ablation preset '" + s + "' (expected 1..6 or 'full')");
    }

    std::string name() const { return id == 5 ? "full(#5)" : "#" + std::to_string(id); }
};

template <typename T>
struct ModelGrads {
    std::array<StageGrads<T>, kNumStages> stage_g, stage_s;
    std::array<Tensor3<T>, kNumStages> gweight_g, gweight_s; // dL/d(map weight tensor)
    std::array<Tensor3<T>, kNumStages> gmap_ground;
    std::array<Tensor3<T>, kNumStages> gmap_sat_free;
    std::array<NecGrads<T>, kNumStages> gnec;
};

// Per-sample activations kept for the backward pass.
template <typename T>
struct FwdCache {
    View view = View::ground;
    Tensor3<T> image;
    std::array<Tensor3<T>, kNumStages> pre;     // conv pre-activation
    std::array<Tensor3<T>, kNumStages> feat;    // post-GELU
    std::array<Tensor3<T>, kNumStages> refined; // post-refinement
    std::array<NormalizedMap<T>, kNumStages> feat_norm; // feature self-weighting, norm on
    std::vector<T> embedding;
    T embed_norm = T(0);
};

template <typename T>
struct ForwardResult {
    std::array<Tensor3<T>, kNumStages> pyramid; // refined grids, levels 1..4
    std::vector<T> embedding;
};

template <typename T>
class Model {
public:
    EncoderConfig cfg;
    AblationPreset preset;
    Branch<T> branch_ground, branch_satellite;
    std::array<ViewNeuralMap<T>, kNumStages> ground_maps;
    std::array<ViewNeuralMap<T>, kNumStages> satellite_maps; // converter output or free params
    NecParams<T> nec;

    Model() = default;
    Model(const EncoderConfig& config, const AblationPreset& p) : cfg(config), preset(p) {
        cfg.validate();
    }

    Branch<T>& branch(View v) {
        return (v == View::ground || cfg.shared_weights) ? branch_ground : branch_satellite;
    }
    const Branch<T>& branch(View v) const {
        return (v == View::ground || cfg.shared_weights) ? branch_ground : branch_satellite;
    }

    void init(uint64_t seed) {
        branch_ground = init_branch<T>(cfg, View::ground, seed);
        if (!cfg.shared_weights) branch_satellite = init_branch<T>(cfg, View::satellite, seed);
        for (int lv = 1; lv <= kNumStages; ++lv) {
            auto gs = cfg.stage_shape(View::ground, lv);
            ground_maps[lv - 1] = init_neural_map<T>(lv, View::ground, gs[0], gs[1], gs[2], seed);
            auto ss = cfg.stage_shape(View::satellite, lv);
            if (preset.use_nec) {
                nec.levels.push_back(init_nec_level<T>(lv, gs[0], gs[1], ss[0], ss[1], seed));
            } else {
                satellite_maps[lv - 1] =
                    init_neural_map<T>(lv, View::satellite, ss[0], ss[1], ss[2], seed);
            }
        }
        mark_dirty();
    }

    // Recomputes the satellite maps and the map-weight caches. Must run
    // after every parameter update; forward_view calls it on demand.
    void prepare() {
        if (preset.use_nec)
            for (int i = 0; i < kNumStages; ++i)
                satellite_maps[i] = nec_forward(ground_maps[i], nec, &nec_caches_[i]);
        if (preset.use_gfr && !preset.weight_from_feature()) {
            for (int i = 0; i < kNumStages; ++i) {
                if (preset.use_norm) {
                    map_norm_g_[i] = normalize_map(ground_maps[i]);
                    map_norm_s_[i] = normalize_map(satellite_maps[i]);
                    weight_g_[i] = map_norm_g_[i].grid;
                    weight_s_[i] = map_norm_s_[i].grid;
                } else {
                    weight_g_[i] = ground_maps[i].grid;
                    weight_s_[i] = satellite_maps[i].grid;
                }
            }
        }
        prepared_ = true;
    }

    void mark_dirty() { prepared_ = false; }
    bool prepared() const { return prepared_; }

    ForwardResult<T> forward_view(const Tensor3<T>& image, View v, FwdCache<T>* cache = nullptr) {
        if (!prepared_) prepare();
        auto [eh, ew] = cfg.input_hw(v);
        if (image.h != eh || image.w != ew || image.c != 3)
            throw ConfigError("forward_view(" + std::string(view_name(v)) + "): image " +
                              image.shape_str() + " does not match configured input " +
                              std::to_string(eh) + "x" + std::to_string(ew) + "x3");
        const Branch<T>& br = branch(v);
        FwdCache<T> local;
        FwdCache<T>& cc = cache ? *cache : local;
        cc.view = v;
        cc.image = image;

        const Tensor3<T>* cur = &cc.image;
        for (int i = 0; i < kNumStages; ++i) {
            cc.feat[i] = encode_stage(*cur, i + 1, v, br.stages[i], &cc.pre[i]);
            cc.refined[i] = refine_forward(cc.feat[i], v, i, cc);
            cur = &cc.refined[i];
        }
        cc.embedding = pool_and_normalize(cc.refined[kNumStages - 1], &cc.embed_norm);

        ForwardResult<T> res;
        res.pyramid = cc.refined;
        res.embedding = cc.embedding;
        return res;
    }

    // Accumulates parameter gradients for one sample given dL/d(embedding).
    // Map-weight and converter chains are closed out once per batch by
    // finish_backward.
    void backward_view(const FwdCache<T>& cc, const std::vector<T>& gembed, ModelGrads<T>& grads) {
        const View v = cc.view;
        const Branch<T>& br = branch(v);
        auto& stage_grads = (v == View::ground || cfg.shared_weights) ? grads.stage_g : grads.stage_s;

        Tensor3<T> grefined = pool_and_normalize_backward(
            gembed, cc.embedding, cc.embed_norm, cc.refined[kNumStages - 1].h,
            cc.refined[kNumStages - 1].w);
        for (int i = kNumStages - 1; i >= 0; --i) {
            Tensor3<T> gfeat = refine_backward(grefined, v, i, cc, grads);
            const Tensor3<T>& input = (i == 0) ? cc.image : cc.refined[i - 1];
            grefined = encode_stage_backward(input, cc.pre[i], gfeat, br.stages[i], stage_grads[i]);
        }
    }

    // Chains the per-batch accumulated weight gradients through the map
    // normalization and the converter into the actual parameters.
    void finish_backward(ModelGrads<T>& grads) {
        if (!preset.use_gfr || preset.weight_from_feature()) return;
        for (int i = 0; i < kNumStages; ++i) {
            if (grads.gweight_g[i].size() > 0) {
                Tensor3<T> gmap =
                    preset.use_norm
                        ? normalize_map_backward(ground_maps[i].grid, map_norm_g_[i],
                                                 grads.gweight_g[i])
                        : grads.gweight_g[i];
                accumulate(grads.gmap_ground[i], gmap);
            }
            if (grads.gweight_s[i].size() > 0) {
                Tensor3<T> gmap =
                    preset.use_norm
                        ? normalize_map_backward(satellite_maps[i].grid, map_norm_s_[i],
                                                 grads.gweight_s[i])
                        : grads.gweight_s[i];
                if (preset.use_nec) {
                    Tensor3<T> gground =
                        nec_backward(nec.level(i + 1), nec_caches_[i], gmap, grads.gnec[i]);
                    accumulate(grads.gmap_ground[i], gground);
                } else {
                    accumulate(grads.gmap_sat_free[i], gmap);
                }
            }
        }
    }

    const Tensor3<T>& map_weight(View v, int idx) const {
        return v == View::ground ? weight_g_[idx] : weight_s_[idx];
    }

private:
    void check_map(const ViewNeuralMap<T>& map, const Tensor3<T>& f, View v, int idx) const {
        if (map.grid.size() == 0)
            throw ConfigError("missing " + std::string(view_name(v)) + " neural map for level " +
                              std::to_string(idx + 1));
        if (!map.grid.same_shape(f))
            throw ConfigError("neural map level " + std::to_string(idx + 1) + " (" +
                              view_name(v) + ") has shape " + map.grid.shape_str() +
                              ", feature grid is " + f.shape_str());
    }

    Tensor3<T> refine_forward(const Tensor3<T>& f, View v, int idx, FwdCache<T>& cc) {
        if (!preset.use_gfr) return f;
        const int total = static_cast<int>(f.size());
        Tensor3<T> out(f.h, f.w, f.c);
        const T res = preset.has_residual() ? T(1) : T(0);
        if (preset.weight_from_feature()) {
            if (preset.use_norm) {
                cc.feat_norm[idx].grid = Tensor3<T>(f.h, f.w, f.c);
                cc.feat_norm[idx].scales.assign(static_cast<size_t>(f.c), T(1));
                kernels::channel_l2_softmax(f, true, cc.feat_norm[idx].grid,
                                            cc.feat_norm[idx].scales);
                const Tensor3<T>& n = cc.feat_norm[idx].grid;
#if defined(_OPENMP)
#pragma omp parallel for schedule(static)
#endif
                for (int i = 0; i < total; ++i) out.v[i] = f.v[i] * n.v[i] + res * f.v[i];
            } else {
#if defined(_OPENMP)
#pragma omp parallel for schedule(static)
#endif
                for (int i = 0; i < total; ++i) out.v[i] = f.v[i] * f.v[i] + res * f.v[i];
            }
        } else {
            const auto& map = v == View::ground ? ground_maps[idx] : satellite_maps[idx];
            check_map(map, f, v, idx);
            const Tensor3<T>& w = v == View::ground ? weight_g_[idx] : weight_s_[idx];
#if defined(_OPENMP)
#pragma omp parallel for schedule(static)
#endif
            for (int i = 0; i < total; ++i) out.v[i] = f.v[i] * w.v[i] + res * f.v[i];
        }
        return out;
    }

    Tensor3<T> refine_backward(const Tensor3<T>& gout, View v, int idx, const FwdCache<T>& cc,
                               ModelGrads<T>& grads) {
        if (!preset.use_gfr) return gout;
        const Tensor3<T>& f = cc.feat[idx];
        const int total = static_cast<int>(f.size());
        Tensor3<T> gf(f.h, f.w, f.c);
        const T res = preset.has_residual() ? T(1) : T(0);
        if (preset.weight_from_feature()) {
            if (preset.use_norm) {
                // f' = f.n(f) + f: direct term plus the chain through n.
                const NormalizedMap<T>& nm = cc.feat_norm[idx];
                Tensor3<T> gn(f.h, f.w, f.c);
#if defined(_OPENMP)
#pragma omp parallel for schedule(static)
#endif
                for (int i = 0; i < total; ++i) {
                    gn.v[i] = gout.v[i] * f.v[i];
                    gf.v[i] = gout.v[i] * (nm.grid.v[i] + res);
                }
                Tensor3<T> gchain(f.h, f.w, f.c);
                kernels::channel_l2_softmax_backward(f, nm.grid, nm.scales, true, gn, gchain);
                for (int i = 0; i < total; ++i) gf.v[i] += gchain.v[i];
            } else {
#if defined(_OPENMP)
#pragma omp parallel for schedule(static)
#endif
                for (int i = 0; i < total; ++i) gf.v[i] = gout.v[i] * (T(2) * f.v[i] + res);
            }
        } else {
            const Tensor3<T>& w = v == View::ground ? weight_g_[idx] : weight_s_[idx];
            auto& gw_accum = v == View::ground ? grads.gweight_g[idx] : grads.gweight_s[idx];
            if (gw_accum.size() == 0) gw_accum = Tensor3<T>(f.h, f.w, f.c);
#if defined(_OPENMP)
#pragma omp parallel for schedule(static)
#endif
            for (int i = 0; i < total; ++i) {
                gf.v[i] = gout.v[i] * (w.v[i] + res);
                gw_accum.v[i] += gout.v[i] * f.v[i];
            }
        }
        return gf;
    }

    static void accumulate(Tensor3<T>& dst, const Tensor3<T>& src) {
        if (dst.size() == 0) dst = Tensor3<T>(src.h, src.w, src.c);
        for (size_t i = 0; i < src.size(); ++i) dst.v[i] += src.v[i];
    }

    bool prepared_ = false;
    std::array<NecCache<T>, kNumStages> nec_caches_;
    std::array<NormalizedMap<T>, kNumStages> map_norm_g_, map_norm_s_;
    std::array<Tensor3<T>, kNumStages> weight_g_, weight_s_;
};

// Named views over every trainable parameter, in a fixed order shared by
// the optimizer and the checkpoint format.
template <typename T>
struct TensorRef {
    std::string name;
    T* data;
    size_t size;
    std::vector<int> shape;
};

template <typename T>
std::vector<TensorRef<T>> model_parameters(Model<T>& m) {
    std::vector<TensorRef<T>> out;
    auto add_branch = [&](Branch<T>& br, const std::string& prefix) {
        for (int i = 0; i < kNumStages; ++i) {
            StageParams<T>& st = br.stages[i];
            out.push_back({prefix + ".stage" + std::to_string(i + 1) + ".weight", st.w.data(),
                           st.w.size(), {kConvKernel, kConvKernel, st.cin, st.cout}});
            out.push_back({prefix + ".stage" + std::to_string(i + 1) + ".bias", st.b.data(),
                           st.b.size(), {st.cout}});
        }
    };
    add_branch(m.branch_ground, "encoder.ground");
    if (!m.cfg.shared_weights) add_branch(m.branch_satellite, "encoder.satellite");
    for (int i = 0; i < kNumStages; ++i) {
        auto& g = m.ground_maps[i].grid;
        out.push_back({"map.ground.level" + std::to_string(i + 1), g.data(), g.size(),
                       {g.h, g.w, g.c}});
    }
    if (m.preset.use_nec) {
        for (int i = 0; i < kNumStages; ++i) {
            NecLevel<T>& l = m.nec.levels[i];
            const std::string p = "nec.level" + std::to_string(i + 1);
            out.push_back({p + ".w1", l.w1.data(), l.w1.size(), {l.w1.rows, l.w1.cols}});
            out.push_back({p + ".b1", l.b1.data(), l.b1.size(), {static_cast<int>(l.b1.size())}});
            out.push_back({p + ".w2", l.w2.data(), l.w2.size(), {l.w2.rows, l.w2.cols}});
            out.push_back({p + ".b2", l.b2.data(), l.b2.size(), {static_cast<int>(l.b2.size())}});
        }
    } else {
        for (int i = 0; i < kNumStages; ++i) {
            auto& g = m.satellite_maps[i].grid;
            out.push_back({"map.satellite.level" + std::to_string(i + 1), g.data(), g.size(),
                           {g.h, g.w, g.c}});
        }
    }
    return out;
}

// Gradient views aligned one-to-one with model_parameters. Any grad buffer
// left unallocated (an untouched path) is exposed as empty so callers can
// treat it as zero.
template <typename T>
std::vector<TensorRef<T>> model_gradients(Model<T>& m, ModelGrads<T>& g) {
    std::vector<TensorRef<T>> out;
    auto add_stage_grads = [&](std::array<StageGrads<T>, kNumStages>& sg, const std::string& prefix) {
        for (int i = 0; i < kNumStages; ++i) {
            out.push_back({prefix + ".stage" + std::to_string(i + 1) + ".weight",
                           sg[i].gw.data(), sg[i].gw.size(), {}});
            out.push_back({prefix + ".stage" + std::to_string(i + 1) + ".bias", sg[i].gb.data(),
                           sg[i].gb.size(), {}});
        }
    };
    add_stage_grads(g.stage_g, "encoder.ground");
    if (!m.cfg.shared_weights) add_stage_grads(g.stage_s, "encoder.satellite");
    for (int i = 0; i < kNumStages; ++i)
        out.push_back({"map.ground.level" + std::to_string(i + 1), g.gmap_ground[i].data(),
                       g.gmap_ground[i].size(), {}});
    if (m.preset.use_nec) {
        for (int i = 0; i < kNumStages; ++i) {
            const std::string p = "nec.level" + std::to_string(i + 1);
            out.push_back({p + ".w1", g.gnec[i].gw1.data(), g.gnec[i].gw1.size(), {}});
            out.push_back({p + ".b1", g.gnec[i].gb1.data(), g.gnec[i].gb1.size(), {}});
            out.push_back({p + ".w2", g.gnec[i].gw2.data(), g.gnec[i].gw2.size(), {}});
            out.push_back({p + ".b2", g.gnec[i].gb2.data(), g.gnec[i].gb2.size(), {}});
        }
    } else {
        for (int i = 0; i < kNumStages; ++i)
            out.push_back({"map.satellite.level" + std::to_string(i + 1),
                           g.gmap_sat_free[i].data(), g.gmap_sat_free[i].size(), {}});
    }
    return out;
}

// Forward both views of a batch, apply the contrastive loss and, when grads
// is non-null, backpropagate into every parameter. Shared by the trainer
// and the finite-difference checks.
template <typename T>
T batch_loss(Model<T>& model, const std::vector<Tensor3<T>>& ground_images,
             const std::vector<Tensor3<T>>& satellite_images, T tau, LossDirection dir,
             ModelGrads<T>* grads = nullptr, T* dlogtau = nullptr) {
    const int b = static_cast<int>(ground_images.size());
    if (static_cast<int>(satellite_images.size()) != b)
        throw ConfigError("batch_loss: ground/satellite batch size mismatch");
    model.prepare();

    std::vector<FwdCache<T>> cache_g(grads ? b : 0), cache_s(grads ? b : 0);
    Matrix<T> eg(b, model.cfg.embedding_dim), es(b, model.cfg.embedding_dim);
    for (int i = 0; i < b; ++i) {
        FwdCache<T> tmp_g, tmp_s;
        FwdCache<T>& cg = grads ? cache_g[i] : tmp_g;
        FwdCache<T>& cs = grads ? cache_s[i] : tmp_s;
        auto rg = model.forward_view(ground_images[i], View::ground, &cg);
        auto rs = model.forward_view(satellite_images[i], View::satellite, &cs);
        for (int d = 0; d < model.cfg.embedding_dim; ++d) {
            eg.at(i, d) = rg.embedding[d];
            es.at(i, d) = rs.embedding[d];
        }
    }
    Matrix<T> sim = similarity_matrix(eg, es);
    InfoNceCache<T> nce_cache;
    const T loss = info_nce(sim, tau, dir, grads ? &nce_cache : nullptr);
    if (!grads) return loss;

    T dtau = T(0);
    Matrix<T> gsim = info_nce_backward(sim, tau, dir, nce_cache, dlogtau ? &dtau : nullptr);
    if (dlogtau) *dlogtau = dtau * tau; // optimize log(tau)

    // dL/dE_g = G * E_s, dL/dE_s = G^T * E_g.
    for (int i = 0; i < b; ++i) {
        std::vector<T> ge(model.cfg.embedding_dim, T(0)), gs(model.cfg.embedding_dim, T(0));
        for (int j = 0; j < b; ++j) {
            const T gij = gsim.at(i, j);
            const T gji = gsim.at(j, i);
            for (int d = 0; d < model.cfg.embedding_dim; ++d) {
                ge[d] += gij * es.at(j, d);
                gs[d] += gji * eg.at(j, d);
            }
        }
        model.backward_view(cache_g[i], ge, *grads);
        model.backward_view(cache_s[i], gs, *grads);
    }
    model.finish_backward(*grads);
    return loss;
}

} // namespace clnet
