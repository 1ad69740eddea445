#include "clnet/evaluator.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>

#include "clnet/errors.hpp"

namespace clnet {

void EmbeddingMatrix::validate() const {
    if (static_cast<int>(ids.size()) != data.rows)
        throw ValidationError("embedding matrix: id count does not match row count");
    std::set<std::string> seen;
    for (const auto& id : ids)
        if (!seen.insert(id).second)
            throw ValidationError("embedding matrix: duplicate id '" + id + "'");
    for (int i = 0; i < data.rows; ++i) {
        double n2 = 0;
        for (int d = 0; d < data.cols; ++d) n2 += double(data.at(i, d)) * data.at(i, d);
        const double n = std::sqrt(n2);
        if (std::fabs(n - 1.0) > 1e-5)
            throw ValidationError("embedding matrix: row '" + ids[static_cast<size_t>(i)] +
                                  "' has norm " + std::to_string(n) + " (expected 1 +- 1e-5)");
    }
}

EmbeddingMatrix embed_corpus(Model<float>& model, const std::vector<Tensor3<float>>& images,
                             const std::vector<std::string>& ids, View view) {
    if (images.size() != ids.size()) throw ConfigError("embed_corpus: images/ids size mismatch");
    model.prepare();
    EmbeddingMatrix out;
    out.ids = ids;
    out.data = Matrix<float>(static_cast<int>(images.size()), model.cfg.embedding_dim);
    auto [eh, ew] = model.cfg.input_hw(view);
    for (size_t i = 0; i < images.size(); ++i) {
        if (images[i].h != eh || images[i].w != ew || images[i].c != 3)
            throw ConfigError("embed_corpus: image " + std::to_string(i) + " ('" + ids[i] +
                              "') is " + images[i].shape_str() + ", expected " +
                              std::to_string(eh) + "x" + std::to_string(ew) + "x3");
        auto res = model.forward_view(images[i], view);
        std::copy(res.embedding.begin(), res.embedding.end(), out.data.row(static_cast<int>(i)));
    }
    out.validate();
    return out;
}

int RetrievalResult::rank_of(int query_index, const std::string& ref_id) const {
    const auto& ord = order[static_cast<size_t>(query_index)];
    for (size_t pos = 0; pos < ord.size(); ++pos)
        if (ref_ids[static_cast<size_t>(ord[pos])] == ref_id) return static_cast<int>(pos) + 1;
    throw ValidationError("reference '" + ref_id + "' not present in ranking");
}

RetrievalResult rank_from_similarities(const Matrix<float>& sims,
                                       const std::vector<std::string>& query_ids,
                                       const std::vector<std::string>& ref_ids) {
    if (sims.rows != static_cast<int>(query_ids.size()) ||
        sims.cols != static_cast<int>(ref_ids.size()))
        throw ConfigError("rank_from_similarities: shape mismatch");
    RetrievalResult res;
    res.query_ids = query_ids;
    res.ref_ids = ref_ids;
    res.order.assign(query_ids.size(), {});
    const int nq = sims.rows, nr = sims.cols;
#if defined(_OPENMP)
#pragma omp parallel for schedule(static)
#endif
    for (int q = 0; q < nq; ++q) {
        std::vector<int> idx(static_cast<size_t>(nr));
        std::iota(idx.begin(), idx.end(), 0);
        const float* row = sims.row(q);
        std::sort(idx.begin(), idx.end(), [&](int a, int b) {
            if (row[a] != row[b]) return row[a] > row[b];
            return ref_ids[static_cast<size_t>(a)] < ref_ids[static_cast<size_t>(b)];
        });
        res.order[static_cast<size_t>(q)] = std::move(idx);
    }
    return res;
}

RetrievalResult rank_references(const EmbeddingMatrix& queries, const EmbeddingMatrix& refs) {
    if (queries.data.cols != refs.data.cols)
        throw ConfigError("rank_references: embedding dim mismatch (" +
                          std::to_string(queries.data.cols) + " vs " +
                          std::to_string(refs.data.cols) + ")");
    Matrix<float> sims(queries.data.rows, refs.data.rows);
    kernels::similarity(queries.data, refs.data, sims);
    return rank_from_similarities(sims, queries.ids, refs.ids);
}

double recall_at_k(const RetrievalResult& result,
                   const std::map<std::string, std::string>& truth, int k) {
    if (k < 1) throw ConfigError("recall_at_k: k must be >= 1");
    if (result.order.empty()) throw ConfigError("recall_at_k: empty result");
    int hits = 0;
    for (size_t q = 0; q < result.query_ids.size(); ++q) {
        auto it = truth.find(result.query_ids[q]);
        if (it == truth.end())
            throw ValidationError("recall_at_k: no ground truth for query '" +
                                  result.query_ids[q] + "'");
        if (result.rank_of(static_cast<int>(q), it->second) <= k) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(result.query_ids.size());
}

double hit_rate(const RetrievalResult& result,
                const std::map<std::string, std::set<std::string>>& positives) {
    if (result.order.empty()) throw ConfigError("hit_rate: empty result");
    int hits = 0;
    for (size_t q = 0; q < result.query_ids.size(); ++q) {
        auto it = positives.find(result.query_ids[q]);
        if (it == positives.end() || it->second.empty())
            throw ValidationError("hit_rate: empty positive set for query '" +
                                  result.query_ids[q] + "'");
        const std::string& top1 = result.ref_ids[static_cast<size_t>(result.order[q][0])];
        if (it->second.count(top1)) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(result.query_ids.size());
}

double average_precision(const RetrievalResult& result,
                         const std::map<std::string, std::set<std::string>>& relevant) {
    if (result.order.empty()) throw ConfigError("average_precision: empty result");
    double total = 0;
    for (size_t q = 0; q < result.query_ids.size(); ++q) {
        auto it = relevant.find(result.query_ids[q]);
        if (it == relevant.end() || it->second.empty())
            throw ValidationError("average_precision: empty relevant set for query '" +
                                  result.query_ids[q] + "'");
        const auto& rel = it->second;
        const auto& ord = result.order[q];
        int found = 0;
        double ap = 0;
        for (size_t pos = 0; pos < ord.size(); ++pos) {
            if (rel.count(result.ref_ids[static_cast<size_t>(ord[pos])])) {
                ++found;
                ap += static_cast<double>(found) / static_cast<double>(pos + 1);
            }
        }
        if (found != static_cast<int>(rel.size()))
            throw ValidationError("average_precision: relevant reference missing from ranking "
                                  "for query '" + result.query_ids[q] + "'");
        total += ap / static_cast<double>(rel.size());
    }
    return total / static_cast<double>(result.query_ids.size());
}

void write_embeddings(const std::string& path, const EmbeddingMatrix& m) {
    m.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write embeddings to '" + path + "'");
    out.write("EMB1", 4);
    const uint32_t n = static_cast<uint32_t>(m.data.rows);
    const uint32_t d = static_cast<uint32_t>(m.data.cols);
    out.write(reinterpret_cast<const char*>(&n), 4);
    out.write(reinterpret_cast<const char*>(&d), 4);
    out.write(reinterpret_cast<const char*>(m.data.data()),
              static_cast<std::streamsize>(m.data.size() * sizeof(float)));
    for (const auto& id : m.ids) out << id << "\n";
    if (!out) throw IoError("failed writing embeddings to '" + path + "'");
}

EmbeddingMatrix read_embeddings(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open embedding file '" + path + "'");
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, "EMB1", 4) != 0)
        throw ValidationError("'" + path + "': bad magic (expected EMB1)");
    uint32_t n = 0, d = 0;
    in.read(reinterpret_cast<char*>(&n), 4);
    in.read(reinterpret_cast<char*>(&d), 4);
    if (!in || n == 0 || d == 0)
        throw ValidationError("'" + path + "': bad embedding header");
    EmbeddingMatrix m;
    m.data = Matrix<float>(static_cast<int>(n), static_cast<int>(d));
    in.read(reinterpret_cast<char*>(m.data.data()),
            static_cast<std::streamsize>(m.data.size() * sizeof(float)));
    if (in.gcount() != static_cast<std::streamsize>(m.data.size() * sizeof(float)))
        throw ValidationError("'" + path + "': truncated embedding payload");
    std::string id;
    for (uint32_t i = 0; i < n; ++i) {
        if (!std::getline(in, id))
            throw ValidationError("'" + path + "': missing id strings");
        m.ids.push_back(id);
    }
    m.validate();
    return m;
}

nlohmann::json MetricsReport::to_json() const {
    nlohmann::json j{
        {"recall_at_1", recall_at_1},
        {"recall_at_5", recall_at_5},
        {"recall_at_10", recall_at_10},
        {"recall_at_1pct", recall_at_1pct},
        {"n_queries", n_queries},
        {"n_references", n_references},
        {"config_hash", config_hash},
        {"timestamp", timestamp},
    };
    if (hit_rate) j["hit_rate"] = *hit_rate;
    if (average_precision) j["average_precision"] = *average_precision;
    return j;
}

} // namespace clnet
