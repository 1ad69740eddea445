#pragma once

// Exhaustive retrieval evaluation: unit-norm embedding matrices, dot-product
// ranking with deterministic tie-breaks, and the Recall@k / Hit Rate / AP
// metrics.
//
// Embedding file format: magic "EMB1", u32 count, u32 dim, count*dim
// little-endian float32 row-major, then count newline-terminated id strings.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "clnet/model.hpp"
#include "clnet/tensor.hpp"

#include "json.hpp"

namespace clnet {

struct EmbeddingMatrix {
    Matrix<float> data;           // N x D, rows unit-norm within 1e-5
    std::vector<std::string> ids; // unique

    void validate() const;
};

// Row i = forward_view(images[i]).embedding. Throws a per-image error (with
// the index) on a size mismatch.
EmbeddingMatrix embed_corpus(Model<float>& model, const std::vector<Tensor3<float>>& images,
                             const std::vector<std::string>& ids, View view);

struct RetrievalResult {
    std::vector<std::string> query_ids;
    std::vector<std::string> ref_ids;
    // order[q] is a permutation of reference indices, best first.
    std::vector<std::vector<int>> order;

    // 1-based rank of a reference for a query; throws if absent.
    int rank_of(int query_index, const std::string& ref_id) const;
};

// Exhaustive dot-product ranking; ties broken by ascending reference id.
RetrievalResult rank_references(const EmbeddingMatrix& queries, const EmbeddingMatrix& refs);

// Ranking from a precomputed similarity matrix (monotone-invariance tests).
RetrievalResult rank_from_similarities(const Matrix<float>& sims,
                                       const std::vector<std::string>& query_ids,
                                       const std::vector<std::string>& ref_ids);

// truth maps query id -> its single correct reference id.
double recall_at_k(const RetrievalResult& result,
                   const std::map<std::string, std::string>& truth, int k);

inline int top_percent_k(int n_refs) {
    return static_cast<int>(std::ceil(0.01 * n_refs));
}

// positives maps query id -> nonempty set of acceptable reference ids.
double hit_rate(const RetrievalResult& result,
                const std::map<std::string, std::set<std::string>>& positives);

// relevant maps query id -> nonempty set of relevant reference ids;
// AP per query = mean over relevant items of precision at their ranks.
double average_precision(const RetrievalResult& result,
                         const std::map<std::string, std::set<std::string>>& relevant);

void write_embeddings(const std::string& path, const EmbeddingMatrix& m);
EmbeddingMatrix read_embeddings(const std::string& path);

struct MetricsReport {
    double recall_at_1 = 0, recall_at_5 = 0, recall_at_10 = 0, recall_at_1pct = 0;
    std::optional<double> hit_rate;
    std::optional<double> average_precision;
    int n_queries = 0, n_references = 0;
    std::string config_hash;
    std::string timestamp;

    nlohmann::json to_json() const;
};

} // namespace clnet
