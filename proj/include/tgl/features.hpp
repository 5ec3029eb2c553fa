#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "tgl/graph.hpp"
#include "tgl/tensor.hpp"

namespace tgl::features {

struct FeatureGroup {
  std::string name;
  int64_t begin = 0;
  int64_t end = 0;
};

// Dense per-node feature rows; row order matches the node index.
struct FeatureMatrix {
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<float> data;
  std::vector<FeatureGroup> schema;

  FeatureMatrix() = default;
  FeatureMatrix(int64_t r, int64_t c) : rows(r), cols(c), data(static_cast<size_t>(r * c), 0.0f) {}

  float& at(int64_t i, int64_t j) { return data[static_cast<size_t>(i * cols + j)]; }
  float at(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * cols + j)]; }

  Tensor to_tensor() const;

  // Throws when entries are non-finite or group widths do not sum to cols.
  void validate() const;
};

// Eq.-style degree centrality: |N(v)| / max_j |N(v_j)| over distinct
// undirected neighbor sets; 0 for an edgeless graph.
double degree_centrality(const graph::Adjacency& adj, int32_t v);
std::vector<double> degree_centrality_all(const graph::Adjacency& adj);

// Width 6: [in_degree, out_degree, degree_centrality, avg_neighbor_degree,
// num_neighbors, ego_net_size]. In/out degree count parallel-edge
// multiplicity; the neighbor-based columns use distinct undirected sets.
// Groups: degree [0,2), centrality [2,3), ego_net [3,6).
FeatureMatrix detection_features(const graph::Adjacency& adj);
inline FeatureMatrix detection_features(const graph::Graph& g) { return detection_features(g.adj); }

// Width 15: one-hot(troll, benign) then, for in/out/undirected neighbor
// sets, sum and mean of neighbor one-hots, then degree centrality.
// Missing labels are treated as benign and counted.
struct LabelAggregates {
  FeatureMatrix features;
  int64_t missing_labels = 0;
};
LabelAggregates label_aggregates(const graph::Adjacency& adj,
                                 const std::vector<graph::Label>& labels);

// --- external text embeddings ---------------------------------------------

struct EmbeddingTable {
  int64_t width = 0;
  std::string provider;                             // tag, e.g. "sbert", "te3s"
  std::map<std::string, std::vector<float>> vectors;  // ordered for determinism

  void validate() const;
};

struct FuseResult {
  FeatureMatrix features;
  int64_t missing_users = 0;
};

// Row-wise concatenation [topo ‖ embedding]; users without an embedding get
// the zero vector.
FuseResult fuse_embeddings(const FeatureMatrix& topo, const EmbeddingTable& table,
                           const std::vector<std::string>& row_user_ids);

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual int64_t width() const = 0;
  virtual std::string tag() const = 0;
  // One vector per input text; throws on failure.
  virtual std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) = 0;
};

// Feature-hashing bag-of-tokens embedding. Deterministic and offline; useful
// for tests and for pipelines without an external model endpoint.
class HashEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit HashEmbeddingProvider(int64_t width = 384) : width_(width) {}
  int64_t width() const override { return width_; }
  std::string tag() const override { return "hash"; }
  std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) override;

 private:
  int64_t width_;
};

// Content-keyed pseudorandom vectors (same text -> same vector, but no
// relation between texts). Baseline for fusion experiments.
class RandomEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit RandomEmbeddingProvider(int64_t width = 384, uint64_t seed = 0)
      : width_(width), seed_(seed) {}
  int64_t width() const override { return width_; }
  std::string tag() const override { return "random"; }
  std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) override;

 private:
  int64_t width_;
  uint64_t seed_;
};

// POST {base_url}/embed with {"texts":[...]} -> {"vectors":[[...]]}.
// API key read from the named environment variable when set.
class HttpEmbeddingProvider : public EmbeddingProvider {
 public:
  struct Options {
    std::string base_url;          // e.g. http://localhost:8900
    std::string api_key_env = "TGL_EMBED_API_KEY";
    int64_t width = 384;
    std::string tag = "sbert";
    int batch_size = 32;
  };
  explicit HttpEmbeddingProvider(Options opt) : opt_(std::move(opt)) {}
  int64_t width() const override { return opt_.width; }
  std::string tag() const override { return opt_.tag; }
  std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) override;

 private:
  Options opt_;
};

struct UserPost {
  int64_t created_at = 0;
  std::string text;
};

struct EmbedOptions {
  int64_t max_posts = 100;         // most recent posts considered
  int64_t chunk_char_limit = 8000; // whitespace-approximate token budget
  int retries = 3;
  int backoff_ms = 200;            // doubled per retry
};

// Most recent max_posts posts, packed into chunks under the character
// budget, one provider vector per chunk, arithmetic mean over chunks.
// Zero posts yields the zero vector.
std::vector<float> embed_user_posts(const std::vector<UserPost>& posts,
                                    EmbeddingProvider& provider,
                                    const EmbedOptions& opt = {});

// JSONL {"user_id":..., "vector":[...]} or binary "EMB1" container.
EmbeddingTable load_embedding_table(const std::string& path);
void save_embedding_table_jsonl(const EmbeddingTable& table, const std::string& path);
void save_embedding_table_binary(const EmbeddingTable& table, const std::string& path);

// --- standardization --------------------------------------------------------

struct ColumnStats {
  int64_t col_begin = 0;
  int64_t col_end = 0;
  std::vector<double> mean, stdev;
};

// z-score stats from training rows only, applied everywhere. Columns outside
// [col_begin, col_end) are left untouched by apply (embeddings stay raw).
ColumnStats standardize_fit(const FeatureMatrix& m, const std::vector<int32_t>& train_rows,
                            int64_t col_begin = 0, int64_t col_end = -1);
void standardize_apply(FeatureMatrix& m, const ColumnStats& stats);

// Keeps only the named groups (used by ablation).
FeatureMatrix select_groups(const FeatureMatrix& m, const std::vector<std::string>& keep);

}  // namespace tgl::features
