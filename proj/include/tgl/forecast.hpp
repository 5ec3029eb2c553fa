#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tgl/features.hpp"
#include "tgl/graph.hpp"
#include "tgl/sage.hpp"

namespace tgl::forecast {

enum class Variant { Recurrent, Static };

std::string variant_to_string(Variant v);
Variant variant_from_string(const std::string& s);

// The static variant runs the same cell with a zero carried state, i.e. a
// gated per-snapshot layer over identical parameter tensors. That keeps the
// parameter counts of the two variants exactly equal, which is the tested
// contract between experiments.
template <typename S>
struct ForecastParamsT {
  sage::SageEncoderT<S> encoder;  // per-snapshot GNN, hidden 64
  nn::GruParamsT<S> temporal;     // 64 -> 64
  nn::LinearT<S> projection;      // 64 -> 32

  static ForecastParamsT init(int64_t in_dim, int64_t hidden, int64_t zdim, Rng& rng) {
    ForecastParamsT p;
    p.encoder = sage::SageEncoderT<S>::init("enc", in_dim, hidden, rng);
    p.temporal = nn::GruParamsT<S>::init("gru", hidden, hidden, rng);
    p.projection = nn::LinearT<S>::init("proj", hidden, zdim, rng);
    return p;
  }

  std::vector<nn::ParameterT<S>*> all() {
    auto v = encoder.all();
    for (auto* q : temporal.all()) v.push_back(q);
    v.push_back(&projection.W);
    v.push_back(&projection.b);
    return v;
  }

  int64_t parameter_count() {
    int64_t n = 0;
    for (auto* p : all()) n += p->value.numel();
    return n;
  }
};

using ForecastParams = ForecastParamsT<float>;

template <typename S>
struct ScanCacheT {
  std::vector<TensorT<S>> H;      // encoder hidden per snapshot
  std::vector<TensorT<S>> state;  // cell output per snapshot
  std::vector<nn::GruCacheT<S>> cell;
};

// Z_t = project(cell(H_t, h_{t-1})) with h_0 = 0; the static variant feeds a
// zero state at every step.
template <typename S>
std::vector<TensorT<S>> temporal_project_forward(const std::vector<TensorT<S>>& H,
                                                 ForecastParamsT<S>& p, Variant variant,
                                                 ScanCacheT<S>* cache) {
  std::vector<TensorT<S>> Z;
  Z.reserve(H.size());
  if (cache) {
    cache->H = H;
    cache->state.clear();
    cache->cell.assign(H.size(), {});
  }
  TensorT<S> h_prev;
  for (size_t t = 0; t < H.size(); ++t) {
    if (t == 0 || variant == Variant::Static) {
      h_prev = TensorT<S>({H[t].rows(), p.temporal.Uz.value.shape[0]});
    }
    TensorT<S> h = nn::gru_forward(H[t], h_prev, p.temporal,
                                   cache ? &cache->cell[t] : nullptr);
    Z.push_back(nn::linear_forward(h, p.projection.W.value, p.projection.b.value));
    if (cache) cache->state.push_back(h);
    h_prev = std::move(h);
  }
  return Z;
}

// Full backward through projection and (for the recurrent variant) time.
// Accumulates grads on temporal/projection params; returns gH per snapshot.
template <typename S>
std::vector<TensorT<S>> temporal_project_backward(const ScanCacheT<S>& cache,
                                                  ForecastParamsT<S>& p,
                                                  const std::vector<TensorT<S>>& gZ,
                                                  Variant variant) {
  const int64_t T = static_cast<int64_t>(cache.H.size());
  std::vector<TensorT<S>> gH(T);
  TensorT<S> carry;  // dL/dh_t flowing backward in time
  for (int64_t t = T - 1; t >= 0; --t) {
    TensorT<S> gstate(cache.state[t].shape);
    if (gZ[t].numel() > 0) {
      nn::linear_backward(cache.state[t], p.projection.W.value, gZ[t], &gstate,
                          p.projection.W.grad, p.projection.b.grad);
    }
    if (variant == Variant::Recurrent && carry.numel() > 0) axpy(gstate, S(1), carry);

    gH[t] = TensorT<S>(cache.H[t].shape);
    TensorT<S> gh_prev(cache.state[t].shape);
    nn::gru_backward(cache.cell[t], p.temporal, gstate, &gH[t], &gh_prev);
    carry = std::move(gh_prev);  // discarded at t=0 or by the static variant
  }
  return gH;
}

// Per-snapshot 32-wide node embeddings Z_1..Z_T.
using EmbeddingSequence = std::vector<Tensor>;

// Reference (non-distributed) forward over all snapshots.
EmbeddingSequence forecast_forward(const graph::TemporalGraph& tg,
                                   const std::vector<Tensor>& features, ForecastParams& p,
                                   Variant variant);

// sigma(Z_t[u] . Z_t[v]); symmetric in u, v.
double predict_link(const Tensor& Zt, int32_t u, int32_t v);

// --- edge batches ---------------------------------------------------------------

// Canonical undirected pair, u < v.
struct NodePair {
  int32_t u = 0, v = 0;
  bool operator==(const NodePair&) const = default;
};

std::vector<NodePair> unique_undirected_edges(const graph::Adjacency& adj);

// Uniform non-edge pairs (u != v), excluding the positives, distinct,
// exactly `count`. Throws when the pair space is too dense to satisfy.
std::vector<NodePair> sample_negatives(const std::vector<NodePair>& positives,
                                       int32_t node_count, int64_t count, Rng& rng);

enum class EdgeType { TrollTroll, TrollUser };

// Type-matched negatives: endpoints drawn from the matching label
// populations so sub-metrics are not inflated by trivially easy contrasts.
std::vector<NodePair> sample_negatives_typed(const std::vector<NodePair>& positives,
                                             const std::vector<graph::Label>& labels,
                                             EdgeType type, int64_t count, Rng& rng);

struct TransitionBatch {
  std::vector<NodePair> pos, neg;
};

struct TransitionLoss {
  double loss = 0.0;
  Tensor gZ;  // same shape as Z
};

// Mean BCE over sigmoid(dot) scores of the batch, with the gradient wrt Z.
TransitionLoss transition_loss(const Tensor& Z, const TransitionBatch& batch);

// Scores for ranking: positives then negatives, labels 1 then 0.
void score_batch(const Tensor& Z, const TransitionBatch& batch,
                 std::vector<double>& scores, std::vector<int>& labels);

// --- training -------------------------------------------------------------------

// Temporal split boundaries. Mirrors the 80/5/10 partition; the 5% between
// validation and test is held out unused.
struct SnapshotSplit {
  int64_t train_end = 0;   // train snapshots [0, train_end)
  int64_t val_end = 0;     // validation snapshots [train_end, val_end)
  int64_t test_begin = 0;  // test snapshots [test_begin, T)
  int64_t T = 0;
};

SnapshotSplit make_split(int64_t T);

// Label-aggregate features per snapshot (15-wide), z-scored with statistics
// from the training window only.
std::vector<Tensor> forecast_features(const graph::TemporalGraph& tg, int64_t train_end);

struct ForecastTrainConfig {
  Variant variant = Variant::Recurrent;
  double lr = 0.001;
  int max_epochs = 200;
  int patience = 10;  // epochs of non-improving validation AP
  uint64_t seed = 0;
  uint64_t eval_seed = 0x5eedfeed;  // validation/test negatives
  int workers = 1;
  int64_t hidden = 64;
  int64_t zdim = 32;
};

struct EpochLogEntry {
  int epoch = 0;
  double train_loss = 0.0;
  double val_ap = 0.0;
};

struct TrainOutcome {
  ForecastParams params;
  std::vector<EpochLogEntry> log;
  int best_epoch = -1;
  double best_val_ap = 0.0;
  int epochs_run = 0;
};

// Trains through the snapshot-parallel runtime (k = config.workers, k >= 1);
// semantics are identical for every k. Returns best-on-validation params.
TrainOutcome train_forecaster(const graph::TemporalGraph& tg,
                              const ForecastTrainConfig& cfg);

// --- evaluation -----------------------------------------------------------------

struct TransitionEval {
  int64_t target_snapshot = 0;  // the predicted snapshot t+1
  int64_t n_pos = 0, n_tte = 0, n_tue = 0;
  double auc = 0.0, ap = 0.0;
  std::optional<double> tte_auc, tte_ap, tue_auc, tue_ap;
};

struct ForecastEvalReport {
  double auc = 0.0, ap = 0.0;
  std::optional<double> tte_auc, tte_ap, tue_auc, tue_ap;
  std::vector<TransitionEval> per_transition;

  nlohmann::json to_json() const;
};

// Per test transition: positives are the unique edges of the next snapshot,
// negatives an equal count at the fixed eval seed; TTE/TUE sub-reports use
// type-matched negatives and are absent when no such positives exist.
ForecastEvalReport evaluate_forecaster(ForecastParams& params,
                                       const graph::TemporalGraph& tg, Variant variant,
                                       uint64_t eval_seed);

// Deterministic per-(purpose, epoch, transition) RNG derivation.
Rng derive_rng(uint64_t seed, const char* purpose, int64_t a, int64_t b);

}  // namespace tgl::forecast
