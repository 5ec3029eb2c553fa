#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tgl/nn.hpp"

namespace tgl::sage {

// Two GraphSAGE-mean layers with self/neighbor-mean concatenation. The
// aggregation neighborhood is undirected; directionality is already encoded
// in the input features.
template <typename S>
struct SageEncoderT {
  nn::LinearT<S> layer1;  // (in + in) -> hidden
  nn::LinearT<S> layer2;  // (hidden + hidden) -> hidden
  int64_t in_dim = 0;
  int64_t hidden = 0;

  static SageEncoderT init(const std::string& prefix, int64_t in_dim, int64_t hidden,
                           Rng& rng) {
    SageEncoderT e;
    e.in_dim = in_dim;
    e.hidden = hidden;
    e.layer1 = nn::LinearT<S>::init(prefix + ".l1", in_dim * 2, hidden, rng);
    e.layer2 = nn::LinearT<S>::init(prefix + ".l2", hidden * 2, hidden, rng);
    return e;
  }

  std::vector<nn::ParameterT<S>*> all() {
    return {&layer1.W, &layer1.b, &layer2.W, &layer2.b};
  }
};

template <typename S>
struct SageParamsT {
  SageEncoderT<S> encoder;
  nn::LinearT<S> head;  // hidden -> 2 (troll logits at column 1)

  static SageParamsT init(int64_t in_dim, int64_t hidden, Rng& rng) {
    SageParamsT p;
    p.encoder = SageEncoderT<S>::init("sage", in_dim, hidden, rng);
    p.head = nn::LinearT<S>::init("sage.head", hidden, 2, rng);
    return p;
  }

  std::vector<nn::ParameterT<S>*> all() {
    auto v = encoder.all();
    v.push_back(&head.W);
    v.push_back(&head.b);
    return v;
  }
};

using SageEncoder = SageEncoderT<float>;
using SageParams = SageParamsT<float>;

template <typename S>
struct SageCacheT {
  TensorT<S> X, A1, Z1, H1, A2, Z2, H2;
};

// Hidden representation H (pre-head). Layer k:
//   h_v = relu(W_k [h_v ‖ mean_{u in N(v)} h_u] + b_k), empty mean = 0.
template <typename S>
TensorT<S> sage_hidden_forward(const graph::Adjacency& adj, const TensorT<S>& X,
                               SageEncoderT<S>& enc, SageCacheT<S>* cache) {
  if (X.rows() != adj.node_count())
    throw DataError("sage_forward: feature rows != node count");
  if (X.cols() != enc.in_dim)
    throw DataError("sage_forward: feature width " + std::to_string(X.cols()) +
                    " != configured " + std::to_string(enc.in_dim));

  TensorT<S> M0 = nn::mean_aggregate(adj, X, nn::Direction::Und);
  TensorT<S> A1 = hconcat(X, M0);
  TensorT<S> Z1 = nn::linear_forward(A1, enc.layer1.W.value, enc.layer1.b.value);
  TensorT<S> H1 = nn::act_forward(Z1, nn::Act::Relu);

  TensorT<S> M1 = nn::mean_aggregate(adj, H1, nn::Direction::Und);
  TensorT<S> A2 = hconcat(H1, M1);
  TensorT<S> Z2 = nn::linear_forward(A2, enc.layer2.W.value, enc.layer2.b.value);
  TensorT<S> H2 = nn::act_forward(Z2, nn::Act::Relu);

  if (cache) {
    cache->X = X;
    cache->A1 = std::move(A1);
    cache->Z1 = std::move(Z1);
    cache->H1 = std::move(H1);
    cache->A2 = std::move(A2);
    cache->Z2 = std::move(Z2);
    cache->H2 = H2;
  }
  return H2;
}

// Accumulates encoder grads from upstream gH2; optionally emits gX.
template <typename S>
void sage_hidden_backward(const graph::Adjacency& adj, const SageCacheT<S>& cc,
                          SageEncoderT<S>& enc, const TensorT<S>& gH2, TensorT<S>* gX) {
  const int64_t hidden = enc.hidden;
  TensorT<S> gZ2 = nn::act_backward(cc.Z2, cc.H2, gH2, nn::Act::Relu);
  TensorT<S> gA2({cc.A2.rows(), cc.A2.cols()});
  nn::linear_backward(cc.A2, enc.layer2.W.value, gZ2, &gA2, enc.layer2.W.grad,
                      enc.layer2.b.grad);

  TensorT<S> gH1({cc.H1.rows(), hidden});
  TensorT<S> gM1({cc.H1.rows(), hidden});
  hsplit_into(gA2, gH1, gM1);
  axpy(gH1, S(1), nn::mean_aggregate_backward(adj, gM1, nn::Direction::Und));

  TensorT<S> gZ1 = nn::act_backward(cc.Z1, cc.H1, gH1, nn::Act::Relu);
  TensorT<S> gA1({cc.A1.rows(), cc.A1.cols()});
  nn::linear_backward(cc.A1, enc.layer1.W.value, gZ1, &gA1, enc.layer1.W.grad,
                      enc.layer1.b.grad);

  if (gX) {
    TensorT<S> gXself({cc.X.rows(), cc.X.cols()});
    TensorT<S> gM0({cc.X.rows(), cc.X.cols()});
    hsplit_into(gA1, gXself, gM0);
    axpy(*gX, S(1), gXself);
    axpy(*gX, S(1), nn::mean_aggregate_backward(adj, gM0, nn::Direction::Und));
  }
}

template <typename S>
struct SageForwardT {
  TensorT<S> H;       // |V| x hidden
  TensorT<S> logits;  // |V| x 2
};

template <typename S>
SageForwardT<S> sage_forward(const graph::Adjacency& adj, const TensorT<S>& X,
                             SageParamsT<S>& p, SageCacheT<S>* cache) {
  SageForwardT<S> out;
  out.H = sage_hidden_forward(adj, X, p.encoder, cache);
  out.logits = nn::linear_forward(out.H, p.head.W.value, p.head.b.value);
  return out;
}

// --- supervised detector -------------------------------------------------------

struct DetectorConfig {
  int epochs = 100;
  double lr = 0.001;
  int64_t hidden = 64;
  uint64_t seed = 0;
};

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double train_acc = 0.0;
};

struct DetectorResult {
  SageParams params;
  std::vector<EpochLog> log;
  bool single_class_warning = false;
};

// Full-graph forward per epoch, cross-entropy on training rows only, Adam.
// labels01: 1 = troll, 0 = benign. Deterministic given the seed.
DetectorResult train_detector(const graph::Adjacency& adj, const Tensor& X,
                              const std::vector<int>& labels01,
                              const std::vector<int32_t>& train_rows,
                              const DetectorConfig& cfg);

// Penultimate hidden representation per node (64-wide), for downstream
// classification.
Tensor extract_embeddings(const graph::Adjacency& adj, const Tensor& X, SageParams& params);

// Troll probability per node from the classification head.
std::vector<double> predict_troll_probability(const graph::Adjacency& adj, const Tensor& X,
                                              SageParams& params);

}  // namespace tgl::sage
