#include "tgl/sage.hpp"

#include <cmath>

#include "tgl/errors.hpp"

namespace tgl::sage {

DetectorResult train_detector(const graph::Adjacency& adj, const Tensor& X,
                              const std::vector<int>& labels01,
                              const std::vector<int32_t>& train_rows,
                              const DetectorConfig& cfg) {
  if (train_rows.empty()) throw TrainingError("train_detector: no training rows");
  if (static_cast<int64_t>(labels01.size()) != X.rows())
    throw TrainingError("train_detector: labels must cover all nodes");

  DetectorResult out;
  {
    int pos = 0;
    for (int32_t r : train_rows) pos += labels01[static_cast<size_t>(r)];
    out.single_class_warning = (pos == 0 || pos == static_cast<int>(train_rows.size()));
  }

  Rng rng = Rng::for_stream(cfg.seed, "sage.init");
  out.params = SageParams::init(X.cols(), cfg.hidden, rng);
  auto params = out.params.all();

  nn::AdamOptimizer opt({cfg.lr, 0.9, 0.999, 1e-8});
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (auto* p : params) p->zero_grad();

    SageCacheT<float> cache;
    auto fwd = sage_forward(adj, X, out.params, &cache);

    Tensor glogits(fwd.logits.shape);
    const double loss = nn::cross_entropy_2class(fwd.logits, labels01, train_rows, &glogits);

    Tensor gH(fwd.H.shape);
    nn::linear_backward(fwd.H, out.params.head.W.value, glogits, &gH,
                        out.params.head.W.grad, out.params.head.b.grad);
    sage_hidden_backward(adj, cache, out.params.encoder, gH, nullptr);

    opt.step(params);

    int correct = 0;
    for (int32_t r : train_rows) {
      const int pred = fwd.logits.at(r, 1) > fwd.logits.at(r, 0) ? 1 : 0;
      if (pred == labels01[static_cast<size_t>(r)]) ++correct;
    }
    out.log.push_back({epoch, loss, static_cast<double>(correct) / train_rows.size()});
  }
  return out;
}

Tensor extract_embeddings(const graph::Adjacency& adj, const Tensor& X, SageParams& params) {
  return sage_hidden_forward(adj, X, params.encoder, static_cast<SageCacheT<float>*>(nullptr));
}

std::vector<double> predict_troll_probability(const graph::Adjacency& adj, const Tensor& X,
                                              SageParams& params) {
  auto fwd = sage_forward(adj, X, params, static_cast<SageCacheT<float>*>(nullptr));
  std::vector<double> prob(static_cast<size_t>(fwd.logits.rows()));
  for (int64_t v = 0; v < fwd.logits.rows(); ++v) {
    const double l0 = fwd.logits.at(v, 0), l1 = fwd.logits.at(v, 1);
    const double m = std::max(l0, l1);
    const double e0 = std::exp(l0 - m), e1 = std::exp(l1 - m);
    prob[static_cast<size_t>(v)] = e1 / (e0 + e1);
  }
  return prob;
}

}  // namespace tgl::sage
