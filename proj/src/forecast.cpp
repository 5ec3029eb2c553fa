#include "tgl/forecast.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "tgl/dist.hpp"
#include "tgl/errors.hpp"
#include "tgl/eval.hpp"
#include "tgl/json_io.hpp"

namespace tgl::forecast {

std::string variant_to_string(Variant v) {
  return v == Variant::Recurrent ? "recurrent" : "static";
}

Variant variant_from_string(const std::string& s) {
  if (s == "recurrent" || s == "rnn") return Variant::Recurrent;
  if (s == "static") return Variant::Static;
  throw ConfigError("unknown forecast variant: " + s);
}

EmbeddingSequence forecast_forward(const graph::TemporalGraph& tg,
                                   const std::vector<Tensor>& features, ForecastParams& p,
                                   Variant variant) {
  if (features.size() != tg.snapshots.size())
    throw DataError("forecast_forward: one feature matrix per snapshot required");
  std::vector<Tensor> H;
  H.reserve(features.size());
  for (size_t t = 0; t < features.size(); ++t) {
    H.push_back(sage::sage_hidden_forward(tg.snapshots[t].adj, features[t], p.encoder,
                                          static_cast<sage::SageCacheT<float>*>(nullptr)));
  }
  return temporal_project_forward(H, p, variant, static_cast<ScanCacheT<float>*>(nullptr));
}

double predict_link(const Tensor& Zt, int32_t u, int32_t v) {
  if (u < 0 || v < 0 || u >= Zt.rows() || v >= Zt.rows())
    throw DataError("predict_link: node id out of range");
  double dot = 0.0;
  const float* zu = Zt.row_ptr(u);
  const float* zv = Zt.row_ptr(v);
  for (int64_t j = 0; j < Zt.cols(); ++j) dot += static_cast<double>(zu[j]) * zv[j];
  return 1.0 / (1.0 + std::exp(-dot));
}

std::vector<NodePair> unique_undirected_edges(const graph::Adjacency& adj) {
  std::vector<NodePair> out;
  for (int32_t v = 0; v < adj.node_count(); ++v) {
    for (int32_t u : adj.und[v]) {
      if (u > v) out.push_back({v, u});
    }
  }
  return out;
}

namespace {

int64_t pair_key(int32_t u, int32_t v, int64_t n) {
  return static_cast<int64_t>(u) * n + v;
}

std::unordered_set<int64_t> key_set(const std::vector<NodePair>& pairs, int64_t n) {
  std::unordered_set<int64_t> keys;
  keys.reserve(pairs.size() * 2);
  for (const auto& p : pairs) keys.insert(pair_key(p.u, p.v, n));
  return keys;
}

}  // namespace

std::vector<NodePair> sample_negatives(const std::vector<NodePair>& positives,
                                       int32_t node_count, int64_t count, Rng& rng) {
  if (count < 0) throw ConfigError("sample_negatives: negative count");
  std::vector<NodePair> out;
  if (count == 0) return out;
  if (node_count < 2) throw DataError("sample_negatives: need at least two nodes");

  const int64_t n = node_count;
  auto taken = key_set(positives, n);
  const int64_t available = n * (n - 1) / 2 - static_cast<int64_t>(taken.size());
  if (available < count)
    throw DataError("sample_negatives: pair space too dense for requested count");

  out.reserve(static_cast<size_t>(count));
  int64_t attempts = 0;
  const int64_t max_attempts = 200 * count + 10000;
  while (static_cast<int64_t>(out.size()) < count) {
    if (++attempts > max_attempts)
      throw DataError("sample_negatives: giving up after bounded retries (graph too dense)");
    int32_t u = static_cast<int32_t>(rng.uniform_int(static_cast<uint64_t>(n)));
    int32_t v = static_cast<int32_t>(rng.uniform_int(static_cast<uint64_t>(n)));
    if (u == v) continue;
    if (u > v) std::swap(u, v);
    const int64_t key = pair_key(u, v, n);
    if (taken.count(key)) continue;
    taken.insert(key);
    out.push_back({u, v});
  }
  return out;
}

std::vector<NodePair> sample_negatives_typed(const std::vector<NodePair>& positives,
                                             const std::vector<graph::Label>& labels,
                                             EdgeType type, int64_t count, Rng& rng) {
  if (count <= 0) return {};
  const int64_t n = static_cast<int64_t>(labels.size());
  std::vector<int32_t> trolls, users;
  for (int32_t v = 0; v < n; ++v)
    (graph::is_troll(labels[v]) ? trolls : users).push_back(v);

  if (type == EdgeType::TrollTroll && trolls.size() < 2)
    throw DataError("sample_negatives_typed: fewer than two troll nodes");
  if (type == EdgeType::TrollUser && (trolls.empty() || users.empty()))
    throw DataError("sample_negatives_typed: missing endpoint population");

  auto taken = key_set(positives, n);
  std::vector<NodePair> out;
  out.reserve(static_cast<size_t>(count));
  int64_t attempts = 0;
  const int64_t max_attempts = 400 * count + 10000;
  while (static_cast<int64_t>(out.size()) < count) {
    if (++attempts > max_attempts)
      throw DataError("sample_negatives_typed: population too dense for requested count");
    int32_t u, v;
    if (type == EdgeType::TrollTroll) {
      u = trolls[rng.uniform_int(trolls.size())];
      v = trolls[rng.uniform_int(trolls.size())];
    } else {
      u = trolls[rng.uniform_int(trolls.size())];
      v = users[rng.uniform_int(users.size())];
    }
    if (u == v) continue;
    if (u > v) std::swap(u, v);
    const int64_t key = pair_key(u, v, n);
    if (taken.count(key)) continue;
    taken.insert(key);
    out.push_back({u, v});
  }
  return out;
}

TransitionLoss transition_loss(const Tensor& Z, const TransitionBatch& batch) {
  TransitionLoss out;
  out.gZ = Tensor(Z.shape);
  const int64_t n_examples =
      static_cast<int64_t>(batch.pos.size() + batch.neg.size());
  if (n_examples == 0) return out;

  const int64_t d = Z.cols();
  const double inv_n = 1.0 / static_cast<double>(n_examples);
  double total = 0.0;

  auto handle = [&](const NodePair& pr, double y) {
    const float* zu = Z.row_ptr(pr.u);
    const float* zv = Z.row_ptr(pr.v);
    double s = 0.0;
    for (int64_t j = 0; j < d; ++j) s += static_cast<double>(zu[j]) * zv[j];
    // numerically stable BCE on the logit
    const double softplus = s > 0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s));
    total += softplus - y * s;
    const double p = 1.0 / (1.0 + std::exp(-s));
    const float g = static_cast<float>((p - y) * inv_n);
    float* gu = out.gZ.row_ptr(pr.u);
    float* gv = out.gZ.row_ptr(pr.v);
    for (int64_t j = 0; j < d; ++j) {
      gu[j] += g * zv[j];
      gv[j] += g * zu[j];
    }
  };
  for (const auto& pr : batch.pos) handle(pr, 1.0);
  for (const auto& pr : batch.neg) handle(pr, 0.0);
  out.loss = total * inv_n;
  return out;
}

void score_batch(const Tensor& Z, const TransitionBatch& batch,
                 std::vector<double>& scores, std::vector<int>& labels) {
  scores.clear();
  labels.clear();
  scores.reserve(batch.pos.size() + batch.neg.size());
  for (const auto& pr : batch.pos) {
    scores.push_back(predict_link(Z, pr.u, pr.v));
    labels.push_back(1);
  }
  for (const auto& pr : batch.neg) {
    scores.push_back(predict_link(Z, pr.u, pr.v));
    labels.push_back(0);
  }
}

SnapshotSplit make_split(int64_t T) {
  SnapshotSplit s;
  s.T = T;
  s.train_end = static_cast<int64_t>(0.8 * static_cast<double>(T));
  s.val_end = static_cast<int64_t>(0.85 * static_cast<double>(T));
  s.test_begin = static_cast<int64_t>(0.9 * static_cast<double>(T));
  if (s.train_end < 2) s.train_end = 2;
  if (s.val_end <= s.train_end) s.val_end = s.train_end + 1;
  if (s.test_begin < s.val_end) s.test_begin = s.val_end;
  if (s.test_begin >= T)
    throw ConfigError("temporal split needs more snapshots (T=" + std::to_string(T) + ")");
  return s;
}

std::vector<Tensor> forecast_features(const graph::TemporalGraph& tg, int64_t train_end) {
  const int64_t T = tg.snapshot_count();
  if (T == 0) throw DataError("forecast_features: no snapshots");
  if (train_end < 1 || train_end > T)
    throw ConfigError("forecast_features: bad training window");

  std::vector<features::FeatureMatrix> raw;
  raw.reserve(T);
  for (const auto& snap : tg.snapshots)
    raw.push_back(features::label_aggregates(snap.adj, tg.labels).features);

  // z-score per column over all nodes of the training-window snapshots
  const int64_t cols = raw.front().cols;
  std::vector<double> mean(cols, 0.0), var(cols, 0.0);
  const double n = static_cast<double>(train_end * tg.node_count());
  for (int64_t t = 0; t < train_end; ++t) {
    for (int64_t r = 0; r < raw[t].rows; ++r) {
      for (int64_t c = 0; c < cols; ++c) mean[c] += raw[t].at(r, c);
    }
  }
  for (int64_t c = 0; c < cols; ++c) mean[c] /= n;
  for (int64_t t = 0; t < train_end; ++t) {
    for (int64_t r = 0; r < raw[t].rows; ++r) {
      for (int64_t c = 0; c < cols; ++c) {
        const double d = raw[t].at(r, c) - mean[c];
        var[c] += d * d;
      }
    }
  }
  std::vector<double> stdev(cols);
  for (int64_t c = 0; c < cols; ++c) {
    var[c] /= n;
    stdev[c] = var[c] > 1e-24 ? std::sqrt(var[c]) : 1.0;
  }

  std::vector<Tensor> out;
  out.reserve(T);
  for (int64_t t = 0; t < T; ++t) {
    Tensor x({raw[t].rows, cols});
    for (int64_t r = 0; r < raw[t].rows; ++r) {
      for (int64_t c = 0; c < cols; ++c)
        x.at(r, c) = static_cast<float>((raw[t].at(r, c) - mean[c]) / stdev[c]);
    }
    out.push_back(std::move(x));
  }
  return out;
}

Rng derive_rng(uint64_t seed, const char* purpose, int64_t a, int64_t b) {
  const std::string key = std::string(purpose) + ":" + std::to_string(a) + ":" +
                          std::to_string(b);
  return Rng(seed ^ fnv1a64(key));
}

TrainOutcome train_forecaster(const graph::TemporalGraph& tg,
                              const ForecastTrainConfig& cfg) {
  return dist::coordinate_training(tg, cfg);
}

namespace {

struct SubEval {
  std::vector<double> auc, ap;
};

}  // namespace

ForecastEvalReport evaluate_forecaster(ForecastParams& params,
                                       const graph::TemporalGraph& tg, Variant variant,
                                       uint64_t eval_seed) {
  const int64_t T = tg.snapshot_count();
  const SnapshotSplit split = make_split(T);
  const auto feats = forecast_features(tg, split.train_end);
  const EmbeddingSequence Z = forecast_forward(tg, feats, params, variant);

  ForecastEvalReport report;
  SubEval overall, tte, tue;

  for (int64_t next = split.test_begin; next < T; ++next) {
    const int64_t t = next - 1;
    const auto positives = unique_undirected_edges(tg.snapshots[next].adj);
    if (positives.empty()) continue;

    TransitionEval te;
    te.target_snapshot = next;
    te.n_pos = static_cast<int64_t>(positives.size());

    Rng rng = derive_rng(eval_seed, "eval-neg", 0, next);
    TransitionBatch batch;
    batch.pos = positives;
    batch.neg = sample_negatives(positives, tg.node_count(),
                                 static_cast<int64_t>(positives.size()), rng);
    std::vector<double> scores;
    std::vector<int> labels;
    score_batch(Z[t], batch, scores, labels);
    const auto rm = eval::ranking_metrics(scores, labels);
    te.auc = rm.auc;
    te.ap = rm.ap;
    overall.auc.push_back(rm.auc);
    overall.ap.push_back(rm.ap);

    // type-partitioned sub-populations
    std::vector<NodePair> tte_pos, tue_pos;
    for (const auto& pr : positives) {
      const bool ut = graph::is_troll(tg.labels[pr.u]);
      const bool vt = graph::is_troll(tg.labels[pr.v]);
      if (ut && vt) {
        tte_pos.push_back(pr);
      } else if (ut != vt) {
        tue_pos.push_back(pr);
      }
    }
    te.n_tte = static_cast<int64_t>(tte_pos.size());
    te.n_tue = static_cast<int64_t>(tue_pos.size());

    auto sub_eval = [&](const std::vector<NodePair>& pos, EdgeType type, const char* tag)
        -> std::optional<eval::RankingMetrics> {
      if (pos.empty()) return std::nullopt;
      Rng sub_rng = derive_rng(eval_seed, tag, 0, next);
      TransitionBatch sub;
      sub.pos = pos;
      try {
        sub.neg = sample_negatives_typed(positives, tg.labels, type,
                                         static_cast<int64_t>(pos.size()), sub_rng);
      } catch (const DataError&) {
        return std::nullopt;  // population too small; report absent
      }
      std::vector<double> s;
      std::vector<int> l;
      score_batch(Z[t], sub, s, l);
      return eval::ranking_metrics(s, l);
    };

    if (auto m = sub_eval(tte_pos, EdgeType::TrollTroll, "eval-neg-tte")) {
      te.tte_auc = m->auc;
      te.tte_ap = m->ap;
      tte.auc.push_back(m->auc);
      tte.ap.push_back(m->ap);
    }
    if (auto m = sub_eval(tue_pos, EdgeType::TrollUser, "eval-neg-tue")) {
      te.tue_auc = m->auc;
      te.tue_ap = m->ap;
      tue.auc.push_back(m->auc);
      tue.ap.push_back(m->ap);
    }
    report.per_transition.push_back(std::move(te));
  }

  if (report.per_transition.empty())
    throw DataError("evaluate_forecaster: no test transitions with positives");

  auto mean_of = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  report.auc = mean_of(overall.auc);
  report.ap = mean_of(overall.ap);
  if (!tte.auc.empty()) {
    report.tte_auc = mean_of(tte.auc);
    report.tte_ap = mean_of(tte.ap);
  }
  if (!tue.auc.empty()) {
    report.tue_auc = mean_of(tue.auc);
    report.tue_ap = mean_of(tue.ap);
  }
  return report;
}

nlohmann::json ForecastEvalReport::to_json() const {
  nlohmann::json j;
  j["auc"] = auc;
  j["ap"] = ap;
  if (tte_auc) j["tte_auc"] = *tte_auc;
  if (tte_ap) j["tte_ap"] = *tte_ap;
  if (tue_auc) j["tue_auc"] = *tue_auc;
  if (tue_ap) j["tue_ap"] = *tue_ap;
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& te : per_transition) {
    nlohmann::json e;
    e["t"] = te.target_snapshot;
    e["n_pos"] = te.n_pos;
    e["n_tte"] = te.n_tte;
    e["n_tue"] = te.n_tue;
    e["auc"] = te.auc;
    e["ap"] = te.ap;
    if (te.tte_auc) e["tte_auc"] = *te.tte_auc;
    if (te.tte_ap) e["tte_ap"] = *te.tte_ap;
    if (te.tue_auc) e["tue_auc"] = *te.tue_auc;
    if (te.tue_ap) e["tue_ap"] = *te.tue_ap;
    arr.push_back(std::move(e));
  }
  j["per_transition"] = std::move(arr);
  return j;
}

}  // namespace tgl::forecast
