#include "tgl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tgl/errors.hpp"
#include "tgl/json_io.hpp"

namespace tgl::eval {

RankingMetrics ranking_metrics(const std::vector<double>& scores,
                               const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw DataError("ranking_metrics: empty or mismatched inputs");
  int64_t pos = 0, neg = 0;
  for (int l : labels) (l ? pos : neg) += 1;
  if (pos == 0 || neg == 0)
    throw DataError("ranking_metrics: needs at least one positive and one negative");

  std::vector<int32_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);

  // AUC: ascending sweep over tie groups.
  std::sort(order.begin(), order.end(), [&](int32_t a, int32_t b) {
    if (scores[a] != scores[b]) return scores[a] < scores[b];
    return a < b;
  });
  double credit = 0.0;
  int64_t neg_below = 0;
  for (size_t i = 0; i < order.size();) {
    size_t j = i;
    int64_t tie_pos = 0, tie_neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] ? tie_pos : tie_neg) += 1;
      ++j;
    }
    credit += static_cast<double>(tie_pos) *
              (static_cast<double>(neg_below) + 0.5 * static_cast<double>(tie_neg));
    neg_below += tie_neg;
    i = j;
  }

  // AP: descending rank walk, precision summed at each positive.
  std::sort(order.begin(), order.end(), [&](int32_t a, int32_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  double ap_sum = 0.0;
  int64_t tp = 0;
  for (size_t i = 0; i < order.size(); ++i) {
    if (labels[order[i]]) {
      ++tp;
      ap_sum += static_cast<double>(tp) / static_cast<double>(i + 1);
    }
  }

  RankingMetrics out;
  out.auc = credit / (static_cast<double>(pos) * static_cast<double>(neg));
  out.ap = ap_sum / static_cast<double>(pos);
  return out;
}

ClassificationReport classification_report(const std::vector<int>& pred_labels,
                                           const std::vector<int>& true_labels,
                                           const std::vector<double>& scores) {
  if (pred_labels.empty() || pred_labels.size() != true_labels.size())
    throw DataError("classification_report: empty or mismatched inputs");

  double tp[2] = {0, 0}, fp[2] = {0, 0}, support[2] = {0, 0};
  for (size_t i = 0; i < pred_labels.size(); ++i) {
    const int p = pred_labels[i] ? 1 : 0;
    const int t = true_labels[i] ? 1 : 0;
    support[t] += 1;
    if (p == t) {
      tp[p] += 1;
    } else {
      fp[p] += 1;
    }
  }
  const double n = static_cast<double>(pred_labels.size());
  ClassificationReport rep;
  for (int c = 0; c < 2; ++c) {
    const double predicted = tp[c] + fp[c];
    const double prec = predicted > 0 ? tp[c] / predicted : 0.0;
    const double rec = support[c] > 0 ? tp[c] / support[c] : 0.0;
    const double f1 = (prec + rec) > 0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
    const double w = support[c] / n;
    rep.precision += w * prec;
    rep.recall += w * rec;
    rep.f1 += w * f1;
  }
  if (!scores.empty() && support[0] > 0 && support[1] > 0) {
    if (scores.size() != true_labels.size())
      throw DataError("classification_report: scores length mismatch");
    rep.auc = ranking_metrics(scores, true_labels).auc;
  }
  return rep;
}

MetricStat mean_std(const std::vector<double>& values) {
  MetricStat s;
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  nlohmann::json m = nlohmann::json::object();
  for (const auto& [name, stat] : metrics) {
    m[name] = {{"mean", stat.mean}, {"std", stat.std}};
  }
  j["metrics"] = m;
  j["meta"] = {{"seed", meta.seed},
               {"config_hash", meta.config_hash},
               {"dataset_id", meta.dataset_id},
               {"timestamp", meta.timestamp}};
  return j;
}

void EvalReport::validate() const {
  for (const auto& [name, stat] : metrics) {
    if (stat.mean < 0.0 || stat.mean > 1.0)
      throw DataError("metric out of [0,1]: " + name);
    if (stat.std < 0.0) throw DataError("negative std for metric: " + name);
  }
}

graph::Graph ba_augment(const graph::Graph& g, int64_t n_new_edges, int m, Rng& rng) {
  if (n_new_edges == 0) return g;
  if (n_new_edges < 0 || m < 1) throw ConfigError("ba_augment: bad edge request");

  std::vector<int32_t> benign;
  for (int32_t v = 0; v < g.node_count(); ++v) {
    if (!graph::is_troll(g.labels[v])) benign.push_back(v);
  }
  if (benign.size() < 2) throw DataError("ba_augment: need at least two benign nodes");

  // Attachment weight: current undirected multiplicity degree + 1, updated
  // after every added edge.
  std::vector<int64_t> weight(benign.size());
  std::vector<int32_t> slot(g.node_count(), -1);
  for (size_t i = 0; i < benign.size(); ++i) {
    const int32_t v = benign[i];
    weight[i] = g.adj.in_weight(v) + g.adj.out_weight(v) + 1;
    slot[v] = static_cast<int32_t>(i);
  }
  int64_t total_weight = 0;
  for (int64_t w : weight) total_weight += w;

  auto draw_target = [&](int32_t exclude) {
    for (;;) {
      int64_t pick = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(total_weight)));
      for (size_t i = 0; i < benign.size(); ++i) {
        pick -= weight[i];
        if (pick < 0) {
          if (benign[i] == exclude) break;  // redraw
          return static_cast<int32_t>(i);
        }
      }
    }
  };

  std::vector<std::pair<int32_t, int32_t>> added;
  added.reserve(static_cast<size_t>(n_new_edges));
  while (static_cast<int64_t>(added.size()) < n_new_edges) {
    const size_t src_slot = rng.uniform_int(benign.size());
    const int32_t src = benign[src_slot];
    std::vector<int32_t> chosen;
    const int64_t want = std::min<int64_t>(m, n_new_edges - static_cast<int64_t>(added.size()));
    int guard = 0;
    while (static_cast<int64_t>(chosen.size()) < want && guard < 64 * m) {
      ++guard;
      const int32_t tslot = draw_target(src);
      if (std::find(chosen.begin(), chosen.end(), tslot) != chosen.end()) continue;
      chosen.push_back(tslot);
    }
    for (int32_t tslot : chosen) {
      added.emplace_back(src, benign[tslot]);
      weight[src_slot] += 1;
      weight[tslot] += 1;
      total_weight += 2;
    }
  }

  std::vector<std::pair<int32_t, int32_t>> pairs;
  pairs.reserve(static_cast<size_t>(g.adj.edge_multiplicity + 2 * n_new_edges));
  for (int32_t v = 0; v < g.node_count(); ++v) {
    for (auto& [nb, w] : g.adj.out[v]) {
      for (uint32_t i = 0; i < w; ++i) pairs.emplace_back(v, nb);
    }
  }
  for (auto& [u, v] : added) {
    pairs.emplace_back(u, v);
    pairs.emplace_back(v, u);
  }

  graph::Graph out;
  out.nodes = g.nodes;
  out.labels = g.labels;
  out.unknown_label_count = g.unknown_label_count;
  out.adj = graph::Adjacency::from_pairs(g.node_count(), std::move(pairs));
  return out;
}

}  // namespace tgl::eval
