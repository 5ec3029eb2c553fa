#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tgl/graph.hpp"
#include "tgl/rng.hpp"

namespace tgl::eval {

struct RankingMetrics {
  double auc = 0.0;
  double ap = 0.0;
};

// AUC = Mann-Whitney statistic with ties credited 0.5; AP = step-sum area
// under precision-recall. Throws unless both classes are present.
RankingMetrics ranking_metrics(const std::vector<double>& scores,
                               const std::vector<int>& labels);

struct ClassificationReport {
  double precision = 0.0;  // weighted over classes
  double recall = 0.0;
  double f1 = 0.0;
  std::optional<double> auc;
};

// Weighted-average precision/recall/F1 over the two classes; AUC from
// scores when both classes are present in the truth.
ClassificationReport classification_report(const std::vector<int>& pred_labels,
                                           const std::vector<int>& true_labels,
                                           const std::vector<double>& scores);

struct MetricStat {
  double mean = 0.0;
  double std = 0.0;
};

struct RunMeta {
  uint64_t seed = 0;
  std::string config_hash;
  std::string dataset_id;
  std::string timestamp;  // from config; reports stay byte-stable
};

struct EvalReport {
  std::map<std::string, MetricStat> metrics;
  RunMeta meta;

  nlohmann::json to_json() const;
  void validate() const;  // metrics in [0,1], std >= 0
};

// Sample mean and (n-1) standard deviation.
MetricStat mean_std(const std::vector<double>& values);

// Adds n_new_edges undirected edge-pairs among non-troll nodes: source drawn
// uniformly, up to m distinct targets per round with probability proportional
// to current undirected degree + 1. Troll-incident structure is untouched;
// each pair is stored as one edge in each direction.
graph::Graph ba_augment(const graph::Graph& g, int64_t n_new_edges, int m, Rng& rng);

}  // namespace tgl::eval
