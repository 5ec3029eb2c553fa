#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_set>
#include <vector>

#include "tgl/eval.hpp"
#include "tgl/graph.hpp"
#include "tgl/record.hpp"
#include "tgl/rng.hpp"

namespace tgl::baselines {

// Power iteration on the multiplicity-weighted transition along stored edge
// direction; dangling mass redistributed uniformly. Scores sum to 1.
std::vector<double> pagerank(const graph::Adjacency& adj, double damping = 0.85,
                             double tol = 1e-10, int max_iter = 1000);

struct TabularRow {
  std::string user_id;
  std::vector<double> features;
  int label = 0;  // 1 = troll
};

struct TabularData {
  std::vector<std::string> feature_names;
  std::vector<TabularRow> rows;
};

// Per-user interaction/profile features. Reddit rows carry comment and
// submission totals, account age and troll-relative fractions; X rows carry
// tweet statistics. Profile fields that the record schema cannot supply
// (followers, following, description length) are zero-filled and flagged.
struct TabularResult {
  TabularData data;
  bool missing_profile_fields = false;
};
TabularResult tabular_features(const std::vector<ingest::InteractionRecord>& records,
                               const std::unordered_set<std::string>& troll_set,
                               ingest::Platform platform);

std::string tabular_to_csv(const TabularData& data);

// --- random forest --------------------------------------------------------------

struct ForestConfig {
  int n_trees = 100;
  int max_depth = 0;  // 0 = unlimited
  int min_leaf = 1;
  uint64_t seed = 0;
};

struct TreeNode {
  int32_t feature = -1;  // -1 marks a leaf
  float threshold = 0.0f;
  int32_t left = -1, right = -1;
  float count0 = 0.0f, count1 = 0.0f;  // leaf class counts
};

struct ForestModel {
  std::vector<std::vector<TreeNode>> trees;
  int64_t n_features = 0;
  uint64_t seed = 0;
};

// Gini-split trees on bootstrap samples with sqrt(D) feature subsampling.
ForestModel train_random_forest(const std::vector<TabularRow>& rows,
                                const ForestConfig& cfg);

struct ForestPrediction {
  std::vector<int> labels;              // majority vote
  std::vector<double> prob_predicted;   // vote fraction for the winner
  std::vector<double> prob_troll;       // vote fraction for class 1
};
ForestPrediction forest_predict(const ForestModel& model,
                                const std::vector<TabularRow>& rows);

// Checkpoint container with a "TREE" payload section; bit-exact round-trip.
std::string serialize_forest(const ForestModel& model);
ForestModel deserialize_forest(const std::string& bytes);
void save_forest(const ForestModel& model, const std::string& path);
ForestModel load_forest(const std::string& path);

// --- cross-validation -------------------------------------------------------------

// Stratified fold assignment: per-class shuffle, round-robin deal. Falls
// back to non-stratified (with stratified=false) when a class has fewer than
// k members.
struct FoldPlan {
  std::vector<std::vector<int32_t>> folds;
  bool stratified = true;
};
FoldPlan stratified_folds(const std::vector<int>& labels, int k, uint64_t seed);

struct FoldMetrics {
  double auc = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0;
};

struct CvSummary {
  std::map<std::string, eval::MetricStat> metrics;  // auc, precision, recall, f1
  int folds = 0;
  bool stratified = true;
};

CvSummary summarize_folds(const std::vector<FoldMetrics>& folds, bool stratified);

// Stratified k-fold evaluation driven by a per-fold fit/evaluate callback.
using FoldEval = std::function<FoldMetrics(const std::vector<int32_t>& train_rows,
                                           const std::vector<int32_t>& test_rows)>;
CvSummary kfold_cv_generic(const std::vector<int>& labels, int k, uint64_t seed,
                           const FoldEval& fold_eval);

// Random-forest model over tabular rows.
CvSummary kfold_cv(const TabularData& data, int k, const ForestConfig& cfg, uint64_t seed);

}  // namespace tgl::baselines
