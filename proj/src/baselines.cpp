#include "tgl/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "tgl/binio.hpp"
#include "tgl/errors.hpp"
#include "tgl/json_io.hpp"
#include "tgl/nn.hpp"

namespace tgl::baselines {

std::vector<double> pagerank(const graph::Adjacency& adj, double damping, double tol,
                             int max_iter) {
  const int32_t n = adj.node_count();
  if (n == 0) throw DataError("pagerank: empty graph");

  std::vector<double> rank(n, 1.0 / n), next(n, 0.0), out_weight(n, 0.0);
  for (int32_t v = 0; v < n; ++v) out_weight[v] = static_cast<double>(adj.out_weight(v));

  for (int iter = 0; iter < max_iter; ++iter) {
    std::fill(next.begin(), next.end(), 0.0);
    double dangling = 0.0;
    for (int32_t u = 0; u < n; ++u) {
      if (out_weight[u] == 0.0) {
        dangling += rank[u];
        continue;
      }
      const double share = rank[u] / out_weight[u];
      for (auto& [v, w] : adj.out[u]) next[v] += share * static_cast<double>(w);
    }
    const double teleport = (1.0 - damping) / n + damping * dangling / n;
    double diff = 0.0;
    for (int32_t v = 0; v < n; ++v) {
      const double nv = damping * next[v] + teleport;
      diff += std::abs(nv - rank[v]);
      next[v] = nv;
    }
    rank.swap(next);
    if (diff < tol) break;
  }
  return rank;
}

// --- tabular features --------------------------------------------------------------

TabularResult tabular_features(const std::vector<ingest::InteractionRecord>& records,
                               const std::unordered_set<std::string>& troll_set,
                               ingest::Platform platform) {
  using ingest::RecordKind;
  TabularResult out;

  int64_t max_ts = 0;
  for (const auto& r : records) max_ts = std::max(max_ts, r.created_at);

  struct UserAcc {
    int64_t first_ts = INT64_MAX;
    int64_t comments = 0, submissions = 0, tweets = 0, retweets = 0;
    int64_t comments_to_troll = 0, interactions_with_troll = 0;
    int64_t subs_same_title_troll = 0;
    int64_t mention_total = 0;
    int64_t text_chars = 0;
  };
  std::map<std::string, UserAcc> users;  // ordered: deterministic row order

  // Titles posted by trolls (normalized), for the reshare-fraction feature.
  std::unordered_set<std::string> troll_titles;
  if (platform == ingest::Platform::Reddit) {
    for (const auto& r : records) {
      if (r.kind == RecordKind::Submission && r.title && troll_set.count(r.author))
        troll_titles.insert(ingest::normalize_title(*r.title));
    }
  }

  for (const auto& r : records) {
    UserAcc& u = users[r.author];
    u.first_ts = std::min(u.first_ts, r.created_at);
    if (platform == ingest::Platform::Reddit) {
      if (r.kind == RecordKind::Comment) {
        ++u.comments;
        const bool parent_troll = r.parent_author && troll_set.count(*r.parent_author);
        if (parent_troll) {
          ++u.comments_to_troll;
          ++u.interactions_with_troll;
        }
      } else if (r.kind == RecordKind::Submission) {
        ++u.submissions;
        if (r.title && troll_titles.count(ingest::normalize_title(*r.title))) {
          ++u.subs_same_title_troll;
          ++u.interactions_with_troll;
        }
      }
    } else {
      ++u.tweets;
      if (r.kind == RecordKind::Retweet) ++u.retweets;
      u.mention_total += static_cast<int64_t>(r.mentioned_authors.size());
      if (r.text) u.text_chars += static_cast<int64_t>(r.text->size());
      const bool touches_troll =
          (r.parent_author && troll_set.count(*r.parent_author)) ||
          (r.retweeted_author && troll_set.count(*r.retweeted_author));
      if (touches_troll) ++u.interactions_with_troll;
    }
  }

  auto frac = [](int64_t num, int64_t den) {
    return den > 0 ? static_cast<double>(num) / static_cast<double>(den) : 0.0;
  };

  if (platform == ingest::Platform::Reddit) {
    out.data.feature_names = {"total_comments",
                              "total_submissions",
                              "account_age_days",
                              "frac_submissions_same_title_as_troll",
                              "frac_comments_reply_to_troll",
                              "frac_interactions_with_troll"};
    for (const auto& [user, acc] : users) {
      TabularRow row;
      row.user_id = user;
      row.label = troll_set.count(user) ? 1 : 0;
      const double age_days =
          static_cast<double>(max_ts - acc.first_ts) / graph::kSecondsPerDay;
      const int64_t total = acc.comments + acc.submissions;
      row.features = {static_cast<double>(acc.comments),
                      static_cast<double>(acc.submissions),
                      age_days,
                      frac(acc.subs_same_title_troll, acc.submissions),
                      frac(acc.comments_to_troll, acc.comments),
                      frac(acc.interactions_with_troll, total)};
      out.data.rows.push_back(std::move(row));
    }
  } else {
    out.missing_profile_fields = true;  // schema carries no profile data
    out.data.feature_names = {"tweet_count",   "account_age_days",
                              "followers",     "following",
                              "description_length", "avg_mentions_per_tweet",
                              "avg_tweet_length",   "frac_retweets"};
    for (const auto& [user, acc] : users) {
      TabularRow row;
      row.user_id = user;
      row.label = troll_set.count(user) ? 1 : 0;
      const double age_days =
          static_cast<double>(max_ts - acc.first_ts) / graph::kSecondsPerDay;
      row.features = {static_cast<double>(acc.tweets),
                      age_days,
                      0.0,
                      0.0,
                      0.0,
                      frac(acc.mention_total, acc.tweets),
                      frac(acc.text_chars, acc.tweets),
                      frac(acc.retweets, acc.tweets)};
      out.data.rows.push_back(std::move(row));
    }
  }
  return out;
}

std::string tabular_to_csv(const TabularData& data) {
  std::ostringstream os;
  os << "user_id";
  for (const auto& name : data.feature_names) os << "," << name;
  os << ",label\n";
  for (const auto& row : data.rows) {
    os << row.user_id;
    for (double v : row.features) os << "," << format_double17(v);
    os << "," << (row.label ? "troll" : "benign") << "\n";
  }
  return os.str();
}

// --- random forest --------------------------------------------------------------

namespace {

struct TreeBuilder {
  const std::vector<TabularRow>& rows;
  const ForestConfig& cfg;
  int64_t n_features;
  int mtry;
  Rng& rng;
  std::vector<TreeNode> nodes;

  double gini(double c0, double c1) const {
    const double n = c0 + c1;
    if (n <= 0) return 0.0;
    const double p0 = c0 / n, p1 = c1 / n;
    return 1.0 - p0 * p0 - p1 * p1;
  }

  int32_t build(std::vector<int32_t>& idx, int depth) {
    double c0 = 0, c1 = 0;
    for (int32_t i : idx) (rows[i].label ? c1 : c0) += 1.0;

    const bool pure = (c0 == 0.0 || c1 == 0.0);
    const bool depth_stop = cfg.max_depth > 0 && depth >= cfg.max_depth;
    const bool size_stop = static_cast<int>(idx.size()) < 2 * cfg.min_leaf;
    if (pure || depth_stop || size_stop) return make_leaf(c0, c1);

    // sqrt(D) feature subsample without replacement, ascending scan order
    std::vector<int32_t> pool(n_features);
    std::iota(pool.begin(), pool.end(), 0);
    for (int i = 0; i < mtry; ++i) {
      const size_t j = i + rng.uniform_int(pool.size() - i);
      std::swap(pool[i], pool[j]);
    }
    std::vector<int32_t> candidates(pool.begin(), pool.begin() + mtry);
    std::sort(candidates.begin(), candidates.end());

    const double parent_gini = gini(c0, c1);
    double best_gain = 1e-12;
    int32_t best_feature = -1;
    double best_threshold = 0.0;

    std::vector<std::pair<double, int>> vals(idx.size());
    for (int32_t f : candidates) {
      for (size_t i = 0; i < idx.size(); ++i)
        vals[i] = {rows[idx[i]].features[f], rows[idx[i]].label};
      std::sort(vals.begin(), vals.end());
      double l0 = 0, l1 = 0, r0 = c0, r1 = c1;
      for (size_t i = 0; i + 1 < vals.size(); ++i) {
        (vals[i].second ? l1 : l0) += 1.0;
        (vals[i].second ? r1 : r0) -= 1.0;
        if (vals[i].first == vals[i + 1].first) continue;
        const double nl = l0 + l1, nr = r0 + r1;
        if (nl < cfg.min_leaf || nr < cfg.min_leaf) continue;
        const double w = (nl * gini(l0, l1) + nr * gini(r0, r1)) / (nl + nr);
        const double gain = parent_gini - w;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = f;
          best_threshold = 0.5 * (vals[i].first + vals[i + 1].first);
        }
      }
    }
    if (best_feature < 0) return make_leaf(c0, c1);

    std::vector<int32_t> left, right;
    for (int32_t i : idx) {
      (rows[i].features[best_feature] <= best_threshold ? left : right).push_back(i);
    }
    if (left.empty() || right.empty()) return make_leaf(c0, c1);

    const int32_t self = static_cast<int32_t>(nodes.size());
    nodes.push_back({best_feature, static_cast<float>(best_threshold), -1, -1, 0, 0});
    const int32_t l = build(left, depth + 1);
    const int32_t r = build(right, depth + 1);
    nodes[self].left = l;
    nodes[self].right = r;
    return self;
  }

  int32_t make_leaf(double c0, double c1) {
    const int32_t self = static_cast<int32_t>(nodes.size());
    nodes.push_back({-1, 0.0f, -1, -1, static_cast<float>(c0), static_cast<float>(c1)});
    return self;
  }
};

int tree_vote(const std::vector<TreeNode>& tree, const std::vector<double>& features) {
  int32_t node = 0;
  while (tree[node].feature >= 0) {
    node = features[tree[node].feature] <= tree[node].threshold ? tree[node].left
                                                                : tree[node].right;
  }
  return tree[node].count1 > tree[node].count0 ? 1 : 0;
}

}  // namespace

ForestModel train_random_forest(const std::vector<TabularRow>& rows,
                                const ForestConfig& cfg) {
  if (rows.empty()) throw DataError("random_forest: empty training set");
  ForestModel model;
  model.seed = cfg.seed;
  model.n_features = static_cast<int64_t>(rows.front().features.size());
  const int mtry =
      std::max(1, static_cast<int>(std::sqrt(static_cast<double>(model.n_features))));

  Rng master = Rng::for_stream(cfg.seed, "forest");
  for (int t = 0; t < cfg.n_trees; ++t) {
    Rng rng = master.split("tree" + std::to_string(t));
    std::vector<int32_t> boot(rows.size());
    for (auto& i : boot) i = static_cast<int32_t>(rng.uniform_int(rows.size()));
    TreeBuilder builder{rows, cfg, model.n_features, mtry, rng, {}};
    builder.build(boot, 0);
    model.trees.push_back(std::move(builder.nodes));
  }
  return model;
}

ForestPrediction forest_predict(const ForestModel& model,
                                const std::vector<TabularRow>& rows) {
  ForestPrediction out;
  out.labels.reserve(rows.size());
  for (const auto& row : rows) {
    int64_t votes1 = 0;
    for (const auto& tree : model.trees) votes1 += tree_vote(tree, row.features);
    const double frac1 =
        static_cast<double>(votes1) / static_cast<double>(model.trees.size());
    const int label = frac1 > 0.5 ? 1 : 0;
    out.labels.push_back(label);
    out.prob_predicted.push_back(label ? frac1 : 1.0 - frac1);
    out.prob_troll.push_back(frac1);
  }
  return out;
}

// Forest rides in the checkpoint container as a "TREE" section.
std::string serialize_forest(const ForestModel& model) {
  std::string payload;
  binio::put_u64(payload, model.seed);
  binio::put_i64(payload, model.n_features);
  binio::put_u32(payload, static_cast<uint32_t>(model.trees.size()));
  for (const auto& tree : model.trees) {
    binio::put_u32(payload, static_cast<uint32_t>(tree.size()));
    for (const auto& n : tree) {
      binio::put_u32(payload, static_cast<uint32_t>(n.feature));
      binio::put_f32(payload, n.threshold);
      binio::put_u32(payload, static_cast<uint32_t>(n.left));
      binio::put_u32(payload, static_cast<uint32_t>(n.right));
      binio::put_f32(payload, n.count0);
      binio::put_f32(payload, n.count1);
    }
  }
  return nn::serialize_checkpoint({}, {{"TREE", payload}});
}

ForestModel deserialize_forest(const std::string& bytes) {
  nn::Checkpoint ckpt = nn::parse_checkpoint(bytes);
  for (const auto& [tag, payload] : ckpt.sections) {
    if (tag != "TREE") continue;
    binio::Reader r(payload);
    ForestModel model;
    model.seed = r.u64();
    model.n_features = r.i64();
    const uint32_t n_trees = r.u32();
    model.trees.resize(n_trees);
    for (auto& tree : model.trees) {
      tree.resize(r.u32());
      for (auto& n : tree) {
        n.feature = static_cast<int32_t>(r.u32());
        n.threshold = r.f32();
        n.left = static_cast<int32_t>(r.u32());
        n.right = static_cast<int32_t>(r.u32());
        n.count0 = r.f32();
        n.count1 = r.f32();
      }
    }
    return model;
  }
  throw DataError("checkpoint has no TREE section");
}

void save_forest(const ForestModel& model, const std::string& path) {
  write_text_file(path, serialize_forest(model));
}

ForestModel load_forest(const std::string& path) {
  return deserialize_forest(read_text_file(path));
}

// --- cross-validation -------------------------------------------------------------

FoldPlan stratified_folds(const std::vector<int>& labels, int k, uint64_t seed) {
  if (k < 2) throw ConfigError("k-fold requires k >= 2");
  if (static_cast<int>(labels.size()) < k)
    throw DataError("k-fold requires at least k rows");

  FoldPlan plan;
  plan.folds.resize(k);
  Rng rng = Rng::for_stream(seed, "folds");

  std::vector<int32_t> by_class[2];
  for (size_t i = 0; i < labels.size(); ++i)
    by_class[labels[i] ? 1 : 0].push_back(static_cast<int32_t>(i));

  plan.stratified = !by_class[0].empty() && !by_class[1].empty() &&
                    static_cast<int>(by_class[0].size()) >= k &&
                    static_cast<int>(by_class[1].size()) >= k;

  auto deal = [&](std::vector<int32_t>& rows, int start_fold) {
    for (size_t i = 0; i + 1 < rows.size(); ++i) {
      const size_t j = i + rng.uniform_int(rows.size() - i);
      std::swap(rows[i], rows[j]);
    }
    for (size_t i = 0; i < rows.size(); ++i)
      plan.folds[(start_fold + i) % k].push_back(rows[i]);
  };

  if (plan.stratified) {
    deal(by_class[0], 0);
    deal(by_class[1], 0);
  } else {
    std::vector<int32_t> all(labels.size());
    std::iota(all.begin(), all.end(), 0);
    deal(all, 0);
  }
  for (auto& fold : plan.folds) std::sort(fold.begin(), fold.end());
  return plan;
}

CvSummary summarize_folds(const std::vector<FoldMetrics>& folds, bool stratified) {
  CvSummary s;
  s.folds = static_cast<int>(folds.size());
  s.stratified = stratified;
  std::vector<double> auc, prec, rec, f1;
  for (const auto& f : folds) {
    auc.push_back(f.auc);
    prec.push_back(f.precision);
    rec.push_back(f.recall);
    f1.push_back(f.f1);
  }
  s.metrics["auc"] = eval::mean_std(auc);
  s.metrics["precision"] = eval::mean_std(prec);
  s.metrics["recall"] = eval::mean_std(rec);
  s.metrics["f1"] = eval::mean_std(f1);
  return s;
}

CvSummary kfold_cv_generic(const std::vector<int>& labels, int k, uint64_t seed,
                           const FoldEval& fold_eval) {
  FoldPlan plan = stratified_folds(labels, k, seed);
  std::vector<FoldMetrics> results;
  for (int f = 0; f < k; ++f) {
    std::vector<int32_t> train;
    for (int g = 0; g < k; ++g) {
      if (g == f) continue;
      train.insert(train.end(), plan.folds[g].begin(), plan.folds[g].end());
    }
    std::sort(train.begin(), train.end());
    results.push_back(fold_eval(train, plan.folds[f]));
  }
  return summarize_folds(results, plan.stratified);
}

CvSummary kfold_cv(const TabularData& data, int k, const ForestConfig& cfg, uint64_t seed) {
  std::vector<int> labels;
  labels.reserve(data.rows.size());
  for (const auto& r : data.rows) labels.push_back(r.label);

  return kfold_cv_generic(labels, k, seed, [&](const std::vector<int32_t>& train_rows,
                                               const std::vector<int32_t>& test_rows) {
    std::vector<TabularRow> train, test;
    for (int32_t i : train_rows) train.push_back(data.rows[i]);
    for (int32_t i : test_rows) test.push_back(data.rows[i]);
    ForestModel model = train_random_forest(train, cfg);
    ForestPrediction pred = forest_predict(model, test);
    std::vector<int> truth;
    for (const auto& r : test) truth.push_back(r.label);
    auto rep = eval::classification_report(pred.labels, truth, pred.prob_troll);
    FoldMetrics fm;
    fm.precision = rep.precision;
    fm.recall = rep.recall;
    fm.f1 = rep.f1;
    fm.auc = rep.auc.value_or(0.5);
    return fm;
  });
}

}  // namespace tgl::baselines
