#include "tgl/features.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "tgl/binio.hpp"
#include "tgl/errors.hpp"
#include "tgl/json_io.hpp"
#include "tgl/rng.hpp"

namespace tgl::features {

using nlohmann::json;

Tensor FeatureMatrix::to_tensor() const {
  Tensor t({rows, cols});
  t.data = data;
  return t;
}

void FeatureMatrix::validate() const {
  for (float v : data) {
    if (!std::isfinite(v)) throw DataError("feature matrix contains non-finite entries");
  }
  if (!schema.empty()) {
    int64_t total = 0;
    for (const auto& g : schema) {
      if (g.end < g.begin) throw DataError("feature group with negative width: " + g.name);
      total += g.end - g.begin;
    }
    if (total != cols) throw DataError("feature schema widths do not sum to matrix width");
  }
}

std::vector<double> degree_centrality_all(const graph::Adjacency& adj) {
  const int32_t n = adj.node_count();
  std::vector<double> out(n, 0.0);
  int64_t max_deg = 0;
  for (int32_t v = 0; v < n; ++v) max_deg = std::max(max_deg, adj.und_degree(v));
  if (max_deg == 0) return out;  // edgeless: all zero by convention
  for (int32_t v = 0; v < n; ++v)
    out[v] = static_cast<double>(adj.und_degree(v)) / static_cast<double>(max_deg);
  return out;
}

double degree_centrality(const graph::Adjacency& adj, int32_t v) {
  if (v < 0 || v >= adj.node_count()) throw DataError("degree_centrality: unknown node");
  int64_t max_deg = 0;
  for (int32_t u = 0; u < adj.node_count(); ++u) max_deg = std::max(max_deg, adj.und_degree(u));
  if (max_deg == 0) return 0.0;
  return static_cast<double>(adj.und_degree(v)) / static_cast<double>(max_deg);
}

FeatureMatrix detection_features(const graph::Adjacency& adj) {
  const int32_t n = adj.node_count();
  FeatureMatrix m(n, 6);
  m.schema = {{"degree", 0, 2}, {"centrality", 2, 3}, {"ego_net", 3, 6}};
  const auto centrality = degree_centrality_all(adj);
  for (int32_t v = 0; v < n; ++v) {
    double avg_nb = 0.0;
    for (int32_t u : adj.und[v]) avg_nb += static_cast<double>(adj.und_degree(u));
    if (!adj.und[v].empty()) avg_nb /= static_cast<double>(adj.und[v].size());

    m.at(v, 0) = static_cast<float>(adj.in_weight(v));
    m.at(v, 1) = static_cast<float>(adj.out_weight(v));
    m.at(v, 2) = static_cast<float>(centrality[v]);
    m.at(v, 3) = static_cast<float>(avg_nb);
    m.at(v, 4) = static_cast<float>(adj.und_degree(v));
    m.at(v, 5) = static_cast<float>(1 + adj.und_degree(v));
  }
  return m;
}

LabelAggregates label_aggregates(const graph::Adjacency& adj,
                                 const std::vector<graph::Label>& labels) {
  const int32_t n = adj.node_count();
  if (static_cast<int32_t>(labels.size()) != n)
    throw DataError("label_aggregates: labels must cover all nodes");

  LabelAggregates out;
  FeatureMatrix& m = out.features;
  m = FeatureMatrix(n, 15);
  m.schema = {{"onehot", 0, 2}, {"in_agg", 2, 6}, {"out_agg", 6, 10},
              {"und_agg", 10, 14}, {"centrality", 14, 15}};

  // one-hot over (troll, benign); unknown counts as benign
  auto onehot = [&](int32_t v, double& troll, double& benign) {
    if (graph::is_troll(labels[v])) {
      troll = 1.0;
      benign = 0.0;
    } else {
      troll = 0.0;
      benign = 1.0;
    }
  };
  for (int32_t v = 0; v < n; ++v) {
    if (labels[v] == graph::Label::Unknown) ++out.missing_labels;
  }

  const auto centrality = degree_centrality_all(adj);
  for (int32_t v = 0; v < n; ++v) {
    double t, b;
    onehot(v, t, b);
    m.at(v, 0) = static_cast<float>(t);
    m.at(v, 1) = static_cast<float>(b);

    // Distinct neighbor sets per direction; mean over an empty set is zero.
    auto fill = [&](const std::vector<int32_t>& nbs, int64_t col) {
      double st = 0.0, sb = 0.0;
      for (int32_t u : nbs) {
        double ut, ub;
        onehot(u, ut, ub);
        st += ut;
        sb += ub;
      }
      const double k = static_cast<double>(nbs.size());
      m.at(v, col + 0) = static_cast<float>(st);
      m.at(v, col + 1) = static_cast<float>(sb);
      m.at(v, col + 2) = static_cast<float>(k > 0 ? st / k : 0.0);
      m.at(v, col + 3) = static_cast<float>(k > 0 ? sb / k : 0.0);
    };
    std::vector<int32_t> in_nbs, out_nbs;
    in_nbs.reserve(adj.in[v].size());
    for (auto& [u, _] : adj.in[v]) in_nbs.push_back(u);
    out_nbs.reserve(adj.out[v].size());
    for (auto& [u, _] : adj.out[v]) out_nbs.push_back(u);
    fill(in_nbs, 2);
    fill(out_nbs, 6);
    fill(adj.und[v], 10);

    m.at(v, 14) = static_cast<float>(centrality[v]);
  }
  return out;
}

void EmbeddingTable::validate() const {
  for (const auto& [user, vec] : vectors) {
    if (static_cast<int64_t>(vec.size()) != width)
      throw DataError("embedding width mismatch for user " + user);
    for (float v : vec) {
      if (!std::isfinite(v)) throw DataError("non-finite embedding for user " + user);
    }
  }
  if (provider == "sbert" && width != 384) throw DataError("sbert embeddings must be 384-wide");
  if (provider == "te3s" && width != 1536) throw DataError("te3s embeddings must be 1536-wide");
}

FuseResult fuse_embeddings(const FeatureMatrix& topo, const EmbeddingTable& table,
                           const std::vector<std::string>& row_user_ids) {
  if (static_cast<int64_t>(row_user_ids.size()) != topo.rows)
    throw DataError("fuse_embeddings: one user id per row required");
  table.validate();

  FuseResult out;
  FeatureMatrix& m = out.features;
  m = FeatureMatrix(topo.rows, topo.cols + table.width);
  m.schema = topo.schema;
  m.schema.push_back({"embedding", topo.cols, topo.cols + table.width});

  for (int64_t i = 0; i < topo.rows; ++i) {
    for (int64_t j = 0; j < topo.cols; ++j) m.at(i, j) = topo.at(i, j);
    auto it = table.vectors.find(row_user_ids[static_cast<size_t>(i)]);
    if (it == table.vectors.end()) {
      ++out.missing_users;
      continue;  // zero-filled
    }
    for (int64_t j = 0; j < table.width; ++j)
      m.at(i, topo.cols + j) = it->second[static_cast<size_t>(j)];
  }
  return out;
}

std::vector<std::vector<float>> HashEmbeddingProvider::embed(
    const std::vector<std::string>& texts) {
  std::vector<std::vector<float>> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    std::vector<double> acc(static_cast<size_t>(width_), 0.0);
    int64_t tokens = 0;
    std::istringstream is(text);
    std::string tok;
    while (is >> tok) {
      const uint64_t h = fnv1a64(tok);
      const size_t idx = static_cast<size_t>(h % static_cast<uint64_t>(width_));
      const double sign = ((h >> 32) & 1) ? 1.0 : -1.0;
      acc[idx] += sign;
      ++tokens;
    }
    std::vector<float> vec(static_cast<size_t>(width_), 0.0f);
    if (tokens > 0) {
      const double norm = std::sqrt(static_cast<double>(tokens));
      for (size_t i = 0; i < acc.size(); ++i) vec[i] = static_cast<float>(acc[i] / norm);
    }
    out.push_back(std::move(vec));
  }
  return out;
}

std::vector<std::vector<float>> RandomEmbeddingProvider::embed(
    const std::vector<std::string>& texts) {
  std::vector<std::vector<float>> out;
  out.reserve(texts.size());
  const double scale = 1.0 / std::sqrt(static_cast<double>(width_));
  for (const auto& text : texts) {
    Rng rng(seed_ ^ fnv1a64(text));
    std::vector<float> vec(static_cast<size_t>(width_));
    for (auto& v : vec) v = static_cast<float>(rng.normal() * scale);
    out.push_back(std::move(vec));
  }
  return out;
}

namespace {

std::vector<std::string> pack_chunks(const std::vector<UserPost>& posts,
                                     const EmbedOptions& opt) {
  std::vector<UserPost> sorted = posts;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const UserPost& a, const UserPost& b) { return a.created_at > b.created_at; });
  if (static_cast<int64_t>(sorted.size()) > opt.max_posts)
    sorted.resize(static_cast<size_t>(opt.max_posts));

  std::vector<std::string> chunks;
  std::string current;
  for (const auto& p : sorted) {
    std::string text = p.text;
    if (static_cast<int64_t>(text.size()) > opt.chunk_char_limit)
      text.resize(static_cast<size_t>(opt.chunk_char_limit));
    if (!current.empty() &&
        static_cast<int64_t>(current.size() + 1 + text.size()) > opt.chunk_char_limit) {
      chunks.push_back(std::move(current));
      current.clear();
    }
    if (!current.empty()) current.push_back('\n');
    current += text;
  }
  if (!current.empty()) chunks.push_back(std::move(current));
  return chunks;
}

}  // namespace

std::vector<float> embed_user_posts(const std::vector<UserPost>& posts,
                                    EmbeddingProvider& provider, const EmbedOptions& opt) {
  const auto chunks = pack_chunks(posts, opt);
  if (chunks.empty()) return std::vector<float>(static_cast<size_t>(provider.width()), 0.0f);

  std::vector<std::vector<float>> vecs;
  int backoff = opt.backoff_ms;
  for (int attempt = 0;; ++attempt) {
    try {
      vecs = provider.embed(chunks);
      break;
    } catch (const std::exception& e) {
      if (attempt + 1 >= opt.retries)
        throw DataError(std::string("embedding provider failed after retries: ") + e.what());
      if (backoff > 0) std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
      backoff *= 2;
    }
  }
  if (vecs.size() != chunks.size())
    throw DataError("embedding provider returned wrong vector count");

  std::vector<double> acc(static_cast<size_t>(provider.width()), 0.0);
  for (const auto& v : vecs) {
    if (static_cast<int64_t>(v.size()) != provider.width())
      throw DataError("embedding provider returned wrong width");
    for (size_t i = 0; i < v.size(); ++i) acc[i] += v[i];
  }
  std::vector<float> mean(acc.size());
  for (size_t i = 0; i < acc.size(); ++i)
    mean[i] = static_cast<float>(acc[i] / static_cast<double>(vecs.size()));
  return mean;
}

// --- embedding table files ---------------------------------------------------

EmbeddingTable load_embedding_table(const std::string& path) {
  const std::string bytes = read_text_file(path);
  EmbeddingTable table;
  if (bytes.size() >= 4 && bytes.compare(0, 4, "EMB1") == 0) {
    binio::Reader r(bytes);
    r.raw(4);
    const uint32_t version = r.u32();
    if (version != 1) throw DataError("unsupported EMB1 version");
    table.provider = r.bytes();
    table.width = r.u32();
    const uint32_t count = r.u32();
    for (uint32_t i = 0; i < count; ++i) {
      std::string user = r.bytes();
      std::vector<float> vec(static_cast<size_t>(table.width));
      for (auto& v : vec) v = r.f32();
      table.vectors.emplace(std::move(user), std::move(vec));
    }
  } else {
    std::istringstream is(bytes);
    std::string line;
    int64_t line_no = 0;
    while (std::getline(is, line)) {
      ++line_no;
      if (line.empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const std::exception& e) {
        throw DataError("embedding table line " + std::to_string(line_no) + ": " + e.what());
      }
      std::string user = j.at("user_id").get<std::string>();
      std::vector<float> vec = j.at("vector").get<std::vector<float>>();
      if (table.width == 0) table.width = static_cast<int64_t>(vec.size());
      table.vectors.emplace(std::move(user), std::move(vec));
    }
  }
  table.validate();
  return table;
}

void save_embedding_table_jsonl(const EmbeddingTable& table, const std::string& path) {
  std::string out;
  for (const auto& [user, vec] : table.vectors) {
    json j;
    j["user_id"] = user;
    j["vector"] = vec;
    out += j.dump();
    out += "\n";
  }
  write_text_file(path, out);
}

void save_embedding_table_binary(const EmbeddingTable& table, const std::string& path) {
  std::string buf;
  buf += "EMB1";
  binio::put_u32(buf, 1);
  binio::put_bytes(buf, table.provider);
  binio::put_u32(buf, static_cast<uint32_t>(table.width));
  binio::put_u32(buf, static_cast<uint32_t>(table.vectors.size()));
  for (const auto& [user, vec] : table.vectors) {
    binio::put_bytes(buf, user);
    for (float v : vec) binio::put_f32(buf, v);
  }
  write_text_file(path, buf);
}

// --- standardization --------------------------------------------------------

ColumnStats standardize_fit(const FeatureMatrix& m, const std::vector<int32_t>& train_rows,
                            int64_t col_begin, int64_t col_end) {
  if (col_end < 0) col_end = m.cols;
  if (train_rows.empty()) throw DataError("standardize_fit: no training rows");
  ColumnStats stats;
  stats.col_begin = col_begin;
  stats.col_end = col_end;
  const int64_t width = col_end - col_begin;
  stats.mean.assign(static_cast<size_t>(width), 0.0);
  stats.stdev.assign(static_cast<size_t>(width), 1.0);
  const double n = static_cast<double>(train_rows.size());
  for (int64_t c = 0; c < width; ++c) {
    double sum = 0.0;
    for (int32_t r : train_rows) sum += m.at(r, col_begin + c);
    const double mean = sum / n;
    double var = 0.0;
    for (int32_t r : train_rows) {
      const double d = m.at(r, col_begin + c) - mean;
      var += d * d;
    }
    var /= n;
    stats.mean[static_cast<size_t>(c)] = mean;
    stats.stdev[static_cast<size_t>(c)] = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
  return stats;
}

void standardize_apply(FeatureMatrix& m, const ColumnStats& stats) {
  const int64_t width = stats.col_end - stats.col_begin;
  for (int64_t r = 0; r < m.rows; ++r) {
    for (int64_t c = 0; c < width; ++c) {
      float& v = m.at(r, stats.col_begin + c);
      v = static_cast<float>((v - stats.mean[static_cast<size_t>(c)]) /
                             stats.stdev[static_cast<size_t>(c)]);
    }
  }
}

FeatureMatrix select_groups(const FeatureMatrix& m, const std::vector<std::string>& keep) {
  std::vector<FeatureGroup> kept;
  int64_t width = 0;
  for (const auto& g : m.schema) {
    if (std::find(keep.begin(), keep.end(), g.name) != keep.end()) {
      kept.push_back(g);
      width += g.end - g.begin;
    }
  }
  if (width == 0) throw ConfigError("select_groups: no feature groups left");
  FeatureMatrix out(m.rows, width);
  int64_t col = 0;
  for (const auto& g : kept) {
    for (int64_t r = 0; r < m.rows; ++r) {
      for (int64_t c = g.begin; c < g.end; ++c) out.at(r, col + (c - g.begin)) = m.at(r, c);
    }
    out.schema.push_back({g.name, col, col + (g.end - g.begin)});
    col += g.end - g.begin;
  }
  return out;
}

}  // namespace tgl::features
