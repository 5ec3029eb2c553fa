#include "tgl/graph.hpp"

#include <algorithm>
#include <sstream>

#include "tgl/binio.hpp"
#include "tgl/errors.hpp"
#include "tgl/json_io.hpp"

namespace tgl::graph {

int64_t Adjacency::distinct_und_edge_count() const {
  int64_t c = 0;
  for (int32_t v = 0; v < node_count(); ++v) {
    for (int32_t u : und[v]) {
      if (u > v) ++c;
    }
  }
  return c;
}

Adjacency Adjacency::from_pairs(int32_t n, std::vector<std::pair<int32_t, int32_t>> pairs) {
  Adjacency adj;
  adj.out.resize(n);
  adj.in.resize(n);
  adj.und.resize(n);
  adj.edge_multiplicity = static_cast<int64_t>(pairs.size());

  std::sort(pairs.begin(), pairs.end());
  for (size_t i = 0; i < pairs.size();) {
    size_t j = i;
    while (j < pairs.size() && pairs[j] == pairs[i]) ++j;
    const auto [s, t] = pairs[i];
    const uint32_t w = static_cast<uint32_t>(j - i);
    adj.out[s].emplace_back(t, w);
    adj.in[t].emplace_back(s, w);
    i = j;
  }
  for (auto& lst : adj.in)
    std::sort(lst.begin(), lst.end());

  for (int32_t v = 0; v < n; ++v) {
    auto& u = adj.und[v];
    u.reserve(adj.out[v].size() + adj.in[v].size());
    for (auto& [nb, _] : adj.out[v]) u.push_back(nb);
    for (auto& [nb, _] : adj.in[v]) u.push_back(nb);
    std::sort(u.begin(), u.end());
    u.erase(std::unique(u.begin(), u.end()), u.end());
  }
  return adj;
}

LabelMap label_map_from(const std::vector<ingest::LabeledUser>& users) {
  LabelMap m;
  for (const auto& u : users) m[u.user_id] = u.is_troll;
  return m;
}

namespace {

void assign_labels(const NodeIndex& nodes, const LabelMap& labels,
                   std::vector<Label>& out, int64_t& unknown_count) {
  out.resize(nodes.size());
  unknown_count = 0;
  for (int32_t v = 0; v < nodes.size(); ++v) {
    auto it = labels.find(nodes.ids[v]);
    if (it == labels.end()) {
      out[v] = Label::Unknown;
      ++unknown_count;
    } else {
      out[v] = it->second ? Label::Troll : Label::Benign;
    }
  }
}

NodeIndex index_from_events(const std::vector<ingest::EdgeEvent>& events) {
  NodeIndex idx;
  for (const auto& e : events) {
    idx.add(e.source);
    idx.add(e.target);
  }
  return idx;
}

}  // namespace

Graph build_graph(const std::vector<ingest::EdgeEvent>& events, const LabelMap& labels) {
  Graph g;
  g.nodes = index_from_events(events);
  std::vector<std::pair<int32_t, int32_t>> pairs;
  pairs.reserve(events.size());
  for (const auto& e : events)
    pairs.emplace_back(*g.nodes.find(e.source), *g.nodes.find(e.target));
  g.adj = Adjacency::from_pairs(g.nodes.size(), std::move(pairs));
  assign_labels(g.nodes, labels, g.labels, g.unknown_label_count);
  return g;
}

TemporalGraph partition_snapshots(const std::vector<ingest::EdgeEvent>& events,
                                  const LabelMap& labels, int64_t delta,
                                  std::optional<int64_t> t0_opt) {
  if (delta <= 0) throw ConfigError("snapshot delta must be positive");

  TemporalGraph tg;
  tg.delta = delta;
  tg.nodes = index_from_events(events);
  assign_labels(tg.nodes, labels, tg.labels, tg.unknown_label_count);
  if (events.empty()) {
    tg.t0 = t0_opt.value_or(0);
    return tg;
  }

  int64_t min_ts = events.front().timestamp, max_ts = events.front().timestamp;
  for (const auto& e : events) {
    min_ts = std::min(min_ts, e.timestamp);
    max_ts = std::max(max_ts, e.timestamp);
  }
  tg.t0 = t0_opt.value_or(min_ts);
  if (min_ts < tg.t0) throw DataError("event timestamp precedes window anchor t0");

  const int64_t buckets = (max_ts - tg.t0) / delta + 1;
  std::vector<std::vector<std::pair<int32_t, int32_t>>> per_bucket(buckets);
  for (const auto& e : events) {
    const int64_t b = (e.timestamp - tg.t0) / delta;
    per_bucket[b].emplace_back(*tg.nodes.find(e.source), *tg.nodes.find(e.target));
  }
  tg.snapshots.reserve(buckets);
  for (int64_t b = 0; b < buckets; ++b) {
    Snapshot s;
    s.start = tg.t0 + b * delta;
    s.adj = Adjacency::from_pairs(tg.nodes.size(), std::move(per_bucket[b]));
    tg.snapshots.push_back(std::move(s));
  }
  return tg;
}

DeltaSelection select_delta(const std::vector<ingest::EdgeEvent>& events,
                            int64_t min_edges, int64_t step) {
  if (events.empty()) throw DataError("select_delta requires events");
  if (step <= 0) throw ConfigError("candidate step must be positive");

  int64_t min_ts = events.front().timestamp, max_ts = events.front().timestamp;
  for (const auto& e : events) {
    min_ts = std::min(min_ts, e.timestamp);
    max_ts = std::max(max_ts, e.timestamp);
  }
  const int64_t span = max_ts - min_ts;
  const int64_t max_candidates = span / step + 1;  // last candidate yields one bucket

  auto scan = [&](int64_t delta) {
    const int64_t buckets = span / delta + 1;
    std::vector<int64_t> counts(buckets, 0);
    for (const auto& e : events) ++counts[(e.timestamp - min_ts) / delta];
    int64_t min_count = counts[0];
    for (int64_t c : counts) min_count = std::min(min_count, c);
    return std::make_pair(buckets, min_count);
  };

  for (int64_t i = 1; i <= max_candidates; ++i) {
    const int64_t delta = i * step;
    auto [buckets, min_count] = scan(delta);
    if (min_count >= min_edges) return {delta, true, buckets, min_count};
  }
  const int64_t full = max_candidates * step;
  auto [buckets, min_count] = scan(full);
  return {full, false, buckets, min_count};
}

// --- "TGF1" container ------------------------------------------------------
// magic "TGF1" | u32 version | u32 node_count
//   per node: u32 name_len + utf8 user id
//   per node: u8 label
//   per node: u32 out_degree, then (u32 neighbor, u32 weight) entries
// in/und adjacency are transposes of out and rebuilt on load.

std::string serialize_graph(const Graph& g) {
  std::string buf;
  buf += "TGF1";
  binio::put_u32(buf, 1);
  binio::put_u32(buf, static_cast<uint32_t>(g.nodes.size()));
  for (const auto& id : g.nodes.ids) binio::put_bytes(buf, id);
  for (Label l : g.labels) binio::put_u8(buf, static_cast<uint8_t>(l));
  for (int32_t v = 0; v < g.nodes.size(); ++v) {
    binio::put_u32(buf, static_cast<uint32_t>(g.adj.out[v].size()));
    for (auto& [nb, w] : g.adj.out[v]) {
      binio::put_u32(buf, static_cast<uint32_t>(nb));
      binio::put_u32(buf, w);
    }
  }
  return buf;
}

Graph deserialize_graph(const std::string& bytes) {
  binio::Reader r(bytes);
  if (r.raw(4) != "TGF1") throw DataError("bad graph magic; expected TGF1");
  const uint32_t version = r.u32();
  if (version != 1) throw DataError("unsupported graph version " + std::to_string(version));
  const uint32_t n = r.u32();

  Graph g;
  for (uint32_t i = 0; i < n; ++i) g.nodes.add(r.bytes());
  if (g.nodes.size() != static_cast<int32_t>(n)) throw DataError("duplicate node ids in container");
  g.labels.resize(n);
  for (uint32_t i = 0; i < n; ++i) {
    const uint8_t l = r.u8();
    if (l > 2) throw DataError("bad label byte");
    g.labels[i] = static_cast<Label>(l);
    if (g.labels[i] == Label::Unknown) ++g.unknown_label_count;
  }
  std::vector<std::pair<int32_t, int32_t>> pairs;
  for (uint32_t v = 0; v < n; ++v) {
    const uint32_t deg = r.u32();
    for (uint32_t e = 0; e < deg; ++e) {
      const uint32_t nb = r.u32();
      const uint32_t w = r.u32();
      if (nb >= n) throw DataError("neighbor id out of range");
      for (uint32_t k = 0; k < w; ++k) pairs.emplace_back(static_cast<int32_t>(v), static_cast<int32_t>(nb));
    }
  }
  g.adj = Adjacency::from_pairs(static_cast<int32_t>(n), std::move(pairs));
  return g;
}

void save_graph(const Graph& g, const std::string& path) {
  write_text_file(path, serialize_graph(g));
}

Graph load_graph(const std::string& path) { return deserialize_graph(read_text_file(path)); }

std::string graph_text_dump(const Graph& g) {
  std::ostringstream os;
  os << "graph nodes=" << g.nodes.size() << " edges=" << g.adj.edge_multiplicity << "\n";
  for (int32_t v = 0; v < g.nodes.size(); ++v) {
    os << "node " << v << " " << g.nodes.ids[v] << " "
       << (g.labels[v] == Label::Troll ? "troll" : g.labels[v] == Label::Benign ? "benign" : "unknown")
       << "\n";
  }
  for (int32_t v = 0; v < g.nodes.size(); ++v) {
    for (auto& [nb, w] : g.adj.out[v]) os << "edge " << v << " " << nb << " " << w << "\n";
  }
  return os.str();
}

}  // namespace tgl::graph
