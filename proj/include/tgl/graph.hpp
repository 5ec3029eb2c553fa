#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tgl/record.hpp"

namespace tgl::graph {

enum class Label : uint8_t { Troll = 0, Benign = 1, Unknown = 2 };

// Unknown nodes are modeled as benign; callers can surface the flagged count.
inline bool is_troll(Label l) { return l == Label::Troll; }

// user-id <-> dense integer id bijection. Dense ids follow first-appearance
// order of the event stream, which keeps graph builds deterministic.
struct NodeIndex {
  std::vector<std::string> ids;
  std::unordered_map<std::string, int32_t> lookup;

  int32_t add(const std::string& user) {
    auto it = lookup.find(user);
    if (it != lookup.end()) return it->second;
    int32_t id = static_cast<int32_t>(ids.size());
    ids.push_back(user);
    lookup.emplace(user, id);
    return id;
  }

  std::optional<int32_t> find(const std::string& user) const {
    auto it = lookup.find(user);
    if (it == lookup.end()) return std::nullopt;
    return it->second;
  }

  int32_t size() const { return static_cast<int32_t>(ids.size()); }
};

// Compressed multigraph structure: adjacency sorted ascending by neighbor,
// weight = parallel-edge multiplicity. `in` is the exact transpose of `out`;
// `und` holds the distinct undirected neighbor sets.
struct Adjacency {
  std::vector<std::vector<std::pair<int32_t, uint32_t>>> out, in;
  std::vector<std::vector<int32_t>> und;
  int64_t edge_multiplicity = 0;

  int32_t node_count() const { return static_cast<int32_t>(out.size()); }

  int64_t out_weight(int32_t v) const {
    int64_t s = 0;
    for (auto& [_, w] : out[v]) s += w;
    return s;
  }
  int64_t in_weight(int32_t v) const {
    int64_t s = 0;
    for (auto& [_, w] : in[v]) s += w;
    return s;
  }
  int64_t und_degree(int32_t v) const { return static_cast<int64_t>(und[v].size()); }

  // Number of distinct unordered node pairs with at least one edge.
  int64_t distinct_und_edge_count() const;

  static Adjacency from_pairs(int32_t n, std::vector<std::pair<int32_t, int32_t>> pairs);
};

struct Graph {
  NodeIndex nodes;
  std::vector<Label> labels;
  Adjacency adj;
  int64_t unknown_label_count = 0;

  int32_t node_count() const { return nodes.size(); }
};

struct Snapshot {
  int64_t start = 0;
  Adjacency adj;
};

// Ordered snapshots over one global node set; snapshot i covers
// [t0 + i*delta, t0 + (i+1)*delta). Interior empty windows are kept so the
// sequence is contiguous; trailing empties are never emitted.
struct TemporalGraph {
  NodeIndex nodes;
  std::vector<Label> labels;
  int64_t t0 = 0;
  int64_t delta = 0;
  std::vector<Snapshot> snapshots;
  int64_t unknown_label_count = 0;

  int32_t node_count() const { return nodes.size(); }
  int64_t snapshot_count() const { return static_cast<int64_t>(snapshots.size()); }
};

using LabelMap = std::unordered_map<std::string, bool>;  // user -> is_troll

LabelMap label_map_from(const std::vector<ingest::LabeledUser>& users);

Graph build_graph(const std::vector<ingest::EdgeEvent>& events, const LabelMap& labels);

TemporalGraph partition_snapshots(const std::vector<ingest::EdgeEvent>& events,
                                  const LabelMap& labels, int64_t delta,
                                  std::optional<int64_t> t0 = std::nullopt);

struct DeltaSelection {
  int64_t delta = 0;
  bool satisfied = false;       // every snapshot met the min-edge bound
  int64_t snapshot_count = 0;
  int64_t min_snapshot_edges = 0;
};

constexpr int64_t kSecondsPerDay = 86400;

// Smallest delta on the candidate grid (multiples of step) for which no
// snapshot has fewer than min_edges edges. Falls back to the full span with
// satisfied=false when even a single window cannot meet the bound.
DeltaSelection select_delta(const std::vector<ingest::EdgeEvent>& events,
                            int64_t min_edges = 16, int64_t step = kSecondsPerDay);

// "TGF1" container; save/load round-trips bit-exactly.
std::string serialize_graph(const Graph& g);
Graph deserialize_graph(const std::string& bytes);
void save_graph(const Graph& g, const std::string& path);
Graph load_graph(const std::string& path);

std::string graph_text_dump(const Graph& g);

}  // namespace tgl::graph
