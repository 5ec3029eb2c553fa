#include "tgl/record.hpp"

#include <algorithm>
#include <cctype>
#include <istream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "tgl/errors.hpp"

namespace tgl::ingest {

using nlohmann::json;

Platform platform_from_string(const std::string& s) {
  if (s == "reddit" || s == "Reddit") return Platform::Reddit;
  if (s == "x" || s == "X" || s == "twitter") return Platform::X;
  throw ConfigError("unknown platform: " + s);
}

std::string platform_to_string(Platform p) {
  return p == Platform::Reddit ? "reddit" : "x";
}

std::string relation_to_string(Relation r) {
  switch (r) {
    case Relation::Reply: return "reply";
    case Relation::ReshareSameTitle: return "reshare_same_title";
    case Relation::Retweet: return "retweet";
    case Relation::Mention: return "mention";
  }
  return "?";
}

namespace {

std::string require_string(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string() || it->get<std::string>().empty())
    throw DataError(std::string("missing or empty field: ") + key);
  return it->get<std::string>();
}

int64_t require_epoch(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_number_integer())
    throw DataError(std::string("missing integer field: ") + key);
  int64_t v = it->get<int64_t>();
  if (v <= 0) throw DataError(std::string("non-positive timestamp: ") + key);
  return v;
}

std::optional<std::string> optional_string(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw DataError(std::string("field must be a string: ") + key);
  std::string s = it->get<std::string>();
  if (s.empty()) return std::nullopt;
  return s;
}

InteractionRecord parse_reddit_line(const json& j) {
  InteractionRecord r;
  r.platform = Platform::Reddit;
  r.record_id = require_string(j, "id");
  r.author = require_string(j, "author");
  r.created_at = require_epoch(j, "created_utc");
  const std::string type = require_string(j, "type");
  r.title = optional_string(j, "title");
  r.text = optional_string(j, "body");
  r.parent_author = optional_string(j, "parent_author");
  if (type == "submission") {
    r.kind = RecordKind::Submission;
  } else if (type == "comment") {
    r.kind = RecordKind::Comment;
    if (!r.parent_author) throw DataError("comment without parent_author");
  } else {
    throw DataError("unknown reddit record type: " + type);
  }
  return r;
}

InteractionRecord parse_x_line(const json& j) {
  InteractionRecord r;
  r.platform = Platform::X;
  r.record_id = require_string(j, "tweet_id");
  r.author = require_string(j, "user_id");
  r.created_at = require_epoch(j, "created_at");
  r.text = optional_string(j, "text");
  r.parent_author = optional_string(j, "reply_to_user");
  r.retweeted_author = optional_string(j, "retweet_of_user");
  if (auto it = j.find("mentions"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw DataError("mentions must be an array");
    for (const auto& m : *it) {
      if (!m.is_string()) throw DataError("mentions entries must be strings");
      if (!m.get<std::string>().empty()) r.mentioned_authors.push_back(m.get<std::string>());
    }
  }
  if (r.retweeted_author) {
    r.kind = RecordKind::Retweet;
  } else if (r.parent_author) {
    r.kind = RecordKind::Reply;
  } else if (!r.mentioned_authors.empty()) {
    r.kind = RecordKind::MentionBearing;
  } else {
    r.kind = RecordKind::Tweet;
  }
  return r;
}

}  // namespace

ParseResult parse_records(std::istream& in, Platform platform) {
  ParseResult out;
  std::string line;
  int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      json j = json::parse(line);
      out.records.push_back(platform == Platform::Reddit ? parse_reddit_line(j)
                                                         : parse_x_line(j));
    } catch (const std::exception& e) {
      out.errors.push_back({line_no, e.what()});
    }
  }
  return out;
}

ParseResult parse_records_text(const std::string& text, Platform platform) {
  std::istringstream is(text);
  return parse_records(is, platform);
}

std::string normalize_title(const std::string& title) {
  std::string out;
  out.reserve(title.size());
  bool pending_space = false;
  for (unsigned char c : title) {
    if (std::isspace(c)) {
      if (!out.empty()) pending_space = true;
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

ExtractResult extract_edges(const std::vector<InteractionRecord>& records,
                            const EdgeRules& rules) {
  std::vector<const InteractionRecord*> sorted;
  sorted.reserve(records.size());
  for (const auto& r : records) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const InteractionRecord* a, const InteractionRecord* b) {
                     return a->created_at < b->created_at;
                   });

  ExtractResult out;
  // normalized title -> (first author, first timestamp)
  std::unordered_map<std::string, std::pair<std::string, int64_t>> first_title;

  auto emit = [&](const std::string& src, const std::string& dst, int64_t ts,
                  Relation rel) {
    if (src.empty() || src == "[deleted]") {
      ++out.skipped.unknown_parent;
      return;
    }
    if (src == dst) {
      ++out.skipped.self_loops;
      return;
    }
    out.edges.push_back({src, dst, ts, rel});
  };

  for (const InteractionRecord* r : sorted) {
    switch (r->kind) {
      case RecordKind::Comment:
        emit(r->parent_author.value_or(""), r->author, r->created_at, Relation::Reply);
        break;
      case RecordKind::Submission: {
        if (!r->title) break;
        const std::string key = normalize_title(*r->title);
        if (key.empty()) break;
        auto it = first_title.find(key);
        if (it == first_title.end()) {
          first_title.emplace(key, std::make_pair(r->author, r->created_at));
        } else if (it->second.second < r->created_at) {
          emit(it->second.first, r->author, r->created_at, Relation::ReshareSameTitle);
        }
        break;
      }
      case RecordKind::Reply:
        emit(r->parent_author.value_or(""), r->author, r->created_at, Relation::Reply);
        if (rules.include_mentions) {
          for (const auto& m : r->mentioned_authors)
            emit(m, r->author, r->created_at, Relation::Mention);
        }
        break;
      case RecordKind::Retweet:
        emit(r->retweeted_author.value_or(""), r->author, r->created_at, Relation::Retweet);
        if (rules.include_mentions) {
          for (const auto& m : r->mentioned_authors)
            emit(m, r->author, r->created_at, Relation::Mention);
        }
        break;
      case RecordKind::MentionBearing:
      case RecordKind::Tweet:
        if (rules.include_mentions) {
          for (const auto& m : r->mentioned_authors)
            emit(m, r->author, r->created_at, Relation::Mention);
        }
        break;
    }
  }
  return out;
}

std::vector<LabeledUser> parse_labels_csv(const std::string& text) {
  std::vector<LabeledUser> out;
  std::istringstream is(text);
  std::string line;
  int64_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line == "user_id,label") continue;  // optional header
    auto comma = line.rfind(',');
    if (comma == std::string::npos)
      throw DataError("labels line " + std::to_string(line_no) + ": expected user_id,label");
    std::string user = line.substr(0, comma);
    std::string label = line.substr(comma + 1);
    if (user.empty()) throw DataError("labels line " + std::to_string(line_no) + ": empty user_id");
    if (label == "troll") {
      out.push_back({user, true});
    } else if (label == "benign") {
      out.push_back({user, false});
    } else {
      throw DataError("labels line " + std::to_string(line_no) + ": unknown label '" + label + "'");
    }
  }
  return out;
}

}  // namespace tgl::ingest
