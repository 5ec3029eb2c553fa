#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace tgl::ingest {

enum class Platform { Reddit, X };

Platform platform_from_string(const std::string& s);
std::string platform_to_string(Platform p);

enum class RecordKind { Submission, Comment, Tweet, Retweet, Reply, MentionBearing };

// One parsed platform event (post/comment/tweet).
struct InteractionRecord {
  std::string record_id;
  Platform platform = Platform::Reddit;
  std::string author;
  int64_t created_at = 0;  // epoch seconds
  RecordKind kind = RecordKind::Submission;
  std::optional<std::string> title;
  std::optional<std::string> text;
  std::optional<std::string> parent_author;
  std::optional<std::string> retweeted_author;
  std::vector<std::string> mentioned_authors;
};

enum class Relation { Reply, ReshareSameTitle, Retweet, Mention };

std::string relation_to_string(Relation r);

// Directed interaction: source u is the acted-upon/original author, target v
// is the acting user. In/out-degree semantics downstream depend on this.
struct EdgeEvent {
  std::string source;
  std::string target;
  int64_t timestamp = 0;
  Relation relation = Relation::Reply;

  bool operator==(const EdgeEvent&) const = default;
};

struct LineError {
  int64_t line = 0;
  std::string message;
};

struct ParseResult {
  std::vector<InteractionRecord> records;
  std::vector<LineError> errors;
};

struct EdgeRules {
  bool include_mentions = false;  // forecasting mode only
  bool same_subreddit_only = false;
};

struct SkipReport {
  int64_t self_loops = 0;
  int64_t unknown_parent = 0;

  int64_t total() const { return self_loops + unknown_parent; }
};

struct ExtractResult {
  std::vector<EdgeEvent> edges;
  SkipReport skipped;
};

// Parses newline-delimited JSON records. Malformed lines are reported with
// their 1-based line number; well-formed lines are returned in input order.
ParseResult parse_records(std::istream& in, Platform platform);
ParseResult parse_records_text(const std::string& text, Platform platform);

// Derives directed edge events from records per the platform interaction
// rules. Records are sorted by created_at internally if needed.
ExtractResult extract_edges(const std::vector<InteractionRecord>& records,
                            const EdgeRules& rules);

// Case-fold + trim + collapse internal whitespace; reshare matching compares
// normalized titles exactly.
std::string normalize_title(const std::string& title);

struct LabeledUser {
  std::string user_id;
  bool is_troll = false;
};

// "user_id,label" CSV with label in {troll, benign}.
std::vector<LabeledUser> parse_labels_csv(const std::string& text);

}  // namespace tgl::ingest
