#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace vidmem::dataprep {

// Fixed taxonomy: six topics, 22 tasks total.
extern const std::array<std::string, 6> kTopics;
extern const std::map<std::string, std::vector<std::string>> kTasksByTopic;
bool known_topic(const std::string& topic);
bool known_task(const std::string& topic, const std::string& task);

constexpr double kMinDurationS = 180.0;   // 3 minutes
constexpr double kMaxDurationS = 3600.0;  // 60 minutes
constexpr std::size_t kMinEvents = 3;
constexpr std::size_t kMaxTurns = 5;

extern const std::array<std::string, 6> kCaptionAspects;

struct QARecord {
    std::string video_id;
    std::string topic;
    std::string task;
    std::string format;  // "OE" or "MC"
    std::string question;
    std::string answer;
    std::vector<std::string> options;  // exactly 4 when MC

    nlohmann::json to_json() const;
};

struct ConversationRecord {
    std::string video_id;
    std::vector<QARecord> turns;  // 1..kMaxTurns

    nlohmann::json to_json() const;
};

struct ValidationReport {
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::size_t malformed_lines = 0;
    std::map<std::string, std::size_t> reject_reasons;
    std::vector<QARecord> accepted_qa;
    std::vector<nlohmann::json> accepted_canonical;  // all record kinds, echoed
};

// Streams line-delimited JSON records (kinds: video, clip_caption, qa) and
// validates against the schema. Malformed lines are counted, never fatal.
ValidationReport validate_records(std::istream& in);
ValidationReport validate_file(const std::string& path);

// Groups QA records by video, shuffles within each video by seed, and chunks
// into conversations of at most kMaxTurns. Every record lands in exactly one
// conversation.
std::vector<ConversationRecord> pack_conversations(std::vector<QARecord> records,
                                                   std::size_t max_turns,
                                                   std::uint64_t seed);

struct DatasetStats {
    std::map<std::size_t, std::size_t> duration_hist;  // 3-minute buckets
    std::map<std::size_t, std::size_t> event_hist;     // unit buckets
    std::map<std::string, std::size_t> topic_counts;
    std::map<std::string, std::size_t> task_counts;
    std::map<std::string, std::size_t> format_counts;

    nlohmann::json to_json() const;
};

DatasetStats dataset_stats(const std::vector<nlohmann::json>& canonical_records);

}  // namespace vidmem::dataprep
