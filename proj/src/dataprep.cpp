#include "vidmem/dataprep.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

namespace vidmem::dataprep {

const std::array<std::string, 6> kTopics = {"temporality", "spatiality", "object",
                                            "action",      "scene",      "event"};

const std::map<std::string, std::vector<std::string>> kTasksByTopic = {
    {"temporality",
     {"temporal_ordering", "temporal_localization", "duration_estimation",
      "temporal_reasoning"}},
    {"spatiality", {"spatial_relation", "spatial_localization", "camera_motion"}},
    {"object",
     {"object_recognition", "object_counting", "object_attribute", "object_interaction"}},
    {"action",
     {"action_recognition", "action_counting", "action_sequence", "action_prediction"}},
    {"scene", {"scene_recognition", "scene_transition", "scene_description"}},
    {"event",
     {"event_recognition", "event_ordering", "event_counting", "overall_summarization"}},
};

const std::array<std::string, 6> kCaptionAspects = {"temporality", "spatiality", "object",
                                                    "action",      "scene",      "summary"};

bool known_topic(const std::string& topic) { return kTasksByTopic.count(topic) != 0; }

bool known_task(const std::string& topic, const std::string& task) {
    const auto it = kTasksByTopic.find(topic);
    if (it == kTasksByTopic.end()) return false;
    return std::find(it->second.begin(), it->second.end(), task) != it->second.end();
}

nlohmann::json QARecord::to_json() const {
    nlohmann::json j{{"type", "qa"},         {"video_id", video_id}, {"topic", topic},
                     {"task", task},         {"format", format},     {"question", question},
                     {"answer", answer}};
    if (format == "MC") j["options"] = options;
    return j;
}

nlohmann::json ConversationRecord::to_json() const {
    nlohmann::json j{{"type", "conversation"}, {"video_id", video_id}};
    j["turns"] = nlohmann::json::array();
    for (const QARecord& t : turns) j["turns"].push_back(t.to_json());
    return j;
}

namespace {

void reject(ValidationReport& rep, const std::string& reason) {
    ++rep.rejected;
    ++rep.reject_reasons[reason];
}

void validate_video(ValidationReport& rep, const nlohmann::json& j) {
    const double dur = j.at("duration_s").get<double>();
    if (dur < kMinDurationS || dur > kMaxDurationS) {
        reject(rep, "duration_out_of_range");
        return;
    }
    const auto events = j.at("num_events").get<std::size_t>();
    if (events < kMinEvents) {
        reject(rep, "event_count<3");
        return;
    }
    ++rep.accepted;
    rep.accepted_canonical.push_back({{"type", "video"},
                                      {"video_id", j.at("video_id").get<std::string>()},
                                      {"duration_s", dur},
                                      {"num_events", events}});
}

void validate_clip_caption(ValidationReport& rep, const nlohmann::json& j) {
    const auto span = j.at("clip_span");
    const double start = span.at(0).get<double>(), end = span.at(1).get<double>();
    if (!(start < end)) {
        reject(rep, "invalid_clip_span");
        return;
    }
    const auto& aspects = j.at("aspects");
    for (const std::string& a : kCaptionAspects)
        if (!aspects.contains(a) || !aspects.at(a).is_string() ||
            aspects.at(a).get<std::string>().empty()) {
            reject(rep, "missing_aspect");
            return;
        }
    nlohmann::json canon{{"type", "clip_caption"},
                         {"video_id", j.at("video_id").get<std::string>()},
                         {"clip_span", {start, end}}};
    for (const std::string& a : kCaptionAspects) canon["aspects"][a] = aspects.at(a);
    ++rep.accepted;
    rep.accepted_canonical.push_back(std::move(canon));
}

void validate_qa(ValidationReport& rep, const nlohmann::json& j) {
    QARecord qa;
    qa.video_id = j.at("video_id").get<std::string>();
    qa.topic = j.at("topic").get<std::string>();
    qa.task = j.at("task").get<std::string>();
    qa.format = j.at("format").get<std::string>();
    qa.question = j.at("question").get<std::string>();
    qa.answer = j.at("answer").get<std::string>();
    if (!known_topic(qa.topic)) {
        reject(rep, "unknown_topic");
        return;
    }
    if (!known_task(qa.topic, qa.task)) {
        reject(rep, "unknown_task");
        return;
    }
    if (qa.format != "OE" && qa.format != "MC") {
        reject(rep, "bad_format");
        return;
    }
    if (qa.format == "MC") {
        if (!j.contains("options") || !j.at("options").is_array() ||
            j.at("options").size() != 4) {
            reject(rep, "mc_options!=4");
            return;
        }
        qa.options = j.at("options").get<std::vector<std::string>>();
        if (std::count(qa.options.begin(), qa.options.end(), qa.answer) != 1) {
            reject(rep, "answer_not_in_options");
            return;
        }
    }
    ++rep.accepted;
    rep.accepted_canonical.push_back(qa.to_json());
    rep.accepted_qa.push_back(std::move(qa));
}

}  // namespace

ValidationReport validate_records(std::istream& in) {
    ValidationReport rep;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
            const std::string type = j.at("type").get<std::string>();
            if (type == "video")
                validate_video(rep, j);
            else if (type == "clip_caption")
                validate_clip_caption(rep, j);
            else if (type == "qa")
                validate_qa(rep, j);
            else
                ++rep.malformed_lines;
        } catch (const nlohmann::json::exception&) {
            ++rep.malformed_lines;
        }
    }
    return rep;
}

ValidationReport validate_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("validate_file: cannot open " + path);
    return validate_records(in);
}

std::vector<ConversationRecord> pack_conversations(std::vector<QARecord> records,
                                                   std::size_t max_turns,
                                                   std::uint64_t seed) {
    // group by video id, first-seen order kept for determinism
    std::vector<std::string> order;
    std::map<std::string, std::vector<QARecord>> by_video;
    for (QARecord& r : records) {
        if (by_video.find(r.video_id) == by_video.end()) order.push_back(r.video_id);
        by_video[r.video_id].push_back(std::move(r));
    }
    std::vector<ConversationRecord> out;
    for (const std::string& vid : order) {
        auto& group = by_video[vid];
        std::mt19937_64 rng(seed ^ std::hash<std::string>{}(vid));
        std::shuffle(group.begin(), group.end(), rng);
        for (std::size_t i = 0; i < group.size(); i += max_turns) {
            ConversationRecord conv;
            conv.video_id = vid;
            const std::size_t n = std::min(max_turns, group.size() - i);
            conv.turns.assign(group.begin() + i, group.begin() + i + n);
            out.push_back(std::move(conv));
        }
    }
    return out;
}

nlohmann::json DatasetStats::to_json() const {
    nlohmann::json j;
    for (const auto& [bucket, n] : duration_hist)
        j["duration_hist"][std::to_string(bucket * 180) + "-" +
                           std::to_string((bucket + 1) * 180) + "s"] = n;
    for (const auto& [events, n] : event_hist)
        j["event_hist"][std::to_string(events)] = n;
    j["topic_counts"] = topic_counts;
    j["task_counts"] = task_counts;
    j["format_counts"] = format_counts;
    return j;
}

DatasetStats dataset_stats(const std::vector<nlohmann::json>& canonical_records) {
    DatasetStats st;
    for (const auto& j : canonical_records) {
        const std::string type = j.at("type").get<std::string>();
        if (type == "video") {
            const double dur = j.at("duration_s").get<double>();
            ++st.duration_hist[std::size_t(dur / 180.0)];
            ++st.event_hist[j.at("num_events").get<std::size_t>()];
        } else if (type == "qa") {
            ++st.topic_counts[j.at("topic").get<std::string>()];
            ++st.task_counts[j.at("task").get<std::string>()];
            ++st.format_counts[j.at("format").get<std::string>()];
        }
    }
    return st;
}

}  // namespace vidmem::dataprep
