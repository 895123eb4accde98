#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "vidmem/encode.hpp"

namespace vidmem {

enum class SpatialStrategy { Random, Uniform };
enum class TemporalStrategy { Random, Uniform, Keyframe, QuestionGuided };

const char* to_string(SpatialStrategy s);
const char* to_string(TemporalStrategy s);
SpatialStrategy spatial_strategy_from(const std::string& s);
TemporalStrategy temporal_strategy_from(const std::string& s);

struct ForgetConfig {
    SpatialStrategy spatial_strategy = SpatialStrategy::Uniform;
    double spatial_ratio = 0.25;
    TemporalStrategy temporal_strategy = TemporalStrategy::Uniform;
    double temporal_ratio = 0.25;
    std::size_t min_frames = 32;
    std::size_t max_frames = 512;
    std::size_t k_neighbors = 8;
    std::uint64_t rng_seed = 0;
};

struct SelectionPlan {
    std::vector<std::size_t> kept_frames;   // strictly increasing
    std::vector<std::size_t> kept_spatial;  // one shared per-frame mask, increasing
    std::string provenance;                 // strategy names + seed

    // Row indices into the flattened (frames*tpf) token matrix.
    std::vector<std::size_t> flat_rows(std::size_t tokens_per_frame) const;
};

struct SelectionStats {
    std::size_t zero_norm_warnings = 0;
};

std::size_t clamp_frame_budget(std::size_t total_frames, double ratio,
                               std::size_t min_f = 32, std::size_t max_f = 512);

std::vector<std::size_t> spatial_select(std::size_t tokens_per_frame, double ratio,
                                        SpatialStrategy strategy, std::uint64_t seed);

std::vector<std::size_t> temporal_select_uniform(std::size_t frames, std::size_t retained);
std::vector<std::size_t> temporal_select_random(std::size_t frames, std::size_t retained,
                                                std::uint64_t seed);
std::vector<std::size_t> temporal_select_keyframe(const FeatureSequence& seq,
                                                  std::size_t retained, std::size_t k = 8,
                                                  SelectionStats* stats = nullptr);
std::vector<std::size_t> temporal_select_question(const FeatureSequence& seq,
                                                  const QuestionSequence& q,
                                                  std::size_t retained,
                                                  SelectionStats* stats = nullptr);

struct ForgetResult {
    SelectionPlan plan;
    FeatureSequence decayed;  // exact row-copies of the source tokens
};

// Temporal selection first (clamped to [min_frames, max_frames]), then one
// shared spatial mask across the retained frames.
ForgetResult apply_forgetting(Graph& g, const FeatureSequence& seq,
                              const QuestionSequence& q, const ForgetConfig& cfg,
                              SelectionStats* stats = nullptr);

// JSONL record for harness replay.
std::string plan_to_jsonl(const SelectionPlan& plan, const std::string& video_id,
                          std::uint64_t seed);
SelectionPlan plan_from_jsonl(const std::string& line, std::string* video_id = nullptr);

}  // namespace vidmem
