#pragma once

#include <json.hpp>

#include "vidmem/decoder.hpp"

namespace vidmem {

enum class TokenPolicy { HourLlava, Uniform64, Vanilla1Fps };

const char* to_string(TokenPolicy p);
TokenPolicy token_policy_from(const std::string& s);

// Decoder-input visual token count for a video of the given duration.
//   hour_llava : clamp_frame_budget(T, 1/4, 32, 512) * 16
//   uniform_64 : min(T, 64) * 64
//   vanilla_1fps : T * 64
std::size_t token_count(TokenPolicy policy, std::size_t video_seconds,
                        std::size_t tokens_per_frame = 64);

// Desk-scale pipeline configuration for the synthetic retrieval experiments.
struct PipelineConfig {
    std::size_t frames = 128;
    std::size_t raw_dim = 32;  // >= 32 so every marker id is representable
    std::size_t grid_h = 8, grid_w = 8;
    std::size_t pool_h = 2, pool_w = 2;
    std::size_t d_model = 32;
    std::size_t num_heads = 4;
    std::size_t memaug_blocks = 1;
    std::size_t decoder_layers = 1;
    std::size_t mlp_mult = 4;
    ForgetConfig forget;
    MemoryScale memory_scale = MemoryScale::Full;
    double lr = 1e-2;
    std::size_t batch_size = 4;  // samples averaged per optimizer step
    std::size_t train_steps = 2000;
    std::size_t eval_probes = 256;
    bool enforce_needle_discarded = true;
    bool question_hint = false;  // append the needle frame embedding to H_q
    std::uint64_t seed = 0;

    nlohmann::json to_json() const;
};

struct TrialResult {
    double accuracy = 0.0;
    double final_loss = 0.0;
    double needle_kept_fraction = 0.0;  // over eval probes
    std::size_t visual_tokens = 0;      // decoder-visible video tokens
};

// Trains the full pipeline (projector + MemAug + decoder) to emit the marker
// id of the queried needle frame, then reports held-out greedy accuracy.
TrialResult run_needle_trial(const PipelineConfig& cfg);

struct ExperimentReport {
    nlohmann::json config;
    std::vector<nlohmann::json> rows;
    std::vector<std::string> columns;
    double wall_seconds = 0.0;

    void write_csv(const std::string& path) const;
    void write_jsonl(const std::string& path) const;
};

// Needle retrieval across memory scales: one row per (memory scale, seed).
ExperimentReport run_needle(const PipelineConfig& base,
                            const std::vector<MemoryScale>& scales,
                            const std::vector<std::uint64_t>& seeds);

// Needle accuracy per temporal strategy at identical token budgets,
// rows sorted by accuracy.
ExperimentReport compare_strategies(const PipelineConfig& base,
                                    const std::vector<TemporalStrategy>& strategies);

// Needle accuracy and token budget across temporal ratios.
ExperimentReport ratio_sweep(const PipelineConfig& base,
                             const std::vector<double>& ratios);

}  // namespace vidmem
