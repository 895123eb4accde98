#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "vidmem/graph.hpp"

namespace vidmem {

// One frame of features per simulated second of video.
struct FrameStream {
    std::size_t num_frames = 1;
    std::size_t raw_dim = 32;
    std::size_t grid_h = 16, grid_w = 16;     // raw patch grid per frame
    std::uint64_t seed = 0;
    std::vector<std::pair<std::size_t, std::size_t>> planted;  // (frame, marker_id)
};

// Full video token sequence H_v, flattened frame-major to (frames*tpf) x d.
struct FeatureSequence {
    std::size_t frames = 0;
    std::size_t tokens_per_frame = 0;
    NodeRef node = nullptr;
    std::vector<double> timestamps;  // seconds, one per frame, strictly increasing

    std::size_t d_model() const { return node->value.cols(); }
    const Tensor& tokens() const { return node->value; }
    std::size_t row_of(std::size_t frame, std::size_t tok) const {
        return frame * tokens_per_frame + tok;
    }
};

struct QuestionSequence {
    std::vector<std::size_t> token_ids;
    NodeRef node = nullptr;  // N_q x d embeddings

    std::size_t length() const { return token_ids.size(); }
};

// Two-layer GELU projector: raw_dim -> hidden -> d_model.
struct Projector {
    Param w1, b1, w2, b2;

    Projector() = default;
    Projector(std::size_t raw_dim, std::size_t hidden, std::size_t d_model,
              std::mt19937_64& rng);
    std::vector<Param*> params() { return {&w1, &b1, &w2, &b2}; }
};

// Number of marker ids the synthetic generator supports.
constexpr std::size_t kNumMarkers = 32;

// Deterministic pseudo-random frame features. Planted frames get a constant
// high-amplitude pattern that encodes the marker id and survives average
// pooling exactly.
Tensor synth_frames(const FrameStream& stream);

// Fixed linear probe paired with synth_frames: recovers the marker id from
// any raw or pooled token vector of a planted frame.
std::size_t probe_marker(const double* vec, std::size_t raw_dim);

Tensor avg_pool_grid(const Tensor& raw, std::size_t grid_h, std::size_t grid_w,
                     std::size_t target_h, std::size_t target_w);

NodeRef project(Graph& g, NodeRef pooled, Projector& mlp);

FeatureSequence encode_video(Graph& g, const FrameStream& stream,
                             std::size_t target_h, std::size_t target_w,
                             Projector& mlp);

QuestionSequence embed_question(Graph& g, const std::vector<std::size_t>& token_ids,
                                Param& table);

}  // namespace vidmem
