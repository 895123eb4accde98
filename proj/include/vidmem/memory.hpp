#pragma once

#include <string>
#include <vector>

#include "vidmem/forget.hpp"

namespace vidmem {

enum class MemoryScale { Full, Half, Quarter, DecayedOnly };

const char* to_string(MemoryScale s);
MemoryScale memory_scale_from(const std::string& s);
double scale_fraction(MemoryScale s);  // frame fraction; DecayedOnly -> 0

// Full-context key/value store; read-only after construction.
struct MemoryRepository {
    NodeRef node = nullptr;                    // M x d_model, frame-major
    std::vector<std::size_t> frame_index_of;   // original frame per token
    MemoryScale scale = MemoryScale::Full;
    std::string built_from;
    std::size_t source_frames = 0;
    std::size_t source_tokens_per_frame = 0;

    std::size_t size() const { return node ? node->value.rows() : 0; }
};

struct MemoryStats {
    std::size_t tokens = 0;
    std::size_t frames_covered = 0;
    double fraction_of_full = 0.0;
};

MemoryRepository build_memory(Graph& g, const FeatureSequence& seq,
                              const SelectionPlan& plan, MemoryScale scale,
                              const std::string& video_id = "");

MemoryStats memory_stats(const MemoryRepository& repo);

// Little-endian binary cache: header, f32 token rows, u32 frame index table.
void dump_memory(const MemoryRepository& repo, const std::string& path);
MemoryRepository load_memory(Graph& g, const std::string& path);

}  // namespace vidmem
