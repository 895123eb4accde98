#include "vidmem/memory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>
#include <stdexcept>

namespace vidmem {

namespace {
constexpr char kMagic[8] = {'V', 'M', 'E', 'M', 'R', 'E', 'P', '1'};

void check_plan(const FeatureSequence& seq, const SelectionPlan& plan) {
    for (std::size_t f : plan.kept_frames)
        if (f >= seq.frames)
            throw std::runtime_error("build_memory: plan frame index out of range");
    for (std::size_t s : plan.kept_spatial)
        if (s >= seq.tokens_per_frame)
            throw std::runtime_error("build_memory: plan spatial index out of range");
}
}  // namespace

const char* to_string(MemoryScale s) {
    switch (s) {
        case MemoryScale::Full: return "full";
        case MemoryScale::Half: return "half";
        case MemoryScale::Quarter: return "quarter";
        case MemoryScale::DecayedOnly: return "decayed_only";
    }
    return "?";
}

MemoryScale memory_scale_from(const std::string& s) {
    if (s == "full") return MemoryScale::Full;
    if (s == "half") return MemoryScale::Half;
    if (s == "quarter") return MemoryScale::Quarter;
    if (s == "decayed_only") return MemoryScale::DecayedOnly;
    throw std::invalid_argument("unknown memory scale: " + s);
}

double scale_fraction(MemoryScale s) {
    switch (s) {
        case MemoryScale::Full: return 1.0;
        case MemoryScale::Half: return 0.5;
        case MemoryScale::Quarter: return 0.25;
        case MemoryScale::DecayedOnly: return 0.0;
    }
    return 0.0;
}

MemoryRepository build_memory(Graph& g, const FeatureSequence& seq,
                              const SelectionPlan& plan, MemoryScale scale,
                              const std::string& video_id) {
    check_plan(seq, plan);
    MemoryRepository repo;
    repo.scale = scale;
    repo.built_from = video_id;
    repo.source_frames = seq.frames;
    repo.source_tokens_per_frame = seq.tokens_per_frame;

    std::vector<std::size_t> rows;
    if (scale == MemoryScale::DecayedOnly) {
        rows = plan.flat_rows(seq.tokens_per_frame);
        for (std::size_t f : plan.kept_frames)
            repo.frame_index_of.insert(repo.frame_index_of.end(),
                                       plan.kept_spatial.size(), f);
    } else {
        std::vector<std::size_t> frames;
        if (scale == MemoryScale::Full) {
            frames.resize(seq.frames);
            for (std::size_t f = 0; f < seq.frames; ++f) frames[f] = f;
        } else {
            const double frac = scale_fraction(scale);
            const auto n = std::max<std::size_t>(
                1, std::size_t(std::floor(frac * double(seq.frames) + 0.5)));
            frames = temporal_select_uniform(seq.frames, n);
        }
        for (std::size_t f : frames)
            for (std::size_t t = 0; t < seq.tokens_per_frame; ++t) {
                rows.push_back(f * seq.tokens_per_frame + t);
                repo.frame_index_of.push_back(f);
            }
    }
    repo.node = g.gather_rows(seq.node, rows);
    return repo;
}

MemoryStats memory_stats(const MemoryRepository& repo) {
    MemoryStats st;
    st.tokens = repo.size();
    st.frames_covered =
        std::set<std::size_t>(repo.frame_index_of.begin(), repo.frame_index_of.end()).size();
    const double full = double(repo.source_frames * repo.source_tokens_per_frame);
    st.fraction_of_full = full > 0.0 ? double(st.tokens) / full : 0.0;
    return st;
}

void dump_memory(const MemoryRepository& repo, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("dump_memory: cannot open " + path);
    out.write(kMagic, sizeof(kMagic));
    auto w64 = [&](std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); };
    w64(repo.size());
    w64(repo.node->value.cols());
    w64(repo.source_frames);
    w64(repo.source_tokens_per_frame);
    for (double v : repo.node->value.data) {
        const float f = float(v);
        out.write(reinterpret_cast<const char*>(&f), 4);
    }
    for (std::size_t f : repo.frame_index_of) {
        const std::uint32_t v = std::uint32_t(f);
        out.write(reinterpret_cast<const char*>(&v), 4);
    }
}

MemoryRepository load_memory(Graph& g, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_memory: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("load_memory: bad magic in " + path);
    auto r64 = [&]() {
        std::uint64_t v = 0;
        in.read(reinterpret_cast<char*>(&v), 8);
        return v;
    };
    const std::uint64_t m = r64(), d = r64(), frames = r64(), tpf = r64();
    MemoryRepository repo;
    repo.source_frames = frames;
    repo.source_tokens_per_frame = tpf;
    Tensor t({std::size_t(m), std::size_t(d)});
    for (double& v : t.data) {
        float f = 0.0f;
        in.read(reinterpret_cast<char*>(&f), 4);
        v = double(f);
    }
    repo.frame_index_of.resize(m);
    for (auto& f : repo.frame_index_of) {
        std::uint32_t v = 0;
        in.read(reinterpret_cast<char*>(&v), 4);
        f = v;
    }
    if (!in) throw std::runtime_error("load_memory: truncated file " + path);
    repo.node = g.leaf(std::move(t));
    return repo;
}

}  // namespace vidmem
