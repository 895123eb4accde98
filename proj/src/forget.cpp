#include "vidmem/forget.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include <json.hpp>

namespace vidmem {

namespace {

std::vector<double> frame_means(const FeatureSequence& seq) {
    const std::size_t d = seq.d_model();
    const std::size_t tpf = seq.tokens_per_frame;
    std::vector<double> out(seq.frames * d, 0.0);
    const Tensor& t = seq.tokens();
    for (std::size_t f = 0; f < seq.frames; ++f) {
        double* dst = out.data() + f * d;
        for (std::size_t tok = 0; tok < tpf; ++tok) {
            const double* src = t.data.data() + (f * tpf + tok) * d;
            for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
        }
        for (std::size_t j = 0; j < d; ++j) dst[j] /= double(tpf);
    }
    return out;
}

double cosine(const double* a, const double* b, std::size_t d, SelectionStats* stats) {
    double na = 0.0, nb = 0.0, dot = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        na += a[j] * a[j];
        nb += b[j] * b[j];
        dot += a[j] * b[j];
    }
    if (na == 0.0 || nb == 0.0) {
        if (stats) ++stats->zero_norm_warnings;
        return 0.0;
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

// Pick `retained` frame indices ranked by score; ties go to the smaller index.
std::vector<std::size_t> pick_by_score(const std::vector<double>& score,
                                       std::size_t retained, bool lowest) {
    std::vector<std::size_t> idx(score.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (score[a] != score[b]) return lowest ? score[a] < score[b] : score[a] > score[b];
        return a < b;
    });
    idx.resize(retained);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace

const char* to_string(SpatialStrategy s) {
    return s == SpatialStrategy::Random ? "random" : "uniform";
}
const char* to_string(TemporalStrategy s) {
    switch (s) {
        case TemporalStrategy::Random: return "random";
        case TemporalStrategy::Uniform: return "uniform";
        case TemporalStrategy::Keyframe: return "keyframe";
        case TemporalStrategy::QuestionGuided: return "question_guided";
    }
    return "?";
}
SpatialStrategy spatial_strategy_from(const std::string& s) {
    if (s == "random") return SpatialStrategy::Random;
    if (s == "uniform") return SpatialStrategy::Uniform;
    throw std::invalid_argument("unknown spatial strategy: " + s);
}
TemporalStrategy temporal_strategy_from(const std::string& s) {
    if (s == "random") return TemporalStrategy::Random;
    if (s == "uniform") return TemporalStrategy::Uniform;
    if (s == "keyframe") return TemporalStrategy::Keyframe;
    if (s == "question_guided") return TemporalStrategy::QuestionGuided;
    throw std::invalid_argument("unknown temporal strategy: " + s);
}

std::vector<std::size_t> SelectionPlan::flat_rows(std::size_t tokens_per_frame) const {
    std::vector<std::size_t> rows;
    rows.reserve(kept_frames.size() * kept_spatial.size());
    for (std::size_t f : kept_frames)
        for (std::size_t s : kept_spatial) rows.push_back(f * tokens_per_frame + s);
    return rows;
}

std::size_t clamp_frame_budget(std::size_t total_frames, double ratio,
                               std::size_t min_f, std::size_t max_f) {
    if (total_frames < 1) throw std::invalid_argument("clamp_frame_budget: no frames");
    if (total_frames <= min_f) return total_frames;
    const auto n = std::size_t(std::floor(double(total_frames) * ratio + 0.5));
    return std::clamp(n, min_f, max_f);
}

std::vector<std::size_t> spatial_select(std::size_t tokens_per_frame, double ratio,
                                        SpatialStrategy strategy, std::uint64_t seed) {
    const auto g = std::size_t(std::lround(std::sqrt(double(tokens_per_frame))));
    if (g * g != tokens_per_frame)
        throw std::invalid_argument("spatial_select: tokens_per_frame " +
                                    std::to_string(tokens_per_frame) +
                                    " is not a square grid");
    if (ratio <= 0.0 || ratio > 1.0)
        throw std::invalid_argument("spatial_select: ratio out of (0,1]");
    const auto stride = std::size_t(std::ceil(std::sqrt(1.0 / ratio) - 1e-12));
    const std::size_t per_axis = (g + stride - 1) / stride;
    if (strategy == SpatialStrategy::Uniform) {
        std::vector<std::size_t> keep;
        keep.reserve(per_axis * per_axis);
        for (std::size_t r = 0; r < g; r += stride)
            for (std::size_t c = 0; c < g; c += stride) keep.push_back(r * g + c);
        return keep;
    }
    std::vector<std::size_t> all(tokens_per_frame);
    std::iota(all.begin(), all.end(), 0);
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> keep;
    std::sample(all.begin(), all.end(), std::back_inserter(keep), per_axis * per_axis, rng);
    return keep;  // std::sample preserves order, so already sorted
}

std::vector<std::size_t> temporal_select_uniform(std::size_t frames, std::size_t retained) {
    if (retained < 1 || retained > frames)
        throw std::invalid_argument("temporal_select_uniform: retained out of range");
    std::vector<std::size_t> keep(retained);
    for (std::size_t i = 0; i < retained; ++i) keep[i] = (i * frames) / retained;
    return keep;
}

std::vector<std::size_t> temporal_select_random(std::size_t frames, std::size_t retained,
                                                std::uint64_t seed) {
    if (retained < 1 || retained > frames)
        throw std::invalid_argument("temporal_select_random: retained out of range");
    std::vector<std::size_t> all(frames);
    std::iota(all.begin(), all.end(), 0);
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> keep;
    std::sample(all.begin(), all.end(), std::back_inserter(keep), retained, rng);
    return keep;
}

std::vector<std::size_t> temporal_select_keyframe(const FeatureSequence& seq,
                                                  std::size_t retained, std::size_t k,
                                                  SelectionStats* stats) {
    if (seq.frames < 2) throw std::invalid_argument("temporal_select_keyframe: need >= 2 frames");
    if (retained < 1 || retained > seq.frames)
        throw std::invalid_argument("temporal_select_keyframe: retained out of range");
    const std::size_t d = seq.d_model();
    const std::vector<double> emb = frame_means(seq);
    std::vector<double> score(seq.frames);
    for (std::size_t f = 0; f < seq.frames; ++f) {
        // neighbors by |index difference|, both sides, truncated at the edges
        std::vector<std::size_t> others;
        others.reserve(seq.frames - 1);
        for (std::size_t o = 0; o < seq.frames; ++o)
            if (o != f) others.push_back(o);
        std::stable_sort(others.begin(), others.end(), [&](std::size_t a, std::size_t b) {
            const std::size_t da = a > f ? a - f : f - a;
            const std::size_t db = b > f ? b - f : f - b;
            if (da != db) return da < db;
            return a < b;
        });
        const std::size_t kn = std::min(k, others.size());
        double acc = 0.0;
        for (std::size_t i = 0; i < kn; ++i)
            acc += cosine(emb.data() + f * d, emb.data() + others[i] * d, d, stats);
        score[f] = acc / double(kn);
    }
    return pick_by_score(score, retained, /*lowest=*/true);
}

std::vector<std::size_t> temporal_select_question(const FeatureSequence& seq,
                                                  const QuestionSequence& q,
                                                  std::size_t retained,
                                                  SelectionStats* stats) {
    if (seq.frames < 1 || q.length() < 1)
        throw std::invalid_argument("temporal_select_question: empty inputs");
    if (retained < 1 || retained > seq.frames)
        throw std::invalid_argument("temporal_select_question: retained out of range");
    const std::size_t d = seq.d_model();
    const std::vector<double> emb = frame_means(seq);
    std::vector<double> qbar(d, 0.0);
    const Tensor& qt = q.node->value;
    for (std::size_t i = 0; i < q.length(); ++i)
        for (std::size_t j = 0; j < d; ++j) qbar[j] += qt.data[i * d + j];
    for (std::size_t j = 0; j < d; ++j) qbar[j] /= double(q.length());
    std::vector<double> score(seq.frames);
    for (std::size_t f = 0; f < seq.frames; ++f)
        score[f] = cosine(emb.data() + f * d, qbar.data(), d, stats);
    return pick_by_score(score, retained, /*lowest=*/false);
}

ForgetResult apply_forgetting(Graph& g, const FeatureSequence& seq,
                              const QuestionSequence& q, const ForgetConfig& cfg,
                              SelectionStats* stats) {
    const std::size_t retained =
        clamp_frame_budget(seq.frames, cfg.temporal_ratio, cfg.min_frames, cfg.max_frames);
    SelectionPlan plan;
    switch (cfg.temporal_strategy) {
        case TemporalStrategy::Uniform:
            plan.kept_frames = temporal_select_uniform(seq.frames, retained);
            break;
        case TemporalStrategy::Random:
            plan.kept_frames = temporal_select_random(seq.frames, retained, cfg.rng_seed);
            break;
        case TemporalStrategy::Keyframe:
            plan.kept_frames = retained == seq.frames
                                   ? temporal_select_uniform(seq.frames, retained)
                                   : temporal_select_keyframe(seq, retained,
                                                              cfg.k_neighbors, stats);
            break;
        case TemporalStrategy::QuestionGuided:
            plan.kept_frames = temporal_select_question(seq, q, retained, stats);
            break;
    }
    plan.kept_spatial = spatial_select(seq.tokens_per_frame, cfg.spatial_ratio,
                                       cfg.spatial_strategy, cfg.rng_seed ^ 0xa5a5a5a5ULL);
    plan.provenance = std::string("temporal=") + to_string(cfg.temporal_strategy) +
                      ",spatial=" + to_string(cfg.spatial_strategy) +
                      ",seed=" + std::to_string(cfg.rng_seed);

    FeatureSequence decayed;
    decayed.frames = plan.kept_frames.size();
    decayed.tokens_per_frame = plan.kept_spatial.size();
    decayed.node = g.gather_rows(seq.node, plan.flat_rows(seq.tokens_per_frame));
    decayed.timestamps.reserve(plan.kept_frames.size());
    for (std::size_t f : plan.kept_frames) decayed.timestamps.push_back(seq.timestamps[f]);
    return {std::move(plan), std::move(decayed)};
}

std::string plan_to_jsonl(const SelectionPlan& plan, const std::string& video_id,
                          std::uint64_t seed) {
    nlohmann::json j;
    j["video_id"] = video_id;
    j["strategy"] = plan.provenance;
    j["seed"] = seed;
    j["kept_frames"] = plan.kept_frames;
    j["kept_spatial"] = plan.kept_spatial;
    return j.dump();
}

SelectionPlan plan_from_jsonl(const std::string& line, std::string* video_id) {
    const auto j = nlohmann::json::parse(line);
    SelectionPlan plan;
    plan.kept_frames = j.at("kept_frames").get<std::vector<std::size_t>>();
    plan.kept_spatial = j.at("kept_spatial").get<std::vector<std::size_t>>();
    plan.provenance = j.at("strategy").get<std::string>();
    if (video_id) *video_id = j.at("video_id").get<std::string>();
    return plan;
}

}  // namespace vidmem
