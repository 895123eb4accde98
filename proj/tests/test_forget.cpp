#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "vidmem/forget.hpp"

using namespace vidmem;

namespace {

FeatureSequence make_sequence(Graph& g, std::size_t frames, std::size_t tpf,
                              std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1, 1);
    Tensor t({frames * tpf, d});
    for (double& v : t.data) v = u(rng);
    FeatureSequence seq;
    seq.frames = frames;
    seq.tokens_per_frame = tpf;
    seq.node = g.leaf(std::move(t));
    seq.timestamps.resize(frames);
    std::iota(seq.timestamps.begin(), seq.timestamps.end(), 0.0);
    return seq;
}

// sets one frame's tokens to a given constant vector
void set_frame(FeatureSequence& seq, std::size_t frame, const std::vector<double>& vec) {
    const std::size_t d = seq.d_model();
    for (std::size_t t = 0; t < seq.tokens_per_frame; ++t)
        for (std::size_t j = 0; j < d; ++j)
            seq.node->value.data[(frame * seq.tokens_per_frame + t) * d + j] = vec[j];
}

std::vector<double> frame_mean(const FeatureSequence& seq, std::size_t f) {
    const std::size_t d = seq.d_model(), tpf = seq.tokens_per_frame;
    std::vector<double> m(d, 0.0);
    for (std::size_t t = 0; t < tpf; ++t)
        for (std::size_t j = 0; j < d; ++j)
            m[j] += seq.tokens().data[(f * tpf + t) * d + j];
    for (double& v : m) v /= double(tpf);
    return m;
}

double cos_or_zero(const std::vector<double>& a, const std::vector<double>& b) {
    double na = 0, nb = 0, dot = 0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        na += a[j] * a[j];
        nb += b[j] * b[j];
        dot += a[j] * b[j];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

// Independent keyframe oracle: exhaustive neighbor scoring, lowest kept.
std::vector<std::size_t> keyframe_oracle(const FeatureSequence& seq, std::size_t retained,
                                         std::size_t k) {
    std::vector<std::vector<double>> emb;
    for (std::size_t f = 0; f < seq.frames; ++f) emb.push_back(frame_mean(seq, f));
    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t f = 0; f < seq.frames; ++f) {
        std::vector<std::pair<std::size_t, std::size_t>> others;  // (dist, idx)
        for (std::size_t o = 0; o < seq.frames; ++o)
            if (o != f) others.push_back({o > f ? o - f : f - o, o});
        std::sort(others.begin(), others.end());
        const std::size_t kn = std::min(k, others.size());
        double acc = 0.0;
        for (std::size_t i = 0; i < kn; ++i) acc += cos_or_zero(emb[f], emb[others[i].second]);
        scored.push_back({acc / double(kn), f});
    }
    std::stable_sort(scored.begin(), scored.end());
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < retained; ++i) keep.push_back(scored[i].second);
    std::sort(keep.begin(), keep.end());
    return keep;
}

std::vector<std::size_t> question_oracle(const FeatureSequence& seq,
                                         const std::vector<double>& qbar,
                                         std::size_t retained) {
    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t f = 0; f < seq.frames; ++f)
        scored.push_back({-cos_or_zero(frame_mean(seq, f), qbar), f});
    std::stable_sort(scored.begin(), scored.end());
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < retained; ++i) keep.push_back(scored[i].second);
    std::sort(keep.begin(), keep.end());
    return keep;
}

QuestionSequence make_question(Graph& g, const std::vector<std::vector<double>>& rows) {
    Tensor t({rows.size(), rows[0].size()});
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            t.data[i * rows[i].size() + j] = rows[i][j];
    QuestionSequence q;
    q.token_ids.assign(rows.size(), 0);
    q.node = g.leaf(std::move(t));
    return q;
}

}  // namespace

TEST_CASE("clamp_frame_budget policy") {
    CHECK(clamp_frame_budget(2000, 0.25) == 500);
    CHECK(clamp_frame_budget(3000, 0.25) == 512);  // max retained frames
    CHECK(clamp_frame_budget(60, 0.25) == 32);     // min retained frames
    CHECK(clamp_frame_budget(20, 0.25) == 20);     // cannot exceed what exists
    CHECK(clamp_frame_budget(32, 0.25) == 32);
    CHECK(clamp_frame_budget(33, 0.25) == 32);
    CHECK(clamp_frame_budget(128, 0.25) == 32);
}

TEST_CASE("spatial_select uniform counts") {
    SUBCASE("27x27 grid at 1/4 keeps 196") {
        const auto keep = spatial_select(729, 0.25, SpatialStrategy::Uniform, 0);
        CHECK(keep.size() == 196);
        // rows/cols 0,2,...,26
        std::set<std::size_t> expect;
        for (std::size_t r = 0; r < 27; r += 2)
            for (std::size_t c = 0; c < 27; c += 2) expect.insert(r * 27 + c);
        CHECK(std::set<std::size_t>(keep.begin(), keep.end()) == expect);
    }
    SUBCASE("8x8 grid at 1/4 keeps 16") {
        CHECK(spatial_select(64, 0.25, SpatialStrategy::Uniform, 0).size() == 16);
    }
    SUBCASE("ratio 1 keeps all") {
        const auto keep = spatial_select(64, 1.0, SpatialStrategy::Uniform, 0);
        CHECK(keep.size() == 64);
        for (std::size_t i = 0; i < 64; ++i) CHECK(keep[i] == i);
    }
    SUBCASE("random strategy: same count, deterministic per seed, sorted") {
        const auto a = spatial_select(64, 0.25, SpatialStrategy::Random, 99);
        const auto b = spatial_select(64, 0.25, SpatialStrategy::Random, 99);
        CHECK(a == b);
        CHECK(a.size() == 16);
        CHECK(std::is_sorted(a.begin(), a.end()));
        for (std::size_t idx : a) CHECK(idx < 64);
    }
    SUBCASE("non-square token count is a configuration error") {
        CHECK_THROWS_AS(spatial_select(60, 0.25, SpatialStrategy::Uniform, 0),
                        std::invalid_argument);
    }
}

TEST_CASE("temporal_select_uniform") {
    CHECK(temporal_select_uniform(8, 2) == std::vector<std::size_t>{0, 4});
    CHECK(temporal_select_uniform(8, 8) == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7});
    CHECK(temporal_select_uniform(10, 4) == std::vector<std::size_t>{0, 2, 5, 7});
    CHECK_THROWS_AS(temporal_select_uniform(4, 5), std::invalid_argument);
}

TEST_CASE("temporal_select_random") {
    CHECK(temporal_select_random(8, 8, 1) ==
          std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7});
    CHECK(temporal_select_random(8, 3, 5) == temporal_select_random(8, 3, 5));

    // Monte Carlo uniformity: each of 8 frames kept with freq 1/4 +- 0.05
    std::vector<std::size_t> hits(8, 0);
    for (std::uint64_t seed = 0; seed < 1000; ++seed)
        for (std::size_t f : temporal_select_random(8, 2, seed)) ++hits[f];
    for (std::size_t f = 0; f < 8; ++f)
        CHECK(std::fabs(double(hits[f]) / 1000.0 - 0.25) <= 0.05);
}

TEST_CASE("temporal_select_keyframe") {
    SUBCASE("identical frames tie; earliest indices win") {
        Graph g;
        FeatureSequence seq = make_sequence(g, 8, 4, 6, 1);
        const std::vector<double> c{1, 0, 0, 0, 0, 0};
        for (std::size_t f = 0; f < 8; ++f) set_frame(seq, f, c);
        CHECK(temporal_select_keyframe(seq, 2, 8) == std::vector<std::size_t>{0, 1});
    }
    SUBCASE("an orthogonal outlier frame is selected") {
        Graph g;
        FeatureSequence seq = make_sequence(g, 8, 4, 6, 2);
        const std::vector<double> base{1, 0, 0, 0, 0, 0};
        const std::vector<double> outlier{0, 1, 0, 0, 0, 0};
        for (std::size_t f = 0; f < 8; ++f) set_frame(seq, f, base);
        set_frame(seq, 5, outlier);
        const auto keep = temporal_select_keyframe(seq, 2, 8);
        CHECK(std::binary_search(keep.begin(), keep.end(), 5));
        CHECK(keep == keyframe_oracle(seq, 2, 8));
    }
    SUBCASE("retained == frames yields all indices") {
        Graph g;
        FeatureSequence seq = make_sequence(g, 5, 4, 6, 3);
        CHECK(temporal_select_keyframe(seq, 5, 8) ==
              std::vector<std::size_t>{0, 1, 2, 3, 4});
    }
    SUBCASE("matches the brute-force oracle on random sequences") {
        for (std::uint64_t seed = 0; seed < 40; ++seed) {
            Graph g;
            std::mt19937_64 rng(seed);
            const std::size_t frames = 2 + rng() % 11;  // up to 12
            const std::size_t retained = 1 + rng() % frames;
            FeatureSequence seq = make_sequence(g, frames, 4, 6, seed * 7 + 1);
            CHECK(temporal_select_keyframe(seq, retained, 8) ==
                  keyframe_oracle(seq, retained, 8));
        }
    }
    SUBCASE("zero-norm frames count warnings, not errors") {
        Graph g;
        FeatureSequence seq = make_sequence(g, 4, 2, 3, 4);
        set_frame(seq, 1, {0, 0, 0});
        SelectionStats stats;
        (void)temporal_select_keyframe(seq, 2, 8, &stats);
        CHECK(stats.zero_norm_warnings > 0);
    }
}

TEST_CASE("temporal_select_question") {
    SUBCASE("cosine-1 frame beats orthogonal frames") {
        Graph g;
        FeatureSequence seq = make_sequence(g, 6, 4, 4, 5);
        for (std::size_t f = 0; f < 6; ++f) set_frame(seq, f, {1, 0, 0, 0});
        set_frame(seq, 3, {0, 0, 1, 0});
        QuestionSequence q = make_question(g, {{0, 0, 1, 0}});
        CHECK(temporal_select_question(seq, q, 1) == std::vector<std::size_t>{3});
    }
    SUBCASE("positive scaling of the question leaves selection unchanged") {
        Graph g;
        FeatureSequence seq = make_sequence(g, 10, 4, 6, 6);
        QuestionSequence q = make_question(g, {{0.3, -1.2, 0.5, 0.7, -0.1, 2.0}});
        const auto a = temporal_select_question(seq, q, 3);
        for (double& v : q.node->value.data) v *= 7.0;
        CHECK(temporal_select_question(seq, q, 3) == a);
    }
    SUBCASE("matches the brute-force oracle on random sequences") {
        for (std::uint64_t seed = 0; seed < 40; ++seed) {
            Graph g;
            std::mt19937_64 rng(seed + 100);
            const std::size_t frames = 1 + rng() % 12;
            const std::size_t retained = 1 + rng() % frames;
            FeatureSequence seq = make_sequence(g, frames, 4, 6, seed * 3 + 2);
            std::uniform_real_distribution<double> u(-1, 1);
            std::vector<double> qrow(6);
            for (double& v : qrow) v = u(rng);
            QuestionSequence q = make_question(g, {qrow});
            CHECK(temporal_select_question(seq, q, retained) ==
                  question_oracle(seq, qrow, retained));
        }
    }
}

TEST_CASE("apply_forgetting") {
    SUBCASE("128 frames x 64 tokens at (1/4,1/4) keeps 6.25%") {
        Graph g;
        FeatureSequence seq = make_sequence(g, 128, 64, 8, 7);
        QuestionSequence q = make_question(g, {{1, 0, 0, 0, 0, 0, 0, 0}});
        ForgetConfig cfg;  // uniform/uniform, ratios 1/4
        const ForgetResult r = apply_forgetting(g, seq, q, cfg);
        CHECK(r.plan.kept_frames.size() == 32);
        CHECK(r.plan.kept_spatial.size() == 16);
        const std::size_t kept = r.plan.kept_frames.size() * r.plan.kept_spatial.size();
        CHECK(kept == 512);
        CHECK(double(kept) / double(128 * 64) == doctest::Approx(0.0625));
    }
    SUBCASE("ratio 1 is the identity") {
        Graph g;
        FeatureSequence seq = make_sequence(g, 16, 16, 4, 8);
        QuestionSequence q = make_question(g, {{1, 0, 0, 0}});
        for (auto temporal : {TemporalStrategy::Random, TemporalStrategy::Uniform,
                              TemporalStrategy::Keyframe, TemporalStrategy::QuestionGuided})
            for (auto spatial : {SpatialStrategy::Random, SpatialStrategy::Uniform}) {
                ForgetConfig cfg;
                cfg.temporal_strategy = temporal;
                cfg.spatial_strategy = spatial;
                cfg.temporal_ratio = 1.0;
                cfg.spatial_ratio = 1.0;
                const ForgetResult r = apply_forgetting(g, seq, q, cfg);
                CHECK(r.decayed.tokens().data == seq.tokens().data);
                CHECK(r.decayed.timestamps == seq.timestamps);
            }
    }
    SUBCASE("decayed tokens are bit-exact copies of the selected rows") {
        for (auto temporal : {TemporalStrategy::Random, TemporalStrategy::Uniform,
                              TemporalStrategy::Keyframe, TemporalStrategy::QuestionGuided}) {
            Graph g;
            FeatureSequence seq = make_sequence(g, 30, 16, 6, 9);
            QuestionSequence q = make_question(g, {{1, 0, 0, 0, 0, 0}});
            ForgetConfig cfg;
            cfg.temporal_strategy = temporal;
            cfg.spatial_strategy = SpatialStrategy::Random;
            cfg.rng_seed = 17;
            const ForgetResult r = apply_forgetting(g, seq, q, cfg);
            const std::size_t d = 6;
            std::size_t out_row = 0;
            for (std::size_t f : r.plan.kept_frames)
                for (std::size_t s : r.plan.kept_spatial) {
                    for (std::size_t j = 0; j < d; ++j)
                        CHECK(r.decayed.tokens().data[out_row * d + j] ==
                              seq.tokens().data[(f * 16 + s) * d + j]);
                    ++out_row;
                }
            // 30 frames is under the 32-frame minimum, so all are kept temporally
            CHECK(r.plan.kept_frames.size() == 30);
        }
    }
    SUBCASE("budget property holds above the minimum") {
        Graph g;
        FeatureSequence seq = make_sequence(g, 300, 4, 4, 10);
        QuestionSequence q = make_question(g, {{1, 0, 0, 0}});
        ForgetConfig cfg;
        const ForgetResult r = apply_forgetting(g, seq, q, cfg);
        CHECK(r.plan.kept_frames.size() >= 32);
        CHECK(r.plan.kept_frames.size() <= 512);
        CHECK(r.plan.kept_frames.size() == 75);  // round(300/4)
    }
}

TEST_CASE("selection plan JSONL round-trip") {
    SelectionPlan plan;
    plan.kept_frames = {0, 4, 9};
    plan.kept_spatial = {1, 3};
    plan.provenance = "temporal=uniform,spatial=random,seed=5";
    const std::string line = plan_to_jsonl(plan, "vid42", 5);
    std::string vid;
    const SelectionPlan back = plan_from_jsonl(line, &vid);
    CHECK(vid == "vid42");
    CHECK(back.kept_frames == plan.kept_frames);
    CHECK(back.kept_spatial == plan.kept_spatial);
    CHECK(back.provenance == plan.provenance);
}
