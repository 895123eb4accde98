#include "vidmem/encode.hpp"

#include <cmath>
#include <stdexcept>

namespace vidmem {

namespace {
constexpr double kMarkerAmp = 6.0;

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    // splitmix64-style combine so each frame gets an independent stream
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}
}  // namespace

Projector::Projector(std::size_t raw_dim, std::size_t hidden, std::size_t d_model,
                     std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    auto init = [&](std::vector<std::size_t> shape, double s) {
        Tensor t(std::move(shape));
        for (double& v : t.data) v = s * u(rng);
        return t;
    };
    const double s1 = 1.0 / std::sqrt(double(raw_dim));
    const double s2 = 1.0 / std::sqrt(double(hidden));
    w1 = Param("proj.w1", init({raw_dim, hidden}, s1));
    b1 = Param("proj.b1", Tensor({hidden}));
    w2 = Param("proj.w2", init({hidden, d_model}, s2));
    b2 = Param("proj.b2", Tensor({d_model}));
}

Tensor synth_frames(const FrameStream& stream) {
    if (stream.num_frames < 1) throw std::invalid_argument("synth_frames: empty stream");
    const std::size_t patches = stream.grid_h * stream.grid_w;
    const std::size_t d = stream.raw_dim;
    Tensor out({stream.num_frames, patches, d});
    for (std::size_t f = 0; f < stream.num_frames; ++f) {
        std::mt19937_64 rng(mix(stream.seed, f));
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        double* base = out.data.data() + f * patches * d;
        for (std::size_t i = 0; i < patches * d; ++i) base[i] = u(rng);
    }
    const double common = 1.0 / std::sqrt(double(stream.raw_dim));
    for (auto [frame, marker] : stream.planted) {
        if (frame >= stream.num_frames)
            throw std::invalid_argument("synth_frames: planted frame out of range");
        if (marker >= kNumMarkers || marker >= d)
            throw std::invalid_argument("synth_frames: marker id out of range");
        double* base = out.data.data() + frame * patches * d;
        for (std::size_t p = 0; p < patches; ++p)
            for (std::size_t j = 0; j < d; ++j)
                base[p * d + j] = kMarkerAmp * (common + (j == marker ? 1.0 : 0.0));
    }
    return out;
}

std::size_t probe_marker(const double* vec, std::size_t raw_dim) {
    // marker pattern is amp*(common + e_id): the marked coordinate dominates
    std::size_t best = 0;
    for (std::size_t j = 1; j < raw_dim && j < kNumMarkers; ++j)
        if (vec[j] > vec[best]) best = j;
    return best;
}

Tensor avg_pool_grid(const Tensor& raw, std::size_t grid_h, std::size_t grid_w,
                     std::size_t target_h, std::size_t target_w) {
    if (raw.ndim() != 3) throw std::invalid_argument("avg_pool_grid: expected 3D tensor");
    const std::size_t frames = raw.shape[0];
    const std::size_t patches = raw.shape[1];
    const std::size_t d = raw.shape[2];
    if (patches != grid_h * grid_w)
        throw std::invalid_argument("avg_pool_grid: patch count does not match grid");
    if (target_h == 0 || target_w == 0 || grid_h % target_h != 0 || grid_w % target_w != 0)
        throw std::invalid_argument(
            "avg_pool_grid: grid " + std::to_string(grid_h) + "x" + std::to_string(grid_w) +
            " not divisible by target " + std::to_string(target_h) + "x" +
            std::to_string(target_w));
    const std::size_t wh = grid_h / target_h, ww = grid_w / target_w;
    Tensor out({frames, target_h * target_w, d});
    const double inv = 1.0 / double(wh * ww);
    for (std::size_t f = 0; f < frames; ++f)
        for (std::size_t th = 0; th < target_h; ++th)
            for (std::size_t tw = 0; tw < target_w; ++tw) {
                double* cell = out.data.data() + (f * target_h * target_w + th * target_w + tw) * d;
                for (std::size_t dy = 0; dy < wh; ++dy)
                    for (std::size_t dx = 0; dx < ww; ++dx) {
                        const std::size_t p = (th * wh + dy) * grid_w + (tw * ww + dx);
                        const double* src = raw.data.data() + (f * patches + p) * d;
                        for (std::size_t j = 0; j < d; ++j) cell[j] += src[j];
                    }
                for (std::size_t j = 0; j < d; ++j) cell[j] *= inv;
            }
    return out;
}

NodeRef project(Graph& g, NodeRef pooled, Projector& mlp) {
    if (pooled->value.cols() != mlp.w1.value.shape[0])
        throw std::invalid_argument(
            "project: input width " + std::to_string(pooled->value.cols()) +
            " does not match projector input " + std::to_string(mlp.w1.value.shape[0]));
    NodeRef h = g.add_row_broadcast(g.matmul(pooled, g.param(mlp.w1)), g.param(mlp.b1));
    h = g.gelu(h);
    return g.add_row_broadcast(g.matmul(h, g.param(mlp.w2)), g.param(mlp.b2));
}

FeatureSequence encode_video(Graph& g, const FrameStream& stream,
                             std::size_t target_h, std::size_t target_w,
                             Projector& mlp) {
    Tensor raw = synth_frames(stream);
    Tensor pooled = avg_pool_grid(raw, stream.grid_h, stream.grid_w, target_h, target_w);
    const std::size_t tpf = target_h * target_w;
    Tensor flat({stream.num_frames * tpf, stream.raw_dim}, std::move(pooled.data));
    FeatureSequence seq;
    seq.frames = stream.num_frames;
    seq.tokens_per_frame = tpf;
    seq.node = project(g, g.leaf(std::move(flat)), mlp);
    seq.timestamps.resize(stream.num_frames);
    for (std::size_t f = 0; f < stream.num_frames; ++f) seq.timestamps[f] = double(f);
    return seq;
}

QuestionSequence embed_question(Graph& g, const std::vector<std::size_t>& token_ids,
                                Param& table) {
    if (token_ids.empty())
        throw std::invalid_argument("embed_question: question must have at least one token");
    const std::size_t vocab = table.value.shape[0];
    for (std::size_t id : token_ids)
        if (id >= vocab)
            throw std::out_of_range("embed_question: token id " + std::to_string(id) +
                                    " outside vocabulary of size " + std::to_string(vocab));
    QuestionSequence q;
    q.token_ids = token_ids;
    q.node = g.gather_rows(g.param(table), token_ids);
    return q;
}

}  // namespace vidmem
