#include "vidmem/memaug.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace vidmem {

namespace {

Tensor uniform_init(std::vector<std::size_t> shape, double s, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-s, s);
    Tensor t(std::move(shape));
    for (double& v : t.data) v = u(rng);
    return t;
}

Tensor ones(std::size_t d) {
    Tensor t({d});
    t.fill(1.0);
    return t;
}

AttentionParams make_attention(const std::string& prefix, std::size_t d,
                               std::mt19937_64& rng) {
    const double s = 1.0 / std::sqrt(double(d));
    AttentionParams p;
    p.wq = Param(prefix + ".wq", uniform_init({d, d}, s, rng));
    p.wk = Param(prefix + ".wk", uniform_init({d, d}, s, rng));
    p.wv = Param(prefix + ".wv", uniform_init({d, d}, s, rng));
    p.wo = Param(prefix + ".wo", Tensor({d, d}));  // zero: identity at init
    return p;
}

}  // namespace

MemAugStack::MemAugStack(const MemAugConfig& c, std::mt19937_64& rng) : cfg(c) {
    if (cfg.d_model % cfg.num_heads != 0)
        throw std::invalid_argument("memaug: d_model not divisible by num_heads");
    const std::size_t d = cfg.d_model;
    const std::size_t h = cfg.d_model * cfg.mlp_mult;
    const double s = 1.0 / std::sqrt(double(d));
    blocks.reserve(cfg.num_blocks);
    for (std::size_t b = 0; b < cfg.num_blocks; ++b) {
        const std::string pre = "memaug.b" + std::to_string(b);
        MemAugBlock blk;
        blk.cross = make_attention(pre + ".cross", d, rng);
        blk.self = make_attention(pre + ".self", d, rng);
        blk.ln_cross_g = Param(pre + ".ln_cross.g", ones(d));
        blk.ln_cross_b = Param(pre + ".ln_cross.b", Tensor({d}));
        blk.ln_self_g = Param(pre + ".ln_self.g", ones(d));
        blk.ln_self_b = Param(pre + ".ln_self.b", Tensor({d}));
        blk.ln_mlp_g = Param(pre + ".ln_mlp.g", ones(d));
        blk.ln_mlp_b = Param(pre + ".ln_mlp.b", Tensor({d}));
        blk.mlp_w1 = Param(pre + ".mlp.w1", uniform_init({d, h}, s, rng));
        blk.mlp_b1 = Param(pre + ".mlp.b1", Tensor({h}));
        blk.mlp_w2 = Param(pre + ".mlp.w2", Tensor({h, d}));  // zero: identity at init
        blk.mlp_b2 = Param(pre + ".mlp.b2", Tensor({d}));
        blocks.push_back(std::move(blk));
    }
}

std::vector<Param*> MemAugStack::params() {
    std::vector<Param*> out;
    for (MemAugBlock& b : blocks) {
        for (Param* p : {&b.cross.wq, &b.cross.wk, &b.cross.wv, &b.cross.wo,
                         &b.self.wq, &b.self.wk, &b.self.wv, &b.self.wo,
                         &b.ln_cross_g, &b.ln_cross_b, &b.ln_self_g, &b.ln_self_b,
                         &b.ln_mlp_g, &b.ln_mlp_b, &b.mlp_w1, &b.mlp_b1, &b.mlp_w2,
                         &b.mlp_b2})
            out.push_back(p);
    }
    return out;
}

void MemAugStack::zero_output_projections() {
    for (MemAugBlock& b : blocks) {
        b.cross.wo.value.fill(0.0);
        b.self.wo.value.fill(0.0);
        b.mlp_w2.value.fill(0.0);
        b.mlp_b2.value.fill(0.0);
    }
}

std::size_t param_count(MemAugStack& stack) {
    std::size_t n = 0;
    for (Param* p : stack.params()) n += p->value.numel();
    return n;
}

NodeRef attention(Graph& g, NodeRef queries_in, NodeRef kv_src, std::size_t heads,
                  AttentionParams& p, NodeRef additive_mask) {
    const std::size_t d = p.wq.value.shape[0];
    if (queries_in->value.cols() != d || kv_src->value.cols() != d)
        throw std::invalid_argument("attention: width mismatch, expected " +
                                    std::to_string(d));
    if (d % heads != 0) throw std::invalid_argument("attention: heads must divide width");
    const std::size_t dh = d / heads;
    NodeRef q = g.matmul(queries_in, g.param(p.wq));
    NodeRef k = g.matmul(kv_src, g.param(p.wk));
    NodeRef v = g.matmul(kv_src, g.param(p.wv));
    std::vector<NodeRef> head_out;
    head_out.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        NodeRef qh = g.slice_cols(q, h * dh, dh);
        NodeRef kh = g.slice_cols(k, h * dh, dh);
        NodeRef vh = g.slice_cols(v, h * dh, dh);
        NodeRef scores = g.scale(g.matmul_nt(qh, kh), 1.0 / std::sqrt(double(dh)));
        if (additive_mask) scores = g.add(scores, additive_mask);
        head_out.push_back(g.matmul(g.softmax_rows(scores), vh));
    }
    return g.matmul(g.concat_cols(head_out), g.param(p.wo));
}

void add_sinusoidal_row(double* dst, double position, std::size_t d) {
    for (std::size_t i = 0; i < d; i += 2) {
        const double denom = std::pow(10000.0, double(i) / double(d));
        dst[i] += std::sin(position / denom);
        if (i + 1 < d) dst[i + 1] += std::cos(position / denom);
    }
}

MemAugOutput memaug_forward(Graph& g, const FeatureSequence& decayed,
                            const QuestionSequence& q, const MemoryRepository& repo,
                            MemAugStack& stack, bool include_question) {
    const std::size_t d = stack.cfg.d_model;
    if (decayed.frames == 0 || decayed.tokens_per_frame == 0)
        throw std::invalid_argument("memaug_forward: empty decayed sequence");
    if (repo.size() == 0) throw std::invalid_argument("memaug_forward: empty memory");
    if (decayed.d_model() != d || repo.node->value.cols() != d ||
        (include_question && q.node->value.cols() != d))
        throw std::invalid_argument("memaug_forward: width mismatch with d_model " +
                                    std::to_string(d));

    const std::size_t v_rows = decayed.frames * decayed.tokens_per_frame;
    // positions: original frame timestamp for video tokens, turn-local index
    // for question tokens; added once at entry
    Tensor pos_v({v_rows, d});
    for (std::size_t f = 0; f < decayed.frames; ++f)
        for (std::size_t t = 0; t < decayed.tokens_per_frame; ++t)
            add_sinusoidal_row(pos_v.data.data() + decayed.row_of(f, t) * d,
                               decayed.timestamps[f], d);
    NodeRef s = g.add(decayed.node, g.leaf(std::move(pos_v)));
    std::size_t n_q = 0;
    if (include_question) {
        n_q = q.length();
        Tensor pos_q({n_q, d});
        for (std::size_t i = 0; i < n_q; ++i)
            add_sinusoidal_row(pos_q.data.data() + i * d, double(i), d);
        s = g.concat_rows({s, g.add(q.node, g.leaf(std::move(pos_q)))});
    }

    constexpr double kLnEps = 1e-5;
    for (MemAugBlock& b : stack.blocks) {
        NodeRef x = g.layer_norm(s, g.param(b.ln_cross_g), g.param(b.ln_cross_b), kLnEps);
        s = g.add(s, attention(g, x, repo.node, stack.cfg.num_heads, b.cross));
        x = g.layer_norm(s, g.param(b.ln_self_g), g.param(b.ln_self_b), kLnEps);
        s = g.add(s, attention(g, x, x, stack.cfg.num_heads, b.self));
        x = g.layer_norm(s, g.param(b.ln_mlp_g), g.param(b.ln_mlp_b), kLnEps);
        NodeRef h = g.gelu(g.add_row_broadcast(g.matmul(x, g.param(b.mlp_w1)),
                                               g.param(b.mlp_b1)));
        NodeRef m = g.add_row_broadcast(g.matmul(h, g.param(b.mlp_w2)), g.param(b.mlp_b2));
        s = g.add(s, m);
    }

    MemAugOutput out;
    out.video = g.slice_rows(s, 0, v_rows);
    out.question = include_question ? g.slice_rows(s, v_rows, n_q) : nullptr;
    return out;
}

void save_checkpoint(const std::vector<Param*>& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    const char magic[8] = {'V', 'M', 'C', 'K', 'P', 'T', '0', '1'};
    out.write(magic, 8);
    const std::uint64_t n = params.size();
    out.write(reinterpret_cast<const char*>(&n), 8);
    for (const Param* p : params) {
        const std::uint64_t len = p->name.size();
        out.write(reinterpret_cast<const char*>(&len), 8);
        out.write(p->name.data(), std::streamsize(len));
        const std::uint64_t nd = p->value.shape.size();
        out.write(reinterpret_cast<const char*>(&nd), 8);
        for (std::size_t e : p->value.shape) {
            const std::uint64_t v = e;
            out.write(reinterpret_cast<const char*>(&v), 8);
        }
        out.write(reinterpret_cast<const char*>(p->value.data.data()),
                  std::streamsize(p->value.numel() * sizeof(double)));
    }
}

void load_checkpoint(const std::vector<Param*>& params, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    std::uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), 8);
    if (n != params.size())
        throw std::runtime_error("load_checkpoint: parameter count mismatch");
    for (Param* p : params) {
        std::uint64_t len = 0;
        in.read(reinterpret_cast<char*>(&len), 8);
        std::string name(len, '\0');
        in.read(name.data(), std::streamsize(len));
        if (name != p->name)
            throw std::runtime_error("load_checkpoint: expected " + p->name + ", found " + name);
        std::uint64_t nd = 0;
        in.read(reinterpret_cast<char*>(&nd), 8);
        std::vector<std::size_t> shape(nd);
        for (auto& e : shape) {
            std::uint64_t v = 0;
            in.read(reinterpret_cast<char*>(&v), 8);
            e = v;
        }
        if (shape != p->value.shape)
            throw std::runtime_error("load_checkpoint: shape mismatch for " + p->name);
        in.read(reinterpret_cast<char*>(p->value.data.data()),
                std::streamsize(p->value.numel() * sizeof(double)));
    }
    if (!in) throw std::runtime_error("load_checkpoint: truncated file " + path);
}

}  // namespace vidmem
