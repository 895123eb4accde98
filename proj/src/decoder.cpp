#include "vidmem/decoder.hpp"

#include <cmath>
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

Tensor causal_mask(std::size_t n) {
    Tensor m({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) m.data[i * n + j] = -1e9;
    return m;
}

}  // namespace

ToyDecoder::ToyDecoder(const DecoderConfig& c, std::mt19937_64& rng) : cfg(c) {
    if (cfg.d_model % cfg.num_heads != 0)
        throw std::invalid_argument("decoder: d_model not divisible by num_heads");
    const std::size_t d = cfg.d_model;
    const std::size_t h = d * cfg.mlp_mult;
    const double s = 1.0 / std::sqrt(double(d));
    embedding = Param("dec.embedding", uniform_init({cfg.vocab_size, d}, 0.5, rng));
    blocks.reserve(cfg.num_layers);
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
        const std::string pre = "dec.b" + std::to_string(l);
        DecoderBlock blk;
        blk.attn.wq = Param(pre + ".wq", uniform_init({d, d}, s, rng));
        blk.attn.wk = Param(pre + ".wk", uniform_init({d, d}, s, rng));
        blk.attn.wv = Param(pre + ".wv", uniform_init({d, d}, s, rng));
        blk.attn.wo = Param(pre + ".wo", Tensor({d, d}));
        blk.ln_attn_g = Param(pre + ".ln_attn.g", ones(d));
        blk.ln_attn_b = Param(pre + ".ln_attn.b", Tensor({d}));
        blk.ln_mlp_g = Param(pre + ".ln_mlp.g", ones(d));
        blk.ln_mlp_b = Param(pre + ".ln_mlp.b", Tensor({d}));
        blk.mlp_w1 = Param(pre + ".mlp.w1", uniform_init({d, h}, s, rng));
        blk.mlp_b1 = Param(pre + ".mlp.b1", Tensor({h}));
        blk.mlp_w2 = Param(pre + ".mlp.w2", Tensor({h, d}));
        blk.mlp_b2 = Param(pre + ".mlp.b2", Tensor({d}));
        blocks.push_back(std::move(blk));
    }
    ln_f_g = Param("dec.ln_f.g", ones(d));
    ln_f_b = Param("dec.ln_f.b", Tensor({d}));
    head = Param("dec.head", uniform_init({d, cfg.vocab_size}, s, rng));
}

std::vector<Param*> ToyDecoder::params() {
    std::vector<Param*> out{&embedding};
    for (DecoderBlock& b : blocks)
        for (Param* p : {&b.attn.wq, &b.attn.wk, &b.attn.wv, &b.attn.wo, &b.ln_attn_g,
                         &b.ln_attn_b, &b.ln_mlp_g, &b.ln_mlp_b, &b.mlp_w1, &b.mlp_b1,
                         &b.mlp_w2, &b.mlp_b2})
            out.push_back(p);
    out.push_back(&ln_f_g);
    out.push_back(&ln_f_b);
    out.push_back(&head);
    return out;
}

NodeRef decoder_logits(Graph& g, ToyDecoder& dec, NodeRef prefix,
                       const std::vector<std::size_t>& token_ids) {
    const std::size_t d = dec.cfg.d_model;
    if (prefix->value.cols() != d)
        throw std::invalid_argument("decoder: prefix width mismatch");
    NodeRef s = prefix;
    if (!token_ids.empty())
        s = g.concat_rows({prefix, g.gather_rows(g.param(dec.embedding), token_ids)});
    const std::size_t n = s->value.rows();
    Tensor pos({n, d});
    for (std::size_t i = 0; i < n; ++i)
        add_sinusoidal_row(pos.data.data() + i * d, double(i), d);
    s = g.add(s, g.leaf(std::move(pos)));
    NodeRef mask = g.leaf(causal_mask(n));
    constexpr double kLnEps = 1e-5;
    for (DecoderBlock& b : dec.blocks) {
        NodeRef x = g.layer_norm(s, g.param(b.ln_attn_g), g.param(b.ln_attn_b), kLnEps);
        s = g.add(s, attention(g, x, x, dec.cfg.num_heads, b.attn, mask));
        x = g.layer_norm(s, g.param(b.ln_mlp_g), g.param(b.ln_mlp_b), kLnEps);
        NodeRef h = g.gelu(g.add_row_broadcast(g.matmul(x, g.param(b.mlp_w1)),
                                               g.param(b.mlp_b1)));
        s = g.add(s, g.add_row_broadcast(g.matmul(h, g.param(b.mlp_w2)),
                                         g.param(b.mlp_b2)));
    }
    s = g.layer_norm(s, g.param(dec.ln_f_g), g.param(dec.ln_f_b), kLnEps);
    return g.matmul(s, g.param(dec.head));
}

NodeRef decoder_loss(Graph& g, ToyDecoder& dec, NodeRef prefix,
                     const std::vector<std::size_t>& answer_ids) {
    if (answer_ids.empty())
        throw std::invalid_argument("decoder_loss: empty answer");
    NodeRef logits = decoder_logits(g, dec, prefix, answer_ids);
    const std::size_t p = prefix->value.rows();
    std::vector<std::size_t> rows(answer_ids.size());
    for (std::size_t t = 0; t < answer_ids.size(); ++t) rows[t] = p - 1 + t;
    return g.cross_entropy_rows(logits, rows, answer_ids);
}

std::vector<std::size_t> generate(ToyDecoder& dec, const Tensor& prefix,
                                  std::size_t max_len) {
    if (max_len < 1) throw std::invalid_argument("generate: max_len must be >= 1");
    std::vector<std::size_t> out;
    while (out.size() < max_len) {
        Graph g;
        NodeRef logits = decoder_logits(g, dec, g.leaf(prefix), out);
        const std::size_t last = logits->value.rows() - 1;
        const std::size_t v = logits->value.cols();
        const double* row = logits->value.data.data() + last * v;
        std::size_t best = 0;
        for (std::size_t j = 1; j < v; ++j)
            if (row[j] > row[best]) best = j;
        out.push_back(best);
        if (best == vocab::kEnd) break;
    }
    return out;
}

double train_step(const std::vector<Param*>& params,
                  const std::function<NodeRef(Graph&)>& build_loss, Adam& opt) {
    for (Param* p : params) p->zero_grad();
    Graph g;
    NodeRef loss = build_loss(g);
    const double value = loss->value.data[0];
    if (!std::isfinite(value))
        throw std::runtime_error("train_step: non-finite loss " + std::to_string(value) +
                                 " over graph of " + std::to_string(g.num_nodes()) +
                                 " nodes");
    g.backward(loss);
    clip_grad_norm(params, 1.0);
    opt.step(params);
    return value;
}

}  // namespace vidmem
