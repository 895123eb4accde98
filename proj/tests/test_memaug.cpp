#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "vidmem/gradcheck.hpp"
#include "vidmem/memaug.hpp"

using namespace vidmem;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng, double s = 1.0) {
    std::uniform_real_distribution<double> u(-s, s);
    Tensor t(std::move(shape));
    for (double& v : t.data) v = u(rng);
    return t;
}

void randomize(Param& p, std::mt19937_64& rng, double s = 0.3) {
    std::uniform_real_distribution<double> u(-s, s);
    for (double& v : p.value.data) v = u(rng);
}

// zero-init output projections make the stack inert; tests that need a
// "live" stack randomize them first
void randomize_outputs(MemAugStack& stack, std::mt19937_64& rng) {
    for (MemAugBlock& b : stack.blocks) {
        randomize(b.cross.wo, rng);
        randomize(b.self.wo, rng);
        randomize(b.mlp_w2, rng);
    }
}

MemAugStack make_stack(std::size_t blocks, std::size_t d, std::size_t heads,
                       std::uint64_t seed) {
    MemAugConfig cfg;
    cfg.num_blocks = blocks;
    cfg.d_model = d;
    cfg.num_heads = heads;
    std::mt19937_64 rng(seed);
    return MemAugStack(cfg, rng);
}

FeatureSequence make_decayed(Graph& g, std::size_t frames, std::size_t tpf,
                             std::size_t d, std::uint64_t seed,
                             std::vector<double> timestamps = {}) {
    std::mt19937_64 rng(seed);
    FeatureSequence seq;
    seq.frames = frames;
    seq.tokens_per_frame = tpf;
    seq.node = g.leaf(random_tensor({frames * tpf, d}, rng));
    if (timestamps.empty()) {
        timestamps.resize(frames);
        std::iota(timestamps.begin(), timestamps.end(), 0.0);
    }
    seq.timestamps = std::move(timestamps);
    return seq;
}

QuestionSequence make_question(Graph& g, std::size_t n, std::size_t d,
                               std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    QuestionSequence q;
    q.token_ids.assign(n, 0);
    q.node = g.leaf(random_tensor({n, d}, rng));
    return q;
}

MemoryRepository make_repo(Graph& g, std::size_t m, std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    MemoryRepository repo;
    repo.node = g.leaf(random_tensor({m, d}, rng));
    repo.frame_index_of.assign(m, 0);
    repo.source_frames = m;
    repo.source_tokens_per_frame = 1;
    return repo;
}

// Naive per-head reference implementation of scaled dot-product attention,
// written with plain loops so it shares no code with the graph version.
Tensor naive_attention(const Tensor& q_in, const Tensor& kv, const AttentionParams& p,
                       std::size_t heads) {
    const std::size_t d = p.wq.value.shape[0];
    const std::size_t dh = d / heads;
    const std::size_t nq = q_in.rows(), nk = kv.rows();
    auto project = [&](const Tensor& x, const Param& w) {
        Tensor out({x.rows(), d});
        for (std::size_t i = 0; i < x.rows(); ++i)
            for (std::size_t j = 0; j < d; ++j)
                for (std::size_t k = 0; k < d; ++k)
                    out.at2(i, j) += x.at2(i, k) * w.value.at2(k, j);
        return out;
    };
    const Tensor q = project(q_in, p.wq), k = project(kv, p.wk), v = project(kv, p.wv);
    Tensor concat({nq, d});
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * dh;
        for (std::size_t i = 0; i < nq; ++i) {
            std::vector<double> scores(nk, 0.0);
            double mx = -1e300;
            for (std::size_t j = 0; j < nk; ++j) {
                double s = 0.0;
                for (std::size_t c = 0; c < dh; ++c)
                    s += q.at2(i, off + c) * k.at2(j, off + c);
                scores[j] = s / std::sqrt(static_cast<double>(dh));
                mx = std::max(mx, scores[j]);
            }
            double z = 0.0;
            for (double& s : scores) { s = std::exp(s - mx); z += s; }
            double weight_sum = 0.0;
            for (std::size_t j = 0; j < nk; ++j) {
                const double w = scores[j] / z;
                weight_sum += w;
                for (std::size_t c = 0; c < dh; ++c)
                    concat.at2(i, off + c) += w * v.at2(j, off + c);
            }
            CHECK(weight_sum == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
    Tensor out({nq, d});
    for (std::size_t i = 0; i < nq; ++i)
        for (std::size_t j = 0; j < d; ++j)
            for (std::size_t k2 = 0; k2 < d; ++k2)
                out.at2(i, j) += concat.at2(i, k2) * p.wo.value.at2(k2, j);
    return out;
}

void set_identity(Param& p) {
    p.value.fill(0.0);
    for (std::size_t i = 0; i < p.value.rows(); ++i) p.value.at2(i, i) = 1.0;
}

AttentionParams make_attn_params(std::size_t d, std::mt19937_64& rng) {
    AttentionParams p;
    p.wq = Param("t.wq", random_tensor({d, d}, rng, 0.3));
    p.wk = Param("t.wk", random_tensor({d, d}, rng, 0.3));
    p.wv = Param("t.wv", random_tensor({d, d}, rng, 0.3));
    p.wo = Param("t.wo", random_tensor({d, d}, rng, 0.3));
    return p;
}

std::size_t stack_param_count_formula(std::size_t n, std::size_t d, std::size_t m) {
    // per block: two attentions (4 d^2 each) + MLP (d*md + md + md*d + d)
    // + 3 layer norms (2d each)
    return n * (8 * d * d + 2 * m * d * d + (m + 1) * d + 6 * d);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double diff = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        diff = std::max(diff, std::abs(a.data[i] - b.data[i]));
    return diff;
}

}  // namespace

TEST_CASE("attention with a single key returns that value row") {
    Graph g;
    const std::size_t d = 8, heads = 2;
    std::mt19937_64 rng(11);
    AttentionParams p = make_attn_params(d, rng);
    set_identity(p.wv);
    set_identity(p.wo);
    NodeRef q = g.leaf(random_tensor({3, d}, rng));
    Tensor kv_row = random_tensor({1, d}, rng);
    NodeRef out = attention(g, q, g.leaf(kv_row), heads, p);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < d; ++j)
            CHECK(out->value.at2(i, j) == doctest::Approx(kv_row.at2(0, j)).epsilon(1e-12));
}

TEST_CASE("zero key projection makes attention average the values") {
    Graph g;
    const std::size_t d = 8, heads = 4, m = 5;
    std::mt19937_64 rng(12);
    AttentionParams p = make_attn_params(d, rng);
    p.wk.value.fill(0.0);
    set_identity(p.wv);
    set_identity(p.wo);
    NodeRef q = g.leaf(random_tensor({2, d}, rng));
    Tensor kv_t = random_tensor({m, d}, rng);
    NodeRef out = attention(g, q, g.leaf(kv_t), heads, p);
    for (std::size_t j = 0; j < d; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < m; ++i) mean += kv_t.at2(i, j);
        mean /= double(m);
        CHECK(out->value.at2(0, j) == doctest::Approx(mean).epsilon(1e-12));
        CHECK(out->value.at2(1, j) == doctest::Approx(mean).epsilon(1e-12));
    }
}

TEST_CASE("attention matches a naive per-head oracle") {
    const std::size_t d = 16, heads = 4;
    for (std::uint64_t seed : {1, 2, 3}) {
        Graph g;
        std::mt19937_64 rng(seed);
        AttentionParams p = make_attn_params(d, rng);
        Tensor q_t = random_tensor({5, d}, rng);
        Tensor kv_t = random_tensor({9, d}, rng);
        NodeRef out = attention(g, g.leaf(q_t), g.leaf(kv_t), heads, p);
        Tensor ref = naive_attention(q_t, kv_t, p, heads);
        REQUIRE(out->value.shape == ref.shape);
        CHECK(max_abs_diff(out->value, ref) < 1e-9);
    }
}

TEST_CASE("attention rejects width and head mismatches") {
    Graph g;
    std::mt19937_64 rng(13);
    AttentionParams p = make_attn_params(8, rng);
    NodeRef q = g.leaf(random_tensor({2, 8}, rng));
    NodeRef kv_bad = g.leaf(random_tensor({3, 6}, rng));
    CHECK_THROWS_AS(attention(g, q, kv_bad, 2, p), std::invalid_argument);
    NodeRef kv = g.leaf(random_tensor({3, 8}, rng));
    CHECK_THROWS_AS(attention(g, q, kv, 3, p), std::invalid_argument);
}

TEST_CASE("zero-initialized output projections make the stack an identity over positional inputs") {
    MemAugStack stack = make_stack(3, 16, 4, 77);

    Graph g;
    const std::size_t frames = 4, tpf = 3, d = 16, n_q = 2;
    FeatureSequence decayed = make_decayed(g, frames, tpf, d, 5, {0.0, 3.0, 7.0, 11.0});
    QuestionSequence q = make_question(g, n_q, d, 6);
    MemoryRepository repo = make_repo(g, 20, d, 7);

    Tensor expect_video = decayed.node->value;
    for (std::size_t f = 0; f < frames; ++f)
        for (std::size_t t = 0; t < tpf; ++t)
            add_sinusoidal_row(expect_video.data.data() + decayed.row_of(f, t) * d,
                               decayed.timestamps[f], d);
    Tensor expect_q = q.node->value;
    for (std::size_t i = 0; i < n_q; ++i)
        add_sinusoidal_row(expect_q.data.data() + i * d, double(i), d);

    MemAugOutput out = memaug_forward(g, decayed, q, repo, stack);
    REQUIRE(out.video->value.shape == expect_video.shape);
    REQUIRE(out.question->value.shape == expect_q.shape);
    CHECK(max_abs_diff(out.video->value, expect_video) <= 1e-12);
    CHECK(max_abs_diff(out.question->value, expect_q) <= 1e-12);

    SUBCASE("zero_output_projections restores identity after training drift") {
        std::mt19937_64 rng(8);
        randomize_outputs(stack, rng);
        Graph g2;
        FeatureSequence d2 = make_decayed(g2, frames, tpf, d, 5, {0.0, 3.0, 7.0, 11.0});
        QuestionSequence q2 = make_question(g2, n_q, d, 6);
        MemoryRepository r2 = make_repo(g2, 20, d, 7);
        CHECK(max_abs_diff(memaug_forward(g2, d2, q2, r2, stack).video->value,
                           expect_video) > 1e-6);
        stack.zero_output_projections();
        Graph g3;
        FeatureSequence d3 = make_decayed(g3, frames, tpf, d, 5, {0.0, 3.0, 7.0, 11.0});
        QuestionSequence q3 = make_question(g3, n_q, d, 6);
        MemoryRepository r3 = make_repo(g3, 20, d, 7);
        CHECK(max_abs_diff(memaug_forward(g3, d3, q3, r3, stack).video->value,
                           expect_video) <= 1e-12);
    }
}

TEST_CASE("forward shape contract and finiteness") {
    MemAugStack stack = make_stack(2, 16, 4, 3);
    std::mt19937_64 rng(4);
    randomize_outputs(stack, rng);

    Graph g;
    FeatureSequence decayed = make_decayed(g, 4, 2, 16, 8);  // 8 video tokens
    QuestionSequence q = make_question(g, 3, 16, 9);
    MemoryRepository repo = make_repo(g, 64, 16, 10);
    MemAugOutput out = memaug_forward(g, decayed, q, repo, stack);
    CHECK(out.video->value.rows() == 8);
    CHECK(out.video->value.cols() == 16);
    CHECK(out.question->value.rows() == 3);
    CHECK(out.question->value.cols() == 16);
    CHECK(out.video->value.all_finite());
    CHECK(out.question->value.all_finite());
}

TEST_CASE("one-block stack passes finite-difference gradient check") {
    MemAugStack stack = make_stack(1, 8, 2, 21);
    std::mt19937_64 rng(22);
    randomize_outputs(stack, rng);

    std::mt19937_64 pat_rng(23);
    Tensor rv = random_tensor({4, 8}, pat_rng);
    Tensor rq = random_tensor({2, 8}, pat_rng);

    auto eval = [&](bool with_grad) {
        Graph g;
        FeatureSequence decayed = make_decayed(g, 2, 2, 8, 31);
        QuestionSequence q = make_question(g, 2, 8, 32);
        MemoryRepository repo = make_repo(g, 6, 8, 33);
        MemAugOutput out = memaug_forward(g, decayed, q, repo, stack);
        NodeRef loss = g.add(g.sum(g.mul(out.video, g.leaf(rv))),
                             g.sum(g.mul(out.question, g.leaf(rq))));
        if (with_grad) g.backward(loss);
        return loss->value.data[0];
    };
    GradCheckReport rep = grad_check(eval, stack.params(), 1e-4, 1e-4);
    INFO("worst param " << rep.worst_param << " err " << rep.max_error);
    CHECK(rep.pass);
    CHECK(rep.max_error < 1e-4);
}

TEST_CASE("output depends on memory contents") {
    MemAugStack stack = make_stack(1, 16, 4, 41);
    std::mt19937_64 rng(42);
    randomize_outputs(stack, rng);

    auto run = [&](std::uint64_t repo_seed) {
        Graph g;
        FeatureSequence decayed = make_decayed(g, 3, 2, 16, 51);
        QuestionSequence q = make_question(g, 2, 16, 52);
        MemoryRepository repo = make_repo(g, 12, 16, repo_seed);
        return memaug_forward(g, decayed, q, repo, stack).video->value;
    };
    CHECK(max_abs_diff(run(100), run(101)) > 1e-6);

    SUBCASE("and gradients flow back into the repository node") {
        Graph g;
        FeatureSequence decayed = make_decayed(g, 3, 2, 16, 51);
        QuestionSequence q = make_question(g, 2, 16, 52);
        MemoryRepository repo = make_repo(g, 12, 16, 100);
        MemAugOutput out = memaug_forward(g, decayed, q, repo, stack);
        g.backward(g.sum(out.video));
        double gnorm = 0.0;
        for (double v : repo.node->grad.data) gnorm += v * v;
        CHECK(gnorm > 0.0);
    }
}

TEST_CASE("question conditioning changes video outputs") {
    MemAugStack stack = make_stack(1, 16, 4, 61);
    std::mt19937_64 rng(62);
    randomize_outputs(stack, rng);

    auto run = [&](bool include_question) {
        Graph g;
        FeatureSequence decayed = make_decayed(g, 3, 2, 16, 71);
        QuestionSequence q = make_question(g, 3, 16, 72);
        MemoryRepository repo = make_repo(g, 12, 16, 73);
        MemAugOutput out = memaug_forward(g, decayed, q, repo, stack, include_question);
        if (!include_question) CHECK(out.question == nullptr);
        return out.video->value;
    };
    CHECK(max_abs_diff(run(true), run(false)) > 1e-6);
}

TEST_CASE("frame timestamps are injected into the representation") {
    MemAugStack stack = make_stack(1, 16, 4, 81);
    std::mt19937_64 rng(82);
    randomize_outputs(stack, rng);

    auto run = [&](std::vector<double> ts) {
        Graph g;
        FeatureSequence decayed = make_decayed(g, 3, 2, 16, 91, std::move(ts));
        QuestionSequence q = make_question(g, 2, 16, 92);
        MemoryRepository repo = make_repo(g, 12, 16, 93);
        return memaug_forward(g, decayed, q, repo, stack).video->value;
    };
    // same token content, different original-frame timestamps
    CHECK(max_abs_diff(run({0.0, 1.0, 2.0}), run({10.0, 40.0, 90.0})) > 1e-6);
}

TEST_CASE("forward rejects degenerate inputs") {
    MemAugStack stack = make_stack(1, 16, 4, 95);
    Graph g;
    FeatureSequence decayed = make_decayed(g, 2, 2, 16, 96);
    QuestionSequence q = make_question(g, 2, 16, 97);
    MemoryRepository empty;
    CHECK_THROWS_AS(memaug_forward(g, decayed, q, empty, stack), std::invalid_argument);
    MemoryRepository narrow = make_repo(g, 4, 8, 98);
    CHECK_THROWS_AS(memaug_forward(g, decayed, q, narrow, stack), std::invalid_argument);
}

TEST_CASE("parameter count follows the closed form") {
    auto count_for = [](std::size_t blocks, std::size_t d) {
        MemAugStack stack = make_stack(blocks, d, 4, 0);
        return param_count(stack);
    };
    CHECK(count_for(1, 16) == stack_param_count_formula(1, 16, 4));
    CHECK(count_for(4, 16) == 4 * count_for(1, 16));
    CHECK(count_for(1, 32) == stack_param_count_formula(1, 32, 4));
}

TEST_CASE("checkpoint round-trip restores every parameter bit-exactly") {
    MemAugStack a = make_stack(2, 16, 4, 7);
    std::mt19937_64 rng(8);
    for (Param* p : a.params()) randomize(*p, rng);

    const std::string path = "/tmp/vidmem_test_memaug.ckpt";
    save_checkpoint(a.params(), path);

    MemAugStack b = make_stack(2, 16, 4, 999);
    load_checkpoint(b.params(), path);
    auto pa = a.params(), pb = b.params();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i)
        CHECK(pa[i]->value.data == pb[i]->value.data);

    SUBCASE("shape mismatch is rejected") {
        MemAugStack c = make_stack(2, 8, 2, 1);
        CHECK_THROWS_AS(load_checkpoint(c.params(), path), std::runtime_error);
    }
    std::remove(path.c_str());
}
