#pragma once

// Named finite-difference checks over every graph primitive plus the fully
// composed pipeline (encode -> forget -> memory -> MemAug -> decoder loss).
// Shared by the CLI `gradcheck` subcommand and the acceptance suite.

#include <random>
#include <string>
#include <vector>

#include "vidmem/forget.hpp"
#include "vidmem/gradcheck.hpp"
#include "vidmem/harness.hpp"

namespace vidmem {

struct SuiteCheck {
    std::string name;
    GradCheckReport report;
};

namespace detail {

inline Tensor suite_random(std::vector<std::size_t> shape, std::mt19937_64& rng,
                           double s = 1.0) {
    std::uniform_real_distribution<double> u(-s, s);
    Tensor t(std::move(shape));
    for (double& v : t.data) v = u(rng);
    return t;
}

inline Param suite_param(const std::string& name, std::vector<std::size_t> shape,
                         std::mt19937_64& rng, double s = 1.0) {
    return Param(name, suite_random(std::move(shape), rng, s));
}

}  // namespace detail

// One check per primitive: the loss is sum(out * R) for a fixed random R so
// every output coordinate contributes to the scalar.
inline std::vector<SuiteCheck> grad_suite_primitives(std::uint64_t seed, double tol) {
    using detail::suite_param;
    using detail::suite_random;
    std::vector<SuiteCheck> out;
    std::mt19937_64 rng(seed);
    const double step = 1e-4;

    auto run1 = [&](const std::string& name, Param& a,
                    const std::function<NodeRef(Graph&, NodeRef)>& body) {
        auto eval = [&](bool with_grad) {
            Graph g;
            NodeRef loss = body(g, g.param(a));
            if (with_grad) g.backward(loss);
            return loss->value.data[0];
        };
        out.push_back({name, grad_check(eval, {&a}, step, tol)});
    };
    auto run2 = [&](const std::string& name, Param& a, Param& b,
                    const std::function<NodeRef(Graph&, NodeRef, NodeRef)>& body) {
        auto eval = [&](bool with_grad) {
            Graph g;
            NodeRef loss = body(g, g.param(a), g.param(b));
            if (with_grad) g.backward(loss);
            return loss->value.data[0];
        };
        out.push_back({name, grad_check(eval, {&a, &b}, step, tol)});
    };

    Tensor r34 = suite_random({3, 4}, rng), r35 = suite_random({3, 5}, rng);
    Tensor r64 = suite_random({6, 4}, rng);

    Param a34 = suite_param("a34", {3, 4}, rng), b45 = suite_param("b45", {4, 5}, rng);
    run2("matmul", a34, b45, [&](Graph& g, NodeRef a, NodeRef b) {
        return g.sum(g.mul(g.matmul(a, b), g.leaf(r35)));
    });
    Param b54 = suite_param("b54", {5, 4}, rng);
    run2("matmul_nt", a34, b54, [&](Graph& g, NodeRef a, NodeRef b) {
        return g.sum(g.mul(g.matmul_nt(a, b), g.leaf(r35)));
    });
    Param c34 = suite_param("c34", {3, 4}, rng);
    run2("add", a34, c34, [&](Graph& g, NodeRef a, NodeRef b) {
        return g.sum(g.mul(g.add(a, b), g.leaf(r34)));
    });
    Param row4 = suite_param("row4", {4}, rng);
    run2("add_row_broadcast", a34, row4, [&](Graph& g, NodeRef a, NodeRef b) {
        return g.sum(g.mul(g.add_row_broadcast(a, b), g.leaf(r34)));
    });
    run1("scale", a34, [&](Graph& g, NodeRef a) {
        return g.sum(g.mul(g.scale(a, -1.7), g.leaf(r34)));
    });
    run2("mul", a34, c34, [&](Graph& g, NodeRef a, NodeRef b) {
        return g.sum(g.mul(g.mul(a, b), g.leaf(r34)));
    });
    run1("gelu", a34, [&](Graph& g, NodeRef a) {
        return g.sum(g.mul(g.gelu(a), g.leaf(r34)));
    });
    run1("softmax_rows", a34, [&](Graph& g, NodeRef a) {
        return g.sum(g.mul(g.softmax_rows(a), g.leaf(r34)));
    });
    Param gain = suite_param("gain", {4}, rng), bias = suite_param("bias", {4}, rng);
    {
        auto eval = [&](bool with_grad) {
            Graph g;
            NodeRef loss = g.sum(g.mul(
                g.layer_norm(g.param(a34), g.param(gain), g.param(bias), 1e-5),
                g.leaf(r34)));
            if (with_grad) g.backward(loss);
            return loss->value.data[0];
        };
        out.push_back({"layer_norm", grad_check(eval, {&a34, &gain, &bias}, step, tol)});
    }
    Param a64 = suite_param("a64", {6, 4}, rng);
    Tensor r62 = suite_random({6, 2}, rng), r36 = suite_random({3, 6}, rng);
    Tensor r44 = suite_random({4, 4}, rng);
    run1("slice_rows", a64, [&](Graph& g, NodeRef a) {
        return g.sum(g.mul(g.slice_rows(a, 1, 3), g.leaf(r34)));
    });
    run1("slice_cols", a64, [&](Graph& g, NodeRef a) {
        return g.sum(g.mul(g.slice_cols(a, 1, 2), g.leaf(r62)));
    });
    run2("concat_rows", a34, c34, [&](Graph& g, NodeRef a, NodeRef b) {
        return g.sum(g.mul(g.concat_rows({a, b}), g.leaf(r64)));
    });
    Param a32 = suite_param("a32", {3, 2}, rng);
    run2("concat_cols", a32, a34, [&](Graph& g, NodeRef a, NodeRef b) {
        return g.sum(g.mul(g.concat_cols({a, b}), g.leaf(r36)));
    });
    run1("gather_rows", a64, [&](Graph& g, NodeRef a) {
        return g.sum(g.mul(g.gather_rows(a, {5, 0, 0, 2}), g.leaf(r44)));
    });
    run1("sum", a34, [&](Graph& g, NodeRef a) { return g.sum(a); });
    Param logits = suite_param("logits", {5, 7}, rng);
    run1("cross_entropy_rows", logits, [&](Graph& g, NodeRef a) {
        return g.cross_entropy_rows(a, {1, 3, 4}, {2, 0, 6});
    });
    return out;
}

// Composed check: every trainable parameter of the projector, a one-block
// MemAug stack, and a one-layer decoder, through the real needle-style loss.
inline SuiteCheck grad_suite_composed(std::uint64_t seed, double tol) {
    std::mt19937_64 rng(seed);
    const std::size_t d = 8, heads = 2;
    Projector proj(6, d, d, rng);
    MemAugStack stack(MemAugConfig{1, heads, d, 2}, rng);
    ToyDecoder dec(DecoderConfig{1, heads, d, 2, vocab::kSize}, rng);
    // wake up the zero-initialized output projections so their upstream
    // parameters receive gradient
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    for (MemAugBlock& b : stack.blocks) {
        for (double& v : b.cross.wo.value.data) v = u(rng);
        for (double& v : b.self.wo.value.data) v = u(rng);
        for (double& v : b.mlp_w2.value.data) v = u(rng);
    }
    for (DecoderBlock& b : dec.blocks) {
        for (double& v : b.attn.wo.value.data) v = u(rng);
        for (double& v : b.mlp_w2.value.data) v = u(rng);
    }

    std::vector<Param*> params = proj.params();
    for (Param* p : stack.params()) params.push_back(p);
    for (Param* p : dec.params()) params.push_back(p);

    const std::size_t needle_frame = 3, marker = seed % kNumMarkers;
    ForgetConfig forget;  // uniform/uniform keeps the selection parameter-free
    forget.min_frames = 2;
    forget.temporal_ratio = 0.5;
    forget.spatial_ratio = 0.25;
    forget.rng_seed = seed;

    auto eval = [&](bool with_grad) {
        Graph g;
        FrameStream stream{6, 6, 4, 4, seed, {{needle_frame, marker}}};
        FeatureSequence seq = encode_video(g, stream, 2, 2, proj);
        QuestionSequence q = embed_question(
            g, {vocab::kQuestionMark, vocab::time_hi_token(needle_frame),
                vocab::time_lo_token(needle_frame)},
            dec.embedding);
        ForgetResult fr = apply_forgetting(g, seq, q, forget);
        MemoryRepository repo = build_memory(g, seq, fr.plan, MemoryScale::Full);
        MemAugOutput aug = memaug_forward(g, fr.decayed, q, repo, stack);
        NodeRef prefix = g.concat_rows({aug.video, q.node});
        NodeRef loss = decoder_loss(g, dec, prefix,
                                    {vocab::marker_token(marker), vocab::kEnd});
        if (with_grad) g.backward(loss);
        return loss->value.data[0];
    };
    return {"composed_pipeline", grad_check(eval, params, 1e-4, tol)};
}

inline std::vector<SuiteCheck> run_grad_suite(std::uint64_t seed, double tol = 1e-4) {
    std::vector<SuiteCheck> out = grad_suite_primitives(seed, tol);
    out.push_back(grad_suite_composed(seed, tol));
    return out;
}

}  // namespace vidmem
