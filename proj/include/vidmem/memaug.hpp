#pragma once

#include <random>
#include <string>
#include <vector>

#include "vidmem/memory.hpp"

namespace vidmem {

struct MemAugConfig {
    std::size_t num_blocks = 4;
    std::size_t num_heads = 4;
    std::size_t d_model = 64;
    std::size_t mlp_mult = 4;
};

struct AttentionParams {
    Param wq, wk, wv, wo;
};

struct MemAugBlock {
    AttentionParams cross, self;
    Param ln_cross_g, ln_cross_b, ln_self_g, ln_self_b, ln_mlp_g, ln_mlp_b;
    Param mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

// Output projections (wo, mlp_w2) start at zero so every block is the
// identity on the residual stream at init.
struct MemAugStack {
    MemAugConfig cfg;
    std::vector<MemAugBlock> blocks;

    MemAugStack() = default;
    MemAugStack(const MemAugConfig& cfg, std::mt19937_64& rng);

    std::vector<Param*> params();
    void zero_output_projections();
};

// Exact parameter count from shapes; closed form documented in the README.
std::size_t param_count(MemAugStack& stack);

// Scaled dot-product multi-head attention. `queries_in` is the (already
// normalized) query sequence; keys/values are projected from `kv_src`.
NodeRef attention(Graph& g, NodeRef queries_in, NodeRef kv_src, std::size_t heads,
                  AttentionParams& p, NodeRef additive_mask = nullptr);

// Sinusoidal positional encoding row for a scalar position.
void add_sinusoidal_row(double* dst, double position, std::size_t d);

struct MemAugOutput {
    NodeRef video;     // memory-augmented video tokens, fed to the decoder
    NodeRef question;  // question-position outputs, inspection only
};

// Forward: S = [decayed video; question] + positions; per block
// S += CrossAttn(LN(S), repo); S += SelfAttn(LN(S)); S += MLP(LN(S)).
// `include_question=false` is the video-only ablation switch.
MemAugOutput memaug_forward(Graph& g, const FeatureSequence& decayed,
                            const QuestionSequence& q, const MemoryRepository& repo,
                            MemAugStack& stack, bool include_question = true);

// Named-blob checkpoint, shared with the decoder. Little-endian f64.
void save_checkpoint(const std::vector<Param*>& params, const std::string& path);
void load_checkpoint(const std::vector<Param*>& params, const std::string& path);

}  // namespace vidmem
