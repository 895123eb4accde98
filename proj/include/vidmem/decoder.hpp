#pragma once

#include <functional>

#include "vidmem/memaug.hpp"
#include "vidmem/optim.hpp"

namespace vidmem {

// Reserved vocabulary layout for the toy tasks (vocab defaults to 64).
namespace vocab {
constexpr std::size_t kPad = 0;
constexpr std::size_t kEnd = 1;
constexpr std::size_t kQuestionMark = 2;
constexpr std::size_t kMarkerBase = 3;    // 32 needle marker ids
constexpr std::size_t kTimeHiBase = 35;   // 16 ids: (t / 8) mod 16
constexpr std::size_t kTimeLoBase = 51;   // 8 ids: t mod 8
constexpr std::size_t kSize = 64;

inline std::size_t marker_token(std::size_t marker_id) { return kMarkerBase + marker_id; }
inline std::size_t time_hi_token(std::size_t t) { return kTimeHiBase + (t / 8) % 16; }
inline std::size_t time_lo_token(std::size_t t) { return kTimeLoBase + t % 8; }
}  // namespace vocab

struct DecoderConfig {
    std::size_t num_layers = 2;
    std::size_t num_heads = 4;
    std::size_t d_model = 64;
    std::size_t mlp_mult = 4;
    std::size_t vocab_size = vocab::kSize;
};

struct DecoderBlock {
    AttentionParams attn;
    Param ln_attn_g, ln_attn_b, ln_mlp_g, ln_mlp_b;
    Param mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

// Toy causal LM. Owns the token embedding table, which doubles as the word
// embedding used by embed_question.
struct ToyDecoder {
    DecoderConfig cfg;
    Param embedding;  // vocab x d
    std::vector<DecoderBlock> blocks;
    Param ln_f_g, ln_f_b;
    Param head;  // d x vocab

    ToyDecoder() = default;
    ToyDecoder(const DecoderConfig& cfg, std::mt19937_64& rng);
    std::vector<Param*> params();
};

// Logits for prefix embeddings followed by the given token ids, causal masked.
NodeRef decoder_logits(Graph& g, ToyDecoder& dec, NodeRef prefix,
                       const std::vector<std::size_t>& token_ids);

// Teacher-forced next-token loss, averaged over answer positions only.
NodeRef decoder_loss(Graph& g, ToyDecoder& dec, NodeRef prefix,
                     const std::vector<std::size_t>& answer_ids);

// Greedy decoding; stops at kEnd or max_len.
std::vector<std::size_t> generate(ToyDecoder& dec, const Tensor& prefix,
                                  std::size_t max_len);

// zero-grad -> forward/backward via build_loss -> clip global norm at 1
// -> Adam update. Returns the loss.
double train_step(const std::vector<Param*>& params,
                  const std::function<NodeRef(Graph&)>& build_loss, Adam& opt);

}  // namespace vidmem
