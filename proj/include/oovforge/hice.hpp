#pragma once

// Hierarchical context encoder: a context encoder (positional attention
// digits + self-attention encoding block) turns each masked sentence into a
// vector, a multi-context aggregator (encoding block, no positional term,
// mean pool) fuses the K vectors, and a character CNN adds morphology before a
// linear fusion head maps everything to the embedding space.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "oovforge/container.hpp"
#include "oovforge/corpus.hpp"
#include "oovforge/episode.hpp"
#include "oovforge/tensor.hpp"

namespace oovforge {

enum class ContextPooling { kMask, kMean };


struct HiceConfig {
  std::size_t dim = 0;      // oracle and input embedding dimension
  std::size_t d_model = 0;  // dim rounded up to a multiple of heads
  std::size_t heads = 4;
  std::size_t d_ff = 0;
  std::size_t context_blocks = 1;
  std::size_t aggregator_blocks = 1;
  std::size_t max_len = 2 * kDefaultContextWindow + 1;
  std::size_t char_dim = 16;
  std::vector<std::size_t> filter_widths{2, 3, 4};
  std::size_t filters_per_width = 32;
  std::size_t num_chars = 0;
  ContextPooling pooling = ContextPooling::kMask;
  bool use_morph = true;

  // Defaults for a table of the given dimension.
  static HiceConfig for_dim(std::size_t dim, std::size_t heads = 4);

  std::size_t morph_dim() const { return filter_widths.size() * filters_per_width; }
  std::size_t head_dim() const { return d_model / heads; }
  bool projects_input() const { return d_model != dim; }
  void validate() const;

  ConfigEntries to_entries() const;
  static HiceConfig from_entries(const ConfigEntries& entries);
};

// Per-head projections are stored side by side: column block i of wq/wk/wv
// is W_i^Q/W_i^K/W_i^V, and row block i of wo multiplies head i's output.
struct AttentionBlockParams {
  Tensor wq, wk, wv;  // [d_model x d_model]
  Tensor wo;          // [d_model x d_model]
  Tensor ffn_w1;      // [d_model x d_ff]
  Tensor ffn_b1;      // [d_ff]
  Tensor ffn_w2;      // [d_ff x d_model]
  Tensor ffn_b2;      // [d_model]
  Tensor ln1_gain, ln1_bias, ln2_gain, ln2_bias;  // [d_model]
};

struct HiceParams {
  HiceConfig config;
  Tensor frozen;      // [table rows x dim]; never receives gradient
  Tensor special;     // [2 x dim]: row 0 MASK, row 1 UNK
  Tensor input_proj;  // [dim x d_model]; undefined when dim == d_model
  Tensor a_pos;       // [max_len]
  std::vector<AttentionBlockParams> context_encoder;
  std::vector<AttentionBlockParams> aggregator;
  Tensor char_emb;                 // [num_chars x char_dim]
  std::vector<Tensor> conv_filters;  // [width x char_dim x filters_per_width]
  std::vector<Tensor> conv_bias;     // [filters_per_width]
  Tensor fusion_w;                 // [(d_model + morph_dim) x dim]
  Tensor fusion_b;                 // [dim]

  // Learnable tensors in a fixed order, with stable names.
  std::vector<std::pair<std::string, Tensor>> named_learnable() const;
  std::vector<Tensor> learnable() const;
  // Copy sharing config and frozen rows, with learnables replaced in
  // named_learnable() order.
  HiceParams with_learnable(std::span<const Tensor> replacement) const;
  // Deep copy of every learnable tensor.
  HiceParams clone() const;
  std::size_t num_learnable_values() const;
};

Tensor frozen_table_tensor(const EmbeddingTable& table);

HiceParams init_params(const HiceConfig& config, const EmbeddingTable& table, std::uint64_t seed);

// Per-head attention matrices, filled when a sink is supplied.
using AttentionSink = std::vector<Tensor>;

Tensor self_attention(const Tensor& x, const AttentionBlockParams& p, std::size_t heads,
                      AttentionSink* sink = nullptr);
Tensor encoding_block(const Tensor& x, const AttentionBlockParams& p, std::size_t heads,
                      AttentionSink* sink = nullptr);
Tensor feed_forward(const Tensor& x, const AttentionBlockParams& p);

// [L x dim] rows: frozen table rows, learned MASK/UNK rows.
Tensor embed_tokens(std::span<const TokenId> tokens, const HiceParams& p);
Tensor encode_context(std::span<const TokenId> tokens, const HiceParams& p, AttentionSink* sink = nullptr);
Tensor aggregate(std::span<const Tensor> context_vectors, const HiceParams& p, AttentionSink* sink = nullptr);
Tensor encode_morphology(std::span<const CharId> chars, const HiceParams& p);

// Differentiable prediction of the target embedding [dim]. The morphology
// slot is zeros when config.use_morph is off.
Tensor predict(const Episode& episode, const HiceParams& p);
// Inference helper without graph recording.
std::vector<double> predict_vector(const Episode& episode, const HiceParams& p);

// ---- attention dumps -----------------------------------------------------------

struct AttentionReport {
  struct Context {
    std::vector<std::string> tokens;
    // [block][head] -> L x L row-major
    std::vector<std::vector<std::vector<double>>> heads;
  };
  std::string word;
  std::size_t num_heads = 0;
  std::vector<Context> contexts;
  // [block][head] -> K x K row-major
  std::vector<std::vector<std::vector<double>>> aggregator;
};

AttentionReport dump_attention(const Episode& episode, const HiceParams& p, const EmbeddingTable& table);
std::string serialize_attention_report(const AttentionReport& report);
AttentionReport parse_attention_report(std::string_view text);

}  // namespace oovforge
