#include "oovforge/hice.hpp"

#include <charconv>
#include <cmath>
#include <random>
#include <sstream>

#include "oovforge/errors.hpp"

namespace oovforge {

// ---- config ----------------------------------------------------------------------

HiceConfig HiceConfig::for_dim(std::size_t dim, std::size_t heads) {
  HiceConfig c;
  c.dim = dim;
  c.heads = heads;
  c.d_model = heads == 0 ? dim : (dim + heads - 1) / heads * heads;
  c.d_ff = 4 * c.d_model;
  c.num_chars = CharVocab::standard().size();
  return c;
}

void HiceConfig::validate() const {
  if (dim == 0) throw UsageError("hice config: dim must be positive");
  if (heads == 0 || d_model == 0 || d_model % heads != 0) {
    throw UsageError("hice config: d_model (" + std::to_string(d_model) + ") must be a positive multiple of heads (" +
                     std::to_string(heads) + ")");
  }
  if (d_ff == 0 || max_len == 0 || char_dim == 0 || num_chars == 0) throw UsageError("hice config: zero-sized component");
  if (filter_widths.empty() || filters_per_width == 0) throw UsageError("hice config: morphology CNN has no filters");
  if (context_blocks == 0 || aggregator_blocks == 0) throw UsageError("hice config: need at least one block per level");
}

namespace {

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

std::size_t parse_size(const std::string& key, const std::string& value) {
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw FormatError("config key '" + key + "' has non-integer value '" + value + "'");
  }
  return out;
}

const std::string& require_entry(const ConfigEntries& entries, const std::string& key) {
  for (const auto& [k, v] : entries) {
    if (k == key) return v;
  }
  throw FormatError("config is missing key '" + key + "'");
}

}  // namespace

ConfigEntries HiceConfig::to_entries() const {
  return {
      {"dim", std::to_string(dim)},
      {"d_model", std::to_string(d_model)},
      {"heads", std::to_string(heads)},
      {"d_ff", std::to_string(d_ff)},
      {"context_blocks", std::to_string(context_blocks)},
      {"aggregator_blocks", std::to_string(aggregator_blocks)},
      {"max_len", std::to_string(max_len)},
      {"char_dim", std::to_string(char_dim)},
      {"filter_widths", join_sizes(filter_widths)},
      {"filters_per_width", std::to_string(filters_per_width)},
      {"num_chars", std::to_string(num_chars)},
      {"pooling", pooling == ContextPooling::kMask ? "mask" : "mean"},
      {"use_morph", use_morph ? "1" : "0"},
  };
}

HiceConfig HiceConfig::from_entries(const ConfigEntries& entries) {
  HiceConfig c;
  auto get = [&](const char* key) { return parse_size(key, require_entry(entries, key)); };
  c.dim = get("dim");
  c.d_model = get("d_model");
  c.heads = get("heads");
  c.d_ff = get("d_ff");
  c.context_blocks = get("context_blocks");
  c.aggregator_blocks = get("aggregator_blocks");
  c.max_len = get("max_len");
  c.char_dim = get("char_dim");
  c.filters_per_width = get("filters_per_width");
  c.num_chars = get("num_chars");
  c.filter_widths.clear();
  std::stringstream widths(require_entry(entries, "filter_widths"));
  for (std::string item; std::getline(widths, item, ',');) c.filter_widths.push_back(parse_size("filter_widths", item));
  const auto& pooling = require_entry(entries, "pooling");
  if (pooling == "mask") {
    c.pooling = ContextPooling::kMask;
  } else if (pooling == "mean") {
    c.pooling = ContextPooling::kMean;
  } else {
    throw FormatError("unknown pooling '" + pooling + "'");
  }
  const auto& morph = require_entry(entries, "use_morph");
  if (morph != "0" && morph != "1") throw FormatError("use_morph must be 0 or 1");
  c.use_morph = morph == "1";
  try {
    c.validate();
  } catch (const UsageError& e) {
    throw FormatError(e.what());
  }
  return c;
}

// ---- parameters --------------------------------------------------------------------

namespace {

using Slot = std::pair<std::string, Tensor*>;

void block_slots(const std::string& prefix, AttentionBlockParams& b, std::vector<Slot>& out) {
  out.emplace_back(prefix + ".wq", &b.wq);
  out.emplace_back(prefix + ".wk", &b.wk);
  out.emplace_back(prefix + ".wv", &b.wv);
  out.emplace_back(prefix + ".wo", &b.wo);
  out.emplace_back(prefix + ".ffn.w1", &b.ffn_w1);
  out.emplace_back(prefix + ".ffn.b1", &b.ffn_b1);
  out.emplace_back(prefix + ".ffn.w2", &b.ffn_w2);
  out.emplace_back(prefix + ".ffn.b2", &b.ffn_b2);
  out.emplace_back(prefix + ".ln1.gain", &b.ln1_gain);
  out.emplace_back(prefix + ".ln1.bias", &b.ln1_bias);
  out.emplace_back(prefix + ".ln2.gain", &b.ln2_gain);
  out.emplace_back(prefix + ".ln2.bias", &b.ln2_bias);
}

std::vector<Slot> slots(HiceParams& p) {
  std::vector<Slot> out;
  out.emplace_back("special", &p.special);
  if (p.config.projects_input()) out.emplace_back("input_proj", &p.input_proj);
  out.emplace_back("a_pos", &p.a_pos);
  for (std::size_t b = 0; b < p.context_encoder.size(); ++b) block_slots("context." + std::to_string(b), p.context_encoder[b], out);
  for (std::size_t b = 0; b < p.aggregator.size(); ++b) block_slots("aggregator." + std::to_string(b), p.aggregator[b], out);
  out.emplace_back("char.emb", &p.char_emb);
  for (std::size_t i = 0; i < p.conv_filters.size(); ++i) {
    const std::string w = std::to_string(p.config.filter_widths[i]);
    out.emplace_back("char.conv." + w, &p.conv_filters[i]);
    out.emplace_back("char.bias." + w, &p.conv_bias[i]);
  }
  out.emplace_back("fusion.w", &p.fusion_w);
  out.emplace_back("fusion.b", &p.fusion_b);
  return out;
}

class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  Tensor xavier(Shape shape, std::size_t fan_in, std::size_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    std::vector<double> v(shape_size(shape));
    for (double& x : v) x = dist(rng_);
    return Tensor::param(std::move(shape), std::move(v));
  }

  Tensor constant(Shape shape, double value) {
    return Tensor::param(shape, std::vector<double>(shape_size(shape), value));
  }

  Tensor normal(Shape shape, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<double> v(shape_size(shape));
    for (double& x : v) x = dist(rng_);
    return Tensor::param(std::move(shape), std::move(v));
  }

 private:
  std::mt19937_64 rng_;
};

AttentionBlockParams init_block(const HiceConfig& c, Initializer& init) {
  const std::size_t d = c.d_model;
  AttentionBlockParams b;
  b.wq = init.xavier({d, d}, d, c.head_dim());
  b.wk = init.xavier({d, d}, d, c.head_dim());
  b.wv = init.xavier({d, d}, d, c.head_dim());
  b.wo = init.xavier({d, d}, d, d);
  b.ffn_w1 = init.xavier({d, c.d_ff}, d, c.d_ff);
  b.ffn_b1 = init.constant({c.d_ff}, 0.0);
  b.ffn_w2 = init.xavier({c.d_ff, d}, c.d_ff, d);
  b.ffn_b2 = init.constant({d}, 0.0);
  b.ln1_gain = init.constant({d}, 1.0);
  b.ln1_bias = init.constant({d}, 0.0);
  b.ln2_gain = init.constant({d}, 1.0);
  b.ln2_bias = init.constant({d}, 0.0);
  return b;
}

}  // namespace

std::vector<std::pair<std::string, Tensor>> HiceParams::named_learnable() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (auto& [name, t] : slots(const_cast<HiceParams&>(*this))) out.emplace_back(name, *t);
  return out;
}

std::vector<Tensor> HiceParams::learnable() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : slots(const_cast<HiceParams&>(*this))) out.push_back(*t);
  return out;
}

HiceParams HiceParams::with_learnable(std::span<const Tensor> replacement) const {
  HiceParams copy = *this;
  auto s = slots(copy);
  if (s.size() != replacement.size()) {
    throw UsageError("with_learnable: expected " + std::to_string(s.size()) + " tensors, got " +
                     std::to_string(replacement.size()));
  }
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (replacement[i].shape() != s[i].second->shape()) {
      throw DimensionError("with_learnable: shape mismatch for " + s[i].first);
    }
    *s[i].second = replacement[i];
  }
  return copy;
}

HiceParams HiceParams::clone() const {
  HiceParams copy = *this;
  for (auto& [name, t] : slots(copy)) *t = t->clone();
  return copy;
}

std::size_t HiceParams::num_learnable_values() const {
  std::size_t n = 0;
  for (const auto& t : learnable()) n += t.size();
  return n;
}

Tensor frozen_table_tensor(const EmbeddingTable& table) {
  const auto flat = table.flat();
  return Tensor::from_data({table.size(), table.dim()}, std::vector<double>(flat.begin(), flat.end()));
}

HiceParams init_params(const HiceConfig& config, const EmbeddingTable& table, std::uint64_t seed) {
  config.validate();
  if (table.dim() != config.dim) {
    throw DimensionError("table dimension " + std::to_string(table.dim()) + " does not match model dim " +
                         std::to_string(config.dim));
  }
  if (table.size() == 0) throw UsageError("init_params: empty embedding table");
  Initializer init(seed);
  HiceParams p;
  p.config = config;
  p.frozen = frozen_table_tensor(table);

  std::vector<double> mean(config.dim, 0.0);
  for (std::size_t r = 0; r < table.size(); ++r) {
    const auto row = table.row(r);
    for (std::size_t j = 0; j < config.dim; ++j) mean[j] += row[j];
  }
  for (double& m : mean) m /= static_cast<double>(table.size());
  std::vector<double> special(mean);
  special.insert(special.end(), mean.begin(), mean.end());
  p.special = Tensor::param({2, config.dim}, std::move(special));

  if (config.projects_input()) p.input_proj = init.xavier({config.dim, config.d_model}, config.dim, config.d_model);
  p.a_pos = init.constant({config.max_len}, 1.0);
  for (std::size_t b = 0; b < config.context_blocks; ++b) p.context_encoder.push_back(init_block(config, init));
  for (std::size_t b = 0; b < config.aggregator_blocks; ++b) p.aggregator.push_back(init_block(config, init));
  p.char_emb = init.normal({config.num_chars, config.char_dim}, 0.1);
  for (std::size_t w : config.filter_widths) {
    p.conv_filters.push_back(
        init.xavier({w, config.char_dim, config.filters_per_width}, w * config.char_dim, config.filters_per_width));
    p.conv_bias.push_back(init.constant({config.filters_per_width}, 0.0));
  }
  const std::size_t fused = config.d_model + config.morph_dim();
  p.fusion_w = init.xavier({fused, config.dim}, fused, config.dim);
  p.fusion_b = init.constant({config.dim}, 0.0);
  return p;
}

// ---- forward -----------------------------------------------------------------------

Tensor self_attention(const Tensor& x, const AttentionBlockParams& p, std::size_t heads, AttentionSink* sink) {
  if (x.rank() != 2 || x.dim(0) == 0) throw InputError("self_attention: need a non-empty [L x d_model] input");
  const std::size_t d_model = x.dim(1);
  if (heads == 0 || d_model % heads != 0) throw DimensionError("self_attention: d_model not divisible by heads");
  const std::size_t dh = d_model / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d_model));
  Tensor q = matmul(x, p.wq);
  Tensor k = matmul(x, p.wk);
  Tensor v = matmul(x, p.wv);
  std::vector<Tensor> outputs;
  outputs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(q, h * dh, dh);
    Tensor kh = slice_cols(k, h * dh, dh);
    Tensor vh = slice_cols(v, h * dh, dh);
    Tensor weights = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt), 1);
    if (sink) sink->push_back(weights);
    outputs.push_back(matmul(weights, vh));
  }
  return matmul(heads == 1 ? outputs[0] : concat_cols(outputs), p.wo);
}

Tensor feed_forward(const Tensor& x, const AttentionBlockParams& p) {
  return add_bias(matmul(relu(add_bias(matmul(x, p.ffn_w1), p.ffn_b1)), p.ffn_w2), p.ffn_b2);
}

Tensor encoding_block(const Tensor& x, const AttentionBlockParams& p, std::size_t heads, AttentionSink* sink) {
  Tensor y1 = layer_norm(add(x, self_attention(x, p, heads, sink)), p.ln1_gain, p.ln1_bias);
  return layer_norm(add(y1, feed_forward(y1, p)), p.ln2_gain, p.ln2_bias);
}

Tensor embed_tokens(std::span<const TokenId> tokens, const HiceParams& p) {
  const std::size_t len = tokens.size();
  const std::size_t rows = p.frozen.dim(0);
  std::vector<std::size_t> table_rows, table_pos, special_rows, special_pos;
  for (std::size_t i = 0; i < len; ++i) {
    const TokenId t = tokens[i];
    if (t == kMaskToken || t == kUnkToken) {
      special_rows.push_back(t == kMaskToken ? 0 : 1);
      special_pos.push_back(i);
    } else if (t < rows) {
      table_rows.push_back(t);
      table_pos.push_back(i);
    } else {
      throw InputError("token id " + std::to_string(t) + " outside the embedding table");
    }
  }
  Tensor out;
  if (!table_rows.empty()) out = scatter_rows(gather_rows(p.frozen, table_rows), table_pos, len);
  if (!special_rows.empty()) {
    Tensor s = scatter_rows(gather_rows(p.special, special_rows), special_pos, len);
    out = out.defined() ? add(out, s) : s;
  }
  return out;
}

Tensor encode_context(std::span<const TokenId> tokens, const HiceParams& p, AttentionSink* sink) {
  const auto& c = p.config;
  if (tokens.empty()) throw InputError("encode_context: empty context");
  if (tokens.size() > c.max_len) {
    throw InputError("encode_context: context of " + std::to_string(tokens.size()) + " tokens exceeds max_len " +
                     std::to_string(c.max_len));
  }
  Tensor x = embed_tokens(tokens, p);
  if (c.projects_input()) x = matmul(x, p.input_proj);
  x = mul_rows(x, slice(p.a_pos, 0, tokens.size()));
  for (const auto& block : p.context_encoder) x = encoding_block(x, block, c.heads, sink);
  if (c.pooling == ContextPooling::kMask) {
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (tokens[i] == kMaskToken) return row(x, i);
    }
  }
  return col_mean(x);
}

Tensor aggregate(std::span<const Tensor> context_vectors, const HiceParams& p, AttentionSink* sink) {
  if (context_vectors.empty()) throw InputError("aggregate: no context vectors");
  Tensor x = stack_rows(context_vectors);
  for (const auto& block : p.aggregator) x = encoding_block(x, block, p.config.heads, sink);
  return col_mean(x);
}

Tensor encode_morphology(std::span<const CharId> chars, const HiceParams& p) {
  if (chars.empty()) throw InputError("encode_morphology: empty character sequence");
  std::vector<std::size_t> ids;
  ids.reserve(chars.size());
  for (CharId ch : chars) {
    if (ch >= p.config.num_chars) throw InputError("character id " + std::to_string(ch) + " outside the char vocabulary");
    ids.push_back(ch);
  }
  Tensor embedded = gather_rows(p.char_emb, ids);
  std::vector<Tensor> pooled;
  pooled.reserve(p.conv_filters.size());
  for (std::size_t i = 0; i < p.conv_filters.size(); ++i) {
    pooled.push_back(add(conv1d_maxpool(embedded, p.conv_filters[i]), p.conv_bias[i]));
  }
  return relu(concat(pooled));
}

namespace {

Tensor predict_impl(const Episode& e, const HiceParams& p, AttentionSink* ctx_sink, std::vector<AttentionSink>* per_ctx,
                    AttentionSink* agg_sink) {
  if (e.contexts.empty()) throw InputError("predict: episode has no contexts");
  std::vector<Tensor> encoded;
  encoded.reserve(e.contexts.size());
  for (const auto& ctx : e.contexts) {
    AttentionSink* sink = ctx_sink;
    if (per_ctx) {
      per_ctx->emplace_back();
      sink = &per_ctx->back();
    }
    encoded.push_back(encode_context(ctx, p, sink));
  }
  Tensor context_part = aggregate(encoded, p, agg_sink);
  Tensor morph = p.config.use_morph ? encode_morphology(e.char_seq, p) : Tensor::zeros({p.config.morph_dim()});
  const Tensor parts[] = {context_part, morph};
  Tensor fused = concat(parts);
  Tensor projected = matmul(reshape(fused, {1, fused.size()}), p.fusion_w);
  return add(reshape(projected, {p.config.dim}), p.fusion_b);
}

}  // namespace

Tensor predict(const Episode& episode, const HiceParams& p) { return predict_impl(episode, p, nullptr, nullptr, nullptr); }

std::vector<double> predict_vector(const Episode& episode, const HiceParams& p) {
  NoGradGuard guard;
  return predict(episode, p).to_vector();
}

// ---- attention dumps ------------------------------------------------------------------

namespace {

std::vector<std::vector<std::vector<double>>> group_heads(const AttentionSink& sink, std::size_t heads) {
  std::vector<std::vector<std::vector<double>>> blocks;
  for (std::size_t i = 0; i < sink.size(); ++i) {
    if (i % heads == 0) blocks.emplace_back();
    blocks.back().push_back(sink[i].to_vector());
  }
  return blocks;
}

std::string token_text(TokenId t, const EmbeddingTable& table) {
  if (t == kMaskToken) return "<mask>";
  if (t == kUnkToken) return "<unk>";
  return table.word(t);
}

void append_double(std::string& out, double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, ptr);
}

void append_matrix(std::string& out, const std::vector<double>& m, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (j) out += ' ';
      append_double(out, m[i * n + j]);
    }
    out += '\n';
  }
}

class LineReader {
 public:
  explicit LineReader(std::string_view text) : text_(text) {}

  // Skips '#' comment lines.
  std::string_view next() {
    for (;;) {
      if (pos_ >= text_.size()) throw FormatError("attention report truncated after line " + std::to_string(line_));
      auto end = text_.find('\n', pos_);
      if (end == std::string_view::npos) end = text_.size();
      std::string_view line = text_.substr(pos_, end - pos_);
      pos_ = end + 1;
      ++line_;
      if (!line.starts_with('#')) return line;
    }
  }

  std::vector<std::string> fields() {
    std::vector<std::string> out;
    std::string_view line = next();
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && line[i] == ' ') ++i;
      std::size_t j = i;
      while (j < line.size() && line[j] != ' ') ++j;
      if (j > i) out.emplace_back(line.substr(i, j - i));
      i = j;
    }
    return out;
  }

  std::size_t line() const { return line_; }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 0;
};

std::size_t to_size(const std::string& s, const LineReader& r) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw FormatError("attention report line " + std::to_string(r.line()) + ": expected integer, got '" + s + "'");
  }
  return v;
}

void expect(const std::vector<std::string>& f, std::size_t n, const char* head, const LineReader& r) {
  if (f.size() != n || f[0] != head) {
    throw FormatError("attention report line " + std::to_string(r.line()) + ": expected '" + head + "' record");
  }
}

std::vector<double> read_matrix(LineReader& r, std::size_t n) {
  std::vector<double> m;
  m.reserve(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    auto f = r.fields();
    if (f.size() != n) throw FormatError("attention report line " + std::to_string(r.line()) + ": wrong row length");
    for (const auto& s : f) {
      double v = 0;
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw FormatError("attention report line " + std::to_string(r.line()) + ": bad number '" + s + "'");
      }
      m.push_back(v);
    }
  }
  return m;
}

std::vector<std::vector<std::vector<double>>> read_blocks(LineReader& r, std::size_t blocks, std::size_t heads,
                                                          std::size_t n) {
  std::vector<std::vector<std::vector<double>>> out(blocks);
  for (std::size_t b = 0; b < blocks; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      auto f = r.fields();
      expect(f, 4, "block", r);
      if (to_size(f[1], r) != b || f[2] != "head" || to_size(f[3], r) != h) {
        throw FormatError("attention report line " + std::to_string(r.line()) + ": blocks out of order");
      }
      out[b].push_back(read_matrix(r, n));
    }
  }
  return out;
}

}  // namespace

AttentionReport dump_attention(const Episode& episode, const HiceParams& p, const EmbeddingTable& table) {
  NoGradGuard guard;
  std::vector<AttentionSink> per_ctx;
  AttentionSink agg;
  predict_impl(episode, p, nullptr, &per_ctx, &agg);
  AttentionReport report;
  report.word = episode.target_word;
  report.num_heads = p.config.heads;
  for (std::size_t k = 0; k < episode.contexts.size(); ++k) {
    AttentionReport::Context ctx;
    for (TokenId t : episode.contexts[k]) ctx.tokens.push_back(token_text(t, table));
    ctx.heads = group_heads(per_ctx[k], p.config.heads);
    report.contexts.push_back(std::move(ctx));
  }
  report.aggregator = group_heads(agg, p.config.heads);
  return report;
}

std::string serialize_attention_report(const AttentionReport& report) {
  std::string out = "attention-report 1\n";
  out += "word " + report.word + "\n";
  out += "heads " + std::to_string(report.num_heads) + "\n";
  out += "contexts " + std::to_string(report.contexts.size()) + "\n";
  for (std::size_t k = 0; k < report.contexts.size(); ++k) {
    const auto& ctx = report.contexts[k];
    const std::size_t n = ctx.tokens.size();
    out += "context " + std::to_string(k) + " length " + std::to_string(n) + " blocks " +
           std::to_string(ctx.heads.size()) + "\n";
    out += "tokens";
    for (const auto& t : ctx.tokens) out += " " + t;
    out += "\n";
    for (std::size_t b = 0; b < ctx.heads.size(); ++b) {
      for (std::size_t h = 0; h < ctx.heads[b].size(); ++h) {
        out += "block " + std::to_string(b) + " head " + std::to_string(h) + "\n";
        append_matrix(out, ctx.heads[b][h], n);
      }
    }
  }
  const std::size_t k = report.contexts.size();
  out += "aggregator size " + std::to_string(k) + " blocks " + std::to_string(report.aggregator.size()) + "\n";
  for (std::size_t b = 0; b < report.aggregator.size(); ++b) {
    for (std::size_t h = 0; h < report.aggregator[b].size(); ++h) {
      out += "block " + std::to_string(b) + " head " + std::to_string(h) + "\n";
      append_matrix(out, report.aggregator[b][h], k);
    }
  }
  out += "end\n";
  return out;
}

AttentionReport parse_attention_report(std::string_view text) {
  LineReader r(text);
  AttentionReport report;
  auto f = r.fields();
  if (f.size() != 2 || f[0] != "attention-report" || f[1] != "1") throw FormatError("not an attention report (v1)");
  f = r.fields();
  expect(f, 2, "word", r);
  report.word = f[1];
  f = r.fields();
  expect(f, 2, "heads", r);
  report.num_heads = to_size(f[1], r);
  f = r.fields();
  expect(f, 2, "contexts", r);
  const std::size_t num_contexts = to_size(f[1], r);
  for (std::size_t k = 0; k < num_contexts; ++k) {
    f = r.fields();
    expect(f, 6, "context", r);
    if (to_size(f[1], r) != k || f[2] != "length" || f[4] != "blocks") {
      throw FormatError("attention report line " + std::to_string(r.line()) + ": malformed context header");
    }
    const std::size_t n = to_size(f[3], r);
    const std::size_t blocks = to_size(f[5], r);
    AttentionReport::Context ctx;
    f = r.fields();
    if (f.empty() || f[0] != "tokens" || f.size() != n + 1) {
      throw FormatError("attention report line " + std::to_string(r.line()) + ": token count mismatch");
    }
    ctx.tokens.assign(f.begin() + 1, f.end());
    ctx.heads = read_blocks(r, blocks, report.num_heads, n);
    report.contexts.push_back(std::move(ctx));
  }
  f = r.fields();
  expect(f, 5, "aggregator", r);
  if (f[1] != "size" || to_size(f[2], r) != num_contexts || f[3] != "blocks") {
    throw FormatError("attention report line " + std::to_string(r.line()) + ": malformed aggregator header");
  }
  report.aggregator = read_blocks(r, to_size(f[4], r), report.num_heads, num_contexts);
  f = r.fields();
  expect(f, 1, "end", r);
  return report;
}

}  // namespace oovforge
