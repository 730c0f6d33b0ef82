#include "oovforge/episode.hpp"

#include <algorithm>

#include "oovforge/errors.hpp"

namespace oovforge {

CharVocab::CharVocab() {
  for (char32_t c = U'a'; c <= U'z'; ++c) alphabet_.push_back(c);
  for (char32_t c = U'A'; c <= U'Z'; ++c) alphabet_.push_back(c);
  for (char32_t c = U'0'; c <= U'9'; ++c) alphabet_.push_back(c);
  alphabet_.push_back(U'-');
  alphabet_.push_back(U'\'');
}

const CharVocab& CharVocab::standard() {
  static const CharVocab cv;
  return cv;
}

CharId CharVocab::id(char32_t c) const {
  auto pos = alphabet_.find(c);
  if (pos == std::u32string::npos) return unk();
  return static_cast<CharId>(3 + pos);
}

char32_t CharVocab::character(CharId id) const {
  if (id < 3 || id >= size()) return U'�';
  return alphabet_[id - 3];
}

std::vector<CharId> char_sequence(std::string_view word, const CharVocab& cv, std::size_t max_word_len) {
  if (word.empty()) throw UsageError("char_sequence: empty word");
  auto cps = decode_utf8(word);
  if (cps.size() > max_word_len) cps.resize(max_word_len);
  std::vector<CharId> ids;
  ids.reserve(cps.size() + 2);
  ids.push_back(cv.bow());
  for (char32_t c : cps) ids.push_back(cv.id(c));
  ids.push_back(cv.eow());
  return ids;
}

std::string decode_char_sequence(std::span<const CharId> ids, const CharVocab& cv) {
  std::vector<char32_t> cps;
  for (CharId id : ids) {
    if (id == cv.bow() || id == cv.eow()) continue;
    cps.push_back(cv.character(id));
  }
  return encode_utf8(cps);
}

std::vector<TokenId> mask_and_window(std::span<const std::string> tokens, std::string_view target,
                                     const EmbeddingTable& table, std::size_t window) {
  auto first = std::find(tokens.begin(), tokens.end(), target);
  if (first == tokens.end()) throw EpisodeError("sentence does not contain '" + std::string(target) + "'");
  const std::size_t p = static_cast<std::size_t>(first - tokens.begin());
  const std::size_t lo = p > window ? p - window : 0;
  const std::size_t hi = std::min(tokens.size(), p + window + 1);
  std::vector<TokenId> out;
  out.reserve(hi - lo);
  for (std::size_t i = lo; i < hi; ++i) {
    if (tokens[i] == target) {
      out.push_back(kMaskToken);
    } else if (auto row = table.find(tokens[i])) {
      out.push_back(static_cast<TokenId>(*row));
    } else {
      out.push_back(kUnkToken);
    }
  }
  return out;
}

namespace {

void attach_oracle(Episode& e, const EmbeddingTable& table) {
  auto row = table.find(e.target_word);
  if (!row) throw EpisodeError("no oracle embedding for '" + e.target_word + "'");
  const auto vals = table.row(*row);
  e.oracle.emplace(vals.begin(), vals.end());
}

}  // namespace

Episode episode_from_sentences(std::string_view word, std::span<const std::vector<std::string>> sentences,
                               const EmbeddingTable& table, const EpisodeConfig& config, bool with_oracle) {
  if (word.empty()) throw EpisodeError("empty target word");
  Episode e;
  e.target_word = std::string(word);
  e.target_row = table.find(word);
  for (const auto& s : sentences) {
    if (std::find(s.begin(), s.end(), word) == s.end()) continue;
    e.contexts.push_back(mask_and_window(s, word, table, config.window));
  }
  if (e.contexts.empty()) throw EpisodeError("'" + std::string(word) + "' occurs in none of the context sentences");
  e.char_seq = char_sequence(word, CharVocab::standard(), config.max_word_len);
  if (with_oracle) attach_oracle(e, table);
  return e;
}

EpisodeSampler::EpisodeSampler(const SentenceStore& store, const EmbeddingTable& table, EpisodeConfig config)
    : store_(&store), table_(&table), config_(config) {
  word_rows_.resize(store.num_words());
  for (WordId id = 0; id < store.num_words(); ++id) {
    auto row = table.find(store.word(id));
    word_rows_[id] = row ? static_cast<TokenId>(*row) : kUnkToken;
  }
}

std::vector<TokenId> EpisodeSampler::masked_window(const std::vector<WordId>& sentence, WordId target) const {
  auto first = std::find(sentence.begin(), sentence.end(), target);
  const std::size_t p = static_cast<std::size_t>(first - sentence.begin());
  const std::size_t w = config_.window;
  const std::size_t lo = p > w ? p - w : 0;
  const std::size_t hi = std::min(sentence.size(), p + w + 1);
  std::vector<TokenId> out;
  out.reserve(hi - lo);
  for (std::size_t i = lo; i < hi; ++i) {
    out.push_back(sentence[i] == target ? kMaskToken : word_rows_[sentence[i]]);
  }
  return out;
}

Episode EpisodeSampler::sample(std::string_view word, std::size_t k, std::mt19937_64& rng, bool with_oracle) const {
  if (k < 1) throw EpisodeError("K must be at least 1");
  auto id = store_->find(word);
  if (!id || store_->contexts_of(*id).empty()) {
    throw EpisodeError("'" + std::string(word) + "' has no context sentences");
  }
  const auto& pool = store_->contexts_of(*id);
  Episode e;
  e.target_word = std::string(word);
  e.target_row = table_->find(word);
  if (pool.size() >= k) {
    std::vector<SentenceId> order(pool.begin(), pool.end());
    for (std::size_t i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
      std::swap(order[i], order[pick(rng)]);
    }
    e.source_sentences.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (std::size_t i = 0; i < k; ++i) e.source_sentences.push_back(pool[pick(rng)]);
  }
  for (SentenceId sid : e.source_sentences) e.contexts.push_back(masked_window(store_->sentence(sid), *id));
  e.char_seq = char_sequence(word, CharVocab::standard(), config_.max_word_len);
  if (with_oracle) attach_oracle(e, *table_);
  return e;
}

Episode sample_episode(std::string_view word, std::size_t k, std::mt19937_64& rng, const SentenceStore& store,
                       const EmbeddingTable& table, const EpisodeConfig& config) {
  return EpisodeSampler(store, table, config).sample(word, k, rng, true);
}

EpisodeStream::EpisodeStream(const EpisodeSampler& sampler, std::vector<std::string> targets, ShotSchedule shots,
                             std::uint64_t seed)
    : sampler_(&sampler), targets_(std::move(targets)), shots_(shots), rng_(seed) {
  if (targets_.empty()) throw EpisodeError("episode stream needs at least one target word");
  if (shots_.min_shots < 1 || shots_.max_shots < shots_.min_shots) throw EpisodeError("invalid shot schedule");
}

Episode EpisodeStream::next() {
  std::uniform_int_distribution<std::size_t> pick_word(0, targets_.size() - 1);
  const std::string& word = targets_[pick_word(rng_)];
  std::size_t k = shots_.min_shots;
  if (shots_.max_shots > shots_.min_shots) {
    std::uniform_int_distribution<std::size_t> pick_k(shots_.min_shots, shots_.max_shots);
    k = pick_k(rng_);
  }
  return sampler_->sample(word, k, rng_, true);
}

std::vector<Episode> EpisodeStream::take(std::size_t n) {
  std::vector<Episode> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(next());
  return out;
}

}  // namespace oovforge
