#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "oovforge/corpus.hpp"

namespace oovforge {

// Model-input token ids: rows of the embedding table, plus two markers.
using TokenId = std::uint32_t;
inline constexpr TokenId kMaskToken = 0xFFFFFFFFu;
inline constexpr TokenId kUnkToken = 0xFFFFFFFEu;

using CharId = std::uint32_t;

// ASCII letters, digits, hyphen and apostrophe, plus word-boundary and
// unknown markers.
class CharVocab {
 public:
  static const CharVocab& standard();

  CharId bow() const { return 0; }
  CharId eow() const { return 1; }
  CharId unk() const { return 2; }
  std::size_t size() const { return 3 + alphabet_.size(); }
  CharId id(char32_t c) const;
  // Inverse of id() for ordinary characters; markers map to U+FFFD.
  char32_t character(CharId id) const;

 private:
  CharVocab();
  std::u32string alphabet_;
};

inline constexpr std::size_t kDefaultMaxWordLen = 20;
inline constexpr std::size_t kDefaultContextWindow = 12;

// [BOW] + per-character ids + [EOW], truncated to max_word_len characters.
std::vector<CharId> char_sequence(std::string_view word, const CharVocab& cv = CharVocab::standard(),
                                  std::size_t max_word_len = kDefaultMaxWordLen);
// Strips the markers and maps ids back to characters (unknowns as U+FFFD).
std::string decode_char_sequence(std::span<const CharId> ids, const CharVocab& cv = CharVocab::standard());

struct EpisodeConfig {
  std::size_t window = kDefaultContextWindow;  // tokens kept on each side of the first target
  std::size_t max_word_len = kDefaultMaxWordLen;
};

struct Episode {
  std::string target_word;
  std::optional<std::size_t> target_row;  // table row of the target, when present
  std::vector<std::vector<TokenId>> contexts;
  std::vector<CharId> char_seq;
  std::optional<std::vector<double>> oracle;
  std::vector<SentenceId> source_sentences;  // empty for episodes built from raw text

  std::size_t shots() const { return contexts.size(); }
};

// Masks every occurrence of target and keeps `window` tokens each side of the
// first one. Tokens absent from the table become kUnkToken.
std::vector<TokenId> mask_and_window(std::span<const std::string> tokens, std::string_view target,
                                     const EmbeddingTable& table, std::size_t window);

// Builds an episode from already tokenized sentences (inference and
// benchmarks). Sentences lacking the word are skipped; throws EpisodeError if
// none remain or if attach_oracle is set and the table lacks the word.
Episode episode_from_sentences(std::string_view word, std::span<const std::vector<std::string>> sentences,
                               const EmbeddingTable& table, const EpisodeConfig& config = {},
                               bool attach_oracle = false);

// Draws K-shot episodes for words of a corpus.
class EpisodeSampler {
 public:
  EpisodeSampler(const SentenceStore& store, const EmbeddingTable& table, EpisodeConfig config = {});

  // K sentences uniformly without replacement when the word has at least K,
  // with replacement otherwise.
  Episode sample(std::string_view word, std::size_t k, std::mt19937_64& rng, bool with_oracle = true) const;

  const SentenceStore& store() const { return *store_; }
  const EmbeddingTable& table() const { return *table_; }
  const EpisodeConfig& config() const { return config_; }

 private:
  std::vector<TokenId> masked_window(const std::vector<WordId>& sentence, WordId target) const;

  const SentenceStore* store_;
  const EmbeddingTable* table_;
  EpisodeConfig config_;
  std::vector<TokenId> word_rows_;  // store word id -> table row or kUnkToken
};

Episode sample_episode(std::string_view word, std::size_t k, std::mt19937_64& rng, const SentenceStore& store,
                       const EmbeddingTable& table, const EpisodeConfig& config = {});

// Shot count per episode: uniform over [min_shots, max_shots].
struct ShotSchedule {
  std::size_t min_shots = 2;
  std::size_t max_shots = 6;

  static ShotSchedule fixed(std::size_t k) { return {k, k}; }
  // Mixed-K training schedule {2..k_max} (or {k_max} when k_max < 2).
  static ShotSchedule mixed(std::size_t k_max) { return {std::min<std::size_t>(2, k_max), k_max}; }
};

// Infinite, seed-deterministic stream: target drawn uniformly from `targets`,
// fresh context sample per episode.
class EpisodeStream {
 public:
  EpisodeStream(const EpisodeSampler& sampler, std::vector<std::string> targets, ShotSchedule shots,
                std::uint64_t seed);

  Episode next();
  std::vector<Episode> take(std::size_t n);
  const std::vector<std::string>& targets() const { return targets_; }

 private:
  const EpisodeSampler* sampler_;
  std::vector<std::string> targets_;
  ShotSchedule shots_;
  std::mt19937_64 rng_;
};

}  // namespace oovforge
