#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace oovforge {

using WordId = std::uint32_t;
using SentenceId = std::uint32_t;

struct TokenizerConfig {
  bool lowercase = true;
  bool strip_punctuation = true;
};

// Lowercase (ASCII), whitespace split, strip leading/trailing ASCII
// punctuation, drop empty tokens. Throws IngestionError on invalid UTF-8.
std::vector<std::string> tokenize(std::string_view text, const TokenizerConfig& config = {});

// Returns the byte offset of the first invalid UTF-8 sequence, if any.
std::optional<std::size_t> find_invalid_utf8(std::string_view text);

// Code points of a valid UTF-8 string.
std::vector<char32_t> decode_utf8(std::string_view text);
std::string encode_utf8(std::span<const char32_t> code_points);

// 64-bit FNV-1a; stable across platforms and runs.
std::uint64_t fnv1a(std::string_view bytes);

// ---- stopwords -------------------------------------------------------------

class Stopwords {
 public:
  // The bundled English list.
  static const Stopwords& english();
  static Stopwords load(const std::filesystem::path& path);
  explicit Stopwords(std::vector<std::string> words);

  bool contains(std::string_view word) const;
  std::size_t size() const { return words_.size(); }
  const std::string& version() const { return version_; }

 private:
  std::unordered_set<std::string> words_;
  std::string version_;
};

// ---- sentence store ---------------------------------------------------------

// Tokenized corpus with word interning and an inverted index. Word ids are
// assigned in first-occurrence order and are shared with Vocabulary.
class SentenceStore {
 public:
  SentenceStore() = default;

  static SentenceStore from_lines(std::span<const std::string> lines, const TokenizerConfig& config = {});
  static SentenceStore from_stream(std::istream& in, const TokenizerConfig& config = {});
  static SentenceStore from_file(const std::filesystem::path& path, const TokenizerConfig& config = {});

  // Tokens already normalized; empty sentences are skipped.
  void add_sentence(std::span<const std::string> tokens);

  std::size_t num_sentences() const { return sentences_.size(); }
  std::size_t num_words() const { return words_.size(); }
  const std::vector<WordId>& sentence(SentenceId id) const { return sentences_.at(id); }
  const std::vector<std::vector<WordId>>& sentences() const { return sentences_; }
  const std::string& word(WordId id) const { return words_.at(id); }
  const std::vector<std::string>& words() const { return words_; }
  std::optional<WordId> find(std::string_view word) const;

  // Sentences containing the word, corpus order, each listed once.
  const std::vector<SentenceId>& contexts_of(WordId id) const { return index_.at(id); }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, WordId> ids_;
  std::vector<std::vector<WordId>> sentences_;
  std::vector<std::vector<SentenceId>> index_;
};

// Lookup by string; throws LookupError for unknown words.
const std::vector<SentenceId>& contexts_of(std::string_view word, const SentenceStore& store);

// ---- vocabulary --------------------------------------------------------------

class Vocabulary {
 public:
  std::size_t size() const { return words_.size(); }
  const std::string& word(WordId id) const { return words_.at(id); }
  std::optional<WordId> find(std::string_view word) const;
  std::size_t count(WordId id) const { return counts_.at(id); }
  bool is_stopword(WordId id) const { return stop_.at(id); }
  // count > min_count
  bool is_target_eligible(WordId id) const { return counts_.at(id) > min_count_; }
  std::size_t min_count() const { return min_count_; }
  std::vector<WordId> eligible_targets() const;

 private:
  friend Vocabulary build_vocab(const SentenceStore&, std::size_t, const Stopwords&);
  std::vector<std::string> words_;
  std::unordered_map<std::string, WordId> ids_;
  std::vector<std::size_t> counts_;
  std::vector<bool> stop_;
  std::size_t min_count_ = 0;
};

inline constexpr std::size_t kDefaultMinCount = 16;

// Throws IngestionError("empty corpus") when the store has no tokens.
Vocabulary build_vocab(const SentenceStore& store, std::size_t min_count = kDefaultMinCount,
                       const Stopwords& stopwords = Stopwords::english());

// Deterministic train/validation split of target-eligible words, keyed on a
// hash of the word string: a word goes to validation when hash % 100 < percent.
struct TargetSplit {
  std::vector<std::string> train;
  std::vector<std::string> validation;
};
TargetSplit split_targets(const Vocabulary& vocab, unsigned validation_percent = 5);

// ---- embedding table -----------------------------------------------------------

class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::size_t dim, std::string source = {});

  // Appends a row; duplicates and wrong lengths throw.
  void add(std::string word, std::span<const float> vector);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return words_.size(); }
  const std::string& source() const { return source_; }
  const std::string& word(std::size_t row) const { return words_.at(row); }
  const std::vector<std::string>& words() const { return words_; }
  std::optional<std::size_t> find(std::string_view word) const;
  std::span<const float> row(std::size_t r) const;
  // Absent words yield nullopt, never a zero vector.
  std::optional<std::span<const float>> lookup(std::string_view word) const;
  std::span<const float> flat() const { return values_; }

  // Content fingerprint over words and float bits.
  std::uint64_t fingerprint() const;

 private:
  std::size_t dim_ = 0;
  std::string source_;
  std::vector<std::string> words_;
  std::vector<float> values_;
  std::unordered_map<std::string, std::size_t> rows_;
};

// Text format: "<vocab_size> <dim>" header, then "<word> <f1> ... <fdim>".
EmbeddingTable load_embeddings(const std::filesystem::path& path);
EmbeddingTable parse_embeddings(std::istream& in, std::string source = {});
void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& path);
void write_embeddings(const EmbeddingTable& table, std::ostream& out);

// One row in the table's text format, floats printed round-trip exact.
std::string format_embedding_row(std::string_view word, std::span<const float> values);
std::string format_embedding_row(std::string_view word, std::span<const double> values);
// Parses a single row; dim 0 accepts any length. Throws ParseError(line).
std::pair<std::string, std::vector<float>> parse_embedding_row(std::string_view line, std::size_t dim,
                                                               std::size_t line_number);

}  // namespace oovforge
