#include "oovforge/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "oovforge/errors.hpp"
#include "stopwords_en.inc"

namespace oovforge {

namespace {

bool is_ascii_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool is_ascii_punct(unsigned char c) {
  return (c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) || (c >= 123 && c <= 126);
}

std::string_view trim_line(std::string_view line) {
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.remove_suffix(1);
  return line;
}

}  // namespace

std::optional<std::size_t> find_invalid_utf8(std::string_view text) {
  const auto* s = reinterpret_cast<const unsigned char*>(text.data());
  const std::size_t n = text.size();
  std::size_t i = 0;
  while (i < n) {
    const unsigned char c = s[i];
    std::size_t len = 0;
    char32_t cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return i;
    }
    if (i + len > n) return i;
    for (std::size_t k = 1; k < len; ++k) {
      if ((s[i + k] & 0xC0) != 0x80) return i;
      cp = (cp << 6) | (s[i + k] & 0x3F);
    }
    const bool overlong = (len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000);
    if (overlong || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return i;
    i += len;
  }
  return std::nullopt;
}

std::vector<char32_t> decode_utf8(std::string_view text) {
  std::vector<char32_t> out;
  const auto* s = reinterpret_cast<const unsigned char*>(text.data());
  std::size_t i = 0;
  while (i < text.size()) {
    const unsigned char c = s[i];
    if (c < 0x80) {
      out.push_back(c);
      ++i;
      continue;
    }
    std::size_t len = (c & 0xE0) == 0xC0 ? 2 : (c & 0xF0) == 0xE0 ? 3 : 4;
    char32_t cp = c & (len == 2 ? 0x1F : len == 3 ? 0x0F : 0x07);
    for (std::size_t k = 1; k < len && i + k < text.size(); ++k) cp = (cp << 6) | (s[i + k] & 0x3F);
    out.push_back(cp);
    i += len;
  }
  return out;
}

std::string encode_utf8(std::span<const char32_t> code_points) {
  std::string out;
  for (char32_t cp : code_points) {
    if (cp < 0x80) {
      out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
      out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
      out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
      out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
  }
  return out;
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<std::string> tokenize(std::string_view text, const TokenizerConfig& config) {
  if (auto bad = find_invalid_utf8(text)) {
    throw IngestionError("invalid UTF-8 at byte offset " + std::to_string(*bad));
  }
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_ascii_space(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_ascii_space(static_cast<unsigned char>(text[j]))) ++j;
    std::string_view raw = text.substr(i, j - i);
    i = j;
    if (config.strip_punctuation) {
      while (!raw.empty() && is_ascii_punct(static_cast<unsigned char>(raw.front()))) raw.remove_prefix(1);
      while (!raw.empty() && is_ascii_punct(static_cast<unsigned char>(raw.back()))) raw.remove_suffix(1);
    }
    if (raw.empty()) continue;
    std::string token(raw);
    if (config.lowercase) {
      for (char& c : token) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
      }
    }
    tokens.push_back(std::move(token));
  }
  return tokens;
}

// ---- stopwords -----------------------------------------------------------------

Stopwords::Stopwords(std::vector<std::string> words) {
  std::sort(words.begin(), words.end());
  std::string joined;
  for (const auto& w : words) {
    joined += w;
    joined += '\n';
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(joined)));
  version_ = std::to_string(words.size()) + ":" + buf;
  words_.insert(words.begin(), words.end());
}

const Stopwords& Stopwords::english() {
  static const Stopwords list(std::vector<std::string>(std::begin(kBundledStopwords), std::end(kBundledStopwords)));
  return list;
}

Stopwords Stopwords::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open stopword file " + path.string());
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    auto w = trim_line(line);
    while (!w.empty() && is_ascii_space(static_cast<unsigned char>(w.back()))) w.remove_suffix(1);
    while (!w.empty() && is_ascii_space(static_cast<unsigned char>(w.front()))) w.remove_prefix(1);
    if (!w.empty()) words.emplace_back(w);
  }
  return Stopwords(std::move(words));
}

bool Stopwords::contains(std::string_view word) const { return words_.count(std::string(word)) > 0; }

// ---- sentence store ------------------------------------------------------------

void SentenceStore::add_sentence(std::span<const std::string> tokens) {
  if (tokens.empty()) return;
  const auto sid = static_cast<SentenceId>(sentences_.size());
  std::vector<WordId> ids;
  ids.reserve(tokens.size());
  for (const auto& tok : tokens) {
    auto [it, inserted] = ids_.try_emplace(tok, static_cast<WordId>(words_.size()));
    if (inserted) {
      words_.push_back(tok);
      index_.emplace_back();
    }
    const WordId id = it->second;
    ids.push_back(id);
    auto& postings = index_[id];
    if (postings.empty() || postings.back() != sid) postings.push_back(sid);
  }
  sentences_.push_back(std::move(ids));
}

SentenceStore SentenceStore::from_lines(std::span<const std::string> lines, const TokenizerConfig& config) {
  SentenceStore store;
  std::size_t line_no = 0;
  for (const auto& line : lines) {
    ++line_no;
    std::vector<std::string> tokens;
    try {
      tokens = tokenize(trim_line(line), config);
    } catch (const IngestionError& e) {
      throw ParseError(e.what(), line_no);
    }
    store.add_sentence(tokens);
  }
  return store;
}

SentenceStore SentenceStore::from_stream(std::istream& in, const TokenizerConfig& config) {
  SentenceStore store;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::vector<std::string> tokens;
    try {
      tokens = tokenize(trim_line(line), config);
    } catch (const IngestionError& e) {
      throw ParseError(e.what(), line_no);
    }
    store.add_sentence(tokens);
  }
  return store;
}

SentenceStore SentenceStore::from_file(const std::filesystem::path& path, const TokenizerConfig& config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open corpus " + path.string());
  return from_stream(in, config);
}

std::optional<WordId> SentenceStore::find(std::string_view word) const {
  auto it = ids_.find(std::string(word));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

const std::vector<SentenceId>& contexts_of(std::string_view word, const SentenceStore& store) {
  auto id = store.find(word);
  if (!id) throw LookupError("unknown word '" + std::string(word) + "'");
  return store.contexts_of(*id);
}

// ---- vocabulary ------------------------------------------------------------------

std::optional<WordId> Vocabulary::find(std::string_view word) const {
  auto it = ids_.find(std::string(word));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

std::vector<WordId> Vocabulary::eligible_targets() const {
  std::vector<WordId> out;
  for (WordId id = 0; id < words_.size(); ++id) {
    if (is_target_eligible(id)) out.push_back(id);
  }
  return out;
}

Vocabulary build_vocab(const SentenceStore& store, std::size_t min_count, const Stopwords& stopwords) {
  if (min_count < 1) throw UsageError("build_vocab: min_count must be >= 1");
  Vocabulary vocab;
  vocab.min_count_ = min_count;
  vocab.words_ = store.words();
  vocab.counts_.assign(vocab.words_.size(), 0);
  std::size_t tokens = 0;
  for (const auto& s : store.sentences()) {
    for (WordId id : s) ++vocab.counts_[id];
    tokens += s.size();
  }
  if (tokens == 0) throw IngestionError("empty corpus");
  vocab.stop_.resize(vocab.words_.size());
  for (WordId id = 0; id < vocab.words_.size(); ++id) {
    vocab.ids_.emplace(vocab.words_[id], id);
    vocab.stop_[id] = stopwords.contains(vocab.words_[id]);
  }
  return vocab;
}

TargetSplit split_targets(const Vocabulary& vocab, unsigned validation_percent) {
  TargetSplit split;
  for (WordId id : vocab.eligible_targets()) {
    const auto& w = vocab.word(id);
    if (fnv1a(w) % 100 < validation_percent) {
      split.validation.push_back(w);
    } else {
      split.train.push_back(w);
    }
  }
  return split;
}

// ---- embedding table -------------------------------------------------------------

EmbeddingTable::EmbeddingTable(std::size_t dim, std::string source) : dim_(dim), source_(std::move(source)) {}

void EmbeddingTable::add(std::string word, std::span<const float> vector) {
  if (vector.size() != dim_) {
    throw DimensionError("embedding for '" + word + "' has " + std::to_string(vector.size()) + " values, expected " +
                         std::to_string(dim_));
  }
  for (float v : vector) {
    if (!std::isfinite(v)) throw NumericError("embedding for '" + word + "' has a non-finite entry");
  }
  if (rows_.count(word)) throw UsageError("duplicate word '" + word + "'");
  rows_.emplace(word, words_.size());
  words_.push_back(std::move(word));
  values_.insert(values_.end(), vector.begin(), vector.end());
}

std::optional<std::size_t> EmbeddingTable::find(std::string_view word) const {
  auto it = rows_.find(std::string(word));
  if (it == rows_.end()) return std::nullopt;
  return it->second;
}

std::span<const float> EmbeddingTable::row(std::size_t r) const {
  if (r >= words_.size()) throw LookupError("embedding row " + std::to_string(r) + " out of range");
  return std::span<const float>(values_).subspan(r * dim_, dim_);
}

std::optional<std::span<const float>> EmbeddingTable::lookup(std::string_view word) const {
  auto r = find(word);
  if (!r) return std::nullopt;
  return row(*r);
}

std::uint64_t EmbeddingTable::fingerprint() const {
  std::string bytes = std::to_string(dim_) + ":" + std::to_string(words_.size()) + ":";
  std::uint64_t h = fnv1a(bytes);
  for (std::size_t r = 0; r < words_.size(); ++r) {
    h = (h ^ fnv1a(words_[r])) * 1099511628211ULL;
    const auto vals = row(r);
    h = (h ^ fnv1a(std::string_view(reinterpret_cast<const char*>(vals.data()), vals.size_bytes()))) * 1099511628211ULL;
  }
  return h;
}

std::pair<std::string, std::vector<float>> parse_embedding_row(std::string_view line, std::size_t dim,
                                                               std::size_t line_number) {
  line = trim_line(line);
  std::size_t pos = 0;
  auto next_field = [&]() -> std::string_view {
    while (pos < line.size() && line[pos] == ' ') ++pos;
    std::size_t end = pos;
    while (end < line.size() && line[end] != ' ') ++end;
    std::string_view field = line.substr(pos, end - pos);
    pos = end;
    return field;
  };
  std::string_view word = next_field();
  if (word.empty()) throw ParseError("missing word", line_number);
  if (find_invalid_utf8(word)) throw ParseError("word is not valid UTF-8", line_number);
  std::vector<float> values;
  for (std::string_view field = next_field(); !field.empty(); field = next_field()) {
    float v = 0.0f;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc() || ptr != field.data() + field.size()) {
      throw ParseError("bad float '" + std::string(field) + "'", line_number);
    }
    if (!std::isfinite(v)) throw ParseError("non-finite value for '" + std::string(word) + "'", line_number);
    values.push_back(v);
  }
  if (dim != 0 && values.size() != dim) {
    throw ParseError("expected " + std::to_string(dim) + " values for '" + std::string(word) + "', found " +
                         std::to_string(values.size()),
                     line_number);
  }
  return {std::string(word), std::move(values)};
}

EmbeddingTable parse_embeddings(std::istream& in, std::string source) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing header", 1);
  std::size_t count = 0, dim = 0;
  {
    std::istringstream header{std::string(trim_line(line))};
    std::string extra;
    if (!(header >> count >> dim) || (header >> extra) || dim == 0) {
      throw ParseError("header must be '<vocab_size> <dim>'", 1);
    }
  }
  EmbeddingTable table(dim, std::move(source));
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim_line(line).empty()) continue;
    if (table.size() == count) throw ParseError("more rows than the header's " + std::to_string(count), line_no);
    auto [word, values] = parse_embedding_row(line, dim, line_no);
    if (table.find(word)) throw ParseError("duplicate word '" + word + "'", line_no);
    table.add(std::move(word), values);
  }
  if (table.size() != count) {
    throw ParseError("header promises " + std::to_string(count) + " rows, found " + std::to_string(table.size()),
                     line_no);
  }
  return table;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open embedding file " + path.string());
  return parse_embeddings(in, path.string());
}

namespace {

template <typename T>
std::string format_row_impl(std::string_view word, std::span<const T> values) {
  std::string out(word);
  char buf[64];
  for (T v : values) {
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    out.push_back(' ');
    out.append(buf, ptr);
  }
  return out;
}

}  // namespace

std::string format_embedding_row(std::string_view word, std::span<const float> values) {
  return format_row_impl(word, values);
}

std::string format_embedding_row(std::string_view word, std::span<const double> values) {
  return format_row_impl(word, values);
}

void write_embeddings(const EmbeddingTable& table, std::ostream& out) {
  out << table.size() << ' ' << table.dim() << '\n';
  for (std::size_t r = 0; r < table.size(); ++r) out << format_embedding_row(table.word(r), table.row(r)) << '\n';
}

void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot write embedding file " + path.string());
  write_embeddings(table, out);
}

}  // namespace oovforge
