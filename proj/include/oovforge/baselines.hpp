#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "oovforge/container.hpp"
#include "oovforge/corpus.hpp"
#include "oovforge/episode.hpp"

namespace oovforge {

// ---- additive ---------------------------------------------------------------------

struct AdditiveResult {
  std::vector<double> vector;  // zeros when nothing contributed
  std::size_t contributing_contexts = 0;
  std::size_t contributing_tokens = 0;

  bool empty() const { return contributing_contexts == 0; }
};

// Mean over contexts of the per-context mean of in-table, non-MASK tokens
// (also skipping stopwords when given). Contexts with no contributor are left
// out of the outer mean.
AdditiveResult additive(std::span<const std::vector<TokenId>> contexts, const EmbeddingTable& table,
                        const Stopwords* drop = nullptr);

// ---- a la carte ---------------------------------------------------------------------

inline constexpr std::string_view kAlaCarteMagic = "ALC1";

class AlaCarte {
 public:
  AlaCarte() = default;
  static AlaCarte identity(std::size_t dim);
  static AlaCarte from_matrix(std::size_t dim, std::vector<double> row_major);

  // A = (sum o a^T)(sum a a^T + lambda I)^-1 with lambda = ridge * trace / d.
  // ridge = 0 on a rank-deficient sample throws NumericError.
  static AlaCarte fit(std::span<const std::vector<double>> additive_vectors,
                      std::span<const std::vector<double>> oracles, double ridge = 1e-3);

  bool fitted() const { return dim_ > 0; }
  std::size_t dim() const { return dim_; }
  const std::vector<double>& matrix() const { return a_; }
  std::size_t samples() const { return samples_; }
  double lambda() const { return lambda_; }
  double residual_norm() const { return residual_; }
  // Fewer samples than dimensions.
  bool rank_warning() const { return samples_ > 0 && samples_ < dim_; }

  std::vector<double> apply(std::span<const double> v) const;
  AdditiveResult infer(std::span<const std::vector<TokenId>> contexts, const EmbeddingTable& table,
                       const Stopwords* drop = nullptr) const;

  Container to_container() const;
  static AlaCarte from_container(const Container& c);
  // provenance entries are stored alongside the model config and ignored on load.
  void save(const std::filesystem::path& path, const ConfigEntries& provenance = {}) const;
  static AlaCarte load(const std::filesystem::path& path);

 private:
  std::size_t dim_ = 0;
  std::vector<double> a_;
  std::size_t samples_ = 0;
  double lambda_ = 0.0;
  double residual_ = 0.0;
};

// Regression sample from corpus words: the additive vector of up to
// max_contexts sampled contexts against the word's table embedding. Words
// without contributing context tokens are skipped.
struct RegressionSample {
  std::vector<std::string> words;
  std::vector<std::vector<double>> additive_vectors;
  std::vector<std::vector<double>> oracles;
};
RegressionSample alacarte_sample(const EpisodeSampler& sampler, std::span<const std::string> words,
                                 std::size_t max_contexts, std::uint64_t seed, const Stopwords* drop = nullptr);

// ---- character n-grams ------------------------------------------------------------

inline constexpr std::string_view kNgramMagic = "NGR1";

// All n-grams (min_n..max_n code points) of "<word>", in order, duplicates kept.
std::vector<std::string> char_ngrams(std::string_view word, std::size_t min_n = 3, std::size_t max_n = 6);

struct NgramSum {
  std::vector<double> vector;
  std::size_t covered = 0;  // n-gram occurrences found in the table

  bool empty() const { return covered == 0; }
};

class NgramTable {
 public:
  NgramTable() = default;
  explicit NgramTable(std::size_t dim, std::size_t min_n = 3, std::size_t max_n = 6);

  // Ridge least squares: n-gram vectors whose sums best reproduce the table
  // rows of `words` (all table words when empty).
  static NgramTable fit(const EmbeddingTable& table, std::span<const std::string> words = {}, double ridge = 0.1,
                        std::size_t min_n = 3, std::size_t max_n = 6);

  void set(std::string ngram, std::span<const double> vector);
  const std::vector<float>* find(std::string_view ngram) const;
  std::size_t size() const { return index_.size(); }
  std::size_t dim() const { return dim_; }
  std::size_t min_n() const { return min_n_; }
  std::size_t max_n() const { return max_n_; }

  NgramSum sum(std::string_view word) const;

  Container to_container() const;
  static NgramTable from_container(const Container& c);
  // provenance entries are stored alongside the model config and ignored on load.
  void save(const std::filesystem::path& path, const ConfigEntries& provenance = {}) const;
  static NgramTable load(const std::filesystem::path& path);

 private:
  std::size_t dim_ = 0;
  std::size_t min_n_ = 3;
  std::size_t max_n_ = 6;
  std::vector<std::string> ngrams_;
  std::vector<std::vector<float>> vectors_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline NgramSum ngram_sum(std::string_view word, const NgramTable& ngrams) { return ngrams.sum(word); }

}  // namespace oovforge
