#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "oovforge/corpus.hpp"

namespace oovforge {

// Average ranks starting at 1; tied values share the mean of their span.
std::vector<double> average_ranks(std::span<const double> values);
double pearson(std::span<const double> a, std::span<const double> b);
// Pearson over average ranks. Throws EvaluationError for mismatched or short
// inputs and when either side is constant.
double spearman(std::span<const double> a, std::span<const double> b);

// ---- benchmark items ------------------------------------------------------------

struct EvalItem {
  std::string pseudo_word;
  unsigned shot = 0;
  std::vector<std::string> contexts;  // raw sentences
  std::vector<std::string> probes;
  std::vector<double> human;
};

// TSV line: pseudo_word, shot, contexts joined by "|||", probes comma-joined,
// ratings comma-joined. Malformed lines throw EvaluationError with the line
// number.
std::vector<EvalItem> parse_benchmark(std::istream& in);
std::vector<EvalItem> load_benchmark(const std::filesystem::path& path);
std::string format_benchmark_line(const EvalItem& item);
void write_benchmark(std::span<const EvalItem> items, std::ostream& out);
void save_benchmark(std::span<const EvalItem> items, const std::filesystem::path& path);

// Converts the original Chimera distribution (id, "@@"-separated sentences
// with the nonce written as "___", probes, ratings) into items. The nonce
// becomes "chimera_<id>"; text is lowercased.
std::vector<EvalItem> import_chimera(std::istream& in);

// ---- scoring --------------------------------------------------------------------

struct ItemResult {
  std::size_t index = 0;
  std::string pseudo_word;
  unsigned shot = 0;
  bool failed = false;
  std::string error;
  std::size_t probes_dropped = 0;
  std::vector<std::string> probes;  // probes actually scored
  std::vector<double> machine;
  std::vector<double> human;
  double rho = 0.0;
};

struct ShotSummary {
  unsigned shot = 0;
  std::size_t items = 0;   // scored items
  std::size_t failed = 0;
  double mean_rho = 0.0;   // mean of per-item rho
  double pooled_rho = 0.0; // one rho over all scored pairs of the shot
};

struct MethodReport {
  std::string method;
  std::vector<ItemResult> items;
  std::vector<ShotSummary> shots;  // ascending shot
  std::size_t probes_dropped = 0;
  double seconds = 0.0;

  double overall_mean_rho() const;
};

// Returns the inferred vector for an item, or throws.
using InferFn = std::function<std::vector<double>(const EvalItem& item)>;

MethodReport evaluate_method(std::string name, std::span<const EvalItem> items, const InferFn& infer,
                             const EmbeddingTable& table, std::size_t threads = 1);

std::vector<ShotSummary> summarize(std::span<const ItemResult> items);

struct EvalReport {
  std::vector<MethodReport> methods;

  // Method names by overall mean rho, best first (name breaks ties).
  std::vector<std::string> ranking() const;
  // method,shot,items,failed,probes_dropped,mean_rho,pooled_rho
  std::string to_csv() const;
  // method,index,pseudo_word,shot,status,rho,probes,machine,human
  std::string items_csv() const;
  std::string to_text() const;
  std::string to_svg() const;
};

// ---- neighbors ---------------------------------------------------------------------

struct Neighbor {
  std::string word;
  double cosine = 0.0;
};

// Top-k table words by cosine (descending, ties by word), excluding `exclude`.
std::vector<Neighbor> nearest_neighbors(std::span<const double> query, const EmbeddingTable& table, std::size_t top_k,
                                        std::string_view exclude = {});

double cosine_similarity(std::span<const double> u, std::span<const float> v);

}  // namespace oovforge
