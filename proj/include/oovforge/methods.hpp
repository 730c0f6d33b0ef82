#pragma once

// Uniform front over every OOV estimator: the target word plus raw context
// sentences in, a table-dimension vector out.

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "oovforge/baselines.hpp"
#include "oovforge/corpus.hpp"
#include "oovforge/episode.hpp"
#include "oovforge/evaluation.hpp"
#include "oovforge/hice.hpp"

namespace oovforge {

enum class Method { kHice, kAdditive, kAdditiveNoStop, kAlaCarte, kNgram };

Method parse_method(std::string_view name);  // throws UsageError
std::string method_name(Method m);

struct MethodResources {
  const EmbeddingTable* table = nullptr;
  const Stopwords* stopwords = &Stopwords::english();
  const HiceParams* hice = nullptr;
  const AlaCarte* alacarte = nullptr;
  const NgramTable* ngrams = nullptr;
  EpisodeConfig episode;
  TokenizerConfig tokenizer;
};

// Throws InferenceError when the word occurs in no sentence, when no context
// token contributes, or when the method lacks its model.
std::vector<double> infer_vector(Method method, std::string_view word, std::span<const std::string> sentences,
                                 const MethodResources& resources);

InferFn make_infer_fn(Method method, const MethodResources& resources);

}  // namespace oovforge
