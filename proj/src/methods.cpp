#include "oovforge/methods.hpp"

#include "oovforge/errors.hpp"

namespace oovforge {

Method parse_method(std::string_view name) {
  if (name == "hice") return Method::kHice;
  if (name == "additive") return Method::kAdditive;
  if (name == "additive-ns") return Method::kAdditiveNoStop;
  if (name == "alacarte") return Method::kAlaCarte;
  if (name == "ngram") return Method::kNgram;
  throw UsageError("unknown method '" + std::string(name) + "' (expected hice, additive, additive-ns, alacarte or ngram)");
}

std::string method_name(Method m) {
  switch (m) {
    case Method::kHice: return "hice";
    case Method::kAdditive: return "additive";
    case Method::kAdditiveNoStop: return "additive-ns";
    case Method::kAlaCarte: return "alacarte";
    case Method::kNgram: return "ngram";
  }
  return "?";
}

std::vector<double> infer_vector(Method method, std::string_view word, std::span<const std::string> sentences,
                                 const MethodResources& res) {
  if (!res.table) throw UsageError("inference needs an embedding table");
  if (method == Method::kNgram) {
    if (!res.ngrams) throw InferenceError("ngram method needs a fitted n-gram table");
    NgramSum s = res.ngrams->sum(word);
    if (s.empty()) throw InferenceError("no n-gram of '" + std::string(word) + "' is in the n-gram table");
    return s.vector;
  }
  std::vector<std::vector<std::string>> tokenized;
  tokenized.reserve(sentences.size());
  for (const auto& s : sentences) tokenized.push_back(tokenize(s, res.tokenizer));
  Episode e;
  try {
    e = episode_from_sentences(word, tokenized, *res.table, res.episode, false);
  } catch (const EpisodeError& err) {
    throw InferenceError(err.what());
  }
  switch (method) {
    case Method::kHice: {
      if (!res.hice) throw InferenceError("hice method needs a checkpoint");
      try {
        return predict_vector(e, *res.hice);
      } catch (const InputError& err) {
        throw InferenceError(err.what());
      }
    }
    case Method::kAdditive:
    case Method::kAdditiveNoStop:
    case Method::kAlaCarte: {
      const Stopwords* drop = method == Method::kAdditiveNoStop ? res.stopwords : nullptr;
      AdditiveResult r;
      if (method == Method::kAlaCarte) {
        if (!res.alacarte || !res.alacarte->fitted()) throw InferenceError("alacarte method needs a fitted model");
        r = res.alacarte->infer(e.contexts, *res.table, drop);
      } else {
        r = additive(e.contexts, *res.table, drop);
      }
      if (r.empty()) throw InferenceError("no context token of '" + std::string(word) + "' has an embedding");
      return r.vector;
    }
    case Method::kNgram: break;
  }
  throw UsageError("unhandled method");
}

InferFn make_infer_fn(Method method, const MethodResources& resources) {
  return [method, resources](const EvalItem& item) {
    return infer_vector(method, item.pseudo_word, item.contexts, resources);
  };
}

}  // namespace oovforge
