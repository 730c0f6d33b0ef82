#include "oovforge/adaptation.hpp"

#include <cmath>

#include "oovforge/errors.hpp"
#include "oovforge/trainer.hpp"

namespace oovforge {

void AdaptConfig::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw UsageError("alpha and beta must be non-negative");
  if (batch_episodes < 1) throw UsageError("adaptation batch must hold at least one episode");
  if (k_max < 1) throw UsageError("k_max must be at least 1");
}

ConfigEntries AdaptConfig::to_entries() const {
  return {
      {"adapt.alpha", format_double(alpha)},
      {"adapt.beta", format_double(beta)},
      {"adapt.first_order", first_order ? "1" : "0"},
      {"adapt.steps", std::to_string(steps)},
      {"adapt.target_min_count", std::to_string(target_min_count)},
      {"adapt.batch_episodes", std::to_string(batch_episodes)},
      {"adapt.k_max", std::to_string(k_max)},
      {"adapt.seed", std::to_string(seed)},
  };
}

namespace {

std::vector<Tensor> fresh_leaves(std::span<const Tensor> values) {
  std::vector<Tensor> out;
  out.reserve(values.size());
  for (const auto& v : values) out.push_back(Tensor::param(v.shape(), v.to_vector()));
  return out;
}

std::vector<Tensor> descend(std::span<const Tensor> theta, std::span<const Tensor> grads, double lr) {
  std::vector<Tensor> out;
  out.reserve(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const auto w = theta[i].data();
    const auto g = grads[i].data();
    std::vector<double> v(w.size());
    for (std::size_t j = 0; j < v.size(); ++j) v[j] = w[j] - lr * g[j];
    out.push_back(Tensor::param(theta[i].shape(), std::move(v)));
  }
  return out;
}

}  // namespace

std::vector<Tensor> sgd_step(std::span<const Tensor> theta, const LossFn& loss, double lr) {
  auto leaves = fresh_leaves(theta);
  const auto grads = gradients(loss(leaves), leaves);
  return descend(leaves, grads, lr);
}

std::vector<Tensor> maml_step(std::span<const Tensor> theta, const LossFn& loss_source, const LossFn& loss_target,
                              double alpha, double beta, bool first_order) {
  auto leaves = fresh_leaves(theta);
  if (first_order) {
    auto inner = leaves;
    if (alpha != 0.0) inner = descend(leaves, gradients(loss_source(leaves), leaves), alpha);
    const auto outer = gradients(loss_target(inner), inner);
    return descend(leaves, outer, beta);
  }
  const auto g_source = gradients(loss_source(leaves), leaves, /*create_graph=*/true);
  std::vector<Tensor> inner;
  inner.reserve(leaves.size());
  for (std::size_t i = 0; i < leaves.size(); ++i) inner.push_back(sub(leaves[i], scale(g_source[i], alpha)));
  const auto outer = gradients(loss_target(inner), leaves);
  return descend(leaves, outer, beta);
}

HiceParams maml_step(const HiceParams& params, std::span<const Episode> source_batch,
                     std::span<const Episode> target_batch, const AdaptConfig& config) {
  if (source_batch.empty() || target_batch.empty()) throw AdaptationError("maml_step needs non-empty batches");
  auto loss_on = [&params](std::span<const Episode> batch) {
    return [&params, batch](std::span<const Tensor> theta) { return episode_loss(batch, params.with_learnable(theta)); };
  };
  const auto theta = params.learnable();
  try {
    return params.with_learnable(
        maml_step(theta, loss_on(source_batch), loss_on(target_batch), config.alpha, config.beta, config.first_order));
  } catch (const NumericError& e) {
    throw AdaptationError(std::string("adaptation step failed: ") + e.what());
  }
}

HiceParams finetune_step(const HiceParams& params, std::span<const Episode> target_batch, double lr) {
  if (target_batch.empty()) throw AdaptationError("finetune_step needs a non-empty batch");
  const auto theta = params.learnable();
  try {
    return params.with_learnable(sgd_step(
        theta, [&](std::span<const Tensor> t) { return episode_loss(target_batch, params.with_learnable(t)); }, lr));
  } catch (const NumericError& e) {
    throw AdaptationError(std::string("fine-tuning step failed: ") + e.what());
  }
}

std::vector<std::string> adaptation_targets(const SentenceStore& target_corpus, const EmbeddingTable& table,
                                            std::size_t min_count) {
  std::vector<std::size_t> counts(target_corpus.num_words(), 0);
  for (const auto& s : target_corpus.sentences()) {
    for (WordId w : s) ++counts[w];
  }
  std::vector<std::string> out;
  for (WordId w = 0; w < target_corpus.num_words(); ++w) {
    if (counts[w] > min_count && table.find(target_corpus.word(w))) out.push_back(target_corpus.word(w));
  }
  return out;
}

namespace {

constexpr std::uint64_t kTargetStreamSalt = 0x6a09e667f3bcc909ull;

std::vector<std::string> checked_words(std::span<const std::string> words, const char* what) {
  if (words.empty()) throw AdaptationError(std::string("no eligible ") + what + " words for adaptation");
  return {words.begin(), words.end()};
}

}  // namespace

EpisodeStream pseudo_episode_stream(const EpisodeSampler& target, std::span<const std::string> target_words,
                                    const AdaptConfig& config) {
  return EpisodeStream(target, checked_words(target_words, "target-corpus"), ShotSchedule::mixed(config.k_max),
                       config.seed ^ kTargetStreamSalt);
}

HiceParams adapt(const HiceParams& params, const EpisodeSampler& source, std::span<const std::string> source_words,
                 const EpisodeSampler& target, std::span<const std::string> target_words, const AdaptConfig& config) {
  config.validate();
  auto target_list = checked_words(target_words, "target-corpus");
  if (config.steps == 0) return params.clone();
  auto source_list = checked_words(source_words, "source-corpus");
  const auto shots = ShotSchedule::mixed(config.k_max);
  EpisodeStream source_stream(source, std::move(source_list), shots, config.seed);
  auto target_stream = pseudo_episode_stream(target, target_list, config);
  HiceParams current = params.clone();
  for (std::size_t step = 0; step < config.steps; ++step) {
    const auto batch_t = source_stream.take(config.batch_episodes);
    const auto batch_n = target_stream.take(config.batch_episodes);
    current = maml_step(current, batch_t, batch_n, config);
  }
  return current;
}

HiceParams finetune(const HiceParams& params, const EpisodeSampler& target, std::span<const std::string> target_words,
                    const AdaptConfig& config) {
  config.validate();
  auto target_list = checked_words(target_words, "target-corpus");
  if (config.steps == 0) return params.clone();
  auto stream = pseudo_episode_stream(target, target_list, config);
  std::vector<Episode> pool;
  if (config.finetune_pool > 0) pool = stream.take(config.finetune_pool);
  std::size_t cursor = 0;
  HiceParams current = params.clone();
  for (std::size_t step = 0; step < config.steps; ++step) {
    std::vector<Episode> batch;
    if (pool.empty()) {
      batch = stream.take(config.batch_episodes);
    } else {
      for (std::size_t i = 0; i < std::min(config.batch_episodes, pool.size()); ++i) {
        batch.push_back(pool[cursor]);
        cursor = (cursor + 1) % pool.size();
      }
    }
    current = finetune_step(current, batch, config.beta);
  }
  return current;
}

}  // namespace oovforge
