#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "oovforge/container.hpp"
#include "oovforge/episode.hpp"
#include "oovforge/hice.hpp"

namespace oovforge {

struct AdaptConfig {
  double alpha = 1e-3;  // inner (source-corpus) step
  double beta = 1e-4;   // outer (target-corpus) step
  bool first_order = true;
  std::size_t steps = 500;
  std::size_t target_min_count = 4;
  std::size_t batch_episodes = 16;
  std::size_t k_max = 6;
  std::uint64_t seed = 1;
  // Fine-tuning only: cycle through this many fixed pseudo-episodes instead of
  // drawing fresh ones (0 = fresh every step).
  std::size_t finetune_pool = 0;

  void validate() const;
  ConfigEntries to_entries() const;
};

using LossFn = std::function<Tensor(std::span<const Tensor> params)>;

// One two-stage update over a generic parameter list:
//   theta* = theta - alpha * grad L_T(theta)
//   theta' = theta - beta  * grad_theta L_N(theta*)
// first_order evaluates grad L_N at a detached theta*; otherwise the outer
// gradient is taken through the inner update. Returns fresh leaves.
std::vector<Tensor> maml_step(std::span<const Tensor> theta, const LossFn& loss_source, const LossFn& loss_target,
                              double alpha, double beta, bool first_order);

// Plain gradient step theta - lr * grad L(theta).
std::vector<Tensor> sgd_step(std::span<const Tensor> theta, const LossFn& loss, double lr);

HiceParams maml_step(const HiceParams& params, std::span<const Episode> source_batch,
                     std::span<const Episode> target_batch, const AdaptConfig& config);
HiceParams finetune_step(const HiceParams& params, std::span<const Episode> target_batch, double lr);

// Words of the target corpus that also have a table row and occur more than
// min_count times, in first-occurrence order.
std::vector<std::string> adaptation_targets(const SentenceStore& target_corpus, const EmbeddingTable& table,
                                            std::size_t min_count);

// The pseudo-episode stream adapt() and finetune() draw from; a fine-tuning
// pool is its first finetune_pool episodes.
EpisodeStream pseudo_episode_stream(const EpisodeSampler& target, std::span<const std::string> target_words,
                                    const AdaptConfig& config);

// Runs config.steps two-stage updates. Source episodes come from the training
// corpus, pseudo-episodes from target_words of the new corpus.
HiceParams adapt(const HiceParams& params, const EpisodeSampler& source, std::span<const std::string> source_words,
                 const EpisodeSampler& target, std::span<const std::string> target_words, const AdaptConfig& config);

// SGD with learning rate beta on pseudo-episodes only. The episode stream is
// seeded like adapt()'s target stream, so alpha = 0 adaptation and fine-tuning
// coincide step for step.
HiceParams finetune(const HiceParams& params, const EpisodeSampler& target, std::span<const std::string> target_words,
                    const AdaptConfig& config);

}  // namespace oovforge
