#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "oovforge/container.hpp"
#include "oovforge/episode.hpp"
#include "oovforge/hice.hpp"

namespace oovforge {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(std::span<const Tensor> params, AdamConfig config);
  // Updates the leaves in place; grads align with the constructor's params.
  void step(std::span<Tensor> params, std::span<const std::vector<double>> grads);
  std::size_t steps_taken() const { return t_; }

 private:
  AdamConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

// Rescales grads in place so their joint L2 norm is at most max_norm; returns
// the norm before clipping.
double clip_global_norm(std::span<std::vector<double>> grads, double max_norm);

struct TrainConfig {
  std::size_t steps = 2000;
  std::size_t batch_episodes = 32;
  AdamConfig adam;
  double clip_norm = 5.0;
  std::size_t k_max = 6;
  std::uint64_t seed = 1;
  std::size_t validation_every = 100;
  std::size_t validation_episodes = 128;
  std::size_t patience = 10;
  std::size_t threads = 1;
  std::filesystem::path checkpoint_path;  // best-validation checkpoint; empty to skip

  void validate() const;
  ConfigEntries to_entries() const;
};

struct TrainPoint {
  std::size_t step = 0;
  double train_cosine = 0.0;       // mean over episodes since the previous point
  double validation_cosine = 0.0;
};

struct TrainReport {
  std::vector<TrainPoint> points;
  std::size_t best_step = 0;
  double best_validation = 0.0;
  std::size_t steps_run = 0;
  bool stopped_early = false;
  bool validation_on_train_words = false;  // split had no validation words
  double wall_seconds = 0.0;

  // "step,train_cos,val_cos" header plus one line per point.
  std::string to_csv() const;
};

struct TrainResult {
  HiceParams params;  // best-validation parameters
  TrainReport report;
};

// -mean cosine(predict, oracle). Throws NumericError naming the word when an
// oracle has zero norm.
Tensor episode_loss(std::span<const Episode> batch, const HiceParams& params);

// Loss value and gradients w.r.t. params.learnable(), split across threads.
// Partial gradients are reduced in a fixed order, so results depend only on
// the thread count.
struct LossAndGrad {
  double loss = 0.0;
  std::vector<std::vector<double>> grads;
};
LossAndGrad loss_and_gradients(std::span<const Episode> batch, const HiceParams& params, std::size_t threads = 1);

double mean_cosine(std::span<const Episode> episodes, const HiceParams& params, std::size_t threads = 1);

using StepCallback = std::function<void(std::size_t step, double batch_mean_cosine)>;

// Episodic training on split.train targets; validation on a fixed probe set
// drawn from split.validation.
TrainResult train(const TrainConfig& config, HiceParams init, const EpisodeSampler& sampler, const TargetSplit& split,
                  const ConfigEntries& provenance = {}, const StepCallback& on_step = {});

}  // namespace oovforge
