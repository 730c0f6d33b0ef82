#include "oovforge/trainer.hpp"

#include <chrono>
#include <cmath>
#include <thread>
#include <unordered_set>

#include "oovforge/checkpoint.hpp"
#include "oovforge/errors.hpp"

namespace oovforge {

Adam::Adam(std::span<const Tensor> params, AdamConfig config) : config_(config) {
  for (const auto& p : params) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::step(std::span<Tensor> params, std::span<const std::vector<double>> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) throw UsageError("Adam: parameter count changed");
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].mutable_data();
    const auto& g = grads[i];
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g[j];
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g[j] * g[j];
      w[j] -= config_.learning_rate * (m[j] / c1) / (std::sqrt(v[j] / c2) + config_.eps);
    }
  }
}

double clip_global_norm(std::span<std::vector<double>> grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) {
    for (double x : g) sq += x * x;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& g : grads) {
      for (double& x : g) x *= f;
    }
  }
  return norm;
}

void TrainConfig::validate() const {
  if (!(adam.learning_rate > 0.0)) throw UsageError("learning rate must be positive");
  if (batch_episodes < 1) throw UsageError("batch_episodes must be at least 1");
  if (patience < 1) throw UsageError("patience must be at least 1");
  if (validation_every < 1) throw UsageError("validation_every must be at least 1");
  if (validation_episodes < 1) throw UsageError("validation_episodes must be at least 1");
  if (k_max < 1) throw UsageError("k_max must be at least 1");
  if (threads < 1) throw UsageError("threads must be at least 1");
}

ConfigEntries TrainConfig::to_entries() const {
  return {
      {"train.steps", std::to_string(steps)},
      {"train.batch_episodes", std::to_string(batch_episodes)},
      {"train.learning_rate", format_double(adam.learning_rate)},
      {"train.beta1", format_double(adam.beta1)},
      {"train.beta2", format_double(adam.beta2)},
      {"train.adam_eps", format_double(adam.eps)},
      {"train.clip_norm", format_double(clip_norm)},
      {"train.k_max", std::to_string(k_max)},
      {"train.seed", std::to_string(seed)},
      {"train.validation_every", std::to_string(validation_every)},
      {"train.validation_episodes", std::to_string(validation_episodes)},
      {"train.patience", std::to_string(patience)},
  };
}

std::string TrainReport::to_csv() const {
  std::string out = "step,train_cos,val_cos\n";
  for (const auto& p : points) out += std::to_string(p.step) + "," + format_double(p.train_cosine) + "," + format_double(p.validation_cosine) + "\n";
  return out;
}

namespace {

Tensor oracle_tensor(const Episode& e) {
  if (!e.oracle) throw UsageError("episode for '" + e.target_word + "' carries no oracle");
  double sq = 0.0;
  for (double v : *e.oracle) sq += v * v;
  if (sq == 0.0) throw NumericError("zero-norm oracle embedding for '" + e.target_word + "'");
  return Tensor::from_data({e.oracle->size()}, *e.oracle);
}

// Sum of cosines over the batch, as a graph.
Tensor cosine_sum(std::span<const Episode> batch, const HiceParams& params) {
  Tensor total;
  for (const auto& e : batch) {
    Tensor c = cosine(predict(e, params), oracle_tensor(e));
    total = total.defined() ? add(total, c) : c;
  }
  return total;
}

template <class Fn>
void run_chunks(std::size_t n, std::size_t threads, Fn&& fn) {
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, n));
  if (workers == 1) {
    fn(0, 0, n);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  const std::size_t per = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = std::min(n, w * per), hi = std::min(n, lo + per);
    pool.emplace_back([&, w, lo, hi] {
      try {
        fn(w, lo, hi);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

Tensor episode_loss(std::span<const Episode> batch, const HiceParams& params) {
  if (batch.empty()) throw UsageError("episode_loss: empty batch");
  return scale(cosine_sum(batch, params), -1.0 / static_cast<double>(batch.size()));
}

LossAndGrad loss_and_gradients(std::span<const Episode> batch, const HiceParams& params, std::size_t threads) {
  if (batch.empty()) throw UsageError("loss_and_gradients: empty batch");
  const auto learnable = params.learnable();
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, batch.size()));
  std::vector<double> partial_loss(workers, 0.0);
  std::vector<std::vector<Tensor>> partial_grads(workers);
  const double inv_n = -1.0 / static_cast<double>(batch.size());
  run_chunks(batch.size(), workers, [&](std::size_t w, std::size_t lo, std::size_t hi) {
    if (lo == hi) return;
    Tensor loss = scale(cosine_sum(batch.subspan(lo, hi - lo), params), inv_n);
    partial_loss[w] = loss.item();
    partial_grads[w] = gradients(loss, learnable);
  });
  LossAndGrad out;
  out.grads.resize(learnable.size());
  for (std::size_t i = 0; i < learnable.size(); ++i) out.grads[i].assign(learnable[i].size(), 0.0);
  for (std::size_t w = 0; w < workers; ++w) {
    out.loss += partial_loss[w];
    for (std::size_t i = 0; i < partial_grads[w].size(); ++i) {
      const auto g = partial_grads[w][i].data();
      for (std::size_t j = 0; j < g.size(); ++j) out.grads[i][j] += g[j];
    }
  }
  return out;
}

double mean_cosine(std::span<const Episode> episodes, const HiceParams& params, std::size_t threads) {
  if (episodes.empty()) throw UsageError("mean_cosine: no episodes");
  std::vector<double> cos(episodes.size());
  run_chunks(episodes.size(), threads, [&](std::size_t, std::size_t lo, std::size_t hi) {
    NoGradGuard guard;
    for (std::size_t i = lo; i < hi; ++i) cos[i] = cosine(predict(episodes[i], params), oracle_tensor(episodes[i])).item();
  });
  double total = 0.0;
  for (double c : cos) total += c;
  return total / static_cast<double>(episodes.size());
}

TrainResult train(const TrainConfig& config, HiceParams init, const EpisodeSampler& sampler, const TargetSplit& split,
                  const ConfigEntries& provenance, const StepCallback& on_step) {
  config.validate();
  const auto started = std::chrono::steady_clock::now();
  if (split.train.empty()) throw TrainingError("no training target words");
  {
    std::unordered_set<std::string> train_words(split.train.begin(), split.train.end());
    for (const auto& w : split.validation) {
      if (train_words.count(w)) throw UsageError("word '" + w + "' is in both the training and validation split");
    }
  }

  TrainResult result{init.clone(), {}};
  TrainReport& report = result.report;
  auto finish = [&] {
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  };
  if (config.steps == 0) {
    finish();
    return result;
  }

  report.validation_on_train_words = split.validation.empty();
  const auto& probe_words = split.validation.empty() ? split.train : split.validation;
  const auto shots = ShotSchedule::mixed(config.k_max);
  std::vector<Episode> probe;
  try {
    probe = EpisodeStream(sampler, probe_words, shots, config.seed ^ 0x9e3779b97f4a7c15ull).take(config.validation_episodes);
  } catch (const EpisodeError& e) {
    throw TrainingError(std::string("cannot build validation episodes: ") + e.what());
  }
  EpisodeStream stream(sampler, split.train, shots, config.seed);

  HiceParams params = init.clone();
  std::vector<Tensor> leaves = params.learnable();
  Adam adam(leaves, config.adam);
  double window_sum = 0.0;
  std::size_t window_n = 0;
  std::size_t stale = 0;
  bool have_best = false;

  for (std::size_t step = 1; step <= config.steps; ++step) {
    LossAndGrad lg;
    try {
      const auto batch = stream.take(config.batch_episodes);
      lg = loss_and_gradients(batch, params, config.threads);
    } catch (const NumericError& e) {
      throw TrainingError("training diverged at step " + std::to_string(step) + ": " + e.what());
    }
    if (!std::isfinite(lg.loss)) throw TrainingError("training diverged at step " + std::to_string(step) + ": loss is NaN");
    clip_global_norm(lg.grads, config.clip_norm);
    adam.step(leaves, lg.grads);
    for (const auto& t : leaves) {
      for (double v : t.data()) {
        if (!std::isfinite(v)) throw TrainingError("non-finite parameter after step " + std::to_string(step));
      }
    }
    report.steps_run = step;
    window_sum += -lg.loss * static_cast<double>(config.batch_episodes);
    window_n += config.batch_episodes;
    if (on_step) on_step(step, -lg.loss);

    if (step % config.validation_every == 0 || step == config.steps) {
      double val = 0.0;
      try {
        val = mean_cosine(probe, params, config.threads);
      } catch (const NumericError& e) {
        throw TrainingError("validation failed at step " + std::to_string(step) + ": " + e.what());
      }
      report.points.push_back({step, window_sum / static_cast<double>(window_n), val});
      window_sum = 0.0;
      window_n = 0;
      if (!have_best || val > report.best_validation) {
        have_best = true;
        report.best_validation = val;
        report.best_step = step;
        result.params = params.clone();
        stale = 0;
        if (!config.checkpoint_path.empty()) {
          ConfigEntries extra = provenance;
          const auto entries = config.to_entries();
          extra.insert(extra.end(), entries.begin(), entries.end());
          extra.emplace_back("train.best_step", std::to_string(step));
          save_checkpoint(config.checkpoint_path, result.params, sampler.table(), extra);
        }
      } else if (++stale >= config.patience) {
        report.stopped_early = true;
        break;
      }
    }
  }
  finish();
  return result;
}

}  // namespace oovforge
