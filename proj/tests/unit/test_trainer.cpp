#include <doctest.h>

#include <cmath>
#include <set>

#include "oovforge/errors.hpp"
#include "oovforge/trainer.hpp"
#include "synthetic.hpp"

using namespace oovforge;

namespace {

// Fusion head that outputs exactly the given vector, whatever the input.
HiceParams constant_output(HiceParams p, const std::vector<double>& out) {
  p.fusion_w = Tensor::param(p.fusion_w.shape(), std::vector<double>(p.fusion_w.size(), 0.0));
  p.fusion_b = Tensor::param({out.size()}, out);
  return p;
}

struct Small {
  EmbeddingTable table{8};
  synth::Task task;
  SentenceStore store;
  TargetSplit split;

  Small() {
    synth::Spec spec;
    spec.dim = 8;
    spec.targets = 60;
    spec.topic_words = 3;
    spec.sentences = 3000;
    task = synth::make_task(spec, table);
    store = synth::to_store(task);
    synth::split_targets(task, 5, split.train, split.validation);
  }
};

}  // namespace

TEST_CASE("episode_loss examples") {
  auto table = synth::random_table(10, 2, 1);
  auto base = init_params(synth::tiny_config(2), table, 1);
  std::mt19937_64 rng(2);
  auto a = synth::random_episode(table, 2, 4, rng);
  auto b = synth::random_episode(table, 2, 4, rng);
  a.oracle = std::vector<double>{1.0, 0.0};
  b.oracle = std::vector<double>{0.0, 3.0};

  auto perfect = constant_output(base, {2.0, 0.0});
  const Episode one[] = {a};
  CHECK(episode_loss(one, perfect).item() == doctest::Approx(-1.0).epsilon(1e-15));
  const Episode orth[] = {b};
  CHECK(episode_loss(orth, perfect).item() == 0.0);
  const Episode both[] = {a, b};
  CHECK(episode_loss(both, perfect).item() == doctest::Approx(-0.5).epsilon(1e-15));

  auto zero = a;
  zero.oracle = std::vector<double>{0.0, 0.0};
  zero.target_word = "nullword";
  const Episode bad[] = {zero};
  try {
    episode_loss(bad, perfect);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("nullword") != std::string::npos);
  }
}

TEST_CASE("gradient clipping") {
  std::vector<std::vector<double>> g{{3.0, 0.0}, {0.0, 4.0}};
  CHECK(clip_global_norm(g, 1.0) == doctest::Approx(5.0));
  CHECK(g[0][0] == doctest::Approx(0.6));
  CHECK(g[1][1] == doctest::Approx(0.8));
  std::vector<std::vector<double>> small{{0.1}};
  clip_global_norm(small, 1.0);
  CHECK(small[0][0] == 0.1);
}

TEST_CASE("adam first step moves each coordinate by the learning rate") {
  auto p = Tensor::param({3}, {1.0, 2.0, 3.0});
  std::vector<Tensor> leaves{p};
  Adam adam(leaves, {});
  const std::vector<std::vector<double>> g{{0.5, -2.0, 0.0}};
  adam.step(leaves, g);
  CHECK(p[0] == doctest::Approx(1.0 - 1e-3).epsilon(1e-9));
  CHECK(p[1] == doctest::Approx(2.0 + 1e-3).epsilon(1e-9));
  CHECK(p[2] == 3.0);
}

TEST_CASE("threaded gradients equal single-threaded ones") {
  Small s;
  EpisodeSampler sampler(s.store, s.table);
  auto params = init_params(synth::tiny_config(8), s.table, 3);
  EpisodeStream stream(sampler, s.split.train, ShotSchedule::mixed(6), 4);
  auto batch = stream.take(8);
  auto one = loss_and_gradients(batch, params, 1);
  auto four = loss_and_gradients(batch, params, 4);
  CHECK(std::abs(one.loss - four.loss) < 1e-12);
  for (std::size_t i = 0; i < one.grads.size(); ++i) {
    for (std::size_t j = 0; j < one.grads[i].size(); ++j) CHECK(std::abs(one.grads[i][j] - four.grads[i][j]) < 1e-12);
  }
  CHECK(loss_and_gradients(batch, params, 4).grads == four.grads);
}

TEST_CASE("train with zero steps returns the initial parameters") {
  Small s;
  EpisodeSampler sampler(s.store, s.table);
  auto init = init_params(synth::tiny_config(8), s.table, 3);
  TrainConfig cfg;
  cfg.steps = 0;
  auto result = train(cfg, init, sampler, s.split);
  CHECK(result.report.points.empty());
  CHECK(result.report.steps_run == 0);
  CHECK(result.report.to_csv() == "step,train_cos,val_cos\n");
  const auto a = init.learnable(), b = result.params.learnable();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].to_vector() == b[i].to_vector());
}

TEST_CASE("train rejects overlapping splits and bad configs") {
  Small s;
  EpisodeSampler sampler(s.store, s.table);
  auto init = init_params(synth::tiny_config(8), s.table, 3);
  TrainConfig cfg;
  cfg.steps = 1;
  auto overlap = s.split;
  overlap.validation.push_back(overlap.train.front());
  CHECK_THROWS_AS(train(cfg, init, sampler, overlap), UsageError);
  cfg.adam.learning_rate = 0.0;
  CHECK_THROWS_AS(train(cfg, init, sampler, s.split), UsageError);
  cfg.adam.learning_rate = 1e-3;
  cfg.batch_episodes = 0;
  CHECK_THROWS_AS(train(cfg, init, sampler, s.split), UsageError);
}

TEST_CASE("train never uses validation words as targets and replays exactly") {
  Small s;
  EpisodeSampler sampler(s.store, s.table);
  auto init = init_params(synth::tiny_config(8), s.table, 3);
  TrainConfig cfg;
  cfg.steps = 30;
  cfg.batch_episodes = 8;
  cfg.validation_every = 10;
  cfg.validation_episodes = 16;

  auto a = train(cfg, init, sampler, s.split);
  auto b = train(cfg, init, sampler, s.split);
  CHECK(a.report.to_csv() == b.report.to_csv());
  CHECK(a.report.best_validation == b.report.best_validation);
  REQUIRE(a.report.points.size() == 3);
  for (std::size_t i = 1; i < a.report.points.size(); ++i) CHECK(a.report.points[i].step > a.report.points[i - 1].step);
  for (const auto& p : a.report.points) {
    CHECK(std::isfinite(p.train_cosine));
    CHECK(std::isfinite(p.validation_cosine));
  }

  // Same stream construction as the trainer: check no validation word can be drawn.
  const std::set<std::string> validation(s.split.validation.begin(), s.split.validation.end());
  EpisodeStream stream(sampler, s.split.train, ShotSchedule::mixed(cfg.k_max), cfg.seed);
  for (const auto& e : stream.take(500)) CHECK(validation.count(e.target_word) == 0);
}

TEST_CASE("empty validation split falls back to training words") {
  Small s;
  EpisodeSampler sampler(s.store, s.table);
  auto init = init_params(synth::tiny_config(8), s.table, 3);
  TrainConfig cfg;
  cfg.steps = 4;
  cfg.batch_episodes = 4;
  cfg.validation_every = 2;
  cfg.validation_episodes = 8;
  TargetSplit split{s.split.train, {}};
  auto r = train(cfg, init, sampler, split);
  CHECK(r.report.validation_on_train_words);
}

TEST_CASE("divergence becomes a training error with the step number") {
  Small s;
  EpisodeSampler sampler(s.store, s.table);
  auto init = init_params(synth::tiny_config(8), s.table, 3);
  TrainConfig cfg;
  cfg.steps = 50;
  cfg.batch_episodes = 4;
  cfg.adam.learning_rate = 1e300;
  cfg.clip_norm = 1e300;
  try {
    train(cfg, init, sampler, s.split);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("step") != std::string::npos);
    CHECK(e.exit_code() == 3);
  }
}

TEST_CASE("training cosine rises over the first windows") {
  Small s;
  EpisodeSampler sampler(s.store, s.table);
  auto init = init_params(synth::tiny_config(8), s.table, 3);
  TrainConfig cfg;
  cfg.steps = 75;
  cfg.batch_episodes = 8;
  cfg.validation_every = 1000;
  std::vector<double> cos;
  train(cfg, init, sampler, s.split, {}, [&](std::size_t, double c) { cos.push_back(c); });
  REQUIRE(cos.size() == 75);
  // 200-episode windows = 25 steps of 8 episodes
  double w[3] = {0, 0, 0};
  for (std::size_t i = 0; i < 75; ++i) w[i / 25] += cos[i] / 25.0;
  CHECK(w[1] >= w[0]);
  CHECK(w[2] >= w[1]);
}
