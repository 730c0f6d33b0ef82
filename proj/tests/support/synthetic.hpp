#pragma once

// Planted few-shot tasks: every target owns a topic of context words whose
// vectors scatter around a random centre; sentences mix the target with words
// of its topic, and the target's oracle is a fixed function of the topic mean.

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "oovforge/corpus.hpp"
#include "oovforge/episode.hpp"
#include "oovforge/hice.hpp"

namespace synth {

enum class Rule {
  kMean,         // oracle = mean of topic vectors (additive is the Bayes predictor)
  kRotatedRelu,  // oracle = relu(R * mean), R a random orthogonal matrix
  kRotated,      // oracle = G * mean, G rotates by a fixed angle in 8 random planes
};

struct Spec {
  std::size_t dim = 16;
  std::size_t targets = 200;
  std::size_t topic_words = 9;
  std::size_t sentences = 50000;
  std::size_t min_len = 6;
  std::size_t max_len = 10;
  double noise = 0.5;
  Rule rule = Rule::kMean;
  double angle = 1.0;  // radians, kRotated only
  std::uint64_t seed = 7;
  std::string prefix = "";  // distinguishes word names across corpora
};

struct Task {
  std::vector<std::string> targets;
  std::vector<std::vector<std::string>> topics;  // per target
  std::vector<std::vector<double>> oracles;      // per target
  std::vector<std::vector<std::string>> sentences;
  std::vector<double> transform;                 // dim x dim row-major, identity for kMean
};

// Rows for topic words and targets are appended to `table` (which must have
// dim == spec.dim), so several tasks can share one table.
Task make_task(const Spec& spec, oovforge::EmbeddingTable& table);

oovforge::SentenceStore to_store(const Task& task);

// Deterministic split of the task's targets: every `stride`-th target is
// held out.
void split_targets(const Task& task, std::size_t stride, std::vector<std::string>& train,
                   std::vector<std::string>& held_out);

// Table of `rows` words "r0".."r<rows-1>" with N(0, 1) entries.
oovforge::EmbeddingTable random_table(std::size_t rows, std::size_t dim, std::uint64_t seed);

// d_model = dim, two heads, small char CNN: cheap enough for finite differences.
oovforge::HiceConfig tiny_config(std::size_t dim = 8);

// Random episode over table rows: K contexts of 1..max_len tokens, each with
// at least one MASK and the occasional UNK, a random lowercase word and a
// random oracle.
oovforge::Episode random_episode(const oovforge::EmbeddingTable& table, std::size_t k, std::size_t max_len,
                                 std::mt19937_64& rng);

}  // namespace synth
