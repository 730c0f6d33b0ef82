#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include "oovforge/baselines.hpp"
#include "oovforge/errors.hpp"
#include "oovforge/evaluation.hpp"
#include "synthetic.hpp"

using namespace oovforge;

namespace {

using Contexts = std::vector<std::vector<TokenId>>;

std::vector<double> row_of(const EmbeddingTable& t, std::size_t r) {
  auto s = t.row(r);
  return {s.begin(), s.end()};
}

Contexts random_contexts(const EmbeddingTable& table, std::mt19937_64& rng, std::size_t k = 4) {
  std::uniform_int_distribution<TokenId> row(0, static_cast<TokenId>(table.size() - 1));
  std::uniform_int_distribution<std::size_t> len(1, 8);
  Contexts c(k);
  for (auto& ctx : c) {
    for (std::size_t i = len(rng); i > 0; --i) ctx.push_back(row(rng));
    ctx.push_back(kMaskToken);
  }
  return c;
}

EmbeddingTable scaled(const EmbeddingTable& t, float s) {
  EmbeddingTable out(t.dim());
  std::vector<float> v(t.dim());
  for (std::size_t r = 0; r < t.size(); ++r) {
    for (std::size_t j = 0; j < t.dim(); ++j) v[j] = t.row(r)[j] * s;
    out.add(t.word(r), v);
  }
  return out;
}

std::vector<std::string> brute_ngrams(const std::string& word, std::size_t lo, std::size_t hi) {
  const auto cps = decode_utf8("<" + word + ">");
  std::vector<std::string> out;
  for (std::size_t start = 0; start < cps.size(); ++start) {
    for (std::size_t n = lo; n <= hi && start + n <= cps.size(); ++n) {
      out.push_back(encode_utf8(std::span<const char32_t>(cps.data() + start, n)));
    }
  }
  return out;
}

}  // namespace

TEST_CASE("additive examples") {
  auto table = synth::random_table(6, 4, 1);
  const Contexts one{{kMaskToken, 2}};
  auto r = additive(one, table);
  CHECK(r.vector == row_of(table, 2));
  CHECK(r.contributing_contexts == 1);
  CHECK(r.contributing_tokens == 1);

  const Contexts two{{0, 1, kMaskToken}, {kUnkToken, 3, kMaskToken}};
  auto m = additive(two, table);
  for (std::size_t j = 0; j < 4; ++j) {
    const double m1 = (double(table.row(0)[j]) + table.row(1)[j]) / 2;
    const double m2 = table.row(3)[j];
    CHECK(std::abs(m.vector[j] - (m1 + m2) / 2) < 1e-15);
  }

  const Contexts nothing{{kMaskToken, kUnkToken}, {kMaskToken}};
  auto e = additive(nothing, table);
  CHECK(e.empty());
  CHECK(e.vector == std::vector<double>(4, 0.0));

  const Contexts partial{{kMaskToken}, {4, kMaskToken}};
  CHECK(additive(partial, table).vector == row_of(table, 4));
}

TEST_CASE("additive is exactly permutation invariant") {
  auto table = synth::random_table(50, 16, 2);
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    auto c = random_contexts(table, rng, 5);
    const auto base = additive(c, table).vector;
    for (auto& ctx : c) std::shuffle(ctx.begin(), ctx.end(), rng);
    std::shuffle(c.begin(), c.end(), rng);
    CHECK(additive(c, table).vector == base);
  }
}

TEST_CASE("stopword filtering uses a subset of contributors") {
  EmbeddingTable table(2);
  table.add("the", std::vector<float>{10, 10});
  table.add("motor", std::vector<float>{1, 0});
  table.add("bike", std::vector<float>{0, 1});
  const Contexts c{{0, 1, kMaskToken}, {0, 2, kMaskToken}, {0, kMaskToken}};
  auto all = additive(c, table);
  auto filtered = additive(c, table, &Stopwords::english());
  CHECK(filtered.contributing_tokens < all.contributing_tokens);
  CHECK(filtered.contributing_contexts == 2);
  CHECK(filtered.vector == std::vector<double>{0.5, 0.5});
}

TEST_CASE("a la carte: identity and zero models") {
  auto table = synth::random_table(30, 5, 4);
  std::mt19937_64 rng(5);
  auto id = AlaCarte::identity(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto c = random_contexts(table, rng);
    CHECK(id.infer(c, table).vector == additive(c, table).vector);
  }
  auto zero = AlaCarte::from_matrix(5, std::vector<double>(25, 0.0));
  CHECK(zero.apply(std::vector<double>{1, 2, 3, 4, 5}) == std::vector<double>(5, 0.0));
  AlaCarte unfitted;
  CHECK_THROWS_AS(unfitted.apply(std::vector<double>{1, 2}), UsageError);
  CHECK_THROWS_AS(unfitted.infer(random_contexts(table, rng), table), UsageError);
}

TEST_CASE("a la carte fit recovers identity and planted matrices") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> normal;
  const std::size_t d = 6, n = 200;
  std::vector<std::vector<double>> x(n, std::vector<double>(d));
  for (auto& v : x)
    for (double& e : v) e = normal(rng);

  auto fit_id = AlaCarte::fit(x, x, 1e-12);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) CHECK(std::abs(fit_id.matrix()[i * d + j] - (i == j ? 1.0 : 0.0)) < 1e-8);
  }

  std::vector<double> m(d * d);
  for (double& e : m) e = normal(rng);
  const double noise = 0.01;
  std::vector<std::vector<double>> y(n, std::vector<double>(d, 0.0));
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) y[s][i] += m[i * d + j] * x[s][j];
      y[s][i] += noise * normal(rng);
    }
  }
  auto fit = AlaCarte::fit(x, y);
  for (std::size_t k = 0; k < d * d; ++k) CHECK(std::abs(fit.matrix()[k] - m[k]) < 10 * noise);
  CHECK(fit.samples() == n);
  CHECK_FALSE(fit.rank_warning());

  double identity_residual = 0.0;
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t i = 0; i < d; ++i) identity_residual += (y[s][i] - x[s][i]) * (y[s][i] - x[s][i]);
  CHECK(fit.residual_norm() <= std::sqrt(identity_residual));
}

TEST_CASE("a la carte rank handling") {
  std::vector<std::vector<double>> x{{1, 0, 0}, {2, 0, 0}};
  CHECK_THROWS_AS(AlaCarte::fit(x, x, 0.0), NumericError);
  auto damped = AlaCarte::fit(x, x);
  CHECK(damped.rank_warning());
  for (double v : damped.matrix()) CHECK(std::isfinite(v));
  std::vector<std::vector<double>> y{{1, 0, 0}};
  CHECK_THROWS(AlaCarte::fit(x, y));
}

TEST_CASE("homogeneity of additive and a la carte") {
  auto table = synth::random_table(40, 6, 7);
  std::mt19937_64 rng(8);
  std::vector<double> a(36);
  std::normal_distribution<double> normal;
  for (double& v : a) v = normal(rng);
  auto model = AlaCarte::from_matrix(6, a);
  for (float s : {2.0f, 0.5f, 8.0f}) {
    auto t2 = scaled(table, s);
    for (int trial = 0; trial < 20; ++trial) {
      auto c = random_contexts(table, rng);
      auto base = additive(c, table).vector;
      auto big = additive(c, t2).vector;
      auto mb = model.infer(c, table).vector;
      auto mbig = model.infer(c, t2).vector;
      for (std::size_t j = 0; j < 6; ++j) {
        CHECK(big[j] == base[j] * s);
        CHECK(mbig[j] == mb[j] * s);
      }
    }
  }
}

TEST_CASE("a la carte container round trip and corruption") {
  std::vector<double> a(9);
  for (std::size_t i = 0; i < 9; ++i) a[i] = 0.1 * static_cast<double>(i) - 0.3;
  auto m = AlaCarte::from_matrix(3, a);
  const auto path = std::filesystem::temp_directory_path() / "oovforge-unit-alc.bin";
  m.save(path);
  auto back = AlaCarte::load(path);
  for (std::size_t i = 0; i < 9; ++i) CHECK(back.matrix()[i] == static_cast<double>(static_cast<float>(a[i])));
  std::stringstream ss;
  write_container(ss, kAlaCarteMagic, m.to_container());
  const auto bytes = ss.str();
  std::istringstream cut(bytes.substr(0, bytes.size() - 1));
  CHECK_THROWS_AS(AlaCarte::from_container(read_container(cut, kAlaCarteMagic)), FormatError);
  auto c = m.to_container();
  c.entries[0].shape = {2, 3};
  c.entries[0].values.resize(6);
  CHECK_THROWS_AS(AlaCarte::from_container(c), FormatError);
}

TEST_CASE("alacarte_sample draws from the corpus") {
  oovforge::EmbeddingTable table(8);
  synth::Spec spec;
  spec.dim = 8;
  spec.targets = 12;
  spec.topic_words = 3;
  spec.sentences = 600;
  auto task = synth::make_task(spec, table);
  auto store = synth::to_store(task);
  EpisodeSampler sampler(store, table);
  auto sample = alacarte_sample(sampler, task.targets, 20, 1);
  CHECK(sample.words == task.targets);
  for (std::size_t i = 0; i < sample.words.size(); ++i) {
    const auto row = *table.lookup(sample.words[i]);
    for (std::size_t j = 0; j < 8; ++j) CHECK(sample.oracles[i][j] == row[j]);
  }
  auto again = alacarte_sample(sampler, task.targets, 20, 1);
  CHECK(again.additive_vectors == sample.additive_vectors);
}

TEST_CASE("char n-grams") {
  CHECK(char_ngrams("a") == std::vector<std::string>{"<a>"});
  for (const std::string w : {"scooter", "cello", "x", "na\xc3\xafve", "aaaaaaaa"}) {
    auto got = char_ngrams(w);
    auto expected = brute_ngrams(w, 3, 6);
    std::sort(got.begin(), got.end());
    std::sort(expected.begin(), expected.end());
    CHECK(got == expected);
  }
  auto s = char_ngrams("scooter");
  auto c = char_ngrams("cooter");
  CHECK(std::find_first_of(s.begin(), s.end(), c.begin(), c.end()) != s.end());
}

TEST_CASE("n-gram sums") {
  NgramTable table(2);
  table.set("<a>", std::vector<double>{1.5, -2});
  auto a = table.sum("a");
  CHECK(a.vector == std::vector<double>{1.5, -2});
  CHECK(a.covered == 1);
  CHECK(table.sum("zzz").empty());
  CHECK(table.sum("zzz").vector == std::vector<double>{0, 0});

  std::mt19937_64 rng(9);
  std::normal_distribution<double> normal;
  NgramTable big(3);
  for (const auto& g : char_ngrams("scooters")) big.set(g, std::vector<double>{normal(rng), normal(rng), normal(rng)});
  for (const std::string w : {"scooter", "cooter", "scoot", "tersc"}) {
    std::vector<double> expected(3, 0.0);
    std::size_t covered = 0;
    for (const auto& g : brute_ngrams(w, 3, 6)) {
      if (const auto* v = big.find(g)) {
        ++covered;
        for (std::size_t j = 0; j < 3; ++j) expected[j] += (*v)[j];
      }
    }
    auto got = ngram_sum(w, big);
    CHECK(got.covered == covered);
    for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(got.vector[j] - expected[j]) < 1e-12);
  }
}

TEST_CASE("n-gram fit reproduces the training rows") {
  EmbeddingTable table(4);
  std::mt19937_64 rng(10);
  std::normal_distribution<float> normal;
  for (const std::string w : {"scooter", "cooter", "pooter", "footer", "cello", "violin", "piano", "bmw"}) {
    std::vector<float> v(4);
    for (float& x : v) x = normal(rng);
    table.add(w, v);
  }
  auto fit = NgramTable::fit(table, {}, 1e-4);
  CHECK(fit.size() > 0);
  for (std::size_t r = 0; r < table.size(); ++r) {
    auto s = fit.sum(table.word(r));
    std::vector<float> row(table.row(r).begin(), table.row(r).end());
    CHECK(cosine_similarity(s.vector, row) > 0.99);
  }
  auto scooter = fit.sum("scooters");
  CHECK_FALSE(scooter.empty());

  const auto path = std::filesystem::temp_directory_path() / "oovforge-unit-ngr.bin";
  fit.save(path);
  auto back = NgramTable::load(path);
  CHECK(back.size() == fit.size());
  CHECK(back.sum("scooter").vector == fit.sum("scooter").vector);
}
