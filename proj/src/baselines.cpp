#include "oovforge/baselines.hpp"

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCore>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <random>

#include "oovforge/errors.hpp"

namespace oovforge {

AdditiveResult additive(std::span<const std::vector<TokenId>> contexts, const EmbeddingTable& table,
                        const Stopwords* drop) {
  // Tokens and context means are summed in a canonical order, so any
  // permutation of either gives bit-identical output.
  const std::size_t d = table.dim();
  AdditiveResult r;
  r.vector.assign(d, 0.0);
  std::vector<std::vector<double>> means;
  std::vector<TokenId> sorted;
  for (const auto& tokens : contexts) {
    sorted.assign(tokens.begin(), tokens.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> ctx(d, 0.0);
    std::size_t n = 0;
    for (TokenId t : sorted) {
      if (t == kMaskToken || t == kUnkToken || t >= table.size()) continue;
      if (drop && drop->contains(table.word(t))) continue;
      const auto row = table.row(t);
      for (std::size_t j = 0; j < d; ++j) ctx[j] += row[j];
      ++n;
    }
    if (n == 0) continue;
    for (double& v : ctx) v /= static_cast<double>(n);
    means.push_back(std::move(ctx));
    r.contributing_tokens += n;
  }
  std::sort(means.begin(), means.end());
  for (const auto& m : means) {
    for (std::size_t j = 0; j < d; ++j) r.vector[j] += m[j];
  }
  r.contributing_contexts = means.size();
  if (!means.empty()) {
    for (double& v : r.vector) v /= static_cast<double>(means.size());
  }
  return r;
}

// ---- a la carte ---------------------------------------------------------------------

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace

AlaCarte AlaCarte::identity(std::size_t dim) {
  std::vector<double> a(dim * dim, 0.0);
  for (std::size_t i = 0; i < dim; ++i) a[i * dim + i] = 1.0;
  return from_matrix(dim, std::move(a));
}

AlaCarte AlaCarte::from_matrix(std::size_t dim, std::vector<double> row_major) {
  if (dim == 0 || row_major.size() != dim * dim) throw DimensionError("a la carte matrix must be d x d");
  for (double v : row_major) {
    if (!std::isfinite(v)) throw NumericError("a la carte matrix has a non-finite entry");
  }
  AlaCarte m;
  m.dim_ = dim;
  m.a_ = std::move(row_major);
  return m;
}

AlaCarte AlaCarte::fit(std::span<const std::vector<double>> additive_vectors,
                       std::span<const std::vector<double>> oracles, double ridge) {
  if (additive_vectors.size() != oracles.size()) throw DimensionError("a la carte fit: sample counts differ");
  if (additive_vectors.empty()) throw UsageError("a la carte fit: no samples");
  if (ridge < 0.0) throw UsageError("a la carte fit: negative ridge");
  const std::size_t d = additive_vectors[0].size();
  const std::size_t n = additive_vectors.size();
  RowMatrix a(n, d), o(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    if (additive_vectors[i].size() != d || oracles[i].size() != d) throw DimensionError("a la carte fit: ragged samples");
    for (std::size_t j = 0; j < d; ++j) {
      a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = additive_vectors[i][j];
      o(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = oracles[i][j];
    }
  }
  Eigen::MatrixXd gram = a.transpose() * a;  // sum a a^T
  Eigen::MatrixXd cross = o.transpose() * a;  // sum o a^T
  const double lambda = ridge * gram.trace() / static_cast<double>(d);
  gram.diagonal().array() += lambda;
  // A gram = cross  <=>  gram A^T = cross^T (gram is symmetric)
  Eigen::MatrixXd at;
  if (lambda > 0.0) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    if (ldlt.info() != Eigen::Success) throw NumericError("a la carte fit: factorization failed");
    at = ldlt.solve(cross.transpose());
  } else {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
    if (lu.rank() < static_cast<Eigen::Index>(d)) {
      throw NumericError("a la carte fit: singular normal equations (rank " + std::to_string(lu.rank()) + " < " +
                         std::to_string(d) + "); use ridge damping");
    }
    at = lu.solve(cross.transpose());
  }
  std::vector<double> values(d * d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) values[i * d + j] = at(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
  }
  AlaCarte m = from_matrix(d, std::move(values));
  m.samples_ = n;
  m.lambda_ = lambda;
  const Eigen::Map<const RowMatrix> am(m.a_.data(), static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  m.residual_ = (a * am.transpose() - o).norm();
  return m;
}

std::vector<double> AlaCarte::apply(std::span<const double> v) const {
  if (!fitted()) throw UsageError("a la carte model is not fitted");
  if (v.size() != dim_) throw DimensionError("a la carte: vector has wrong dimension");
  std::vector<double> out(dim_, 0.0);
  for (std::size_t i = 0; i < dim_; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) s += a_[i * dim_ + j] * v[j];
    out[i] = s;
  }
  return out;
}

AdditiveResult AlaCarte::infer(std::span<const std::vector<TokenId>> contexts, const EmbeddingTable& table,
                               const Stopwords* drop) const {
  if (!fitted()) throw UsageError("a la carte model is not fitted");
  AdditiveResult r = additive(contexts, table, drop);
  r.vector = apply(r.vector);
  return r;
}

Container AlaCarte::to_container() const {
  if (!fitted()) throw UsageError("a la carte model is not fitted");
  Container c;
  c.config = {{"dim", std::to_string(dim_)},
              {"samples", std::to_string(samples_)},
              {"lambda", format_double(lambda_)},
              {"residual", format_double(residual_)}};
  c.entries.push_back({"A", {dim_, dim_}, to_float32(a_)});
  return c;
}

AlaCarte AlaCarte::from_container(const Container& c) {
  const ContainerEntry* e = c.find("A");
  if (!e || e->shape.size() != 2 || e->shape[0] != e->shape[1] || e->shape[0] == 0) {
    throw FormatError("a la carte container lacks a square 'A' matrix");
  }
  try {
    AlaCarte m = from_matrix(e->shape[0], std::vector<double>(e->values.begin(), e->values.end()));
    if (auto s = c.config_value("samples")) m.samples_ = std::stoull(*s);
    if (auto l = c.config_value("lambda")) m.lambda_ = std::stod(*l);
    if (auto r = c.config_value("residual")) m.residual_ = std::stod(*r);
    return m;
  } catch (const NumericError& err) {
    throw FormatError(err.what());
  } catch (const std::logic_error&) {
    throw FormatError("a la carte container has malformed statistics");
  }
}

void AlaCarte::save(const std::filesystem::path& path, const ConfigEntries& provenance) const {
  Container c = to_container();
  c.config.insert(c.config.end(), provenance.begin(), provenance.end());
  save_container(path, kAlaCarteMagic, c);
}

AlaCarte AlaCarte::load(const std::filesystem::path& path) {
  return from_container(load_container(path, kAlaCarteMagic));
}

RegressionSample alacarte_sample(const EpisodeSampler& sampler, std::span<const std::string> words,
                                 std::size_t max_contexts, std::uint64_t seed, const Stopwords* drop) {
  if (max_contexts < 1) throw UsageError("alacarte_sample: max_contexts must be at least 1");
  RegressionSample out;
  std::mt19937_64 rng(seed);
  for (const auto& w : words) {
    auto id = sampler.store().find(w);
    if (!id || !sampler.table().find(w)) continue;
    const std::size_t k = std::min(max_contexts, sampler.store().contexts_of(*id).size());
    if (k == 0) continue;
    Episode e = sampler.sample(w, k, rng, true);
    AdditiveResult r = additive(e.contexts, sampler.table(), drop);
    if (r.empty()) continue;
    out.words.push_back(w);
    out.additive_vectors.push_back(std::move(r.vector));
    out.oracles.push_back(std::move(*e.oracle));
  }
  return out;
}

// ---- character n-grams ------------------------------------------------------------

std::vector<std::string> char_ngrams(std::string_view word, std::size_t min_n, std::size_t max_n) {
  if (word.empty()) throw UsageError("char_ngrams: empty word");
  if (min_n < 1 || max_n < min_n) throw UsageError("char_ngrams: invalid n range");
  std::vector<char32_t> cps{U'<'};
  for (char32_t c : decode_utf8(word)) cps.push_back(c);
  cps.push_back(U'>');
  std::vector<std::string> out;
  for (std::size_t n = min_n; n <= max_n; ++n) {
    if (n > cps.size()) break;
    for (std::size_t i = 0; i + n <= cps.size(); ++i) {
      out.push_back(encode_utf8(std::span<const char32_t>(cps.data() + i, n)));
    }
  }
  return out;
}

NgramTable::NgramTable(std::size_t dim, std::size_t min_n, std::size_t max_n) : dim_(dim), min_n_(min_n), max_n_(max_n) {
  if (dim == 0) throw UsageError("n-gram table needs a positive dimension");
  if (min_n < 1 || max_n < min_n) throw UsageError("n-gram table: invalid n range");
}

void NgramTable::set(std::string ngram, std::span<const double> vector) {
  if (vector.size() != dim_) throw DimensionError("n-gram vector has wrong dimension");
  std::vector<float> v(vector.begin(), vector.end());
  auto it = index_.find(ngram);
  if (it != index_.end()) {
    vectors_[it->second] = std::move(v);
    return;
  }
  index_.emplace(ngram, ngrams_.size());
  ngrams_.push_back(std::move(ngram));
  vectors_.push_back(std::move(v));
}

const std::vector<float>* NgramTable::find(std::string_view ngram) const {
  auto it = index_.find(std::string(ngram));
  return it == index_.end() ? nullptr : &vectors_[it->second];
}

NgramSum NgramTable::sum(std::string_view word) const {
  NgramSum r;
  r.vector.assign(dim_, 0.0);
  for (const auto& g : char_ngrams(word, min_n_, max_n_)) {
    if (const auto* v = find(g)) {
      for (std::size_t j = 0; j < dim_; ++j) r.vector[j] += (*v)[j];
      ++r.covered;
    }
  }
  return r;
}

NgramTable NgramTable::fit(const EmbeddingTable& table, std::span<const std::string> words, double ridge,
                           std::size_t min_n, std::size_t max_n) {
  if (!(ridge > 0.0)) throw UsageError("n-gram fit needs a positive ridge");
  NgramTable out(table.dim(), min_n, max_n);
  std::vector<std::string> fit_words(words.begin(), words.end());
  if (fit_words.empty()) fit_words = table.words();

  std::unordered_map<std::string, std::size_t> columns;
  std::vector<std::string> names;
  std::vector<Eigen::Triplet<double>> triplets;
  std::vector<std::size_t> rows;
  for (const auto& w : fit_words) {
    auto row = table.find(w);
    if (!row) continue;
    const auto r = static_cast<int>(rows.size());
    rows.push_back(*row);
    for (auto& g : char_ngrams(w, min_n, max_n)) {
      auto [it, inserted] = columns.emplace(g, names.size());
      if (inserted) names.push_back(g);
      triplets.emplace_back(r, static_cast<int>(it->second), 1.0);
    }
  }
  if (rows.empty()) throw UsageError("n-gram fit: none of the words has a table row");
  const std::size_t d = table.dim();
  Eigen::SparseMatrix<double> x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(names.size()));
  x.setFromTriplets(triplets.begin(), triplets.end());  // duplicate n-grams sum into counts
  Eigen::MatrixXd targets(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto v = table.row(rows[i]);
    for (std::size_t j = 0; j < d; ++j) targets(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v[j];
  }
  Eigen::SparseMatrix<double> normal = Eigen::SparseMatrix<double>(x.transpose()) * x;
  Eigen::SparseMatrix<double> identity(normal.rows(), normal.cols());
  identity.setIdentity();
  normal += ridge * identity;
  const Eigen::MatrixXd rhs = x.transpose() * targets;
  Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg;
  cg.setTolerance(1e-10);
  cg.setMaxIterations(10000);
  cg.compute(normal);
  const Eigen::MatrixXd solution = cg.solve(rhs);
  if (!solution.allFinite()) throw NumericError("n-gram fit diverged");
  std::vector<double> v(d);
  for (std::size_t c = 0; c < names.size(); ++c) {
    for (std::size_t j = 0; j < d; ++j) v[j] = solution(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j));
    out.set(names[c], v);
  }
  return out;
}

Container NgramTable::to_container() const {
  if (dim_ == 0) throw UsageError("n-gram table is empty");
  Container c;
  std::string joined;
  for (std::size_t i = 0; i < ngrams_.size(); ++i) {
    if (i) joined += ' ';
    joined += ngrams_[i];
  }
  c.config = {{"dim", std::to_string(dim_)},
              {"min_n", std::to_string(min_n_)},
              {"max_n", std::to_string(max_n_)},
              {"count", std::to_string(ngrams_.size())},
              {"ngrams", joined}};
  std::vector<float> flat;
  flat.reserve(ngrams_.size() * dim_);
  for (const auto& v : vectors_) flat.insert(flat.end(), v.begin(), v.end());
  c.entries.push_back({"vectors", {ngrams_.size(), dim_}, std::move(flat)});
  return c;
}

NgramTable NgramTable::from_container(const Container& c) {
  auto get = [&](const char* key) -> std::size_t {
    auto v = c.config_value(key);
    if (!v) throw FormatError(std::string("n-gram container lacks '") + key + "'");
    std::size_t out = 0;
    auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc() || ptr != v->data() + v->size()) throw FormatError(std::string("bad '") + key + "' value");
    return out;
  };
  const std::size_t dim = get("dim"), count = get("count");
  NgramTable t;
  try {
    t = NgramTable(dim, get("min_n"), get("max_n"));
  } catch (const UsageError& e) {
    throw FormatError(e.what());
  }
  const ContainerEntry* e = c.find("vectors");
  if (!e || e->shape != Shape{count, dim}) throw FormatError("n-gram container has a malformed 'vectors' entry");
  std::vector<std::string> names;
  const std::string joined = c.config_value("ngrams").value_or("");
  for (std::size_t pos = 0; count > 0 && pos <= joined.size();) {
    auto end = joined.find(' ', pos);
    if (end == std::string::npos) end = joined.size();
    names.push_back(joined.substr(pos, end - pos));
    pos = end + 1;
  }
  if (names.size() != count) throw FormatError("n-gram container lists the wrong number of n-grams");
  std::vector<double> v(dim);
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t j = 0; j < dim; ++j) v[j] = e->values[i * dim + j];
    t.set(names[i], v);
  }
  if (t.size() != count) throw FormatError("n-gram container repeats an n-gram");
  return t;
}

void NgramTable::save(const std::filesystem::path& path, const ConfigEntries& provenance) const {
  Container c = to_container();
  c.config.insert(c.config.end(), provenance.begin(), provenance.end());
  save_container(path, kNgramMagic, c);
}

NgramTable NgramTable::load(const std::filesystem::path& path) {
  return from_container(load_container(path, kNgramMagic));
}

}  // namespace oovforge
