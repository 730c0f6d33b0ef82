// oov-forge: command-line front end.
//
//   oov-forge prepare   --corpus FILE --embeddings FILE --out DIR
//   oov-forge train     --prepared DIR --out CKPT
//   oov-forge adapt     --checkpoint CKPT --target-corpus FILE --out CKPT
//   oov-forge infer     --word W --contexts-file FILE [--checkpoint CKPT | --embeddings FILE]
//   oov-forge eval      --benchmark TSV --methods a,b [--checkpoint CKPT | --embeddings FILE]
//   oov-forge neighbors --word W [--checkpoint CKPT | --embeddings FILE]

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "oovforge/adaptation.hpp"
#include "oovforge/baselines.hpp"
#include "oovforge/checkpoint.hpp"
#include "oovforge/corpus.hpp"
#include "oovforge/errors.hpp"
#include "oovforge/evaluation.hpp"
#include "oovforge/hice.hpp"
#include "oovforge/methods.hpp"
#include "oovforge/run_config.hpp"
#include "oovforge/trainer.hpp"

namespace fs = std::filesystem;
using namespace oovforge;

namespace {

struct OptionSpec {
  std::string key;
  std::string default_value;  // empty: no default
  std::string help;
  bool is_flag = false;
};

const std::vector<OptionSpec> kCommon = {
    {"config", "", "configuration file of 'key = value' lines"},
    {"seed", "1", "random seed (OOVFORGE_SEED overrides the default and file value)"},
    {"threads", "1", "worker threads; 1 gives bit-identical reruns"},
};

const std::map<std::string, std::vector<OptionSpec>> kCommands = {
    {"prepare",
     {{"corpus", "", "UTF-8 corpus, one sentence per line"},
      {"embeddings", "", "embedding table in text format"},
      {"out", "", "output directory"},
      {"min-count", "16", "target words need more occurrences than this"},
      {"validation-percent", "5", "share of target words held out for validation"},
      {"stopwords", "", "stopword list (bundled English list when empty)"}}},
    {"train",
     {{"prepared", "", "directory written by prepare"},
      {"out", "", "checkpoint path"},
      {"report", "", "CSV report path (default: <out>.csv)"},
      {"k-max", "6", "largest shot count in training episodes"},
      {"steps", "2000", "optimizer steps"},
      {"batch", "32", "episodes per step"},
      {"lr", "0.001", "Adam learning rate"},
      {"clip", "5", "global gradient-norm clip"},
      {"validation-every", "100", "steps between validation passes"},
      {"validation-episodes", "128", "size of the fixed validation probe set"},
      {"patience", "10", "validation passes without improvement before stopping"},
      {"heads", "4", "attention heads"},
      {"d-model", "", "model width (default: embedding dimension rounded up to a multiple of heads)"},
      {"context-blocks", "1", "encoding blocks in the context encoder"},
      {"aggregator-blocks", "1", "encoding blocks in the aggregator"},
      {"pooling", "mask", "context pooling: mask or mean"},
      {"no-morph", "false", "zero the morphology features", true},
      {"no-baselines", "false", "skip fitting the a la carte and n-gram baselines", true},
      {"alacarte-contexts", "50", "contexts per word when fitting a la carte"},
      {"ngram-ridge", "0.1", "ridge strength of the n-gram fit"}}},
    {"adapt",
     {{"checkpoint", "", "trained checkpoint"},
      {"target-corpus", "", "new-domain corpus, one sentence per line"},
      {"out", "", "adapted checkpoint path"},
      {"mode", "maml", "maml or finetune"},
      {"alpha", "0.001", "inner learning rate"},
      {"beta", "0.0001", "outer learning rate"},
      {"first-order", "true", "first-order update (use --second-order for the full one)", true},
      {"second-order", "false", "differentiate through the inner step", true},
      {"steps", "500", "adaptation steps"},
      {"target-min-count", "4", "pseudo-episode words need more occurrences than this"},
      {"batch", "16", "episodes per batch"},
      {"k-max", "6", "largest shot count"},
      {"finetune-pool", "0", "finetune mode: fixed pool of this many episodes (0 = fresh)"}}},
    {"infer",
     {{"checkpoint", "", "checkpoint (required for hice)"},
      {"embeddings", "", "embedding table (default: the checkpoint's)"},
      {"word", "", "the out-of-vocabulary word"},
      {"contexts-file", "", "sentences containing the word, one per line"},
      {"method", "hice", "hice, additive, additive-ns, alacarte or ngram"},
      {"neighbors", "0", "also print this many nearest neighbors"},
      {"attention", "", "write an attention report here (hice only)"},
      {"alacarte", "", "a la carte model (default: <checkpoint>.alc)"},
      {"ngrams", "", "n-gram table (default: <checkpoint>.ngr)"}}},
    {"eval",
     {{"benchmark", "", "normalized benchmark TSV"},
      {"chimera", "false", "the benchmark is a raw Chimera file to import", true},
      {"embeddings", "", "embedding table (default: the checkpoint's)"},
      {"checkpoint", "", "checkpoint (required for hice)"},
      {"methods", "additive", "comma-separated methods"},
      {"out-dir", ".", "directory for report files"},
      {"svg", "false", "also write an SVG bar chart", true},
      {"alacarte", "", "a la carte model (default: <checkpoint>.alc)"},
      {"ngrams", "", "n-gram table (default: <checkpoint>.ngr)"}}},
    {"neighbors",
     {{"embeddings", "", "embedding table (default: the checkpoint's)"},
      {"checkpoint", "", "checkpoint whose table to search"},
      {"word", "", "in-table query word"},
      {"vector-file", "", "query rows in embedding text format"},
      {"top", "5", "neighbors per query"}}},
};

// ---- helpers ------------------------------------------------------------------------

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot read '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::vector<std::string> lines;
  std::istringstream in(read_text(path));
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, sep);) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string require(const RunConfig& cfg, const std::string& key) {
  auto v = cfg.find(key);
  if (!v || v->empty()) throw UsageError("--" + key + " is required");
  return *v;
}

std::string config_value(const ConfigEntries& entries, const std::string& key) {
  for (const auto& [k, v] : entries) {
    if (k == key) return v;
  }
  return {};
}

EmbeddingTable table_for(const RunConfig& cfg, const std::optional<ConfigEntries>& checkpoint_config) {
  if (auto e = cfg.find("embeddings"); e && !e->empty()) return load_embeddings(*e);
  if (checkpoint_config) {
    const auto path = config_value(*checkpoint_config, "table.path");
    if (!path.empty()) return load_embeddings(path);
  }
  throw UsageError("--embeddings is required (or a checkpoint that records its table)");
}

struct Prepared {
  SentenceStore store;
  TargetSplit split;
  RunConfig config;
};

Prepared load_prepared(const fs::path& dir) {
  Prepared p;
  for (const char* name : {"run_config.txt", "sentences.txt", "split.tsv"}) {
    if (!fs::exists(dir / name)) throw IngestionError("'" + dir.string() + "' lacks " + name + "; run prepare first");
  }
  p.config.merge_file(dir / "run_config.txt");
  for (const auto& line : read_lines(dir / "sentences.txt")) {
    if (line.empty() || line.front() == '#') continue;
    p.store.add_sentence(split_on(line, ' '));
  }
  for (const auto& line : read_lines(dir / "split.tsv")) {
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split_on(line, '\t');
    if (fields.size() != 2) throw IngestionError("malformed split manifest line '" + line + "'");
    (fields[1] == "validation" ? p.split.validation : p.split.train).push_back(fields[0]);
  }
  if (p.store.num_sentences() == 0) throw IngestionError("prepared corpus holds no sentences");
  return p;
}

// ---- commands -----------------------------------------------------------------------

int cmd_prepare(const RunConfig& cfg) {
  const fs::path corpus = require(cfg, "corpus");
  const fs::path embeddings = require(cfg, "embeddings");
  const fs::path out = require(cfg, "out");
  const std::size_t min_count = cfg.size_value("min-count");
  const auto percent = cfg.size_value("validation-percent");
  if (percent > 100) throw UsageError("--validation-percent must be at most 100");

  std::optional<Stopwords> custom;
  if (auto s = cfg.find("stopwords"); s && !s->empty()) custom = Stopwords::load(*s);
  const Stopwords& stop = custom ? *custom : Stopwords::english();

  SentenceStore store = SentenceStore::from_file(corpus);
  Vocabulary vocab = build_vocab(store, min_count, stop);
  EmbeddingTable table = load_embeddings(embeddings);
  TargetSplit split = split_targets(vocab, static_cast<unsigned>(percent));

  RunConfig recorded = cfg;
  recorded.set("command", "prepare");
  recorded.set("embeddings", fs::absolute(embeddings).lexically_normal().string());
  recorded.set("corpus", fs::absolute(corpus).lexically_normal().string());
  recorded.set("stopwords-version", stop.version());
  recorded.set("table-fingerprint", std::to_string(table.fingerprint()));
  const std::string header = recorded.to_comment_block();

  fs::create_directories(out);
  std::string vocab_text = header + "# word\tcount\tstopword\teligible\tin_table\n";
  std::size_t eligible = 0, eligible_in_table = 0;
  for (WordId id = 0; id < vocab.size(); ++id) {
    const bool in_table = table.find(vocab.word(id)).has_value();
    eligible += vocab.is_target_eligible(id);
    eligible_in_table += vocab.is_target_eligible(id) && in_table;
    vocab_text += vocab.word(id) + "\t" + std::to_string(vocab.count(id)) + "\t" + (vocab.is_stopword(id) ? "1" : "0") +
                  "\t" + (vocab.is_target_eligible(id) ? "1" : "0") + "\t" + (in_table ? "1" : "0") + "\n";
  }
  std::string sentences_text = header;
  for (const auto& s : store.sentences()) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i) sentences_text += ' ';
      sentences_text += store.word(s[i]);
    }
    sentences_text += '\n';
  }
  // Only words with an oracle can be training targets.
  std::string split_text = header;
  std::size_t n_train = 0, n_val = 0;
  for (const auto& w : split.train) {
    if (!table.find(w)) continue;
    split_text += w + "\ttrain\n";
    ++n_train;
  }
  for (const auto& w : split.validation) {
    if (!table.find(w)) continue;
    split_text += w + "\tvalidation\n";
    ++n_val;
  }
  write_text(out / "vocab.tsv", vocab_text);
  write_text(out / "sentences.txt", sentences_text);
  write_text(out / "split.tsv", split_text);
  write_text(out / "run_config.txt", recorded.to_text());

  std::cout << "sentences: " << store.num_sentences() << "\n"
            << "words: " << vocab.size() << "\n"
            << "target-eligible (count > " << min_count << "): " << eligible << " (" << eligible_in_table
            << " with embeddings)\n"
            << "train targets: " << n_train << "\n"
            << "validation targets: " << n_val << "\n"
            << "table: " << table.size() << " x " << table.dim() << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  const fs::path prepared_dir = require(cfg, "prepared");
  const fs::path out = require(cfg, "out");
  Prepared prepared = load_prepared(prepared_dir);
  EmbeddingTable table = load_embeddings(prepared.config.get("embeddings"));
  if (std::to_string(table.fingerprint()) != prepared.config.get("table-fingerprint")) {
    throw IngestionError("embedding table changed since prepare");
  }

  HiceConfig model = HiceConfig::for_dim(table.dim(), cfg.size_value("heads"));
  if (auto w = cfg.find("d-model"); w && !w->empty()) {
    model.d_model = cfg.size_value("d-model");
    model.d_ff = 4 * model.d_model;
  }
  model.context_blocks = cfg.size_value("context-blocks");
  model.aggregator_blocks = cfg.size_value("aggregator-blocks");
  model.use_morph = !cfg.flag("no-morph");
  const auto& pooling = cfg.get("pooling");
  if (pooling != "mask" && pooling != "mean") throw UsageError("--pooling must be mask or mean");
  model.pooling = pooling == "mask" ? ContextPooling::kMask : ContextPooling::kMean;

  TrainConfig tc;
  tc.steps = cfg.size_value("steps");
  tc.batch_episodes = cfg.size_value("batch");
  tc.adam.learning_rate = cfg.real("lr");
  tc.clip_norm = cfg.real("clip");
  tc.k_max = cfg.size_value("k-max");
  tc.seed = cfg.u64("seed");
  tc.validation_every = cfg.size_value("validation-every");
  tc.validation_episodes = cfg.size_value("validation-episodes");
  tc.patience = cfg.size_value("patience");
  tc.threads = cfg.size_value("threads");

  RunConfig recorded = cfg;
  recorded.set("command", "train");
  recorded.set("prepared", fs::absolute(prepared_dir).lexically_normal().string());
  ConfigEntries provenance = recorded.to_entries();
  provenance.emplace_back("adapted", "false");

  EpisodeSampler sampler(prepared.store, table);
  HiceParams init = init_params(model, table, tc.seed);
  TrainResult result = train(tc, init, sampler, prepared.split, provenance);

  ConfigEntries extra = provenance;
  const auto entries = tc.to_entries();
  extra.insert(extra.end(), entries.begin(), entries.end());
  extra.emplace_back("train.best_step", std::to_string(result.report.best_step));
  save_checkpoint(out, result.params, table, extra);

  std::string report_path = cfg.find("report").value_or("");
  if (report_path.empty()) report_path = out.string() + ".csv";
  write_text(report_path, recorded.to_comment_block() + result.report.to_csv());

  if (!cfg.flag("no-baselines")) {
    const auto sample = alacarte_sample(sampler, prepared.split.train, cfg.size_value("alacarte-contexts"), tc.seed);
    if (!sample.words.empty()) {
      AlaCarte::fit(sample.additive_vectors, sample.oracles).save(out.string() + ".alc", provenance);
    }
    NgramTable::fit(table, {}, cfg.real("ngram-ridge")).save(out.string() + ".ngr", provenance);
  }

  std::cout << "steps run: " << result.report.steps_run << (result.report.stopped_early ? " (early stop)" : "") << "\n";
  if (result.report.points.empty()) {
    std::cout << "best validation cosine: n/a (no training steps)\n";
  } else {
    std::cout << "best validation cosine: " << result.report.best_validation << " at step " << result.report.best_step
              << (result.report.validation_on_train_words ? " (no validation words; scored on training words)" : "")
              << "\n";
  }
  std::cout << "checkpoint: " << out.string() << "\n";
  return 0;
}

int cmd_adapt(const RunConfig& cfg) {
  const fs::path ckpt = require(cfg, "checkpoint");
  const fs::path target_corpus = require(cfg, "target-corpus");
  const fs::path out = require(cfg, "out");
  const ConfigEntries ck_config = read_checkpoint_config(ckpt);
  EmbeddingTable table = load_embeddings(config_value(ck_config, "table.path"));
  HiceParams params = load_checkpoint(ckpt, table);
  const std::string prepared_dir = config_value(ck_config, "run.prepared");
  if (prepared_dir.empty()) throw UsageError("checkpoint does not record its prepared corpus");
  Prepared prepared = load_prepared(prepared_dir);
  SentenceStore target = SentenceStore::from_file(target_corpus);

  AdaptConfig ac;
  ac.alpha = cfg.real("alpha");
  ac.beta = cfg.real("beta");
  ac.first_order = cfg.flag("first-order") && !cfg.flag("second-order");
  ac.steps = cfg.size_value("steps");
  ac.target_min_count = cfg.size_value("target-min-count");
  ac.batch_episodes = cfg.size_value("batch");
  ac.k_max = cfg.size_value("k-max");
  ac.seed = cfg.u64("seed");
  ac.finetune_pool = cfg.size_value("finetune-pool");
  const auto& mode = cfg.get("mode");
  if (mode != "maml" && mode != "finetune") throw UsageError("--mode must be maml or finetune");

  const auto words = adaptation_targets(target, table, ac.target_min_count);
  if (words.empty()) {
    throw AdaptationError("no word of the target corpus is in the table with more than " +
                          std::to_string(ac.target_min_count) + " occurrences");
  }
  EpisodeSampler source_sampler(prepared.store, table);
  EpisodeSampler target_sampler(target, table);
  HiceParams adapted = mode == "maml"
                           ? adapt(params, source_sampler, prepared.split.train, target_sampler, words, ac)
                           : finetune(params, target_sampler, words, ac);

  RunConfig recorded = cfg;
  recorded.set("command", "adapt");
  ConfigEntries extra;
  for (const auto& [k, v] : ck_config) {
    if (k.starts_with("run.") || k.starts_with("train.")) extra.emplace_back(k.starts_with("run.") ? "source." + k : k, v);
  }
  const auto run = recorded.to_entries();
  extra.insert(extra.end(), run.begin(), run.end());
  const auto entries = ac.to_entries();
  extra.insert(extra.end(), entries.begin(), entries.end());
  extra.emplace_back("run.prepared", prepared_dir);
  extra.emplace_back("adapted", "true");
  extra.emplace_back("dn_path", fs::absolute(target_corpus).lexically_normal().string());
  extra.emplace_back("adapt.mode", mode);
  save_checkpoint(out, adapted, table, extra);
  std::cout << "pseudo-episode words: " << words.size() << "\n"
            << "mode: " << mode << (mode == "maml" ? (ac.first_order ? " (first-order)" : " (second-order)") : "")
            << ", steps: " << ac.steps << "\n"
            << "checkpoint: " << out.string() << "\n";
  return 0;
}

struct LoadedModels {
  std::optional<ConfigEntries> checkpoint_config;
  EmbeddingTable table;
  std::optional<HiceParams> hice;
  std::optional<AlaCarte> alacarte;
  std::optional<NgramTable> ngrams;

  MethodResources resources() const {
    MethodResources r;
    r.table = &table;
    r.hice = hice ? &*hice : nullptr;
    r.alacarte = alacarte ? &*alacarte : nullptr;
    r.ngrams = ngrams ? &*ngrams : nullptr;
    return r;
  }
};

LoadedModels load_models(const RunConfig& cfg, const std::vector<Method>& methods) {
  LoadedModels m;
  const std::string ckpt = cfg.find("checkpoint").value_or("");
  if (!ckpt.empty()) m.checkpoint_config = read_checkpoint_config(ckpt);
  m.table = table_for(cfg, m.checkpoint_config);
  for (Method method : methods) {
    if (method == Method::kHice && !m.hice) {
      if (ckpt.empty()) throw UsageError("method hice needs --checkpoint");
      m.hice = load_checkpoint(ckpt, m.table);
    }
    if (method == Method::kAlaCarte && !m.alacarte) {
      std::string path = cfg.find("alacarte").value_or("");
      if (path.empty() && !ckpt.empty()) path = ckpt + ".alc";
      if (path.empty()) throw UsageError("method alacarte needs --alacarte or --checkpoint");
      m.alacarte = AlaCarte::load(path);
    }
    if (method == Method::kNgram && !m.ngrams) {
      std::string path = cfg.find("ngrams").value_or("");
      if (path.empty() && !ckpt.empty()) path = ckpt + ".ngr";
      if (path.empty()) throw UsageError("method ngram needs --ngrams or --checkpoint");
      m.ngrams = NgramTable::load(path);
    }
  }
  return m;
}

void print_neighbors(const std::vector<Neighbor>& neighbors) {
  for (std::size_t i = 0; i < neighbors.size(); ++i) {
    std::cout << "neighbor\t" << (i + 1) << "\t" << neighbors[i].word << "\t" << format_double(neighbors[i].cosine)
              << "\n";
  }
}

int cmd_infer(const RunConfig& cfg) {
  const std::string word = require(cfg, "word");
  const Method method = parse_method(cfg.get("method"));
  std::vector<std::string> sentences;
  for (auto& line : read_lines(require(cfg, "contexts-file"))) {
    if (!line.empty()) sentences.push_back(line);
  }
  LoadedModels models = load_models(cfg, {method});
  const auto resources = models.resources();
  const auto vec = infer_vector(method, word, sentences, resources);
  std::cout << format_embedding_row(word, std::span<const double>(vec)) << "\n";
  if (const auto n = cfg.size_value("neighbors"); n > 0) print_neighbors(nearest_neighbors(vec, models.table, n, word));
  if (auto path = cfg.find("attention"); path && !path->empty()) {
    if (method != Method::kHice) throw UsageError("--attention needs --method hice");
    std::vector<std::vector<std::string>> tokenized;
    for (const auto& s : sentences) tokenized.push_back(tokenize(s));
    const Episode e = episode_from_sentences(word, tokenized, models.table);
    RunConfig recorded = cfg;
    recorded.set("command", "infer");
    write_text(*path, recorded.to_comment_block() + serialize_attention_report(dump_attention(e, *models.hice, models.table)));
  }
  return 0;
}

int cmd_eval(const RunConfig& cfg) {
  const fs::path bench = require(cfg, "benchmark");
  std::vector<EvalItem> items;
  if (cfg.flag("chimera")) {
    std::ifstream in(bench);
    if (!in) throw EvaluationError("cannot open benchmark '" + bench.string() + "'");
    items = import_chimera(in);
  } else {
    items = load_benchmark(bench);
  }
  std::vector<Method> methods;
  for (const auto& name : split_on(cfg.get("methods"), ',')) methods.push_back(parse_method(name));
  if (methods.empty()) throw UsageError("--methods lists no method");
  LoadedModels models = load_models(cfg, methods);
  const auto resources = models.resources();
  EvalReport report;
  for (Method m : methods) {
    report.methods.push_back(
        evaluate_method(method_name(m), items, make_infer_fn(m, resources), models.table, cfg.size_value("threads")));
  }
  RunConfig recorded = cfg;
  recorded.set("command", "eval");
  const std::string header = recorded.to_comment_block();
  const fs::path dir = cfg.get("out-dir");
  fs::create_directories(dir);
  write_text(dir / "report.csv", header + report.to_csv());
  write_text(dir / "report.txt", header + report.to_text());
  write_text(dir / "items.csv", header + report.items_csv());
  if (cfg.flag("svg")) {
    std::string svg = report.to_svg();
    std::string comment = "<!--\n" + recorded.to_text() + "-->\n";
    svg.insert(svg.find('\n') + 1, comment);
    write_text(dir / "report.svg", svg);
  }
  std::cout << report.to_text();
  std::size_t failed = 0, dropped = 0;
  for (const auto& m : report.methods) {
    dropped += m.probes_dropped;
    for (const auto& r : m.items) failed += r.failed;
  }
  std::cout << "items: " << items.size() << ", failed item scores: " << failed << ", dropped probes: " << dropped
            << "\n";
  return 0;
}

int cmd_neighbors(const RunConfig& cfg) {
  std::optional<ConfigEntries> ck;
  if (auto c = cfg.find("checkpoint"); c && !c->empty()) ck = read_checkpoint_config(*c);
  const EmbeddingTable table = table_for(cfg, ck);
  const std::size_t top = cfg.size_value("top");
  std::vector<std::pair<std::string, std::vector<double>>> queries;
  if (auto w = cfg.find("word"); w && !w->empty()) {
    auto row = table.lookup(*w);
    if (!row) throw InferenceError("'" + *w + "' is not in the embedding table");
    queries.emplace_back(*w, std::vector<double>(row->begin(), row->end()));
  }
  if (auto f = cfg.find("vector-file"); f && !f->empty()) {
    std::size_t line_no = 0;
    for (const auto& line : read_lines(*f)) {
      ++line_no;
      if (line.empty() || line.starts_with("neighbor\t")) continue;
      auto [word, values] = parse_embedding_row(line, table.dim(), line_no);
      queries.emplace_back(word, std::vector<double>(values.begin(), values.end()));
    }
  }
  if (queries.empty()) throw UsageError("give --word or --vector-file");
  for (const auto& [word, vec] : queries) {
    std::cout << "query\t" << word << "\n";
    print_neighbors(nearest_neighbors(vec, table, top, word));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot embeddings for out-of-vocabulary words", "oov-forge"};
  app.require_subcommand(1);
  std::map<std::string, std::map<std::string, std::string>> given;
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, specs] : kCommands) {
    CLI::App* sub = app.add_subcommand(name);
    subs[name] = sub;
    auto& store = given[name];
    auto add = [&](const OptionSpec& spec) {
      std::string help = spec.help;
      if (!spec.default_value.empty() && !spec.is_flag) help += " [" + spec.default_value + "]";
      if (spec.is_flag) {
        sub->add_flag_callback("--" + spec.key, [&store, key = spec.key] { store[key] = "true"; }, help);
      } else {
        sub->add_option_function<std::string>("--" + spec.key, [&store, key = spec.key](const std::string& v) { store[key] = v; },
                                               help);
      }
    };
    for (const auto& spec : kCommon) add(spec);
    for (const auto& spec : specs) add(spec);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    std::string command;
    for (const auto& [name, sub] : subs) {
      if (sub->parsed()) command = name;
    }
    const auto& specs = kCommands.at(command);
    RunConfig cfg;
    for (const auto* list : {&kCommon, &specs}) {
      for (const auto& spec : *list) {
        if (!spec.default_value.empty()) cfg.set(spec.key, spec.default_value);
      }
    }
    const auto& flags = given[command];
    if (auto it = flags.find("config"); it != flags.end()) cfg.merge_file(it->second);
    if (const char* env = std::getenv("OOVFORGE_SEED"); env && *env) cfg.set("seed", env);
    for (const auto& [k, v] : flags) cfg.set(k, v);
    if (flags.count("second-order")) cfg.set("first-order", "false");

    if (command == "prepare") return cmd_prepare(cfg);
    if (command == "train") return cmd_train(cfg);
    if (command == "adapt") return cmd_adapt(cfg);
    if (command == "infer") return cmd_infer(cfg);
    if (command == "eval") return cmd_eval(cfg);
    return cmd_neighbors(cfg);
  } catch (const Error& e) {
    std::cerr << "oov-forge: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "oov-forge: unexpected error: " << e.what() << "\n";
    return 1;
  }
}
