#include "oovforge/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "oovforge/container.hpp"
#include "oovforge/errors.hpp"

namespace oovforge {

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw EvaluationError("correlation of sequences with different lengths");
  if (a.size() < 2) throw EvaluationError("correlation needs at least two pairs");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) throw EvaluationError("correlation undefined for a constant sequence");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw EvaluationError("spearman: sequences differ in length");
  if (a.size() < 2) throw EvaluationError("spearman: need at least two pairs");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a[i]) || !std::isfinite(b[i])) throw EvaluationError("spearman: non-finite value");
  }
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  return pearson(ra, rb);
}

// ---- benchmark TSV ------------------------------------------------------------------

namespace {

std::vector<std::string> split(std::string_view s, std::string_view sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    auto end = s.find(sep, pos);
    if (end == std::string_view::npos) {
      out.emplace_back(s.substr(pos));
      return out;
    }
    out.emplace_back(s.substr(pos, end - pos));
    pos = end + sep.size();
  }
}

[[noreturn]] void bad_line(std::size_t line, const std::string& what) {
  throw EvaluationError("benchmark line " + std::to_string(line) + ": " + what);
}

double parse_rating(const std::string& s, std::size_t line) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    bad_line(line, "bad rating '" + s + "'");
  }
  return v;
}

std::string join(std::span<const std::string> parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

void check_item(const EvalItem& item, std::size_t line) {
  if (item.pseudo_word.empty()) bad_line(line, "empty pseudo-word");
  if (item.shot == 0) bad_line(line, "shot must be positive");
  if (item.contexts.size() != item.shot) {
    bad_line(line, "shot " + std::to_string(item.shot) + " but " + std::to_string(item.contexts.size()) + " contexts");
  }
  for (const auto& c : item.contexts) {
    std::vector<std::string> tokens;
    try {
      tokens = tokenize(c);
    } catch (const IngestionError& e) {
      bad_line(line, e.what());
    }
    if (std::find(tokens.begin(), tokens.end(), item.pseudo_word) == tokens.end()) {
      bad_line(line, "context does not contain '" + item.pseudo_word + "'");
    }
  }
  if (item.probes.size() != item.human.size()) bad_line(line, "probe and rating counts differ");
  if (item.probes.size() < 2) bad_line(line, "need at least two probes");
  for (const auto& p : item.probes) {
    if (p.empty()) bad_line(line, "empty probe word");
  }
}

}  // namespace

std::vector<EvalItem> parse_benchmark(std::istream& in) {
  std::vector<EvalItem> items;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split(line, "\t");
    if (fields.size() != 5) bad_line(n, "expected 5 tab-separated fields, got " + std::to_string(fields.size()));
    EvalItem item;
    item.pseudo_word = fields[0];
    unsigned shot = 0;
    auto [ptr, ec] = std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), shot);
    if (ec != std::errc() || ptr != fields[1].data() + fields[1].size()) bad_line(n, "bad shot '" + fields[1] + "'");
    item.shot = shot;
    item.contexts = split(fields[2], "|||");
    item.probes = split(fields[3], ",");
    for (const auto& r : split(fields[4], ",")) item.human.push_back(parse_rating(r, n));
    check_item(item, n);
    items.push_back(std::move(item));
  }
  return items;
}

std::vector<EvalItem> load_benchmark(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw EvaluationError("cannot open benchmark '" + path.string() + "'");
  return parse_benchmark(in);
}

std::string format_benchmark_line(const EvalItem& item) {
  std::vector<std::string> ratings;
  for (double h : item.human) ratings.push_back(format_double(h));
  return item.pseudo_word + "\t" + std::to_string(item.shot) + "\t" + join(item.contexts, "|||") + "\t" +
         join(item.probes, ",") + "\t" + join(ratings, ",");
}

void write_benchmark(std::span<const EvalItem> items, std::ostream& out) {
  for (const auto& item : items) out << format_benchmark_line(item) << '\n';
}

void save_benchmark(std::span<const EvalItem> items, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  write_benchmark(items, out);
}

std::vector<EvalItem> import_chimera(std::istream& in) {
  std::vector<EvalItem> items;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split(line, "\t");
    if (fields.size() < 4) bad_line(n, "expected id, passage, probes, ratings");
    if (n == 1 && !fields[3].empty() && !std::isdigit(static_cast<unsigned char>(fields[3][0]))) continue;  // header
    EvalItem item;
    std::string id;
    for (char c : fields[0]) {
      if (std::isalnum(static_cast<unsigned char>(c))) id += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    if (id.empty()) id = std::to_string(n);
    item.pseudo_word = "chimera_" + id;
    for (auto sentence : split(fields[1], "@@")) {
      std::string lowered;
      for (char c : sentence) lowered += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      std::string replaced;
      for (std::size_t i = 0; i < lowered.size();) {
        if (lowered.compare(i, 3, "___") == 0) {
          replaced += " " + item.pseudo_word + " ";
          while (i < lowered.size() && lowered[i] == '_') ++i;
        } else {
          replaced += lowered[i++];
        }
      }
      std::istringstream words(replaced);
      std::string sentence_text;
      for (std::string w; words >> w;) sentence_text += (sentence_text.empty() ? "" : " ") + w;
      if (sentence_text.empty()) continue;
      item.contexts.push_back(sentence_text);
    }
    item.shot = static_cast<unsigned>(item.contexts.size());
    for (auto p : split(fields[2], ",")) {
      std::string lowered;
      for (char c : p) {
        if (c != ' ') lowered += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      }
      item.probes.push_back(lowered);
    }
    for (auto r : split(fields[3], ",")) {
      r.erase(std::remove(r.begin(), r.end(), ' '), r.end());
      item.human.push_back(parse_rating(r, n));
    }
    check_item(item, n);
    items.push_back(std::move(item));
  }
  return items;
}

// ---- scoring --------------------------------------------------------------------

double cosine_similarity(std::span<const double> u, std::span<const float> v) {
  if (u.size() != v.size()) throw DimensionError("cosine: dimension mismatch");
  double uv = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uv += u[i] * v[i];
    uu += u[i] * u[i];
    vv += static_cast<double>(v[i]) * v[i];
  }
  if (uu == 0.0 || vv == 0.0) return 0.0;
  return uv / std::sqrt(uu * vv);
}

namespace {

ItemResult score_item(std::size_t index, const EvalItem& item, const InferFn& infer, const EmbeddingTable& table) {
  ItemResult r;
  r.index = index;
  r.pseudo_word = item.pseudo_word;
  r.shot = item.shot;
  try {
    const auto v = infer(item);
    if (v.size() != table.dim()) throw DimensionError("method returned a vector of the wrong dimension");
    if (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; })) {
      throw NumericError("method produced a zero vector");
    }
    for (std::size_t i = 0; i < item.probes.size(); ++i) {
      const auto row = table.lookup(item.probes[i]);
      if (!row) {
        ++r.probes_dropped;
        continue;
      }
      r.probes.push_back(item.probes[i]);
      r.machine.push_back(cosine_similarity(v, *row));
      r.human.push_back(item.human[i]);
    }
    r.rho = spearman(r.machine, r.human);
  } catch (const std::exception& e) {
    r.failed = true;
    r.error = e.what();
  }
  return r;
}

}  // namespace

std::vector<ShotSummary> summarize(std::span<const ItemResult> items) {
  std::map<unsigned, std::vector<const ItemResult*>> by_shot;
  for (const auto& r : items) by_shot[r.shot].push_back(&r);
  std::vector<ShotSummary> out;
  for (const auto& [shot, group] : by_shot) {
    ShotSummary s;
    s.shot = shot;
    std::vector<double> machine, human;
    double total = 0.0;
    for (const auto* r : group) {
      if (r->failed) {
        ++s.failed;
        continue;
      }
      ++s.items;
      total += r->rho;
      machine.insert(machine.end(), r->machine.begin(), r->machine.end());
      human.insert(human.end(), r->human.begin(), r->human.end());
    }
    s.mean_rho = s.items ? total / static_cast<double>(s.items) : std::nan("");
    try {
      s.pooled_rho = s.items ? spearman(machine, human) : std::nan("");
    } catch (const EvaluationError&) {
      s.pooled_rho = std::nan("");
    }
    out.push_back(s);
  }
  return out;
}

double MethodReport::overall_mean_rho() const {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& r : items) {
    if (r.failed) continue;
    total += r.rho;
    ++n;
  }
  return n ? total / static_cast<double>(n) : std::nan("");
}

MethodReport evaluate_method(std::string name, std::span<const EvalItem> items, const InferFn& infer,
                             const EmbeddingTable& table, std::size_t threads) {
  const auto started = std::chrono::steady_clock::now();
  MethodReport report;
  report.method = std::move(name);
  report.items.resize(items.size());
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, items.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < items.size(); ++i) report.items[i] = score_item(i, items[i], infer, table);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < items.size(); i += workers) report.items[i] = score_item(i, items[i], infer, table);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (const auto& r : report.items) report.probes_dropped += r.probes_dropped;
  report.shots = summarize(report.items);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

// ---- reports ------------------------------------------------------------------------

namespace {

std::string fixed(double v, int digits = 4) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string csv_double(double v) { return std::isnan(v) ? "nan" : format_double(v); }

std::string join_doubles(std::span<const double> v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ';';
    out += format_double(v[i]);
  }
  return out;
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::vector<std::string> EvalReport::ranking() const {
  std::vector<std::pair<double, std::string>> scored;
  for (const auto& m : methods) {
    const double rho = m.overall_mean_rho();
    scored.emplace_back(std::isnan(rho) ? -2.0 : rho, m.method);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<std::string> out;
  for (auto& [rho, name] : scored) out.push_back(name);
  return out;
}

std::string EvalReport::to_csv() const {
  std::string out = "method,shot,items,failed,probes_dropped,mean_rho,pooled_rho\n";
  for (const auto& m : methods) {
    for (const auto& s : m.shots) {
      std::size_t dropped = 0;
      for (const auto& r : m.items) {
        if (r.shot == s.shot) dropped += r.probes_dropped;
      }
      out += m.method + "," + std::to_string(s.shot) + "," + std::to_string(s.items) + "," + std::to_string(s.failed) +
             "," + std::to_string(dropped) + "," + csv_double(s.mean_rho) + "," + csv_double(s.pooled_rho) + "\n";
    }
  }
  return out;
}

std::string EvalReport::items_csv() const {
  std::string out = "method,index,pseudo_word,shot,status,rho,probes,machine,human\n";
  for (const auto& m : methods) {
    for (const auto& r : m.items) {
      std::string probes;
      for (std::size_t i = 0; i < r.probes.size(); ++i) probes += (i ? ";" : "") + r.probes[i];
      out += m.method + "," + std::to_string(r.index) + "," + r.pseudo_word + "," + std::to_string(r.shot) + "," +
             (r.failed ? "failed" : "ok") + "," + (r.failed ? "nan" : format_double(r.rho)) + "," + probes + "," +
             join_doubles(r.machine) + "," + join_doubles(r.human) + "\n";
    }
  }
  return out;
}

std::string EvalReport::to_text() const {
  std::vector<std::vector<std::string>> rows{{"method", "shot", "items", "failed", "dropped", "mean_rho", "pooled_rho"}};
  for (const auto& m : methods) {
    for (const auto& s : m.shots) {
      std::size_t dropped = 0;
      for (const auto& r : m.items) {
        if (r.shot == s.shot) dropped += r.probes_dropped;
      }
      rows.push_back({m.method, std::to_string(s.shot), std::to_string(s.items), std::to_string(s.failed),
                      std::to_string(dropped), fixed(s.mean_rho), fixed(s.pooled_rho)});
    }
  }
  std::vector<std::size_t> width(rows[0].size(), 0);
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  std::string out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < rows[i].size(); ++c) {
      const auto& cell = rows[i][c];
      const std::string pad(width[c] - cell.size(), ' ');
      out += c == 0 ? cell + pad : "  " + pad + cell;
    }
    out += '\n';
    if (i == 0) {
      std::size_t total = 0;
      for (std::size_t c = 0; c < width.size(); ++c) total += width[c] + (c ? 2 : 0);
      out += std::string(total, '-') + '\n';
    }
  }
  const auto order = ranking();
  if (!order.empty()) out += "ranking: " + join(order, " > ") + "\n";
  return out;
}

std::string EvalReport::to_svg() const {
  std::vector<unsigned> shots;
  for (const auto& m : methods) {
    for (const auto& s : m.shots) {
      if (std::find(shots.begin(), shots.end(), s.shot) == shots.end()) shots.push_back(s.shot);
    }
  }
  std::sort(shots.begin(), shots.end());
  const double bar = 18.0, gap = 24.0, height = 200.0, top = 20.0, left = 50.0;
  const double group = bar * static_cast<double>(std::max<std::size_t>(1, methods.size())) + gap;
  const double width = left + group * static_cast<double>(std::max<std::size_t>(1, shots.size())) + 160.0;
  static const char* const palette[] = {"#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1"};
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fixed(width, 0) + "\" height=\"" +
                    fixed(top + height + 40.0, 0) + "\">\n";
  const double zero_y = top + height / 2.0;  // rho in [-1, 1]
  out += "<line x1=\"" + fixed(left, 0) + "\" y1=\"" + fixed(zero_y, 1) + "\" x2=\"" + fixed(width - 150.0, 0) +
         "\" y2=\"" + fixed(zero_y, 1) + "\" stroke=\"black\"/>\n";
  for (double tick : {-1.0, -0.5, 0.0, 0.5, 1.0}) {
    out += "<text x=\"5\" y=\"" + fixed(zero_y - tick * height / 2.0 + 4.0, 1) + "\" font-size=\"10\">" + fixed(tick, 1) +
           "</text>\n";
  }
  for (std::size_t si = 0; si < shots.size(); ++si) {
    const double gx = left + group * static_cast<double>(si);
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
      for (const auto& s : methods[mi].shots) {
        if (s.shot != shots[si] || std::isnan(s.mean_rho)) continue;
        const double h = std::abs(s.mean_rho) * height / 2.0;
        const double y = s.mean_rho >= 0 ? zero_y - h : zero_y;
        out += "<rect x=\"" + fixed(gx + bar * static_cast<double>(mi), 1) + "\" y=\"" + fixed(y, 1) + "\" width=\"" +
               fixed(bar - 2.0, 1) + "\" height=\"" + fixed(h, 1) + "\" fill=\"" + palette[mi % 7] + "\"><title>" +
               xml_escape(methods[mi].method) + " " + std::to_string(s.shot) + "-shot: " + fixed(s.mean_rho) +
               "</title></rect>\n";
      }
    }
    out += "<text x=\"" + fixed(gx, 1) + "\" y=\"" + fixed(top + height + 20.0, 1) + "\" font-size=\"11\">" +
           std::to_string(shots[si]) + "-shot</text>\n";
  }
  for (std::size_t mi = 0; mi < methods.size(); ++mi) {
    const double y = top + 14.0 * static_cast<double>(mi);
    out += "<rect x=\"" + fixed(width - 140.0, 0) + "\" y=\"" + fixed(y, 1) + "\" width=\"10\" height=\"10\" fill=\"" +
           palette[mi % 7] + "\"/><text x=\"" + fixed(width - 125.0, 0) + "\" y=\"" + fixed(y + 9.0, 1) +
           "\" font-size=\"11\">" + xml_escape(methods[mi].method) + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

// ---- neighbors ---------------------------------------------------------------------

std::vector<Neighbor> nearest_neighbors(std::span<const double> query, const EmbeddingTable& table, std::size_t top_k,
                                        std::string_view exclude) {
  if (top_k < 1) throw UsageError("nearest_neighbors: top_k must be at least 1");
  if (query.size() != table.dim()) throw DimensionError("nearest_neighbors: query has the wrong dimension");
  std::vector<Neighbor> all;
  all.reserve(table.size());
  for (std::size_t r = 0; r < table.size(); ++r) {
    if (!exclude.empty() && table.word(r) == exclude) continue;
    all.push_back({table.word(r), cosine_similarity(query, table.row(r))});
  }
  const auto better = [](const Neighbor& a, const Neighbor& b) {
    return a.cosine != b.cosine ? a.cosine > b.cosine : a.word < b.word;
  };
  const std::size_t k = std::min(top_k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), better);
  all.resize(k);
  return all;
}

}  // namespace oovforge
