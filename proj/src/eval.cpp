#include "optenc/eval.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "optenc/corpus.hpp"
#include "optenc/latex.hpp"
#include "optenc/opt.hpp"

namespace optenc {
namespace fs = std::filesystem;

Pooling parse_pooling(std::string_view name) {
  if (name == "mean2") return Pooling::mean2;
  if (name == "cls2") return Pooling::cls2;
  throw ConfigError("unknown pooling '" + std::string(name) + "' (expected mean2|cls2)");
}

std::string_view to_string(Pooling p) { return p == Pooling::mean2 ? "mean2" : "cls2"; }

Vector pool_hidden_states(const ForwardTrace& trace, const ModelInput& input, Pooling pooling) {
  const std::size_t layers = trace.hidden_states.size();
  const std::size_t first = layers >= 2 ? layers - 2 : 0;
  Vector acc = Vector::Zero(trace.final_hidden().cols());
  std::size_t used_layers = 0;
  for (std::size_t l = first; l < layers; ++l, ++used_layers) {
    const Matrix& hs = trace.hidden_states[l];
    if (pooling == Pooling::cls2) {
      acc += hs.row(0).transpose();
      continue;
    }
    Vector sum = Vector::Zero(hs.cols());
    std::size_t count = 0;
    for (std::size_t i = 0; i < input.ids.size(); ++i) {
      if (Vocab::is_special(input.ids[i]) && input.ids[i] != Vocab::kUnk) continue;
      sum += hs.row(static_cast<Eigen::Index>(i)).transpose();
      ++count;
    }
    if (count > 0) acc += sum / static_cast<double>(count);
  }
  return acc / static_cast<double>(used_layers);
}

FormulaEmbedding embed(std::string_view formula_latex, const Checkpoint& checkpoint,
                       const Vocab& vocab, Ablation ablation, Pooling pooling,
                       const std::vector<std::string>* context, std::string id) {
  FormulaContextPair pair;
  pair.formula_latex = std::string(formula_latex);
  pair.formula_tokens = tokenize_latex(formula_latex);
  pair.opt = parse_to_opt(pair.formula_tokens);
  if (context) {
    pair.context_tokens = *context;
  } else if (ablation == Ablation::full) {
    ablation = Ablation::no_context;
  } else if (ablation == Ablation::no_opt) {
    ablation = Ablation::formula_only;
  }
  const ModelInput input =
      assemble(pair, vocab, static_cast<std::size_t>(checkpoint.config.max_len), ablation);
  const ForwardTrace trace = forward(input, checkpoint.params, checkpoint.config);
  FormulaEmbedding e;
  e.id = id.empty() ? std::string(formula_latex) : std::move(id);
  e.vector = pool_hidden_states(trace, input, pooling);
  return e;
}

RankedList rerank(const FormulaEmbedding& query, std::span<const FormulaEmbedding> candidates) {
  RankedList out;
  out.query_id = query.id;
  out.entries.reserve(candidates.size());
  for (const auto& c : candidates) out.entries.emplace_back(c.id, cosine(query, c));
  std::sort(out.entries.begin(), out.entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return out;
}

double bpref(const RankedList& run, const QrelSet& qrels, int relevance_threshold) {
  const auto q = qrels.find(run.query_id);
  if (q == qrels.end()) throw NoRelevant("query '" + run.query_id + "' has no judgments");
  std::size_t relevant = 0, nonrelevant = 0;
  for (const auto& [doc, rating] : q->second) (rating >= relevance_threshold ? relevant : nonrelevant)++;
  if (relevant == 0)
    throw NoRelevant("query '" + run.query_id + "' has no document rated >= " +
                     std::to_string(relevance_threshold));
  const double denom = static_cast<double>(std::min(relevant, nonrelevant));
  std::size_t nonrel_above = 0;
  double sum = 0.0;
  std::set<std::string> seen;
  for (const auto& [doc, score] : run.entries) {
    if (!seen.insert(doc).second) continue;
    const auto it = q->second.find(doc);
    if (it == q->second.end()) continue;
    if (it->second >= relevance_threshold) {
      sum += nonrelevant == 0
                 ? 1.0
                 : 1.0 - static_cast<double>(std::min(nonrel_above, relevant)) / denom;
    } else {
      ++nonrel_above;
    }
  }
  return sum / static_cast<double>(relevant);
}

double harmonic_mean(double a, double b) { return a + b == 0.0 ? 0.0 : 2.0 * a * b / (a + b); }

nlohmann::ordered_json RetrievalReport::to_json() const {
  nlohmann::ordered_json j;
  j["partial"] = partial;
  j["full"] = full;
  j["h_mean"] = h_mean;
  j["queries_partial"] = queries_partial;
  j["queries_full"] = queries_full;
  j["skipped_partial"] = skipped_partial;
  j["skipped_full"] = skipped_full;
  return j;
}

RetrievalReport eval_retrieval(std::span<const RankedList> runs, const QrelSet& qrels) {
  RetrievalReport report;
  double sum_p = 0.0, sum_f = 0.0;
  for (const auto& run : runs) {
    if (!qrels.count(run.query_id))
      throw FormatError("run query '" + run.query_id + "' is missing from the qrels");
    try {
      sum_p += bpref(run, qrels, kPartialRelevance);
      ++report.queries_partial;
    } catch (const NoRelevant&) {
      report.skipped_partial.push_back(run.query_id);
    }
    try {
      sum_f += bpref(run, qrels, kFullRelevance);
      ++report.queries_full;
    } catch (const NoRelevant&) {
      report.skipped_full.push_back(run.query_id);
    }
  }
  if (report.queries_partial) report.partial = sum_p / static_cast<double>(report.queries_partial);
  if (report.queries_full) report.full = sum_f / static_cast<double>(report.queries_full);
  report.h_mean = harmonic_mean(report.partial, report.full);
  return report;
}

nlohmann::ordered_json ClassificationReport::to_json() const {
  nlohmann::ordered_json j;
  j["macro_precision"] = macro_precision;
  j["macro_recall"] = macro_recall;
  j["macro_f1"] = macro_f1;
  j["precision"] = precision;
  j["recall"] = recall;
  j["f1"] = f1;
  j["empty_classes"] = empty_classes;
  return j;
}

ClassificationReport eval_classify(std::span<const std::pair<int, int>> predictions, int classes) {
  if (classes < 1) throw ConfigError("classes must be >= 1");
  const auto k = static_cast<std::size_t>(classes);
  std::vector<std::size_t> tp(k, 0), fp(k, 0), fn(k, 0);
  for (const auto& [gold, pred] : predictions) {
    if (gold < 0 || gold >= classes || pred < 0 || pred >= classes)
      throw FormatError("class label outside [0, " + std::to_string(classes) + ")");
    const auto g = static_cast<std::size_t>(gold);
    const auto p = static_cast<std::size_t>(pred);
    if (g == p) {
      ++tp[g];
    } else {
      ++fp[p];
      ++fn[g];
    }
  }
  auto ratio = [](std::size_t a, std::size_t b) {
    return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b);
  };
  ClassificationReport r;
  for (std::size_t c = 0; c < k; ++c) {
    const double p = ratio(tp[c], tp[c] + fp[c]);
    const double rc = ratio(tp[c], tp[c] + fn[c]);
    r.precision.push_back(p);
    r.recall.push_back(rc);
    r.f1.push_back(p + rc == 0.0 ? 0.0 : 2.0 * p * rc / (p + rc));
    if (tp[c] + fp[c] + fn[c] == 0) r.empty_classes.push_back(static_cast<int>(c));
  }
  const double inv = 1.0 / static_cast<double>(k);
  for (std::size_t c = 0; c < k; ++c) {
    r.macro_precision += r.precision[c];
    r.macro_recall += r.recall[c];
    r.macro_f1 += r.f1[c];
  }
  r.macro_precision *= inv;
  r.macro_recall *= inv;
  r.macro_f1 *= inv;
  return r;
}

std::vector<DemoRow> similarity_demo(std::string_view anchor, std::span<const std::string> others,
                                     const Checkpoint& checkpoint, const Vocab& vocab,
                                     Ablation ablation, Pooling pooling) {
  const FormulaEmbedding a = embed(anchor, checkpoint, vocab, ablation, pooling);
  std::vector<FormulaEmbedding> embs;
  embs.reserve(others.size());
  for (const auto& f : others) embs.push_back(embed(f, checkpoint, vocab, ablation, pooling));
  std::vector<DemoRow> rows;
  if (embs.empty()) return rows;
  const RankedList ranked = rerank(a, embs);
  for (std::size_t i = 0; i < ranked.entries.size(); ++i)
    rows.push_back(DemoRow{i + 1, ranked.entries[i].first, ranked.entries[i].second});
  return rows;
}

std::string format_demo_table(std::string_view anchor, std::span<const DemoRow> rows) {
  std::size_t width = 7;
  for (const auto& r : rows) width = std::max(width, r.formula.size());
  std::ostringstream out;
  out << "ranking by cosine similarity with " << anchor << '\n';
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-5s ", "Rank");
  out << buf << "Formula" << std::string(width - 7 + 2, ' ') << "Similarity\n";
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-5zu ", r.rank);
    out << buf << r.formula << std::string(width - r.formula.size() + 2, ' ');
    std::snprintf(buf, sizeof buf, "%.4f", r.similarity);
    out << buf << '\n';
  }
  return out.str();
}

std::vector<std::string> default_demo_formulas() {
  return {"\\frac{a+b}{c+d}",  "(a+b)/(c+d)",       "(a+b)\\div(c+d)",   "(a+b)\\times(c+d)",
          "\\frac{1+2}{3+4}",  "\\frac{5+6}{7+8}",  "(1+2)\\times(3+4)", "(1+2)/(3+4)",
          "(5+6)\\div(7+8)",   "\\frac{a-b}{c-d}",  "\\frac{c+d}{a+b}",  "a+b+c+d",
          "\\frac{a}{b}+\\frac{c}{d}", "\\frac{a\\times b}{c\\times d}", "a+\\frac{b}{c}+d"};
}

QrelSet read_qrels(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  QrelSet q;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string query, iteration, doc;
    int rating = 0;
    if (!(ls >> query)) continue;
    if (!(ls >> iteration >> doc >> rating))
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected 'query 0 doc rating'");
    if (rating < 0 || rating > 4)
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": rating outside 0..4");
    q[query][doc] = rating;
  }
  return q;
}

void write_qrels(const fs::path& path, const QrelSet& qrels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& [query, docs] : qrels)
    for (const auto& [doc, rating] : docs) out << query << " 0 " << doc << ' ' << rating << '\n';
}

std::vector<RankedList> read_run(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<RankedList> runs;
  std::map<std::string, std::size_t> index;
  std::vector<std::vector<std::tuple<long, std::string, double>>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string query, doc;
    long rank = 0;
    double score = 0.0;
    if (!(ls >> query)) continue;
    if (!(ls >> doc >> rank >> score))
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected 'query doc rank score'");
    auto [it, inserted] = index.try_emplace(query, runs.size());
    if (inserted) {
      runs.push_back(RankedList{query, {}});
      rows.emplace_back();
    }
    rows[it->second].emplace_back(rank, doc, score);
  }
  for (std::size_t i = 0; i < runs.size(); ++i) {
    std::stable_sort(rows[i].begin(), rows[i].end(),
                     [](const auto& a, const auto& b) { return std::get<0>(a) < std::get<0>(b); });
    for (auto& [rank, doc, score] : rows[i]) runs[i].entries.emplace_back(doc, score);
  }
  return runs;
}

void write_run(const fs::path& path, std::span<const RankedList> runs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  char buf[64];
  for (const auto& run : runs) {
    for (std::size_t i = 0; i < run.entries.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", run.entries[i].second);
      out << run.query_id << ' ' << run.entries[i].first << ' ' << (i + 1) << ' ' << buf << '\n';
    }
  }
}

void write_embeddings(const fs::path& path, std::span<const FormulaEmbedding> embs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& e : embs) {
    nlohmann::ordered_json j;
    j["id"] = e.id;
    j["vector"] = std::vector<double>(e.vector.data(), e.vector.data() + e.vector.size());
    out << j.dump() << '\n';
  }
}

std::vector<FormulaEmbedding> read_embeddings(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<FormulaEmbedding> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      FormulaEmbedding e;
      e.id = j.at("id").get<std::string>();
      const auto v = j.at("vector").get<std::vector<double>>();
      e.vector = Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw FormatError(path.string() + ": " + ex.what());
    }
  }
  return out;
}

}  // namespace optenc
