#pragma once

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "optenc/checkpoint.hpp"
#include "optenc/error.hpp"
#include "optenc/inputs.hpp"
#include "optenc/model.hpp"
#include "optenc/vocab.hpp"

namespace optenc {

/// `mean2`: per-layer mean over non-special, non-[PAD] positions of the last
/// two hidden states, then the mean of those two vectors. `cls2`: mean of the
/// [CLS] vector over the same two layers.
enum class Pooling { mean2, cls2 };

Pooling parse_pooling(std::string_view name);
std::string_view to_string(Pooling p);

struct FormulaEmbedding {
  std::string id;
  Vector vector;
};

Vector pool_hidden_states(const ForwardTrace& trace, const ModelInput& input, Pooling pooling);

/// Embeds one formula. Without `context` the input carries no context
/// segment (full -> no_context, no_opt -> formula_only); with one, the words
/// are used as given. Propagates TokenizeError / ParseError.
FormulaEmbedding embed(std::string_view formula_latex, const Checkpoint& checkpoint,
                       const Vocab& vocab, Ablation ablation = Ablation::full,
                       Pooling pooling = Pooling::mean2,
                       const std::vector<std::string>* context = nullptr, std::string id = {});

/// Cosine similarity of two equally sized vectors. Throws ZeroVector when
/// either has zero norm and ShapeError on a size mismatch.
template <typename A, typename B>
double cosine(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  if (a.size() != b.size()) throw ShapeError("cosine of vectors with different sizes");
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw ZeroVector("cosine with a zero vector");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

inline double cosine(const FormulaEmbedding& a, const FormulaEmbedding& b) {
  return cosine(a.vector, b.vector);
}

struct RankedList {
  std::string query_id;
  /// (document id, score), scores non-increasing.
  std::vector<std::pair<std::string, double>> entries;
};

/// Candidates sorted by cosine to the query, descending; ties by id ascending.
RankedList rerank(const FormulaEmbedding& query, std::span<const FormulaEmbedding> candidates);

/// query id -> (document id -> rating 0..4).
using QrelSet = std::map<std::string, std::map<std::string, int>>;

inline constexpr int kPartialRelevance = 1;
inline constexpr int kFullRelevance = 3;

/// TREC bpref. With R judged relevant (rating >= threshold) and N judged
/// non-relevant documents for the query: (1/R) * sum over retrieved relevant
/// r of (1 - min(n_r, R) / min(R, N)), where n_r counts judged non-relevant
/// documents ranked above r. Unjudged documents are ignored; with N = 0 each
/// retrieved relevant document counts 1. Throws NoRelevant when R = 0.
double bpref(const RankedList& run, const QrelSet& qrels, int relevance_threshold);

double harmonic_mean(double a, double b);

struct RetrievalReport {
  double partial = 0.0;
  double full = 0.0;
  double h_mean = 0.0;
  std::size_t queries_partial = 0;
  std::size_t queries_full = 0;
  /// Queries without a relevant document at that threshold.
  std::vector<std::string> skipped_partial;
  std::vector<std::string> skipped_full;

  nlohmann::ordered_json to_json() const;
};

/// Mean bpref over the runs at the partial (>= 1) and full (>= 3)
/// thresholds. Throws FormatError for a run whose query has no judgments.
RetrievalReport eval_retrieval(std::span<const RankedList> runs, const QrelSet& qrels);

struct ClassificationReport {
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> precision, recall, f1;
  /// Classes that never occur as gold or predicted label.
  std::vector<int> empty_classes;

  nlohmann::ordered_json to_json() const;
};

/// Unweighted mean of per-class precision, recall and F1 over `classes`
/// classes, with 0/0 taken as 0. Pairs are (gold, predicted).
ClassificationReport eval_classify(std::span<const std::pair<int, int>> predictions, int classes);

struct DemoRow {
  std::size_t rank;
  std::string formula;
  double similarity;
};

/// Ranks `others` by cosine similarity to `anchor`.
std::vector<DemoRow> similarity_demo(std::string_view anchor, std::span<const std::string> others,
                                     const Checkpoint& checkpoint, const Vocab& vocab,
                                     Ablation ablation = Ablation::full,
                                     Pooling pooling = Pooling::mean2);

/// Rank / Formula / Similarity table.
std::string format_demo_table(std::string_view anchor, std::span<const DemoRow> rows);

/// Formula list used for the qualitative comparison against \frac{a+b}{c+d}.
std::vector<std::string> default_demo_formulas();

/// `query_id 0 doc_id rating` per line.
QrelSet read_qrels(const std::filesystem::path& path);
void write_qrels(const std::filesystem::path& path, const QrelSet& qrels);
/// `query_id doc_id rank score` per line; lists come back in file order of
/// first appearance, entries sorted by rank.
std::vector<RankedList> read_run(const std::filesystem::path& path);
void write_run(const std::filesystem::path& path, std::span<const RankedList> runs);

/// JSON lines `{"id": ..., "vector": [...]}`.
void write_embeddings(const std::filesystem::path& path, std::span<const FormulaEmbedding> embs);
std::vector<FormulaEmbedding> read_embeddings(const std::filesystem::path& path);

}  // namespace optenc
