#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "optenc/latex.hpp"
#include "optenc/opt.hpp"

namespace optenc {

inline constexpr std::string_view kMathPlaceholder = "[MATH]";
inline constexpr std::size_t kDefaultMinContextChars = 400;

/// One extracted equation with its surrounding prose.
struct FormulaContextPair {
  std::string formula_latex;
  std::vector<MathToken> formula_tokens;
  /// Lowercased words with exactly one kMathPlaceholder at the formula site.
  std::vector<std::string> context_tokens;
  OperatorTree opt;
  std::string source_id;
  std::optional<std::string> topic;
  /// Byte length of the cleaned prose window. Not serialized; 0 for pairs
  /// read back from a dataset file.
  std::size_t context_chars = 0;

  /// Structural equality over the serialized fields.
  bool same_record(const FormulaContextPair& other) const;
};

/// Empty when the pair satisfies its invariants (one placeholder, OPT
/// re-derivable from the tokens); otherwise the first violation.
std::string validate_pair(const FormulaContextPair& pair);

/// Lowercased word split; anything that is not an ASCII letter/digit or a
/// non-ASCII byte separates words and is dropped.
std::vector<std::string> tokenize_context(std::string_view text);

struct ExtractStats {
  std::size_t equations = 0;
  std::size_t parse_failures = 0;
  /// Equations whose window between neighbouring equations and document
  /// bounds cannot reach the minimum context length.
  std::size_t context_failures = 0;

  std::size_t skipped() const { return parse_failures + context_failures; }
};

struct Extraction {
  std::vector<FormulaContextPair> pairs;
  ExtractStats stats;
};

/// Finds every `\begin{equation}...\end{equation}` in a TeX source and turns
/// those that parse into formula-context pairs. Comments and markup are
/// stripped from the prose; each context window grows symmetrically around
/// the equation, snapped to word boundaries, and never crosses a neighbouring
/// equation. `source_name` prefixes the generated source ids (`name#k`).
Extraction extract_pairs(std::string_view tex_source,
                         std::size_t min_context_chars = kDefaultMinContextChars,
                         std::string_view source_name = "");

struct DatasetSummary {
  std::size_t files_read = 0;
  std::size_t pairs_written = 0;
  std::size_t formulas_skipped = 0;
  std::size_t parse_failures = 0;
  std::size_t context_failures = 0;
  std::vector<std::string> io_errors;

  nlohmann::ordered_json to_json() const;
};

struct DatasetOptions {
  std::size_t min_context_chars = kDefaultMinContextChars;
  /// Label each pair with the name of its file's parent directory.
  bool topic_from_dir = false;
  unsigned threads = 1;
};

/// Expands directories into their `*.tex` files (sorted) and keeps files in
/// the given order.
std::vector<std::filesystem::path> expand_inputs(std::span<const std::filesystem::path> inputs);

/// Extracts pairs from every input and writes them as JSON lines to `out`,
/// plus a `<out>.meta.json` describing the preprocessing. Unreadable files are
/// reported in the summary and skipped.
DatasetSummary build_dataset(std::span<const std::filesystem::path> inputs,
                             const std::filesystem::path& out,
                             const DatasetOptions& options = {});

nlohmann::ordered_json pair_to_json(const FormulaContextPair& pair);
FormulaContextPair pair_from_json(const nlohmann::json& j);

void write_dataset(const std::filesystem::path& path, std::span<const FormulaContextPair> pairs);
std::vector<FormulaContextPair> read_dataset(const std::filesystem::path& path);

}  // namespace optenc
