#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "optenc/latex.hpp"

namespace optenc {

struct OptNode {
  std::string label;
  std::size_t arity = 0;

  bool operator==(const OptNode&) const = default;
};

/// A formula's Operator Tree. Nodes are stored in depth-first pre-order from
/// the root (index 0); edges are (parent, child) index pairs.
struct OperatorTree {
  std::vector<OptNode> nodes;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::size_t root = 0;

  std::size_t size() const { return nodes.size(); }
  bool empty() const { return nodes.empty(); }

  /// Children of each node in edge order.
  std::vector<std::vector<std::size_t>> children() const;
  /// Parent of each node; nullopt for the root.
  std::vector<std::optional<std::size_t>> parents() const;
  /// True iff `a` and `b` are joined by an edge in either direction.
  bool adjacent(std::size_t a, std::size_t b) const;

  /// Tree restricted to the first `count` pre-order nodes. A pre-order
  /// prefix is closed under parents, so the result is again a valid tree.
  OperatorTree prefix(std::size_t count) const;

  bool operator==(const OperatorTree&) const = default;
};

/// Empty string when `tree` satisfies every structural invariant, otherwise a
/// description of the first violation.
std::string validate_tree(const OperatorTree& tree);

/// Reserved labels for structural operators introduced by the parser.
namespace opt_label {
inline constexpr std::string_view sup = "SUP";
inline constexpr std::string_view sub = "SUB";
inline constexpr std::string_view frac = "FRAC";
inline constexpr std::string_view times = "TIMES";
inline constexpr std::string_view neg = "NEG";
}  // namespace opt_label

/// Parses a token stream from tokenize_latex into an Operator Tree.
///
/// Precedence (loosest first): relations, additive, multiplicative (explicit
/// `\times \div / \cdot` and juxtaposition), unary function commands, scripts.
/// All binary levels associate to the left. Parentheses and `{}` groups only
/// group; `\left`/`\right` are accepted around `(`/`)`.
///
/// Throws ParseError with the offending token index for anything outside that
/// subset.
OperatorTree parse_to_opt(const std::vector<MathToken>& tokens);

/// Convenience: tokenize then parse.
OperatorTree parse_latex(std::string_view latex);

/// LISP-style pre-order record, e.g. `(= (SUP (c) (2)) (+ (a) (b)))`. Label
/// characters `(`, `)` and whitespace are backslash-escaped.
std::string serialize_opt(const OperatorTree& tree);

/// Inverse of serialize_opt. Throws FormatError on malformed input.
OperatorTree deserialize_opt(std::string_view record);

}  // namespace optenc
