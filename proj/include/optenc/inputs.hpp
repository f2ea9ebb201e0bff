#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "optenc/corpus.hpp"
#include "optenc/opt.hpp"
#include "optenc/rng.hpp"
#include "optenc/vocab.hpp"

namespace optenc {

/// Which segments (and hence which pre-training tasks) are present.
enum class Ablation { full, no_opt, no_context, formula_only };

Ablation parse_ablation(std::string_view name);
std::string_view to_string(Ablation a);
inline bool uses_context(Ablation a) { return a == Ablation::full || a == Ablation::no_opt; }
inline bool uses_nodes(Ablation a) { return a == Ablation::full || a == Ablation::no_context; }

inline constexpr int kSegmentFormula = 0;
inline constexpr int kSegmentContext = 1;
inline constexpr int kSegmentNodes = 2;

/// Symmetric 0/1 attention gate; entry (i, j) = 1 lets position i attend j.
using MaskMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Half-open index range [begin, end).
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool contains(std::size_t i) const { return i >= begin && i < end; }
};

enum class MlmAction { mask, random, keep };

struct MlmLabel {
  std::size_t position;
  TokenId original;
  MlmAction action;
};

/// Pair of sequence positions inside the node span with its adjacency bit.
struct MspLabel {
  std::size_t i;
  std::size_t j;
  int delta;
};

struct ModelInput {
  std::vector<TokenId> ids;
  std::vector<int> segments;
  std::vector<int> positions;
  MaskMatrix mask;
  Span formula_span;
  Span context_span;
  Span node_span;
  /// The Operator Tree actually laid out in node_span (a pre-order prefix of
  /// the pair's tree when truncation had to cut nodes).
  OperatorTree tree;

  std::vector<MlmLabel> mlm_labels;
  std::optional<int> ccp_label;
  std::vector<MspLabel> msp_labels;
  /// Node indices (into `tree`) whose edges were cut by sample_msp.
  std::vector<std::size_t> msp_nodes;
  /// Topic class for fine-tuning.
  std::optional<int> class_label;

  std::size_t size() const { return ids.size(); }
};

/// Lays out `[CLS] T [SEP] (C [SEP])? N?` for the ablation and builds the
/// attention mask. Over-long inputs lose context tail first, then formula
/// tail (down to one token), then trailing pre-order nodes; the node tree is
/// rebuilt over what survives. Throws TooLong when `[CLS] T [SEP]` alone
/// exceeds `max_len`.
ModelInput assemble(const FormulaContextPair& pair, const Vocab& vocab, std::size_t max_len,
                    Ablation ablation);

/// Mask for `input`: all ones except [PAD] rows/columns, and inside the node
/// block only identity plus tree edges in both directions. Throws
/// SpanMismatch when the node span and `opt` differ in size.
MaskMatrix build_mask(const ModelInput& input, const OperatorTree& opt);

/// Chooses ceil(rate * n) of the n maskable formula/context positions
/// (non-special ids) without replacement; 80% become [MASK], 10% a uniform
/// non-special id, 10% stay. Originals are recorded in mlm_labels.
ModelInput sample_mlm(ModelInput input, std::size_t vocab_size, Rng& rng, double rate = 0.15);

struct CcpSample {
  FormulaContextPair pair;
  /// 1 when the context is the pair's own.
  int delta;
};

/// With probability `rate`, swaps in the context of a different pool entry
/// chosen uniformly. `index` is the pair's own position in `pool`.
CcpSample sample_ccp(std::span<const FormulaContextPair> pool, std::size_t index, Rng& rng,
                     double rate = 0.5);

/// Cuts the tree edges of ceil(rate * |N|) uniformly chosen nodes out of the
/// mask and labels every (sampled, other) node pair with its adjacency in the
/// original tree. With `mask_node_id`, the sampled nodes' ids become [MASK].
ModelInput sample_msp(ModelInput input, const OperatorTree& opt, Rng& rng, double rate = 0.15,
                      bool mask_node_id = false);

/// sample_msp with an explicit node set.
ModelInput apply_msp(ModelInput input, const OperatorTree& opt,
                     std::span<const std::size_t> nodes, bool mask_node_id = false);

/// Number of items a rate selects out of n: ceil(rate * n), guarded against
/// representation error in the product.
std::size_t sample_count(double rate, std::size_t n);

}  // namespace optenc
