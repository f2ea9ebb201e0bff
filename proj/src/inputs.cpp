#include "optenc/inputs.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "optenc/error.hpp"

namespace optenc {

Ablation parse_ablation(std::string_view name) {
  if (name == "full") return Ablation::full;
  if (name == "no_opt") return Ablation::no_opt;
  if (name == "no_context") return Ablation::no_context;
  if (name == "formula_only") return Ablation::formula_only;
  throw ConfigError("unknown ablation '" + std::string(name) +
                    "' (expected full|no_opt|no_context|formula_only)");
}

std::string_view to_string(Ablation a) {
  switch (a) {
    case Ablation::full: return "full";
    case Ablation::no_opt: return "no_opt";
    case Ablation::no_context: return "no_context";
    case Ablation::formula_only: return "formula_only";
  }
  return "full";
}

std::size_t sample_count(double rate, std::size_t n) {
  if (n == 0 || rate <= 0.0) return 0;
  const auto k = static_cast<std::size_t>(std::ceil(rate * static_cast<double>(n) - 1e-9));
  return std::min(k, n);
}

ModelInput assemble(const FormulaContextPair& pair, const Vocab& vocab, std::size_t max_len,
                    Ablation ablation) {
  const bool with_context = uses_context(ablation);
  const bool with_nodes = uses_nodes(ablation);

  std::size_t lt = pair.formula_tokens.size();
  std::size_t lc = with_context ? pair.context_tokens.size() : 0;
  std::size_t ln = with_nodes ? pair.opt.size() : 0;
  if (lt + 2 > max_len)
    throw TooLong("formula of " + std::to_string(lt) + " tokens does not fit max_len " +
                  std::to_string(max_len));

  const std::size_t fixed = 2 + (with_context ? 1 : 0);
  const std::size_t total = fixed + lt + lc + ln;
  if (total > max_len) {
    std::size_t excess = total - max_len;
    const std::size_t cut_c = std::min(lc, excess);
    lc -= cut_c;
    excess -= cut_c;
    const std::size_t cut_t = std::min(lt > 0 ? lt - 1 : 0, excess);
    lt -= cut_t;
    excess -= cut_t;
    const std::size_t cut_n = std::min(ln > 0 ? ln - 1 : 0, excess);
    ln -= cut_n;
    excess -= cut_n;
    if (excess > 0) throw TooLong("input cannot be truncated to max_len " + std::to_string(max_len));
  }

  ModelInput in;
  auto push = [&](TokenId id, int segment, int position) {
    in.ids.push_back(id);
    in.segments.push_back(segment);
    in.positions.push_back(position);
  };
  int pos = 0;
  push(Vocab::kCls, kSegmentFormula, pos++);
  in.formula_span.begin = in.ids.size();
  for (std::size_t i = 0; i < lt; ++i)
    push(vocab.id(pair.formula_tokens[i].text), kSegmentFormula, pos++);
  in.formula_span.end = in.ids.size();
  push(Vocab::kSep, kSegmentFormula, pos++);

  in.context_span.begin = in.context_span.end = in.ids.size();
  if (with_context) {
    for (std::size_t i = 0; i < lc; ++i) {
      const auto& w = pair.context_tokens[i];
      push(w == kMathPlaceholder ? Vocab::kMath : vocab.id(w), kSegmentContext, pos++);
    }
    in.context_span.end = in.ids.size();
    push(Vocab::kSep, kSegmentContext, pos++);
  }

  in.node_span.begin = in.node_span.end = in.ids.size();
  if (with_nodes) {
    in.tree = pair.opt.prefix(ln);
    for (std::size_t i = 0; i < ln; ++i)
      push(vocab.id(in.tree.nodes[i].label), kSegmentNodes, static_cast<int>(i));
    in.node_span.end = in.ids.size();
  }
  in.mask = build_mask(in, in.tree);
  return in;
}

MaskMatrix build_mask(const ModelInput& input, const OperatorTree& opt) {
  const std::size_t n = input.ids.size();
  if (input.node_span.size() != opt.size())
    throw SpanMismatch("node span has " + std::to_string(input.node_span.size()) +
                       " positions but the tree has " + std::to_string(opt.size()) + " nodes");
  const auto len = static_cast<Eigen::Index>(n);
  MaskMatrix m = MaskMatrix::Ones(len, len);
  const auto nb = static_cast<Eigen::Index>(input.node_span.begin);
  const auto ns = static_cast<Eigen::Index>(input.node_span.size());
  if (ns > 0) {
    m.block(nb, nb, ns, ns).setZero();
    for (Eigen::Index k = 0; k < ns; ++k) m(nb + k, nb + k) = 1;
    for (const auto& [p, c] : opt.edges) {
      const auto a = nb + static_cast<Eigen::Index>(p);
      const auto b = nb + static_cast<Eigen::Index>(c);
      m(a, b) = 1;
      m(b, a) = 1;
    }
  }
  for (Eigen::Index i = 0; i < len; ++i) {
    if (input.ids[static_cast<std::size_t>(i)] == Vocab::kPad) {
      m.row(i).setZero();
      m.col(i).setZero();
    }
  }
  return m;
}

namespace {

// First k entries of a partial Fisher-Yates shuffle of `items`.
std::vector<std::size_t> choose(std::vector<std::size_t> items, std::size_t k, Rng& rng) {
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.uniform_index(items.size() - i);
    std::swap(items[i], items[j]);
  }
  items.resize(k);
  return items;
}

}  // namespace

ModelInput sample_mlm(ModelInput input, std::size_t vocab_size, Rng& rng, double rate) {
  input.mlm_labels.clear();
  std::vector<std::size_t> maskable;
  for (std::size_t i = 0; i < input.ids.size(); ++i) {
    const int seg = input.segments[i];
    if ((seg == kSegmentFormula || seg == kSegmentContext) && !input.node_span.contains(i) &&
        !Vocab::is_special(input.ids[i]))
      maskable.push_back(i);
  }
  const std::size_t k = sample_count(rate, maskable.size());
  auto chosen = choose(std::move(maskable), k, rng);
  std::sort(chosen.begin(), chosen.end());
  const std::size_t regular = vocab_size > static_cast<std::size_t>(Vocab::kSpecialCount)
                                  ? vocab_size - static_cast<std::size_t>(Vocab::kSpecialCount)
                                  : 0;
  for (const std::size_t p : chosen) {
    MlmLabel label{p, input.ids[p], MlmAction::keep};
    const std::size_t roll = rng.uniform_index(10);
    if (roll < 8) {
      label.action = MlmAction::mask;
      input.ids[p] = Vocab::kMask;
    } else if (roll == 8) {
      label.action = MlmAction::random;
      if (regular > 0)
        input.ids[p] = Vocab::kSpecialCount + static_cast<TokenId>(rng.uniform_index(regular));
    }
    input.mlm_labels.push_back(label);
  }
  return input;
}

CcpSample sample_ccp(std::span<const FormulaContextPair> pool, std::size_t index, Rng& rng,
                     double rate) {
  if (pool.size() < 2) throw PoolTooSmall("context swapping needs at least 2 pairs");
  if (index >= pool.size()) throw PoolTooSmall("pair index outside the pool");
  CcpSample out{pool[index], 1};
  if (rng.uniform01() < rate) {
    std::size_t other = rng.uniform_index(pool.size() - 1);
    if (other >= index) ++other;
    out.pair.context_tokens = pool[other].context_tokens;
    out.pair.context_chars = pool[other].context_chars;
    out.delta = 0;
  }
  return out;
}

ModelInput apply_msp(ModelInput input, const OperatorTree& opt,
                     std::span<const std::size_t> nodes, bool mask_node_id) {
  if (input.node_span.size() != opt.size())
    throw SpanMismatch("node span does not match the tree");
  input.msp_labels.clear();
  input.msp_nodes.assign(nodes.begin(), nodes.end());
  const std::size_t base = input.node_span.begin;
  const std::size_t n = opt.size();
  std::vector<std::vector<char>> adj(n, std::vector<char>(n, 0));
  for (const auto& [p, c] : opt.edges) adj[p][c] = adj[c][p] = 1;
  for (const std::size_t i : nodes) {
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      input.msp_labels.push_back(MspLabel{base + i, base + j, adj[i][j]});
      if (adj[i][j]) {
        const auto a = static_cast<Eigen::Index>(base + i);
        const auto b = static_cast<Eigen::Index>(base + j);
        input.mask(a, b) = 0;
        input.mask(b, a) = 0;
      }
    }
    if (mask_node_id) input.ids[base + i] = Vocab::kMask;
  }
  return input;
}

ModelInput sample_msp(ModelInput input, const OperatorTree& opt, Rng& rng, double rate,
                      bool mask_node_id) {
  const std::size_t n = input.node_span.size();
  if (n == 0) {
    input.msp_labels.clear();
    input.msp_nodes.clear();
    return input;
  }
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  auto chosen = choose(std::move(all), sample_count(rate, n), rng);
  std::sort(chosen.begin(), chosen.end());
  return apply_msp(std::move(input), opt, chosen, mask_node_id);
}

}  // namespace optenc
