#include <doctest.h>

#include <algorithm>
#include <set>

#include "optenc/error.hpp"
#include "optenc/inputs.hpp"
#include "support.hpp"

using namespace optenc;

namespace {

const std::vector<std::string> kFiveWords{"the", "[MATH]", "holds", "for", "triangles"};

FormulaContextPair pythagoras_pair() {
  return testing::pair_from_latex("c^2=a^2+b^2", kFiveWords);
}

Vocab vocab_of(const std::vector<FormulaContextPair>& pairs) { return build_vocab(pairs); }

// Brute-force adjacency predicate over the edge list.
bool edge_or_equal(const OperatorTree& t, std::size_t i, std::size_t j) {
  if (i == j) return true;
  for (const auto& [p, c] : t.edges)
    if ((p == i && c == j) || (p == j && c == i)) return true;
  return false;
}

// Node-only input over a tree, for mask and MSP checks.
ModelInput node_input(const OperatorTree& t) {
  ModelInput in;
  in.ids = {Vocab::kCls, 6, Vocab::kSep};
  in.segments = {0, 0, 0};
  in.positions = {0, 1, 2};
  in.formula_span = {1, 2};
  in.context_span = {3, 3};
  in.node_span = {3, 3 + t.size()};
  for (std::size_t i = 0; i < t.size(); ++i) {
    in.ids.push_back(6);
    in.segments.push_back(kSegmentNodes);
    in.positions.push_back(static_cast<int>(i));
  }
  in.tree = t;
  in.mask = build_mask(in, t);
  return in;
}

bool mask_invariants(const ModelInput& in) {
  const auto n = static_cast<Eigen::Index>(in.size());
  if (in.mask.rows() != n || in.mask.cols() != n) return false;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (in.mask(i, i) != 1 && in.ids[static_cast<std::size_t>(i)] != Vocab::kPad) return false;
    for (Eigen::Index j = 0; j < n; ++j)
      if (in.mask(i, j) != in.mask(j, i)) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("layout of the full input") {
  const auto pair = pythagoras_pair();
  const Vocab v = vocab_of({pair});
  const ModelInput in = assemble(pair, v, 64, Ablation::full);
  REQUIRE(in.size() == 1 + 11 + 1 + 5 + 1 + 11);
  std::vector<int> expect{0};
  expect.insert(expect.end(), 11, 0);
  expect.push_back(0);
  expect.insert(expect.end(), 5, 1);
  expect.push_back(1);
  expect.insert(expect.end(), 11, 2);
  CHECK(in.segments == expect);
  CHECK(in.ids[0] == Vocab::kCls);
  CHECK(in.ids[12] == Vocab::kSep);
  CHECK(in.ids[18] == Vocab::kSep);
  CHECK(in.ids[14] == Vocab::kMath);
  CHECK(in.formula_span.begin == 1);
  CHECK(in.formula_span.end == 12);
  CHECK(in.context_span.begin == 13);
  CHECK(in.context_span.end == 18);
  CHECK(in.node_span.begin == 19);
  CHECK(in.node_span.end == 30);
  for (int i = 0; i <= 18; ++i) CHECK(in.positions[static_cast<std::size_t>(i)] == i);
  for (int i = 0; i < 11; ++i) CHECK(in.positions[static_cast<std::size_t>(19 + i)] == i);
  CHECK(in.ids[19] == v.id("="));
  CHECK(in.ids[20] == v.id("SUP"));
  CHECK(in.mlm_labels.empty());
  CHECK_FALSE(in.ccp_label.has_value());
  CHECK(mask_invariants(in));
}

TEST_CASE("ablation layouts") {
  const auto pair = pythagoras_pair();
  const Vocab v = vocab_of({pair});
  const ModelInput f = assemble(pair, v, 64, Ablation::formula_only);
  CHECK(f.size() == 13);
  CHECK(std::all_of(f.segments.begin(), f.segments.end(), [](int s) { return s == 0; }));
  CHECK(f.node_span.size() == 0);
  CHECK(f.context_span.size() == 0);

  const ModelInput no_opt = assemble(pair, v, 64, Ablation::no_opt);
  CHECK(no_opt.size() == 19);
  CHECK(no_opt.node_span.size() == 0);

  const ModelInput no_ctx = assemble(pair, v, 64, Ablation::no_context);
  CHECK(no_ctx.size() == 24);
  CHECK(no_ctx.context_span.size() == 0);
  CHECK(std::count(no_ctx.segments.begin(), no_ctx.segments.end(), 1) == 0);
  CHECK(std::count(no_ctx.segments.begin(), no_ctx.segments.end(), 2) == 11);

  CHECK(parse_ablation("no_opt") == Ablation::no_opt);
  CHECK(to_string(Ablation::formula_only) == "formula_only");
  CHECK_THROWS_AS(parse_ablation("everything"), ConfigError);
}

TEST_CASE("truncation order: context, then formula, nodes kept") {
  const auto pair = pythagoras_pair();
  const Vocab v = vocab_of({pair});
  const ModelInput in = assemble(pair, v, 20, Ablation::full);
  CHECK(in.size() == 20);
  CHECK(in.context_span.size() == 0);
  CHECK(in.formula_span.size() == 6);
  CHECK(in.node_span.size() == 11);
  CHECK(in.tree == pair.opt);
  CHECK(mask_invariants(in));

  // A little more room keeps part of the context and the whole formula.
  const ModelInput wider = assemble(pair, v, 27, Ablation::full);
  CHECK(wider.formula_span.size() == 11);
  CHECK(wider.context_span.size() == 2);
  CHECK(wider.node_span.size() == 11);

  // Below that, node prefixes survive as valid trees.
  const ModelInput tight = assemble(pair, v, 13, Ablation::full);
  CHECK(tight.size() == 13);
  CHECK(tight.context_span.size() == 0);
  CHECK(tight.formula_span.size() == 1);
  CHECK(tight.node_span.size() == 9);
  CHECK(validate_tree(tight.tree).empty());
  CHECK(tight.tree == pair.opt.prefix(9));
  CHECK(mask_invariants(tight));

  CHECK_THROWS_AS(assemble(pair, v, 12, Ablation::formula_only), TooLong);
  CHECK_NOTHROW(assemble(pair, v, 13, Ablation::formula_only));
}

TEST_CASE("hand-written mask for pythagoras") {
  const auto pair = pythagoras_pair();
  const Vocab v = vocab_of({pair});
  const ModelInput in = assemble(pair, v, 64, Ablation::full);
  // Rows/cols: = SUP c 2 + SUP a 2 SUP b 2
  const int expect[11][11] = {
      {1, 1, 0, 0, 1, 0, 0, 0, 0, 0, 0},  // =
      {1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0},  // SUP(c)
      {0, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0},  // c
      {0, 1, 0, 1, 0, 0, 0, 0, 0, 0, 0},  // 2
      {1, 0, 0, 0, 1, 1, 0, 0, 1, 0, 0},  // +
      {0, 0, 0, 0, 1, 1, 1, 1, 0, 0, 0},  // SUP(a)
      {0, 0, 0, 0, 0, 1, 1, 0, 0, 0, 0},  // a
      {0, 0, 0, 0, 0, 1, 0, 1, 0, 0, 0},  // 2
      {0, 0, 0, 0, 1, 0, 0, 0, 1, 1, 1},  // SUP(b)
      {0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 0},  // b
      {0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 1},  // 2
  };
  const auto nb = static_cast<Eigen::Index>(in.node_span.begin);
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) CHECK(in.mask(nb + i, nb + j) == expect[i][j]);
  CHECK(in.mask(nb + 0, nb + 4) == 1);
  CHECK(in.mask(nb + 1, nb + 4) == 0);
  // Outside the node block everything is unrestricted.
  for (Eigen::Index i = 0; i < nb; ++i)
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(in.size()); ++j) {
      CHECK(in.mask(i, j) == 1);
      CHECK(in.mask(j, i) == 1);
    }
}

TEST_CASE("single-node mask") {
  const auto pair = testing::pair_from_latex("a", {"[MATH]", "x"});
  const Vocab v = vocab_of({pair});
  const ModelInput in = assemble(pair, v, 64, Ablation::full);
  REQUIRE(in.node_span.size() == 1);
  const auto nb = static_cast<Eigen::Index>(in.node_span.begin);
  CHECK(in.mask(nb, nb) == 1);
}

TEST_CASE("mask equals brute-force oracle on random trees") {
  Rng rng(30);
  for (int k = 0; k < 30; ++k) {
    const OperatorTree t = testing::random_tree(rng, 12);
    const ModelInput in = node_input(t);
    const auto nb = static_cast<Eigen::Index>(in.node_span.begin);
    for (std::size_t i = 0; i < t.size(); ++i)
      for (std::size_t j = 0; j < t.size(); ++j)
        CHECK(in.mask(nb + static_cast<Eigen::Index>(i), nb + static_cast<Eigen::Index>(j)) ==
              (edge_or_equal(t, i, j) ? 1 : 0));
  }
}

TEST_CASE("padding rows are cut from the mask") {
  ModelInput in = node_input(testing::pair_from_latex("a+b").opt);
  in.ids.push_back(Vocab::kPad);
  in.segments.push_back(0);
  in.positions.push_back(0);
  const MaskMatrix m = build_mask(in, in.tree);
  const auto last = m.rows() - 1;
  CHECK(m.row(last).cast<int>().sum() == 0);
  CHECK(m.col(last).cast<int>().sum() == 0);

  in.node_span.end -= 1;
  CHECK_THROWS_AS(build_mask(in, in.tree), SpanMismatch);
}

TEST_CASE("mlm sample count and exclusions") {
  CHECK(sample_count(0.15, 20) == 3);
  CHECK(sample_count(0.15, 100) == 15);
  CHECK(sample_count(0.15, 0) == 0);
  CHECK(sample_count(0.15, 1) == 1);
  CHECK(sample_count(0.5, 4) == 2);
  CHECK(sample_count(0.0, 50) == 0);
  CHECK(sample_count(1.0, 7) == 7);

  // 10 formula tokens + 10 context words: 20 maskable positions.
  const auto pair = testing::pair_from_latex("a+b+c+d+ef", testing::words(10, 5));
  const Vocab v = vocab_of({pair});
  const ModelInput in = assemble(pair, v, 128, Ablation::full);
  Rng rng(1);
  const ModelInput s = sample_mlm(in, v.size(), rng);
  CHECK(s.mlm_labels.size() == 3);

  // Nothing maskable.
  ModelInput bare = in;
  for (std::size_t i = bare.formula_span.begin; i < bare.context_span.end; ++i)
    if (bare.ids[i] != Vocab::kSep) bare.ids[i] = Vocab::kMath;
  Rng rng2(1);
  const ModelInput none = sample_mlm(bare, v.size(), rng2);
  CHECK(none.mlm_labels.empty());
  CHECK(none.ids == bare.ids);
}

TEST_CASE("mlm statistics over 10^4 samples") {
  const auto pair = testing::pair_from_latex("a+b+c+d+ef", testing::words(10, 5));
  const Vocab v = vocab_of({pair});
  const ModelInput in = assemble(pair, v, 128, Ablation::full);
  std::size_t maskable = 0;
  for (std::size_t i = 0; i < in.node_span.begin; ++i) maskable += !Vocab::is_special(in.ids[i]);
  REQUIRE(maskable == 20);

  Rng rng(2024);
  std::size_t labels = 0, mask = 0, random = 0, keep = 0;
  bool excluded_ok = true, labels_ok = true;
  const int n = 10000;
  for (int k = 0; k < n; ++k) {
    const ModelInput s = sample_mlm(in, v.size(), rng);
    labels += s.mlm_labels.size();
    std::set<std::size_t> seen;
    for (const auto& l : s.mlm_labels) {
      seen.insert(l.position);
      if (Vocab::is_special(in.ids[l.position]) || in.node_span.contains(l.position))
        excluded_ok = false;
      if (l.original != in.ids[l.position]) labels_ok = false;
      switch (l.action) {
        case MlmAction::mask:
          ++mask;
          if (s.ids[l.position] != Vocab::kMask) labels_ok = false;
          break;
        case MlmAction::random:
          ++random;
          if (Vocab::is_special(s.ids[l.position])) labels_ok = false;
          break;
        case MlmAction::keep:
          ++keep;
          if (s.ids[l.position] != in.ids[l.position]) labels_ok = false;
          break;
      }
    }
    if (seen.size() != s.mlm_labels.size()) labels_ok = false;
    for (std::size_t i = 0; i < in.size(); ++i)
      if (!seen.count(i) && s.ids[i] != in.ids[i]) labels_ok = false;
  }
  CHECK(excluded_ok);
  CHECK(labels_ok);
  const double frac = static_cast<double>(labels) / (static_cast<double>(n) * 20.0);
  CHECK(std::abs(frac - 0.15) <= 0.01);
  const double total = static_cast<double>(labels);
  CHECK(std::abs(static_cast<double>(mask) / total - 0.8) <= 0.02);
  CHECK(std::abs(static_cast<double>(random) / total - 0.1) <= 0.02);
  CHECK(std::abs(static_cast<double>(keep) / total - 0.1) <= 0.02);
}

TEST_CASE("mlm is reproducible from the seed") {
  const auto pair = testing::pair_from_latex("a+b+c+d+ef", testing::words(10, 5));
  const Vocab v = vocab_of({pair});
  const ModelInput in = assemble(pair, v, 128, Ablation::full);
  Rng a(77), b(77);
  const auto x = sample_mlm(in, v.size(), a);
  const auto y = sample_mlm(in, v.size(), b);
  CHECK(x.ids == y.ids);
  REQUIRE(x.mlm_labels.size() == y.mlm_labels.size());
  for (std::size_t i = 0; i < x.mlm_labels.size(); ++i) {
    CHECK(x.mlm_labels[i].position == y.mlm_labels[i].position);
    CHECK(x.mlm_labels[i].action == y.mlm_labels[i].action);
  }
}

TEST_CASE("ccp sampling") {
  std::vector<FormulaContextPair> pool;
  for (int i = 0; i < 4; ++i)
    pool.push_back(testing::pair_from_latex("x+" + std::to_string(i),
                                            testing::words(3, 1, "c" + std::to_string(i) + "_")));
  Rng rng(5);
  for (int k = 0; k < 50; ++k) {
    const auto s = sample_ccp(pool, 2, rng, 0.0);
    CHECK(s.delta == 1);
    CHECK(s.pair.context_tokens == pool[2].context_tokens);
  }
  const std::vector<FormulaContextPair> two{pool[0], pool[1]};
  for (int k = 0; k < 50; ++k) {
    const auto s = sample_ccp(two, 0, rng, 1.0);
    CHECK(s.delta == 0);
    CHECK(s.pair.context_tokens == two[1].context_tokens);
    CHECK(s.pair.formula_latex == two[0].formula_latex);
  }
  const std::vector<FormulaContextPair> one{pool[0]};
  CHECK_THROWS_AS(sample_ccp(one, 0, rng), PoolTooSmall);

  std::size_t positives = 0;
  const int n = 10000;
  std::vector<int> chosen(4, 0);
  for (int k = 0; k < n; ++k) {
    const auto s = sample_ccp(pool, 1, rng, 0.5);
    positives += s.delta == 1;
    if (s.delta == 0) {
      for (int j = 0; j < 4; ++j)
        if (s.pair.context_tokens == pool[static_cast<std::size_t>(j)].context_tokens) chosen[static_cast<std::size_t>(j)]++;
    }
  }
  CHECK(std::abs(static_cast<double>(positives) / n - 0.5) <= 0.02);
  CHECK(chosen[1] == 0);
}

TEST_CASE("msp on pythagoras with '+' cut out") {
  const auto pair = pythagoras_pair();
  const Vocab v = vocab_of({pair});
  const ModelInput in = assemble(pair, v, 64, Ablation::full);
  const std::vector<std::size_t> plus{4};
  const ModelInput s = apply_msp(in, in.tree, plus);
  REQUIRE(s.msp_labels.size() == 10);
  const auto nb = in.node_span.begin;
  std::set<std::size_t> positives;
  for (const auto& l : s.msp_labels) {
    CHECK(l.i == nb + 4);
    if (l.delta == 1) positives.insert(l.j - nb);
  }
  CHECK(positives == std::set<std::size_t>{0, 5, 8});
  for (std::size_t j : {0, 5, 8}) {
    CHECK(s.mask(static_cast<Eigen::Index>(nb + 4), static_cast<Eigen::Index>(nb + j)) == 0);
    CHECK(s.mask(static_cast<Eigen::Index>(nb + j), static_cast<Eigen::Index>(nb + 4)) == 0);
  }
  CHECK(s.mask(static_cast<Eigen::Index>(nb + 4), static_cast<Eigen::Index>(nb + 4)) == 1);
  CHECK(s.ids == in.ids);
  CHECK(mask_invariants(s));

  const ModelInput masked = apply_msp(in, in.tree, plus, true);
  CHECK(masked.ids[nb + 4] == Vocab::kMask);
}

TEST_CASE("msp on a single node") {
  const auto pair = testing::pair_from_latex("a", {"[MATH]"});
  const Vocab v = vocab_of({pair});
  const ModelInput in = assemble(pair, v, 64, Ablation::full);
  Rng rng(3);
  const ModelInput s = sample_msp(in, in.tree, rng);
  CHECK(s.msp_nodes.size() == 1);
  CHECK(s.msp_labels.empty());
  CHECK(s.mask == in.mask);

  const ModelInput f = assemble(pair, v, 64, Ablation::formula_only);
  const ModelInput none = sample_msp(f, f.tree, rng);
  CHECK(none.msp_labels.empty());
  CHECK(none.msp_nodes.empty());
}

TEST_CASE("msp statistics and labels against the edge oracle") {
  Rng tree_rng(44);
  // A fixed 20-node tree gives exactly 3 sampled nodes per draw.
  OperatorTree big;
  do big = testing::random_tree(tree_rng, 20);
  while (big.size() != 20);
  const ModelInput base = node_input(big);

  Rng rng(45);
  std::size_t sampled = 0;
  bool labels_ok = true, mask_ok = true;
  std::vector<std::size_t> hits(20, 0);
  const int n = 10000;
  for (int k = 0; k < n; ++k) {
    const ModelInput s = sample_msp(base, big, rng);
    sampled += s.msp_nodes.size();
    for (auto i : s.msp_nodes) hits[i]++;
    const std::size_t expected_labels = s.msp_nodes.size() * (big.size() - 1);
    if (s.msp_labels.size() != expected_labels) labels_ok = false;
    for (const auto& l : s.msp_labels) {
      const auto i = l.i - base.node_span.begin;
      const auto j = l.j - base.node_span.begin;
      if (i == j || l.delta != (edge_or_equal(big, i, j) ? 1 : 0)) labels_ok = false;
      if (l.delta == 1 && (s.mask(static_cast<Eigen::Index>(l.i), static_cast<Eigen::Index>(l.j)) != 0 ||
                           s.mask(static_cast<Eigen::Index>(l.j), static_cast<Eigen::Index>(l.i)) != 0))
        mask_ok = false;
    }
    if (!mask_invariants(s)) mask_ok = false;
  }
  CHECK(labels_ok);
  CHECK(mask_ok);
  CHECK(std::abs(static_cast<double>(sampled) / (20.0 * n) - 0.15) <= 0.01);
  // Uniform choice: every node is picked about 15% of the time.
  for (auto h : hits) CHECK(std::abs(static_cast<double>(h) / n - 0.15) < 0.02);
}

TEST_CASE("msp labels on random small trees") {
  Rng rng(46);
  for (int k = 0; k < 300; ++k) {
    const OperatorTree t = testing::random_tree(rng, 12);
    const ModelInput s = sample_msp(node_input(t), t, rng);
    for (const auto& l : s.msp_labels)
      CHECK(l.delta == (edge_or_equal(t, l.i - 3, l.j - 3) ? 1 : 0));
  }
}
