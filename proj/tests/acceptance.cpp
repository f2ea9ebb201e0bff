// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "cli.hpp"
#include "optenc/checkpoint.hpp"
#include "optenc/eval.hpp"
#include "optenc/train.hpp"
#include "oracles.hpp"
#include "support.hpp"
#include "toy.hpp"

using namespace optenc;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + ("failed: " + what);
    }
  }
  void note(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
};

std::string fmt(double x, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << x;
  return s.str();
}

bool edge_or_equal(const OperatorTree& t, std::size_t i, std::size_t j) {
  if (i == j) return true;
  for (const auto& [p, c] : t.edges)
    if ((p == i && c == j) || (p == j && c == i)) return true;
  return false;
}

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

FormulaContextPair pythagoras() {
  return testing::pair_from_latex("c^2=a^2+b^2", {"the", "[MATH]", "holds", "for", "triangles"});
}

Outcome mask_correctness() {
  Outcome o;
  Rng rng(500);
  std::size_t bad = 0;
  for (int k = 0; k < 500; ++k) {
    const OperatorTree t = testing::random_tree(rng, 12);
    const ModelInput in = node_input(t);
    const auto nb = static_cast<Eigen::Index>(in.node_span.begin);
    for (std::size_t i = 0; i < t.size(); ++i)
      for (std::size_t j = 0; j < t.size(); ++j)
        bad += in.mask(nb + static_cast<Eigen::Index>(i), nb + static_cast<Eigen::Index>(j)) !=
               (edge_or_equal(t, i, j) ? 1 : 0);
  }
  o.require(bad == 0, std::to_string(bad) + " entries differ from the oracle");

  // Rows/cols: = SUP c 2 + SUP a 2 SUP b 2
  const int expect[11][11] = {
      {1, 1, 0, 0, 1, 0, 0, 0, 0, 0, 0}, {1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0},
      {0, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0}, {0, 1, 0, 1, 0, 0, 0, 0, 0, 0, 0},
      {1, 0, 0, 0, 1, 1, 0, 0, 1, 0, 0}, {0, 0, 0, 0, 1, 1, 1, 1, 0, 0, 0},
      {0, 0, 0, 0, 0, 1, 1, 0, 0, 0, 0}, {0, 0, 0, 0, 0, 1, 0, 1, 0, 0, 0},
      {0, 0, 0, 0, 1, 0, 0, 0, 1, 1, 1}, {0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 0},
      {0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 1},
  };
  const auto pair = pythagoras();
  const std::vector<FormulaContextPair> one{pair};
  const ModelInput in = assemble(pair, build_vocab(one), 64, Ablation::full);
  o.require(in.node_span.size() == 11, "pythagoras node block has 11 rows");
  const auto nb = static_cast<Eigen::Index>(in.node_span.begin);
  bool hand = in.node_span.size() == 11;
  for (int i = 0; hand && i < 11; ++i)
    for (int j = 0; j < 11; ++j) hand = hand && in.mask(nb + i, nb + j) == expect[i][j];
  o.require(hand, "hand-written 11x11 matrix");
  o.note("500 trees, 11x11 fixture");
  return o;
}

Outcome attention_mask() {
  Outcome o;
  const ModelConfig cfg = testing::tiny_config();
  std::size_t leaks = 0, rows = 0;
  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    Rng rng(derive_seed(2, static_cast<std::uint64_t>(k)));
    const ModelInput in = testing::random_case(rng, cfg, static_cast<std::size_t>(k % 4));
    const ParameterSet p = testing::random_parameters(cfg, static_cast<std::uint64_t>(k), 0.5);
    const ForwardTrace tr = forward(in, p, cfg);
    const auto n = static_cast<Eigen::Index>(in.size());
    for (const auto& layer : tr.layers)
      for (const auto& pr : layer.probs)
        for (Eigen::Index i = 0; i < n; ++i) {
          bool any = false;
          for (Eigen::Index j = 0; j < n; ++j) {
            if (in.mask(i, j) == 0)
              leaks += pr(i, j) != 0.0;
            else
              any = true;
          }
          if (any) {
            ++rows;
            worst = std::max(worst, std::abs(pr.row(i).sum() - 1.0));
          }
        }
  }
  o.require(leaks == 0, std::to_string(leaks) + " masked weights non-zero");
  o.require(worst <= 1e-5, "row sum error " + fmt(worst));
  o.note(std::to_string(rows) + " rows, max |sum-1| " + fmt(worst, 3));
  return o;
}

Outcome gradients() {
  Outcome o;
  const ModelConfig cfg = testing::tiny_config(3);
  for (std::uint64_t seed : {1, 2, 3}) {
    Rng rng(seed);
    const ModelInput in = testing::random_case(rng, cfg, 2);
    const ParameterSet p = testing::random_parameters(cfg, seed, 0.3);
    const double whole = testing::relative_error(testing::flat_gradients(in, p, cfg, 1e-3));
    const auto entry = testing::gradient_check(in, p, cfg, 1e-5, 1e-4);
    o.require(whole < 1e-4, "seed " + std::to_string(seed) + " whole-vector " + fmt(whole));
    o.require(entry.max_rel_error < 1e-4,
              "seed " + std::to_string(seed) + " entrywise " + fmt(entry.max_rel_error) + " at " + entry.worst);
    o.note("seed " + std::to_string(seed) + ": " + fmt(whole, 2) + " (eps 1e-3), " +
           fmt(entry.max_rel_error, 2) + " per entry (eps 1e-5, " + std::to_string(entry.checked) + ")");
  }
  return o;
}

Outcome sampling() {
  Outcome o;
  const int n = 10000;
  {
    const auto pair = testing::pair_from_latex("a+b+c+d+ef", testing::words(10, 5));
    const std::vector<FormulaContextPair> one{pair};
    const Vocab v = build_vocab(one);
    const ModelInput in = assemble(pair, v, 128, Ablation::full);
    std::size_t maskable = 0;
    for (std::size_t i = 0; i < in.node_span.begin; ++i) maskable += !Vocab::is_special(in.ids[i]);
    Rng rng(41);
    double labels = 0, mask = 0, random = 0, keep = 0;
    for (int k = 0; k < n; ++k) {
      const ModelInput s = sample_mlm(in, v.size(), rng);
      labels += static_cast<double>(s.mlm_labels.size());
      for (const auto& l : s.mlm_labels) {
        mask += l.action == MlmAction::mask;
        random += l.action == MlmAction::random;
        keep += l.action == MlmAction::keep;
      }
    }
    const double frac = labels / (n * static_cast<double>(maskable));
    o.require(std::abs(frac - 0.15) <= 0.01, "mlm fraction " + fmt(frac));
    o.require(std::abs(mask / labels - 0.8) <= 0.02 && std::abs(random / labels - 0.1) <= 0.02 &&
                  std::abs(keep / labels - 0.1) <= 0.02,
              "mlm action split");
    o.note("mlm " + fmt(100 * frac, 3) + "% (" + fmt(100 * mask / labels, 3) + "/" +
           fmt(100 * random / labels, 3) + "/" + fmt(100 * keep / labels, 3) + ")");
  }
  {
    std::vector<FormulaContextPair> pool;
    for (int i = 0; i < 4; ++i)
      pool.push_back(testing::pair_from_latex("x+" + std::to_string(i),
                                              testing::words(3, 1, "c" + std::to_string(i) + "_")));
    Rng rng(42);
    double positives = 0;
    for (int k = 0; k < n; ++k) positives += sample_ccp(pool, 1, rng).delta == 1;
    o.require(std::abs(positives / n - 0.5) <= 0.02, "ccp positives " + fmt(positives / n));
    o.note("ccp " + fmt(100 * positives / n, 3) + "%");
  }
  {
    Rng tree_rng(43);
    OperatorTree big;
    do big = testing::random_tree(tree_rng, 20);
    while (big.size() != 20);
    const ModelInput base = node_input(big);
    Rng rng(44);
    double sampled = 0;
    std::size_t wrong = 0;
    for (int k = 0; k < n; ++k) {
      const ModelInput s = sample_msp(base, big, rng);
      sampled += static_cast<double>(s.msp_nodes.size());
      if (s.msp_labels.size() != s.msp_nodes.size() * (big.size() - 1)) ++wrong;
      for (const auto& l : s.msp_labels) {
        const auto i = l.i - base.node_span.begin, j = l.j - base.node_span.begin;
        wrong += i == j || l.delta != (edge_or_equal(big, i, j) ? 1 : 0);
      }
    }
    o.require(std::abs(sampled / (20.0 * n) - 0.15) <= 0.01, "msp fraction " + fmt(sampled / (20.0 * n)));
    o.require(wrong == 0, std::to_string(wrong) + " msp labels differ from adjacency");
    o.note("msp " + fmt(100 * sampled / (20.0 * n), 3) + "%, labels exact");
  }
  return o;
}

Outcome loss_oracles() {
  Outcome o;
  const ModelConfig cfg = testing::tiny_config();
  double worst = 0.0;
  bool sums = true;
  for (int k = 0; k < 100; ++k) {
    Rng rng(derive_seed(5, static_cast<std::uint64_t>(k)));
    const ModelInput in = testing::random_case(rng, cfg, static_cast<std::size_t>(k % 3));
    const ParameterSet p = testing::random_parameters(cfg, 1000 + static_cast<std::uint64_t>(k));
    const ForwardTrace tr = forward(in, p, cfg);
    const Matrix& h = tr.final_hidden();
    const double mlm = loss_mlm(tr, in, p), ccp = loss_ccp(tr, in, p), msp = loss_msp(tr, in, p);
    worst = std::max({worst, std::abs(mlm - testing::oracle_mlm(h, in, p)),
                      std::abs(ccp - testing::oracle_ccp(h, in, p)), std::abs(msp - testing::oracle_msp(h, in, p))});
    const Losses l = compute_losses(tr, in, p);
    sums = sums && l.mlm == mlm && l.ccp == ccp && l.msp == msp && l.total() == loss_total(mlm, ccp, msp);
  }
  o.require(worst < 1e-8, "max |delta| " + fmt(worst));
  o.require(sums, "loss_total is the sum of the terms");
  o.note("100 cases, max |delta| " + fmt(worst, 3));

  const auto pairs = testing::toy_corpus();
  const Vocab v = build_vocab(pairs);
  ModelConfig m;
  m.vocab_size = static_cast<int>(v.size());
  const ParameterSet p = init_parameters(m, 3);
  bool zeroed = true, live = false;
  for (Ablation a : {Ablation::full, Ablation::formula_only, Ablation::no_context, Ablation::no_opt}) {
    TrainConfig t;
    t.ablation = a;
    Rng rng(9);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const ModelInput in = make_pretrain_input(pairs, i, v, m, t, rng);
      const Losses l = compute_losses(forward(in, p, m), in, p);
      if (!uses_context(a)) zeroed = zeroed && l.ccp == 0.0;
      if (!uses_nodes(a)) zeroed = zeroed && l.msp == 0.0;
      if (a == Ablation::full) live = live || (l.ccp > 0.0 && l.msp > 0.0);
    }
  }
  o.require(zeroed, "ablations zero their terms");
  o.require(live, "full mode trains every term");
  o.note("ablations zero CCP/MSP as configured");
  return o;
}

Outcome overfit(const testing::TempDir& dir) {
  Outcome o;
  const auto pairs = testing::toy_corpus();
  const Vocab v = build_vocab(pairs);
  ModelConfig m;
  m.vocab_size = static_cast<int>(v.size());
  TrainConfig t;
  t.seed = 7;
  t.learning_rate = 1e-3;
  t.steps = 2300;
  t.checkpoint_every = 100;
  const auto r = pretrain(pairs, v, m, t, dir.path());
  auto window = [&](int last) {
    double s = 0;
    for (int i = last - 20; i < last; ++i) s += r.records[static_cast<std::size_t>(i)].loss_total;
    return s / 20;
  };
  const double early = window(20), late = window(300);
  o.require(late < early, "smoothed loss " + fmt(early) + " -> " + fmt(late));
  o.note("loss@20 " + fmt(early) + ", loss@300 " + fmt(late));

  int reached = -1;
  double acc = 0.0;
  for (int step = 300; step <= t.steps; step += 100) {
    auto path = dir / ("checkpoint_step" + std::to_string(step) + ".ckpt");
    if (!std::filesystem::exists(path)) path = dir / "model.ckpt";
    acc = mlm_accuracy(pairs, v, load_checkpoint(path).params, m, t, 1, 20);
    if (acc >= 0.95) {
      reached = step;
      break;
    }
  }
  o.require(reached > 0, "mlm accuracy " + fmt(acc) + " after 2300 steps");
  if (reached > 0) o.note("mlm accuracy " + fmt(acc, 3) + " at step " + std::to_string(reached));
  return o;
}

RankedList run_of(const std::string& q, std::vector<std::string> docs) {
  RankedList r;
  r.query_id = q;
  double score = 1.0;
  for (auto& d : docs) {
    r.entries.emplace_back(std::move(d), score);
    score -= 0.01;
  }
  return r;
}

Outcome bpref_oracle() {
  Outcome o;
  const QrelSet q{{"q", {{"d1", 4}, {"d2", 0}, {"d3", 3}}}};
  const QrelSet single{{"q", {{"r", 2}, {"n1", 0}, {"n2", 0}}}};
  const QrelSet mixed{{"q", {{"a", 4}, {"b", 1}, {"c", 2}, {"d", 0}}}};
  const QrelSet all_rel{{"q", {{"a", 3}, {"b", 3}}}};
  struct Case {
    RankedList run;
    const QrelSet* qrels;
    int threshold;
    double expect;
  };
  const std::vector<Case> cases{
      {run_of("q", {"d1", "d2", "d3"}), &q, kFullRelevance, 0.5},
      {run_of("q", {"d1", "d3", "d2"}), &q, kFullRelevance, 1.0},
      {run_of("q", {"d2", "d1", "d3"}), &q, kFullRelevance, 0.0},
      {run_of("q", {"u1", "d1", "u2", "d2", "d3"}), &q, kFullRelevance, 0.5},
      {run_of("q", {"n1", "n2", "r"}), &single, kPartialRelevance, 0.0},
      {run_of("q", {"r", "n1", "n2"}), &single, kPartialRelevance, 1.0},
      {run_of("q", {"b", "d", "a", "c"}), &mixed, kFullRelevance, 0.0},
      {run_of("q", {"b", "a", "c", "d"}), &mixed, kPartialRelevance, 1.0},
      {run_of("q", {"x", "b"}), &all_rel, kFullRelevance, 0.5},
  };
  std::size_t bad = 0;
  for (const auto& c : cases) bad += bpref(c.run, *c.qrels, c.threshold) != c.expect;
  o.require(bad == 0, std::to_string(bad) + " of " + std::to_string(cases.size()) + " cases");
  const double h = harmonic_mean(71.34, 59.63);
  o.require(std::abs(h - 64.96) <= 0.01, "h_mean " + fmt(h, 6));
  o.note(std::to_string(cases.size()) + " exact cases, h_mean " + fmt(h, 6));
  return o;
}

Outcome classification() {
  Outcome o;
  const auto pairs = testing::separable_topics();
  const Vocab v = build_vocab(pairs);
  Checkpoint base;
  base.config.vocab_size = static_cast<int>(v.size());
  base.params = init_parameters(base.config, 5);
  TrainConfig t;
  t.seed = 5;
  t.steps = 200;
  t.batch_size = 8;
  t.learning_rate = 1e-3;
  t.ablation = Ablation::formula_only;
  const auto r = finetune_classify(pairs, v, base, 3, t, "");
  const auto pred = predict_classes(pairs, v, r.params, r.config, Ablation::formula_only);
  const auto gold = topic_labels(pairs, r.class_names);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == gold[i];
  const double acc = static_cast<double>(correct) / static_cast<double>(pred.size());
  o.require(acc >= 0.95, "training accuracy " + fmt(acc));
  o.note("training accuracy " + fmt(acc, 3) + " after 200 steps");

  using P = std::pair<int, int>;
  struct Case {
    std::vector<P> preds;
    int classes;
    double p, r, f;
  };
  const double f0 = 2 * 1.0 * 0.5 / 1.5, f1 = 2 * (2.0 / 3.0) / (2.0 / 3.0 + 1.0);
  const std::vector<Case> cases{
      {{{0, 0}, {1, 1}, {2, 2}, {1, 1}}, 3, 1.0, 1.0, 1.0},
      {{{0, 0}, {0, 1}, {1, 1}, {1, 1}}, 2, (1.0 + 2.0 / 3.0) / 2.0, 0.75, (f0 + f1) / 2.0},
      {{{0, 0}, {1, 1}}, 3, 2.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0},
      {{{0, 0}, {1, 0}, {1, 0}, {2, 0}}, 3, 0.25 / 3.0, 1.0 / 3.0, (2 * 0.25 / 1.25) / 3.0},
      {{{0, 1}, {1, 0}}, 2, 0.0, 0.0, 0.0},
  };
  std::size_t bad = 0;
  for (const auto& c : cases) {
    const auto rep = eval_classify(c.preds, c.classes);
    bad += rep.macro_precision != c.p || rep.macro_recall != c.r || rep.macro_f1 != c.f;
  }
  o.require(bad == 0, std::to_string(bad) + " macro P/R/F1 cases");
  o.note("5 exact macro P/R/F1 cases");
  return o;
}

Outcome parser_goldens() {
  Outcome o;
  const OperatorTree t = parse_latex("c^2=a^2+b^2");
  o.require(t.size() == 11 && t.edges.size() == 10 && t.nodes[t.root].label == "=", "pythagoras tree");
  o.require(serialize_opt(t) == "(= (SUP (c) (2)) (+ (SUP (a) (2)) (SUP (b) (2))))", "pythagoras record");

  std::size_t pairs = 0, broken = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(testing::fixture_dir())) {
    if (e.path().extension() != ".tex") continue;
    for (const auto& p : extract_pairs(testing::read_file(e.path())).pairs) {
      ++pairs;
      const std::string rec = serialize_opt(p.opt);
      broken += deserialize_opt(rec) != p.opt || serialize_opt(deserialize_opt(rec)) != rec ||
                !validate_tree(p.opt).empty();
    }
  }
  o.require(pairs > 0 && broken == 0, std::to_string(broken) + " of " + std::to_string(pairs) + " round trips");

  testing::FormulaGen gen(11);
  std::size_t tok_bad = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto toks = tokenize_latex(gen.formula());
    tok_bad += tokenize_latex(join_tokens(toks)) != toks;
  }
  o.require(tok_bad == 0, std::to_string(tok_bad) + " tokenizer round trips");
  o.note("11 nodes/10 edges/root '=', " + std::to_string(pairs) + " fixture trees, 1000 token round trips");
  return o;
}

// Runs the command in-process with its stdout discarded.
int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "optenc");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);
  std::cout.flush();
  std::fflush(stdout);
  const int saved = dup(1);
  std::FILE* null = std::fopen("/dev/null", "w");
  dup2(fileno(null), 1);
  const int rc = run_cli(static_cast<int>(args.size()), argv.data());
  std::cout.flush();
  std::fflush(stdout);
  dup2(saved, 1);
  close(saved);
  std::fclose(null);
  return rc;
}

Outcome determinism(const testing::TempDir& dir) {
  Outcome o;
  const std::string ds = (dir / "ds.jsonl").string(), vocab = (dir / "vocab.txt").string();
  o.require(cli({"ingest", "-i", (testing::fixture_dir() / "corpus").string(), "-o", ds, "--topic-from-dir"}) == 0,
            "ingest");
  o.require(cli({"vocab", "--dataset", ds, "-o", vocab}) == 0, "vocab");
  const auto a = dir / "a", b = dir / "b";
  o.require(cli({"pretrain", "--dataset", ds, "--vocab", vocab, "--out-dir", a.string(), "--steps", "20",
                 "--batch-size", "4", "--seed", "11", "--checkpoint-every", "10", "--threads", "2"}) == 0,
            "pretrain");
  o.require(cli({"replay", (a / "manifest.json").string(), "--set", "out-dir=" + b.string()}) == 0, "replay");
  if (!o.pass) return o;
  std::size_t files = 0;
  for (const auto& e : std::filesystem::directory_iterator(a)) {
    const auto leaf = e.path().filename().string();
    if (leaf == "manifest.json") continue;
    ++files;
    o.require(testing::read_file(e.path()) == testing::read_file(b / leaf), leaf + " differs");
  }
  auto ma = nlohmann::json::parse(testing::read_file(a / "manifest.json"));
  auto mb = nlohmann::json::parse(testing::read_file(b / "manifest.json"));
  mb["config"]["out-dir"] = ma["config"]["out-dir"];
  o.require(ma == mb, "manifests differ beyond out-dir");
  o.note(std::to_string(files) + " log/checkpoint files byte-identical after replay");
  return o;
}

Outcome demo(std::string& table) {
  Outcome o;
  const auto g = testing::golden_model();
  const auto list = default_demo_formulas();
  const std::string anchor = "\\frac{a+b}{c+d}";
  const auto rows = similarity_demo(anchor, list, g.checkpoint, g.vocab);
  o.require(rows.size() == 15, std::to_string(rows.size()) + " rows");
  o.require(!rows.empty() && rows[0].rank == 1 && rows[0].formula == anchor, "anchor at rank 1");
  o.require(!rows.empty() && std::abs(rows[0].similarity - 1.0) <= 1e-12, "self-similarity 1.0");
  table = format_demo_table(anchor, rows);
  if (!rows.empty()) o.note("rank 1 " + rows[0].formula + " similarity " + fmt(rows[0].similarity, 6));
  return o;
}

}  // namespace

int main() {
  testing::TempDir overfit_dir("acceptance_overfit"), replay_dir("acceptance_replay");
  std::string table;
  struct Criterion {
    int id;
    const char* name;
    double limit_seconds;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "mask correctness", 10, mask_correctness},
      {2, "attention hard mask", 0, attention_mask},
      {3, "gradient check", 300, gradients},
      {4, "sampling statistics", 0, sampling},
      {5, "loss oracles", 0, loss_oracles},
      {6, "overfit convergence", 900, [&] { return overfit(overfit_dir); }},
      {7, "bpref oracle", 0, bpref_oracle},
      {8, "classification fine-tune", 0, classification},
      {9, "parser goldens", 0, parser_goldens},
      {10, "determinism", 0, [&] { return determinism(replay_dir); }},
      {11, "similarity demo", 0, [&] { return demo(table); }},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.note(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.limit_seconds > 0 && secs >= c.limit_seconds) o.require(false, "runtime over " + fmt(c.limit_seconds) + " s");
    failed += !o.pass;
    std::printf("%s criterion %d (%s): %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                secs);
    std::fflush(stdout);
  }
  if (!table.empty()) std::printf("\n%s", table.c_str());
  return failed ? 1 : 0;
}
