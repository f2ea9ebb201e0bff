#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "optenc/corpus.hpp"
#include "optenc/inputs.hpp"
#include "optenc/model.hpp"
#include "optenc/opt.hpp"
#include "optenc/rng.hpp"
#include "optenc/vocab.hpp"

namespace testing {

using namespace optenc;

inline std::filesystem::path fixture_dir() { return OPTENC_FIXTURE_DIR; }

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << text;
}

/// Fresh scratch directory under the build tree, wiped on construction.
class TempDir {
 public:
  explicit TempDir(const std::string& name)
      : path_(std::filesystem::path(OPTENC_SCRATCH_DIR) / name) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

/// Random formulas inside the parser's grammar.
class FormulaGen {
 public:
  explicit FormulaGen(std::uint64_t seed) : rng_(seed) {}

  std::string formula() {
    std::string s = expr(3);
    if (rng_.uniform_index(3) == 0) s += pick({"=", "<", "\\leq ", ">"}) + expr(2);
    return s;
  }

 private:
  Rng rng_;

  std::string pick(std::initializer_list<const char*> xs) {
    auto it = xs.begin();
    std::advance(it, static_cast<long>(rng_.uniform_index(xs.size())));
    return *it;
  }

  std::string atom() {
    switch (rng_.uniform_index(4)) {
      case 0:
        return std::string(1, static_cast<char>('0' + rng_.uniform_index(10)));
      case 1:
        return pick({"\\alpha ", "\\beta ", "\\theta ", "\\pi ", "\\infty "});
      default:
        return std::string(1, static_cast<char>('a' + rng_.uniform_index(26)));
    }
  }

  std::string arg(int depth) {
    if (depth <= 0 || rng_.uniform_index(2) == 0) return atom();
    return "{" + expr(depth - 1) + "}";
  }

  std::string factor(int depth) {
    if (depth <= 0) return atom();
    switch (rng_.uniform_index(9)) {
      case 0:
        return "\\frac{" + expr(depth - 1) + "}{" + expr(depth - 1) + "}";
      case 1:
        return "(" + expr(depth - 1) + ")";
      case 2:
        return atom() + "^" + arg(depth - 1);
      case 3:
        return atom() + "_" + arg(depth - 1);
      case 4:
        return "\\sqrt{" + expr(depth - 1) + "}";
      case 5:
        return pick({"\\sin ", "\\log ", "\\exp "}) + atom();
      default:
        return atom();
    }
  }

  std::string expr(int depth) {
    std::string s = factor(depth);
    const std::size_t extra = rng_.uniform_index(3);
    for (std::size_t i = 0; i < extra; ++i)
      s += pick({"+", "-", "\\times ", "\\div ", "/", " "}) + factor(depth - 1);
    return s;
  }
};

/// Random tree of 1..max_nodes nodes, nodes in pre-order.
inline OperatorTree random_tree(Rng& rng, std::size_t max_nodes) {
  const std::size_t target = 1 + rng.uniform_index(max_nodes);
  OperatorTree t;
  t.nodes.push_back({"n0", 0});
  // Attach each new node to a node on the current rightmost path, which keeps
  // the numbering a pre-order traversal.
  std::vector<std::size_t> path{0};
  while (t.nodes.size() < target) {
    const std::size_t depth = rng.uniform_index(path.size());
    path.resize(depth + 1);
    const std::size_t parent = path.back();
    const std::size_t child = t.nodes.size();
    t.nodes.push_back({"n" + std::to_string(child), 0});
    t.nodes[parent].arity++;
    t.edges.emplace_back(parent, child);
    path.push_back(child);
  }
  return t;
}

/// Pair for `latex` with the given context words.
inline FormulaContextPair pair_from_latex(const std::string& latex,
                                          std::vector<std::string> context = {}) {
  FormulaContextPair p;
  p.formula_latex = latex;
  p.formula_tokens = tokenize_latex(latex);
  p.opt = parse_to_opt(p.formula_tokens);
  p.context_tokens = std::move(context);
  p.source_id = "test#0";
  return p;
}

/// `n` words stem0..stem{n-1} with [MATH] inserted before word `math_at`
/// (appended when math_at >= n).
inline std::vector<std::string> words(std::size_t n, std::size_t math_at, const std::string& stem = "w") {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i == math_at) out.emplace_back(kMathPlaceholder);
    out.push_back(stem + std::to_string(i));
  }
  if (math_at >= n) out.emplace_back(kMathPlaceholder);
  return out;
}

inline Vocab vocab_for(std::span<const FormulaContextPair> pairs) { return build_vocab(pairs); }

struct ProcessResult {
  int exit_code = -1;
  std::string out, err;
};

/// Runs the built `optenc` binary with `args` (already shell-quoted where
/// needed), capturing both streams under `scratch`.
inline ProcessResult run_optenc(const std::string& args, const std::filesystem::path& scratch) {
  std::filesystem::create_directories(scratch);
  const auto out = scratch / "stdout.txt", err = scratch / "stderr.txt";
  const std::string cmd = std::string("'") + OPTENC_CLI_PATH + "' " + args + " >'" + out.string() +
                          "' 2>'" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  ProcessResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_file(out);
  r.err = read_file(err);
  return r;
}

}  // namespace testing
