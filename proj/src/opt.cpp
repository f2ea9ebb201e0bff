#include "optenc/opt.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <memory>
#include <string_view>

#include "optenc/error.hpp"

namespace optenc {

std::vector<std::vector<std::size_t>> OperatorTree::children() const {
  std::vector<std::vector<std::size_t>> out(nodes.size());
  for (const auto& [p, c] : edges) out[p].push_back(c);
  return out;
}

std::vector<std::optional<std::size_t>> OperatorTree::parents() const {
  std::vector<std::optional<std::size_t>> out(nodes.size());
  for (const auto& [p, c] : edges) out[c] = p;
  return out;
}

bool OperatorTree::adjacent(std::size_t a, std::size_t b) const {
  return std::any_of(edges.begin(), edges.end(), [&](const auto& e) {
    return (e.first == a && e.second == b) || (e.first == b && e.second == a);
  });
}

OperatorTree OperatorTree::prefix(std::size_t count) const {
  OperatorTree out;
  count = std::min(count, nodes.size());
  out.nodes.assign(nodes.begin(), nodes.begin() + static_cast<std::ptrdiff_t>(count));
  for (auto& n : out.nodes) n.arity = 0;
  for (const auto& [p, c] : edges) {
    if (p < count && c < count) {
      out.edges.emplace_back(p, c);
      ++out.nodes[p].arity;
    }
  }
  out.root = 0;
  return out;
}

std::string validate_tree(const OperatorTree& tree) {
  const std::size_t n = tree.nodes.size();
  if (n == 0) return "tree has no nodes";
  if (tree.root != 0) return "root is not node 0";
  if (tree.edges.size() != n - 1) return "edge count is not |nodes|-1";
  std::vector<int> parent_count(n, 0);
  std::vector<std::size_t> out_degree(n, 0);
  for (const auto& [p, c] : tree.edges) {
    if (p >= n || c >= n) return "edge references a missing node";
    if (p == c) return "self edge";
    ++parent_count[c];
    ++out_degree[p];
  }
  if (parent_count[tree.root] != 0) return "root has a parent";
  for (std::size_t i = 0; i < n; ++i) {
    if (i != tree.root && parent_count[i] != 1) return "node without exactly one parent";
    if (tree.nodes[i].arity != out_degree[i]) return "arity does not match out-degree";
    if (tree.nodes[i].label.empty()) return "empty label";
  }
  // Pre-order check: walking children in edge order must visit 0,1,2,...
  const auto kids = tree.children();
  std::vector<std::size_t> stack{tree.root};
  std::size_t expected = 0;
  while (!stack.empty()) {
    const std::size_t v = stack.back();
    stack.pop_back();
    if (v != expected) return "node order is not depth-first pre-order";
    ++expected;
    for (auto it = kids[v].rbegin(); it != kids[v].rend(); ++it) stack.push_back(*it);
  }
  if (expected != n) return "not all nodes reachable from root";
  return {};
}

namespace {

constexpr std::array kGreek{
    "\\alpha",   "\\beta",    "\\gamma",   "\\delta",  "\\epsilon", "\\varepsilon",
    "\\zeta",    "\\eta",     "\\theta",   "\\vartheta", "\\iota",  "\\kappa",
    "\\lambda",  "\\mu",      "\\nu",      "\\xi",     "\\pi",      "\\varpi",
    "\\rho",     "\\varrho",  "\\sigma",   "\\varsigma", "\\tau",   "\\upsilon",
    "\\phi",     "\\varphi",  "\\chi",     "\\psi",    "\\omega",   "\\Gamma",
    "\\Delta",   "\\Theta",   "\\Lambda",  "\\Xi",     "\\Pi",      "\\Sigma",
    "\\Upsilon", "\\Phi",     "\\Psi",     "\\Omega",  "\\infty",   "\\ell",
    "\\hbar"};

constexpr std::array kFunctions{"\\sin",    "\\cos",    "\\tan",    "\\cot",  "\\sec",
                                "\\csc",    "\\arcsin", "\\arccos", "\\arctan", "\\sinh",
                                "\\cosh",   "\\tanh",   "\\log",    "\\ln",   "\\lg",
                                "\\exp",    "\\det",    "\\max",    "\\min",  "\\gcd"};

constexpr std::array kSpacing{"\\,", "\\;", "\\:", "\\!", "\\quad", "\\qquad"};

template <std::size_t N>
bool in(const std::array<const char*, N>& set, std::string_view s) {
  return std::any_of(set.begin(), set.end(), [&](const char* x) { return s == x; });
}

struct Expr {
  std::string label;
  std::vector<std::unique_ptr<Expr>> kids;
};
using ExprPtr = std::unique_ptr<Expr>;

ExprPtr leaf(std::string label) {
  auto e = std::make_unique<Expr>();
  e->label = std::move(label);
  return e;
}

ExprPtr node(std::string label, ExprPtr a, ExprPtr b = nullptr) {
  auto e = leaf(std::move(label));
  e->kids.push_back(std::move(a));
  if (b) e->kids.push_back(std::move(b));
  return e;
}

bool is_letter(std::string_view s) {
  return s.size() == 1 && std::isalpha(static_cast<unsigned char>(s[0]));
}
bool is_digit(std::string_view s) {
  return s.size() == 1 && std::isdigit(static_cast<unsigned char>(s[0]));
}

class Parser {
 public:
  explicit Parser(const std::vector<MathToken>& tokens) {
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (in(kSpacing, tokens[i].text)) continue;
      toks_.push_back(tokens[i].text);
      index_.push_back(i);
    }
    end_index_ = tokens.size();
  }

  ExprPtr parse() {
    if (toks_.empty()) throw ParseError(0, "empty formula");
    auto e = relation();
    if (pos_ != toks_.size()) fail("unexpected token '" + toks_[pos_] + "'");
    return e;
  }

 private:
  std::vector<std::string> toks_;
  std::vector<std::size_t> index_;
  std::size_t end_index_ = 0;
  std::size_t pos_ = 0;

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(pos_ < index_.size() ? index_[pos_] : end_index_, what);
  }

  bool at_end() const { return pos_ >= toks_.size(); }
  std::string_view peek() const { return at_end() ? std::string_view{} : toks_[pos_]; }
  bool accept(std::string_view t) {
    if (!at_end() && toks_[pos_] == t) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect(std::string_view t) {
    if (!accept(t)) fail("expected '" + std::string(t) + "'");
  }

  static bool is_relation(std::string_view t) {
    return !t.empty() && classify_token(t) == TokenKind::relation;
  }
  static bool is_additive(std::string_view t) {
    return t == "+" || t == "-" || t == "\\pm" || t == "\\mp";
  }
  static bool is_mult_op(std::string_view t) {
    return t == "\\times" || t == "\\div" || t == "/" || t == "\\cdot" || t == "*";
  }
  static bool starts_factor(std::string_view t) {
    return is_letter(t) || is_digit(t) || in(kGreek, t) || in(kFunctions, t) ||
           t == "(" || t == "{" || t == "\\frac" || t == "\\sqrt" || t == "\\left";
  }

  ExprPtr relation() {
    auto lhs = additive();
    while (is_relation(peek())) {
      std::string op(peek());
      ++pos_;
      lhs = node(op, std::move(lhs), additive());
    }
    return lhs;
  }

  ExprPtr additive() {
    ExprPtr lhs;
    if (peek() == "-") {
      ++pos_;
      lhs = node(std::string(opt_label::neg), term());
    } else if (peek() == "+") {
      ++pos_;
      lhs = term();
    } else {
      lhs = term();
    }
    while (is_additive(peek())) {
      std::string op(peek());
      ++pos_;
      lhs = node(op, std::move(lhs), term());
    }
    return lhs;
  }

  ExprPtr term() {
    auto lhs = unary();
    for (;;) {
      if (is_mult_op(peek())) {
        std::string op(peek());
        ++pos_;
        lhs = node(op == "*" ? std::string("\\times") : op, std::move(lhs), unary());
      } else if (!at_end() && starts_factor(peek())) {
        lhs = node(std::string(opt_label::times), std::move(lhs), unary());
      } else {
        return lhs;
      }
    }
  }

  ExprPtr unary() {
    const std::string_view t = peek();
    if (in(kFunctions, t)) {
      std::string fn(t);
      ++pos_;
      if (at_end()) fail("function without argument");
      return node(fn, unary());
    }
    if (t == "\\sqrt") {
      ++pos_;
      ExprPtr degree;
      if (accept("[")) {
        degree = relation();
        expect("]");
      }
      auto radicand = argument();
      auto e = node("\\sqrt", std::move(radicand), std::move(degree));
      return scripts(std::move(e));
    }
    return scripts(primary());
  }

  ExprPtr scripts(ExprPtr base) {
    for (;;) {
      if (accept("^")) {
        base = node(std::string(opt_label::sup), std::move(base), argument());
      } else if (accept("_")) {
        base = node(std::string(opt_label::sub), std::move(base), argument());
      } else {
        return base;
      }
    }
  }

  // Argument of a script or \frac: a braced group or a single atom.
  ExprPtr argument() {
    if (at_end()) fail("missing argument");
    if (accept("{")) {
      auto e = relation();
      expect("}");
      return e;
    }
    const std::string_view t = peek();
    if (is_letter(t) || is_digit(t) || in(kGreek, t)) {
      ++pos_;
      return leaf(std::string(t));
    }
    fail("unsupported argument '" + std::string(t) + "'");
  }

  ExprPtr primary() {
    if (at_end()) fail("unexpected end of formula");
    const std::string_view t = peek();
    if (is_letter(t) || in(kGreek, t)) {
      ++pos_;
      return leaf(std::string(t));
    }
    if (is_digit(t)) {
      std::string run;
      while (!at_end() && is_digit(peek())) run += toks_[pos_++];
      if (peek() == "." && pos_ + 1 < toks_.size() && is_digit(toks_[pos_ + 1])) {
        run += toks_[pos_++];
        while (!at_end() && is_digit(peek())) run += toks_[pos_++];
      }
      return leaf(std::move(run));
    }
    if (t == "\\frac") {
      ++pos_;
      auto num = argument();
      auto den = argument();
      return node(std::string(opt_label::frac), std::move(num), std::move(den));
    }
    if (accept("(")) {
      auto e = relation();
      expect(")");
      return e;
    }
    if (accept("{")) {
      auto e = relation();
      expect("}");
      return e;
    }
    if (accept("\\left")) {
      expect("(");
      auto e = relation();
      expect("\\right");
      expect(")");
      return e;
    }
    fail("unsupported token '" + std::string(t) + "'");
  }
};

void flatten(const Expr& e, OperatorTree& tree) {
  const std::size_t self = tree.nodes.size();
  tree.nodes.push_back(OptNode{e.label, e.kids.size()});
  for (const auto& k : e.kids) {
    const std::size_t child = tree.nodes.size();
    tree.edges.emplace_back(self, child);
    flatten(*k, tree);
  }
}

bool needs_escape(char c) {
  return c == '(' || c == ')' || std::isspace(static_cast<unsigned char>(c));
}

void write_label(const std::string& label, std::string& out) {
  for (std::size_t i = 0; i < label.size(); ++i) {
    const char c = label[i];
    if (needs_escape(c)) {
      out += '\\';
      out += c;
    } else if (c == '\\' && (i + 1 == label.size() || needs_escape(label[i + 1]) ||
                             label[i + 1] == '\\')) {
      out += "\\\\";
    } else {
      out += c;
    }
  }
}

void write_node(const OperatorTree& tree, const std::vector<std::vector<std::size_t>>& kids,
                std::size_t v, std::string& out) {
  out += '(';
  write_label(tree.nodes[v].label, out);
  for (std::size_t c : kids[v]) {
    out += ' ';
    write_node(tree, kids, c, out);
  }
  out += ')';
}

class RecordReader {
 public:
  explicit RecordReader(std::string_view s) : s_(s) {}

  OperatorTree read() {
    OperatorTree tree;
    skip_ws();
    read_node(tree);
    skip_ws();
    if (pos_ != s_.size()) fail("trailing characters");
    return tree;
  }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError("opt record: " + what + " at offset " + std::to_string(pos_));
  }
  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  void read_node(OperatorTree& tree) {
    if (pos_ >= s_.size() || s_[pos_] != '(') fail("expected '('");
    ++pos_;
    std::string label;
    while (pos_ < s_.size()) {
      const char c = s_[pos_];
      if (c == '\\' && pos_ + 1 < s_.size() &&
          (needs_escape(s_[pos_ + 1]) || s_[pos_ + 1] == '\\')) {
        label += s_[pos_ + 1];
        pos_ += 2;
      } else if (needs_escape(c)) {
        break;
      } else {
        label += c;
        ++pos_;
      }
    }
    if (label.empty()) fail("empty label");
    const std::size_t self = tree.nodes.size();
    tree.nodes.push_back(OptNode{std::move(label), 0});
    for (;;) {
      skip_ws();
      if (pos_ >= s_.size()) fail("unterminated node");
      if (s_[pos_] == ')') {
        ++pos_;
        return;
      }
      const std::size_t child = tree.nodes.size();
      tree.edges.emplace_back(self, child);
      ++tree.nodes[self].arity;
      read_node(tree);
    }
  }
};

}  // namespace

OperatorTree parse_to_opt(const std::vector<MathToken>& tokens) {
  Parser parser(tokens);
  auto root = parser.parse();
  OperatorTree tree;
  flatten(*root, tree);
  return tree;
}

OperatorTree parse_latex(std::string_view latex) { return parse_to_opt(tokenize_latex(latex)); }

std::string serialize_opt(const OperatorTree& tree) {
  std::string out;
  if (tree.nodes.empty()) return out;
  write_node(tree, tree.children(), tree.root, out);
  return out;
}

OperatorTree deserialize_opt(std::string_view record) { return RecordReader(record).read(); }

}  // namespace optenc
