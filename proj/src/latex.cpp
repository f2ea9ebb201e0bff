#include "optenc/latex.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include "optenc/error.hpp"

namespace optenc {
namespace {

constexpr std::array kRelationCommands{"\\leq", "\\geq", "\\le",     "\\ge",
                                       "\\neq", "\\ne",  "\\approx", "\\equiv",
                                       "\\sim", "\\simeq", "\\propto"};
constexpr std::array kOperatorCommands{"\\times", "\\div", "\\cdot", "\\pm", "\\mp"};

bool is_ascii_letter(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

// Length of the UTF-8 sequence starting with lead byte `c`.
std::size_t utf8_length(unsigned char c) {
  if (c < 0x80) return 1;
  if ((c >> 5) == 0x6) return 2;
  if ((c >> 4) == 0xE) return 3;
  if ((c >> 3) == 0x1E) return 4;
  return 1;
}

}  // namespace

TokenKind classify_token(std::string_view text) {
  if (text == "{" || text == "}") return TokenKind::brace;
  if (text == "=" || text == "<" || text == ">") return TokenKind::relation;
  if (text == "+" || text == "-" || text == "/" || text == "*" || text == "^" ||
      text == "_")
    return TokenKind::op;
  if (text.size() == 1 && std::isdigit(static_cast<unsigned char>(text[0])))
    return TokenKind::digit;
  if (!text.empty() && text[0] == '\\') {
    for (const char* r : kRelationCommands)
      if (text == r) return TokenKind::relation;
    for (const char* o : kOperatorCommands)
      if (text == o) return TokenKind::op;
    return TokenKind::command;
  }
  return TokenKind::symbol;
}

std::vector<MathToken> tokenize_latex(std::string_view src) {
  std::vector<MathToken> out;
  int depth = 0;
  std::size_t i = 0;
  auto push = [&](std::string text) {
    TokenKind kind = classify_token(text);
    out.push_back(MathToken{std::move(text), kind});
  };
  while (i < src.size()) {
    const char c = src[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (c == '\\') {
      if (i + 1 >= src.size())
        throw TokenizeError("trailing backslash at offset " + std::to_string(i));
      const char next = src[i + 1];
      if (is_ascii_letter(next)) {
        std::size_t j = i + 1;
        while (j < src.size() && is_ascii_letter(src[j])) ++j;
        push(std::string(src.substr(i, j - i)));
        i = j;
      } else if (std::isspace(static_cast<unsigned char>(next))) {
        // control space: a separator, not a lexeme
        i += 2;
      } else {
        const std::size_t len = utf8_length(static_cast<unsigned char>(next));
        push(std::string(src.substr(i, 1 + len)));
        i += 1 + len;
      }
      continue;
    }
    if (c == '{') ++depth;
    if (c == '}') {
      if (--depth < 0)
        throw TokenizeError("unbalanced '}' at offset " + std::to_string(i));
    }
    const std::size_t len =
        std::min(utf8_length(static_cast<unsigned char>(c)), src.size() - i);
    push(std::string(src.substr(i, len)));
    i += len;
  }
  if (depth != 0) throw TokenizeError("unbalanced '{': " + std::to_string(depth) + " unclosed");
  return out;
}

std::vector<std::string> token_texts(const std::vector<MathToken>& tokens) {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(t.text);
  return out;
}

std::string join_tokens(const std::vector<MathToken>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i].text;
  }
  return out;
}

}  // namespace optenc
