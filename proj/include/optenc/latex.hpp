#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace optenc {

enum class TokenKind { command, symbol, digit, brace, relation, op };

struct MathToken {
  std::string text;
  TokenKind kind = TokenKind::symbol;

  bool operator==(const MathToken&) const = default;
};

/// Splits a LaTeX math string into lexemes. Control words (`\frac`) stay
/// whole, every other character (braces, scripts, letters, digits) becomes
/// its own token. Whitespace and `\ ` separate tokens and are dropped.
///
/// Throws TokenizeError on unbalanced braces or a trailing lone backslash.
std::vector<MathToken> tokenize_latex(std::string_view src);

/// Kind assigned to a token text; exposed so deserialized token lists can be
/// re-typed without re-tokenizing.
TokenKind classify_token(std::string_view text);

std::vector<std::string> token_texts(const std::vector<MathToken>& tokens);
std::string join_tokens(const std::vector<MathToken>& tokens);

}  // namespace optenc
