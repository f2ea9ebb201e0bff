#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "optenc/corpus.hpp"

namespace optenc {

using TokenId = std::int32_t;

/// Dense token <-> id mapping. Ids 0..5 are the fixed specials.
class Vocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kCls = 2;
  static constexpr TokenId kSep = 3;
  static constexpr TokenId kMask = 4;
  static constexpr TokenId kMath = 5;
  static constexpr TokenId kSpecialCount = 6;

  /// Specials only.
  Vocab();

  /// Appends a token with its corpus frequency; returns its id. Throws
  /// FormatError on duplicates or tokens containing whitespace.
  TokenId add(std::string token, std::size_t count);

  /// Id of `token`, or kUnk when absent.
  TokenId id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t count(TokenId id) const { return counts_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }

  static bool is_special(TokenId id) { return id >= 0 && id < kSpecialCount; }

  /// `token<TAB>count` per line in id order.
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  bool operator==(const Vocab& other) const {
    return tokens_ == other.tokens_ && counts_ == other.counts_;
  }

 private:
  std::vector<std::string> tokens_;
  std::vector<std::size_t> counts_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Vocabulary over formula tokens, context words and OPT node labels jointly.
/// Tokens rarer than `min_freq` are left out; order is frequency descending,
/// then lexicographic. Throws EmptyDataset when `pairs` is empty.
Vocab build_vocab(std::span<const FormulaContextPair> pairs, std::size_t min_freq = 1);
Vocab build_vocab(const std::filesystem::path& dataset, std::size_t min_freq = 1);

}  // namespace optenc
