#include "optenc/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

#include "optenc/error.hpp"

namespace optenc {

Vocab::Vocab() {
  for (const char* s : {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "[MATH]"}) add(s, 0);
}

TokenId Vocab::add(std::string token, std::size_t count) {
  if (token.empty() || std::any_of(token.begin(), token.end(), [](char c) {
        return std::isspace(static_cast<unsigned char>(c));
      }))
    throw FormatError("vocab token must be non-empty without whitespace");
  if (index_.count(token)) throw FormatError("duplicate vocab token '" + token + "'");
  const auto id = static_cast<TokenId>(tokens_.size());
  index_.emplace(token, id);
  tokens_.push_back(std::move(token));
  counts_.push_back(count);
  return id;
}

TokenId Vocab::id(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view token) const {
  return index_.count(std::string(token)) != 0;
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::size_t i = 0; i < tokens_.size(); ++i) out << tokens_[i] << '\t' << counts_[i] << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  Vocab v;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) throw FormatError("vocab line without count: " + line);
    std::string token = line.substr(0, tab);
    std::size_t count = 0;
    try {
      count = std::stoull(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw FormatError("bad vocab count on line " + std::to_string(line_no + 1));
    }
    if (line_no < static_cast<std::size_t>(kSpecialCount)) {
      if (token != v.tokens_[line_no]) throw FormatError("vocab specials out of order");
    } else {
      v.add(std::move(token), count);
    }
    ++line_no;
  }
  if (line_no < static_cast<std::size_t>(kSpecialCount)) throw FormatError("vocab file truncated");
  return v;
}

Vocab build_vocab(std::span<const FormulaContextPair> pairs, std::size_t min_freq) {
  if (pairs.empty()) throw EmptyDataset("no pairs to build a vocabulary from");
  std::map<std::string, std::size_t> freq;
  for (const auto& p : pairs) {
    for (const auto& t : p.formula_tokens) ++freq[t.text];
    for (const auto& w : p.context_tokens)
      if (w != kMathPlaceholder) ++freq[w];
    for (const auto& n : p.opt.nodes) ++freq[n.label];
  }
  std::vector<std::pair<std::string, std::size_t>> entries(freq.begin(), freq.end());
  std::stable_sort(entries.begin(), entries.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocab v;
  for (auto& [token, count] : entries) {
    if (count < min_freq || v.contains(token)) continue;
    v.add(token, count);
  }
  return v;
}

Vocab build_vocab(const std::filesystem::path& dataset, std::size_t min_freq) {
  const auto pairs = read_dataset(dataset);
  return build_vocab(pairs, min_freq);
}

}  // namespace optenc
