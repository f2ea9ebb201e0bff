#include "optenc/corpus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <future>
#include <sstream>

#include "optenc/error.hpp"

namespace optenc {
namespace fs = std::filesystem;

namespace {

constexpr std::string_view kBeginEq = "\\begin{equation}";
constexpr std::string_view kEndEq = "\\end{equation}";

// Commands whose braced argument is dropped along with the command.
constexpr std::array kDropWithArgument{
    "cite",  "citep", "citet",  "ref",     "eqref",           "label",
    "url",   "href",  "includegraphics", "bibliography",     "bibliographystyle",
    "usepackage", "documentclass", "input", "include", "pageref", "autoref"};

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string strip_comments(std::string_view src) {
  std::string out;
  out.reserve(src.size());
  bool in_comment = false;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const char c = src[i];
    if (in_comment) {
      if (c == '\n') {
        in_comment = false;
        out += c;
      }
      continue;
    }
    if (c == '\\' && i + 1 < src.size()) {
      out += c;
      out += src[++i];
      continue;
    }
    if (c == '%') {
      in_comment = true;
      continue;
    }
    out += c;
  }
  return out;
}

std::string_view document_body(std::string_view src) {
  const auto begin = src.find("\\begin{document}");
  if (begin == std::string_view::npos) return src;
  src.remove_prefix(begin + std::string_view("\\begin{document}").size());
  const auto end = src.find("\\end{document}");
  return end == std::string_view::npos ? src : src.substr(0, end);
}

// Skips a balanced {...} or [...] group starting at `i`; returns the index
// after it, or `i` when there is no group there.
std::size_t skip_group(std::string_view s, std::size_t i, char open, char close) {
  std::size_t j = i;
  while (j < s.size() && is_space(s[j])) ++j;
  if (j >= s.size() || s[j] != open) return i;
  int depth = 0;
  for (; j < s.size(); ++j) {
    if (s[j] == '\\') {
      ++j;
      continue;
    }
    if (s[j] == open) ++depth;
    if (s[j] == close && --depth == 0) return j + 1;
  }
  return s.size();
}

// Reduces TeX prose to plain words: markup commands and their bookkeeping
// arguments go, visible text stays, whitespace collapses to single spaces.
std::string clean_prose(std::string_view s) {
  std::string raw;
  raw.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    if (c == '\\') {
      if (i + 1 >= s.size()) break;
      const char next = s[i + 1];
      if (std::isalpha(static_cast<unsigned char>(next))) {
        std::size_t j = i + 1;
        while (j < s.size() && std::isalpha(static_cast<unsigned char>(s[j]))) ++j;
        const std::string_view name = s.substr(i + 1, j - i - 1);
        if (j < s.size() && s[j] == '*') ++j;
        if (name == "begin" || name == "end") {
          j = skip_group(s, j, '{', '}');
        } else if (std::find(kDropWithArgument.begin(), kDropWithArgument.end(), name) !=
                   kDropWithArgument.end()) {
          j = skip_group(s, j, '[', ']');
          j = skip_group(s, j, '{', '}');
        }
        raw += ' ';
        i = j;
        continue;
      }
      if (next == '%' || next == '&' || next == '$' || next == '_' || next == '#') {
        raw += next;
      } else {
        raw += ' ';
      }
      i += 2;
      continue;
    }
    if (c == '{' || c == '}' || c == '$') {
      ++i;
      continue;
    }
    raw += (c == '~') ? ' ' : c;
    ++i;
  }
  std::string out;
  out.reserve(raw.size());
  for (char ch : raw) {
    if (is_space(ch)) {
      if (!out.empty() && out.back() != ' ') out += ' ';
    } else {
      out += ch;
    }
  }
  return out;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

// Equation body as it should be tokenized: labels removed, trailing
// sentence punctuation and spacing removed.
std::string clean_formula(std::string_view body) {
  std::string s(body);
  for (auto pos = s.find("\\label"); pos != std::string::npos; pos = s.find("\\label")) {
    const std::size_t end = skip_group(s, pos + 6, '{', '}');
    s.erase(pos, end - pos);
  }
  for (;;) {
    s = trim(s);
    if (!s.empty() && (s.back() == '.' || s.back() == ',')) {
      s.pop_back();
      continue;
    }
    bool stripped = false;
    for (std::string_view sp : {"\\,", "\\;", "\\!", "\\quad", "\\qquad"}) {
      if (s.size() >= sp.size() && s.compare(s.size() - sp.size(), sp.size(), sp) == 0) {
        s.resize(s.size() - sp.size());
        stripped = true;
      }
    }
    if (!stripped) break;
  }
  return s;
}

}  // namespace

bool FormulaContextPair::same_record(const FormulaContextPair& o) const {
  return formula_latex == o.formula_latex && formula_tokens == o.formula_tokens &&
         context_tokens == o.context_tokens && opt == o.opt && source_id == o.source_id &&
         topic == o.topic;
}

std::string validate_pair(const FormulaContextPair& pair) {
  const auto placeholders =
      std::count(pair.context_tokens.begin(), pair.context_tokens.end(), kMathPlaceholder);
  if (placeholders != 1) return "context must contain exactly one [MATH]";
  if (const auto err = validate_tree(pair.opt); !err.empty()) return "opt: " + err;
  try {
    if (!(parse_to_opt(pair.formula_tokens) == pair.opt))
      return "opt does not match parse of formula tokens";
  } catch (const Error& e) {
    return std::string("formula does not parse: ") + e.what();
  }
  return {};
}

std::vector<std::string> tokenize_context(std::string_view text) {
  std::vector<std::string> out;
  std::string word;
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u) || u >= 0x80) {
      word += static_cast<char>(std::tolower(u));
    } else if (!word.empty()) {
      out.push_back(std::move(word));
      word.clear();
    }
  }
  if (!word.empty()) out.push_back(std::move(word));
  return out;
}

Extraction extract_pairs(std::string_view tex_source, std::size_t min_context_chars,
                         std::string_view source_name) {
  const std::string stripped = strip_comments(tex_source);
  const std::string_view body = document_body(stripped);

  // Prose pieces interleaved with equation bodies: piece[k], eq[k], piece[k+1].
  std::vector<std::string> pieces;
  std::vector<std::string> equations;
  std::size_t cursor = 0;
  for (;;) {
    const auto b = body.find(kBeginEq, cursor);
    if (b == std::string_view::npos) break;
    const auto e = body.find(kEndEq, b + kBeginEq.size());
    if (e == std::string_view::npos) break;
    pieces.push_back(clean_prose(body.substr(cursor, b - cursor)));
    equations.emplace_back(body.substr(b + kBeginEq.size(), e - b - kBeginEq.size()));
    cursor = e + kEndEq.size();
  }
  pieces.push_back(clean_prose(body.substr(cursor)));

  Extraction result;
  result.stats.equations = equations.size();
  for (std::size_t k = 0; k < equations.size(); ++k) {
    FormulaContextPair pair;
    pair.formula_latex = clean_formula(equations[k]);
    try {
      pair.formula_tokens = tokenize_latex(pair.formula_latex);
      pair.opt = parse_to_opt(pair.formula_tokens);
    } catch (const Error&) {
      ++result.stats.parse_failures;
      continue;
    }

    const std::string left = trim(pieces[k]);
    const std::string right = trim(pieces[k + 1]);
    // Symmetric growth: half the budget per side, the remainder to whichever
    // side still has text.
    std::size_t take_l = std::min(left.size(), (min_context_chars + 1) / 2);
    std::size_t take_r =
        std::min(right.size(), min_context_chars > take_l ? min_context_chars - take_l : 0);
    take_l = std::min(left.size(), std::max(take_l, min_context_chars > take_r
                                                         ? min_context_chars - take_r
                                                         : 0));
    // Snap outward to word boundaries.
    std::size_t lb = left.size() - take_l;
    while (lb > 0 && !is_space(left[lb - 1])) --lb;
    std::size_t re = take_r;
    while (re < right.size() && !is_space(right[re])) ++re;
    const std::string lwin = trim(std::string_view(left).substr(lb));
    const std::string rwin = trim(std::string_view(right).substr(0, re));
    pair.context_chars = lwin.size() + rwin.size();
    if (pair.context_chars < min_context_chars) {
      ++result.stats.context_failures;
      continue;
    }

    pair.context_tokens = tokenize_context(lwin);
    pair.context_tokens.emplace_back(kMathPlaceholder);
    for (auto& w : tokenize_context(rwin)) pair.context_tokens.push_back(std::move(w));
    pair.source_id = std::string(source_name) + "#" + std::to_string(k);
    result.pairs.push_back(std::move(pair));
  }
  return result;
}

nlohmann::ordered_json DatasetSummary::to_json() const {
  nlohmann::ordered_json j;
  j["files_read"] = files_read;
  j["pairs_written"] = pairs_written;
  j["formulas_skipped"] = formulas_skipped;
  j["parse_failures"] = parse_failures;
  j["context_failures"] = context_failures;
  j["io_errors"] = io_errors;
  return j;
}

std::vector<fs::path> expand_inputs(std::span<const fs::path> inputs) {
  std::vector<fs::path> out;
  for (const auto& p : inputs) {
    std::error_code ec;
    if (fs::is_directory(p, ec)) {
      std::vector<fs::path> found;
      for (const auto& entry : fs::recursive_directory_iterator(p, ec)) {
        if (entry.is_regular_file() && entry.path().extension() == ".tex")
          found.push_back(entry.path());
      }
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      out.push_back(p);
    }
  }
  return out;
}

DatasetSummary build_dataset(std::span<const fs::path> inputs, const fs::path& out,
                             const DatasetOptions& options) {
  const auto files = expand_inputs(inputs);

  struct FileResult {
    bool ok = false;
    std::string error;
    Extraction extraction;
  };
  auto process = [&](const fs::path& file) {
    FileResult r;
    std::ifstream in(file, std::ios::binary);
    if (!in) {
      r.error = "IoError: cannot read " + file.string();
      return r;
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    r.extraction = extract_pairs(buf.str(), options.min_context_chars, file.filename().string());
    if (options.topic_from_dir) {
      const std::string topic = file.parent_path().filename().string();
      for (auto& p : r.extraction.pairs) p.topic = topic;
    }
    r.ok = true;
    return r;
  };

  // Workers extract in parallel; results are consumed strictly in file order.
  std::vector<FileResult> results(files.size());
  const std::size_t workers = std::max(1u, options.threads);
  for (std::size_t start = 0; start < files.size(); start += workers) {
    const std::size_t stop = std::min(files.size(), start + workers);
    if (workers == 1) {
      results[start] = process(files[start]);
      continue;
    }
    std::vector<std::future<FileResult>> futures;
    for (std::size_t i = start; i < stop; ++i)
      futures.push_back(std::async(std::launch::async, process, std::cref(files[i])));
    for (std::size_t i = start; i < stop; ++i) results[i] = futures[i - start].get();
  }

  DatasetSummary summary;
  std::vector<FormulaContextPair> pairs;
  for (auto& r : results) {
    if (!r.ok) {
      summary.io_errors.push_back(r.error);
      continue;
    }
    ++summary.files_read;
    summary.parse_failures += r.extraction.stats.parse_failures;
    summary.context_failures += r.extraction.stats.context_failures;
    for (auto& p : r.extraction.pairs) pairs.push_back(std::move(p));
  }
  summary.formulas_skipped = summary.parse_failures + summary.context_failures;
  summary.pairs_written = pairs.size();
  write_dataset(out, pairs);

  nlohmann::ordered_json meta;
  meta["format"] = "formula-context-pairs/jsonl";
  meta["context_tokenization"] = "lowercase; split on non-alphanumeric ASCII; punctuation dropped";
  meta["context_window"] = "symmetric growth around the equation, snapped to word boundaries";
  meta["min_context_chars"] = options.min_context_chars;
  meta["topic_from_dir"] = options.topic_from_dir;
  meta["summary"] = summary.to_json();
  std::ofstream mf(fs::path(out.string() + ".meta.json"), std::ios::binary);
  if (!mf) throw IoError("cannot write " + out.string() + ".meta.json");
  mf << meta.dump(2) << '\n';
  return summary;
}

nlohmann::ordered_json pair_to_json(const FormulaContextPair& pair) {
  nlohmann::ordered_json j;
  j["formula"] = pair.formula_latex;
  j["formula_tokens"] = token_texts(pair.formula_tokens);
  j["context_tokens"] = pair.context_tokens;
  j["opt"] = serialize_opt(pair.opt);
  j["source_id"] = pair.source_id;
  j["topic"] = pair.topic ? nlohmann::ordered_json(*pair.topic) : nlohmann::ordered_json(nullptr);
  return j;
}

FormulaContextPair pair_from_json(const nlohmann::json& j) {
  FormulaContextPair pair;
  try {
    pair.formula_latex = j.at("formula").get<std::string>();
    for (const auto& t : j.at("formula_tokens")) {
      auto text = t.get<std::string>();
      const TokenKind kind = classify_token(text);
      pair.formula_tokens.push_back(MathToken{std::move(text), kind});
    }
    pair.context_tokens = j.at("context_tokens").get<std::vector<std::string>>();
    pair.opt = deserialize_opt(j.at("opt").get<std::string>());
    pair.source_id = j.at("source_id").get<std::string>();
    if (j.contains("topic") && !j.at("topic").is_null())
      pair.topic = j.at("topic").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("dataset record: ") + e.what());
  }
  return pair;
}

void write_dataset(const fs::path& path, std::span<const FormulaContextPair> pairs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& p : pairs) out << pair_to_json(p).dump() << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<FormulaContextPair> read_dataset(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<FormulaContextPair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    pairs.push_back(pair_from_json(j));
  }
  return pairs;
}

}  // namespace optenc
