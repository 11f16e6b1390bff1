#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace xvqa {

using Tokens = std::vector<std::string>;

/// Lowercases and splits on runs of non-alphanumeric characters.
inline Tokens tokenize(std::string_view text) {
  Tokens out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline std::string join(const Tokens& tokens, std::string_view sep = " ") {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.append(sep);
    out.append(tokens[i]);
  }
  return out;
}

/// Tokenize-normalized form used for answer matching and counting.
inline std::string normalize_answer(std::string_view answer) { return join(tokenize(answer)); }

inline constexpr std::string_view kStartToken = "#start";
inline constexpr std::string_view kEndToken = "#end";
inline constexpr std::string_view kUnknownToken = "#unk";

/// Token <-> index bijection. Reserved tokens occupy indices 0..2.
class Vocabulary {
 public:
  static constexpr std::size_t kStart = 0, kEnd = 1, kUnknown = 2, kReserved = 3;

  Vocabulary() { tokens_ = {std::string(kStartToken), std::string(kEndToken), std::string(kUnknownToken)}; reindex(); }

  explicit Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    if (tokens_.size() < kReserved || tokens_[kStart] != kStartToken || tokens_[kEnd] != kEndToken ||
        tokens_[kUnknown] != kUnknownToken) {
      throw std::invalid_argument("Vocabulary: reserved tokens must lead the token list");
    }
    reindex();
  }

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(std::size_t i) const { return tokens_.at(i); }

  std::optional<std::size_t> find(std::string_view tok) const {
    auto it = index_.find(std::string(tok));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  bool contains(std::string_view tok) const { return find(tok).has_value(); }
  std::size_t index_or_unknown(std::string_view tok) const { return find(tok).value_or(kUnknown); }

  std::vector<std::size_t> encode(const Tokens& toks) const {
    std::vector<std::size_t> ids;
    ids.reserve(toks.size());
    for (const auto& t : toks) ids.push_back(index_or_unknown(t));
    return ids;
  }

  static bool is_reserved(std::string_view tok) {
    return tok == kStartToken || tok == kEndToken || tok == kUnknownToken;
  }

 private:
  void reindex() {
    index_.clear();
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (!index_.emplace(tokens_[i], i).second) {
        throw std::invalid_argument("Vocabulary: duplicate token '" + tokens_[i] + "'");
      }
    }
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

namespace detail {

inline std::vector<std::pair<std::string, std::size_t>> ranked_counts(
    const std::map<std::string, std::size_t>& counts) {
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  // std::map iteration is already lexicographic, so a stable sort on count
  // keeps the tie-break.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return ranked;
}

inline bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() > suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace detail

/// Candidate singular stems for a surface form, most specific first.
inline std::vector<std::string> plural_stems(std::string_view w) {
  std::vector<std::string> out;
  if (detail::ends_with(w, "ies")) out.push_back(std::string(w.substr(0, w.size() - 3)) + "y");
  if (detail::ends_with(w, "ses") || detail::ends_with(w, "xes") || detail::ends_with(w, "ches") ||
      detail::ends_with(w, "shes") || detail::ends_with(w, "zes")) {
    out.emplace_back(w.substr(0, w.size() - 2));
  }
  if (detail::ends_with(w, "s") && !detail::ends_with(w, "ss")) out.emplace_back(w.substr(0, w.size() - 1));
  return out;
}

inline Vocabulary build_vocabulary(const std::vector<Tokens>& corpus, std::size_t min_count) {
  if (min_count < 1) throw std::invalid_argument("build_vocabulary: min_count must be >= 1");
  std::map<std::string, std::size_t> counts;
  for (const auto& seq : corpus) {
    for (const auto& t : seq) {
      if (!Vocabulary::is_reserved(t)) ++counts[t];
    }
  }
  std::vector<std::string> tokens = {std::string(kStartToken), std::string(kEndToken),
                                     std::string(kUnknownToken)};
  for (const auto& [tok, n] : detail::ranked_counts(counts)) {
    if (n >= min_count) tokens.push_back(tok);
  }
  return Vocabulary(std::move(tokens));
}

/// Attribute word list. Lookups are plural-insensitive.
class WordList {
 public:
  WordList() = default;
  explicit WordList(std::vector<std::string> words) : words_(std::move(words)) {
    for (std::size_t i = 0; i < words_.size(); ++i) {
      if (!index_.emplace(words_[i], i).second) {
        throw std::invalid_argument("WordList: duplicate word '" + words_[i] + "'");
      }
    }
  }

  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }
  const std::string& word(std::size_t i) const { return words_.at(i); }

  /// Index of the entry a surface token folds onto, if any.
  std::optional<std::size_t> find(std::string_view token) const {
    if (auto it = index_.find(std::string(token)); it != index_.end()) return it->second;
    for (const auto& stem : plural_stems(token)) {
      if (auto it = index_.find(stem); it != index_.end()) return it->second;
    }
    return std::nullopt;
  }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Takes the top_n most frequent caption tokens, removes stop words, folds
/// plural forms onto a stem that also occurs in the corpus and merges their
/// counts.
inline WordList build_word_list(const std::vector<Tokens>& captions, std::size_t top_n,
                                const std::unordered_set<std::string>& stop_words) {
  if (top_n < 1) throw std::invalid_argument("build_word_list: top_n must be >= 1");
  std::map<std::string, std::size_t> counts;
  for (const auto& seq : captions) {
    for (const auto& t : seq) ++counts[t];
  }
  auto ranked = detail::ranked_counts(counts);
  if (ranked.size() > top_n) ranked.resize(top_n);

  std::map<std::string, std::size_t> merged;
  for (const auto& [tok, n] : ranked) {
    if (stop_words.count(tok)) continue;
    std::string target = tok;
    for (const auto& stem : plural_stems(tok)) {
      if (counts.count(stem) && !stop_words.count(stem)) {
        target = stem;
        break;
      }
    }
    merged[target] += n;
  }
  std::vector<std::string> words;
  for (const auto& [w, n] : detail::ranked_counts(merged)) words.push_back(w);
  return WordList(std::move(words));
}

struct WordListCoverage {
  double all_tokens = 0;      // covered occurrences / all occurrences
  double content_tokens = 0;  // covered occurrences / non-stop-word occurrences
};

inline WordListCoverage word_list_coverage(const std::vector<Tokens>& captions, const WordList& list,
                                           const std::unordered_set<std::string>& stop_words) {
  std::size_t total = 0, content = 0, covered = 0;
  for (const auto& seq : captions) {
    for (const auto& t : seq) {
      ++total;
      if (!stop_words.count(t)) ++content;
      if (list.find(t)) ++covered;
    }
  }
  WordListCoverage c;
  if (total) c.all_tokens = static_cast<double>(covered) / static_cast<double>(total);
  if (content) c.content_tokens = static_cast<double>(covered) / static_cast<double>(content);
  return c;
}

/// 1 at every vocabulary index present in `tokens`; out-of-vocabulary tokens
/// are dropped.
inline std::vector<double> binary_tf(const Tokens& tokens, const Vocabulary& vocab) {
  std::vector<double> v(vocab.size(), 0.0);
  for (const auto& t : tokens) {
    if (auto i = vocab.find(t)) v[*i] = 1.0;
  }
  return v;
}

inline std::vector<double> word_label_vector(const std::vector<Tokens>& references, const WordList& list) {
  std::vector<double> y(list.size(), 0.0);
  for (const auto& ref : references) {
    for (const auto& t : ref) {
      if (auto i = list.find(t)) y[*i] = 1.0;
    }
  }
  return y;
}

inline std::vector<double> question_word_vector(const Tokens& question, const WordList& list) {
  return word_label_vector(std::vector<Tokens>{question}, list);
}

/// Standard English stop-word list; the same entries ship as
/// data/stopwords_en.txt.
inline const std::vector<std::string>& default_stop_words() {
  static const std::vector<std::string> words = {
      "a",       "about",   "above",  "after",  "again",  "against", "all",    "am",      "an",
      "and",     "any",     "are",    "as",     "at",     "be",      "because", "been",   "before",
      "being",   "below",   "between", "both",  "but",    "by",      "can",    "could",   "did",
      "do",      "does",    "doing",  "down",   "during", "each",    "few",    "for",     "from",
      "further", "had",     "has",    "have",   "having", "he",      "her",    "here",    "hers",
      "herself", "him",     "himself", "his",   "how",    "i",       "if",     "in",      "into",
      "is",      "it",      "its",    "itself", "just",   "me",      "more",   "most",    "my",
      "myself",  "no",      "nor",    "not",    "now",    "of",      "off",    "on",      "once",
      "only",    "or",      "other",  "our",    "ours",   "out",     "over",   "own",     "same",
      "she",     "should",  "so",     "some",   "such",   "than",    "that",   "the",     "their",
      "them",    "then",    "there",  "these",  "they",   "this",    "those",  "through", "to",
      "too",     "under",   "until",  "up",     "very",   "was",     "we",     "were",    "what",
      "when",    "where",   "which",  "while",  "who",    "whom",    "why",    "will",    "with",
      "would",   "you",     "your",   "yours"};
  return words;
}

inline std::unordered_set<std::string> default_stop_word_set() {
  const auto& w = default_stop_words();
  return {w.begin(), w.end()};
}

/// One token per line; blank lines and surrounding whitespace ignored.
inline std::unordered_set<std::string> load_stop_words(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open stop-word file: " + path);
  std::unordered_set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    for (auto& t : tokenize(line)) out.insert(std::move(t));
  }
  return out;
}

}  // namespace xvqa
