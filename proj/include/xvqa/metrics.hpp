#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <tuple>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "xvqa/tensor.hpp"
#include "xvqa/text.hpp"

namespace xvqa {

/// Per-instance explanation quality, every field in [0, 1].
struct QualityScores {
  double word_accuracy = 0;
  double word_question_relevance = 0;
  double sentence_accuracy = 0;
  double sentence_question_relevance = 0;
};

enum class QualityField { word_accuracy, word_question_relevance, sentence_accuracy, sentence_question_relevance };

inline double quality_value(const QualityScores& q, QualityField f) {
  switch (f) {
    case QualityField::word_accuracy: return q.word_accuracy;
    case QualityField::word_question_relevance: return q.word_question_relevance;
    case QualityField::sentence_accuracy: return q.sentence_accuracy;
    case QualityField::sentence_question_relevance: return q.sentence_question_relevance;
  }
  return 0;
}

inline const char* quality_name(QualityField f) {
  switch (f) {
    case QualityField::word_accuracy: return "word_accuracy";
    case QualityField::word_question_relevance: return "word_question_relevance";
    case QualityField::sentence_accuracy: return "sentence_accuracy";
    case QualityField::sentence_question_relevance: return "sentence_question_relevance";
  }
  return "?";
}

/// min(#matching human answers / 3, 1) after tokenize-normalization.
inline double vqa_accuracy(std::string_view predicted, const std::vector<std::string>& human_answers) {
  if (human_answers.empty()) throw std::invalid_argument("vqa_accuracy: no human answers");
  const std::string p = normalize_answer(predicted);
  std::size_t matches = 0;
  for (const auto& a : human_answers) {
    if (normalize_answer(a) == p) ++matches;
  }
  return std::min(static_cast<double>(matches) / 3.0, 1.0);
}

struct Similarity {
  double value = 0;
  bool degenerate = false;  // at least one input was the zero vector
};

/// Cosine similarity of non-negative vectors. A zero vector yields 0 with
/// the degenerate flag set.
inline Similarity cosine(std::span<const double> u, std::span<const double> v) {
  detail::require(u.size() == v.size(), "cosine: vectors of length " + std::to_string(u.size()) + " and " +
                                            std::to_string(v.size()));
  double dot = 0, nu = 0, nv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0 || nv == 0) return {0.0, true};
  return {std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), 0.0, 1.0), false};
}

inline Similarity word_accuracy(std::span<const double> labels, std::span<const double> probs) {
  return cosine(labels, probs);
}

inline Similarity word_question_relevance(std::span<const double> question_vec, std::span<const double> probs) {
  return cosine(question_vec, probs);
}

inline Similarity sentence_question_relevance(const Tokens& caption, const Tokens& question,
                                              const Vocabulary& vocab) {
  const auto q = binary_tf(question, vocab);
  const auto s = binary_tf(caption, vocab);
  return cosine(q, s);
}

namespace detail {

using NgramCounts = std::map<std::string, double>;

inline NgramCounts ngram_counts(const Tokens& toks, std::size_t n) {
  NgramCounts out;
  if (toks.size() < n) return out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    std::string key = toks[i];
    for (std::size_t k = 1; k < n; ++k) {
      key.push_back(' ');
      key.append(toks[i + k]);
    }
    out[key] += 1.0;
  }
  return out;
}

inline std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace detail

enum class RefLength { closest, shortest };

/// BLEU@max_n: geometric mean of clipped n-gram precisions times the
/// brevity penalty; zero whenever any precision is zero.
inline double bleu(const Tokens& candidate, const std::vector<Tokens>& references, std::size_t max_n,
                   RefLength convention = RefLength::closest) {
  if (max_n < 1) throw std::invalid_argument("bleu: max_n must be >= 1");
  if (candidate.empty() || references.empty()) return 0.0;
  double log_sum = 0;
  for (std::size_t n = 1; n <= max_n; ++n) {
    const auto cand = detail::ngram_counts(candidate, n);
    double total = 0, clipped = 0;
    for (const auto& [g, c] : cand) {
      total += c;
      double max_ref = 0;
      for (const auto& r : references) {
        const auto rc = detail::ngram_counts(r, n);
        if (auto it = rc.find(g); it != rc.end()) max_ref = std::max(max_ref, it->second);
      }
      clipped += std::min(c, max_ref);
    }
    if (total == 0 || clipped == 0) return 0.0;
    log_sum += std::log(clipped / total);
  }
  const double c = static_cast<double>(candidate.size());
  double r = static_cast<double>(references.front().size());
  for (const auto& ref : references) {
    const double len = static_cast<double>(ref.size());
    if (convention == RefLength::shortest) {
      r = std::min(r, len);
    } else {
      const double d = std::abs(len - c), best = std::abs(r - c);
      if (d < best || (d == best && len < r)) r = len;
    }
  }
  const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
  return bp * std::exp(log_sum / static_cast<double>(max_n));
}

/// LCS-based F-measure with beta = 1.2, maximized over references.
inline double rouge_l(const Tokens& candidate, const std::vector<Tokens>& references, double beta = 1.2) {
  if (candidate.empty() || references.empty()) return 0.0;
  double best = 0;
  for (const auto& ref : references) {
    if (ref.empty()) continue;
    const double lcs = static_cast<double>(detail::lcs_length(candidate, ref));
    if (lcs == 0) continue;
    const double p = lcs / static_cast<double>(candidate.size());
    const double r = lcs / static_cast<double>(ref.size());
    const double b2 = beta * beta;
    best = std::max(best, (1 + b2) * p * r / (r + b2 * p));
  }
  return best;
}

struct MeteorAlignment {
  std::size_t matches = 0;
  std::size_t chunks = 0;
};

namespace detail {

// Exact-match alignment maximizing matches, then minimizing chunks.
// Equivalent to maximizing the number of adjacent aligned pairs among
// maximum matchings; solved by memoized search over (position, used
// reference slots, previous aligned slot).
class MeteorAligner {
 public:
  MeteorAligner(const Tokens& cand, const Tokens& ref) : cand_(cand), ref_(ref) {
    if (ref.size() > 63) throw std::invalid_argument("meteor_lite: reference longer than 63 tokens");
    std::map<std::string, std::size_t> cc, rc;
    for (const auto& t : cand) ++cc[t];
    for (const auto& t : ref) ++rc[t];
    for (const auto& [w, n] : cc) {
      const std::size_t m = std::min(n, rc.count(w) ? rc[w] : 0);
      required_ += m;
      skip_budget_[w] = n - m;
    }
  }

  MeteorAlignment solve() {
    if (required_ == 0) return {};
    const std::size_t adjacent = best(0, 0, kNone);
    return {required_, required_ - adjacent};
  }

 private:
  static constexpr std::size_t kNone = 64;

  std::size_t skips_so_far(std::size_t i, std::uint64_t used, const std::string& w) const {
    std::size_t seen = 0, matched = 0;
    for (std::size_t k = 0; k < i; ++k) seen += cand_[k] == w;
    for (std::size_t j = 0; j < ref_.size(); ++j) matched += ((used >> j) & 1U) && ref_[j] == w;
    return seen - matched;
  }

  std::size_t best(std::size_t i, std::uint64_t used, std::size_t prev) {
    if (i == cand_.size()) return 0;
    const auto key = std::make_tuple(i, used, prev);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    const std::string& w = cand_[i];
    std::size_t result = 0;
    bool any = false;
    if (skips_so_far(i, used, w) < skip_budget_[w]) {
      result = best(i + 1, used, kNone);
      any = true;
    }
    for (std::size_t j = 0; j < ref_.size(); ++j) {
      if (((used >> j) & 1U) || ref_[j] != w) continue;
      const std::size_t adj = (prev != kNone && j == prev + 1) ? 1 : 0;
      const std::size_t v = adj + best(i + 1, used | (std::uint64_t{1} << j), j);
      if (!any || v > result) result = v;
      any = true;
    }
    memo_[key] = result;
    return result;
  }

  const Tokens& cand_;
  const Tokens& ref_;
  std::size_t required_ = 0;
  std::map<std::string, std::size_t> skip_budget_;
  std::map<std::tuple<std::size_t, std::uint64_t, std::size_t>, std::size_t> memo_;
};

}  // namespace detail

inline MeteorAlignment meteor_align(const Tokens& candidate, const Tokens& reference) {
  return detail::MeteorAligner(candidate, reference).solve();
}

/// Exact-match METEOR: F_mean with alpha = 0.9 and the fragmentation
/// penalty 0.5 (chunks / matches)^3, maximized over references.
inline double meteor_lite(const Tokens& candidate, const std::vector<Tokens>& references, double alpha = 0.9) {
  if (candidate.empty()) return 0.0;
  double best = 0;
  for (const auto& ref : references) {
    if (ref.empty()) continue;
    const auto al = meteor_align(candidate, ref);
    if (al.matches == 0) continue;
    const double m = static_cast<double>(al.matches);
    const double p = m / static_cast<double>(candidate.size());
    const double r = m / static_cast<double>(ref.size());
    const double fmean = p * r / (alpha * p + (1 - alpha) * r);
    const double penalty = 0.5 * std::pow(static_cast<double>(al.chunks) / m, 3.0);
    best = std::max(best, fmean * (1 - penalty));
  }
  return best;
}

/// Inverse document frequency for 1- to 4-grams, one document per
/// instance's reference set. Unseen n-grams weigh log(document count).
class IdfTable {
 public:
  IdfTable() = default;

  static IdfTable build(const std::vector<std::vector<Tokens>>& documents) {
    IdfTable t;
    t.documents_ = documents.size();
    std::map<std::string, std::size_t> df;
    for (const auto& refs : documents) {
      std::map<std::string, bool> seen;
      for (const auto& r : refs) {
        for (std::size_t n = 1; n <= 4; ++n) {
          for (const auto& [g, c] : detail::ngram_counts(r, n)) seen[g] = true;
        }
      }
      for (const auto& [g, _] : seen) ++df[g];
    }
    const double log_n = t.max_weight();
    for (const auto& [g, d] : df) t.weights_[g] = log_n - std::log(static_cast<double>(std::max<std::size_t>(d, 1)));
    return t;
  }

  /// Every n-gram weighs `weight`.
  static IdfTable uniform(double weight = 1.0) {
    IdfTable t;
    t.uniform_ = weight;
    return t;
  }

  std::size_t document_count() const { return documents_; }
  std::size_t size() const { return weights_.size(); }
  const std::map<std::string, double>& weights() const { return weights_; }

  double max_weight() const {
    if (uniform_) return *uniform_;
    return std::log(static_cast<double>(std::max<std::size_t>(documents_, 1)));
  }

  double weight(const std::string& ngram) const {
    if (uniform_) return *uniform_;
    auto it = weights_.find(ngram);
    return it == weights_.end() ? max_weight() : it->second;
  }

  void save(std::ostream& os) const {
    os << "#idf\tdocuments\t" << documents_ << '\n';
    os << std::setprecision(17);
    for (const auto& [g, w] : weights_) os << g << '\t' << w << '\n';
  }

  void save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write idf table: " + path);
    save(os);
  }

  static IdfTable load(std::istream& is) {
    IdfTable t;
    std::string line;
    if (!std::getline(is, line) || line.rfind("#idf\tdocuments\t", 0) != 0) {
      throw std::runtime_error("idf table: missing '#idf\\tdocuments\\t<n>' header");
    }
    t.documents_ = std::stoull(line.substr(std::string("#idf\tdocuments\t").size()));
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const auto tab = line.rfind('\t');
      if (tab == std::string::npos) throw std::runtime_error("idf table: malformed line '" + line + "'");
      t.weights_[line.substr(0, tab)] = std::stod(line.substr(tab + 1));
    }
    return t;
  }

  static IdfTable load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open idf table: " + path);
    return load(is);
  }

 private:
  std::size_t documents_ = 0;
  std::map<std::string, double> weights_;
  std::optional<double> uniform_;
};

/// CIDEr-D in [0, 10]: per n, clipped TF-IDF cosine times a Gaussian length
/// penalty (sigma = 6); averaged over n = 1..4 and over references.
inline double cider_d(const Tokens& candidate, const std::vector<Tokens>& references, const IdfTable& idf,
                      double sigma = 6.0) {
  if (candidate.empty() || references.empty()) return 0.0;
  auto tfidf = [&](const Tokens& s, std::size_t n) {
    auto v = detail::ngram_counts(s, n);
    for (auto& [g, c] : v) c *= idf.weight(g);
    return v;
  };
  auto norm = [](const detail::NgramCounts& v) {
    double s = 0;
    for (const auto& [_, x] : v) s += x * x;
    return std::sqrt(s);
  };
  std::vector<detail::NgramCounts> cand(4);
  std::vector<double> cand_norm(4);
  for (std::size_t n = 1; n <= 4; ++n) {
    cand[n - 1] = tfidf(candidate, n);
    cand_norm[n - 1] = norm(cand[n - 1]);
  }
  double total = 0;
  for (const auto& ref : references) {
    const double delta = static_cast<double>(candidate.size()) - static_cast<double>(ref.size());
    const double penalty = std::exp(-(delta * delta) / (2 * sigma * sigma));
    double per_ref = 0;
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto r = tfidf(ref, n);
      const double rn = norm(r);
      if (cand_norm[n - 1] == 0 || rn == 0) continue;
      double dot = 0;
      for (const auto& [g, h] : cand[n - 1]) {
        if (auto it = r.find(g); it != r.end()) dot += std::min(h, it->second) * it->second;
      }
      per_ref += dot / (cand_norm[n - 1] * rn) * penalty;
    }
    total += per_ref / 4.0;
  }
  return 10.0 * total / static_cast<double>(references.size());
}

struct SentenceAccuracyParts {
  double bleu_mean = 0;  // mean of BLEU@1..4
  double meteor = 0;
  double rouge = 0;
  double cider = 0;  // raw CIDEr-D, [0, 10]
  double fused = 0;
};

inline double fuse_sentence_accuracy(double bleu_mean, double meteor, double rouge, double cider) {
  return (bleu_mean + meteor + rouge + std::clamp(cider / 10.0, 0.0, 1.0)) / 4.0;
}

inline SentenceAccuracyParts sentence_accuracy_parts(const Tokens& candidate, const std::vector<Tokens>& references,
                                                     const IdfTable& idf) {
  SentenceAccuracyParts p;
  for (std::size_t n = 1; n <= 4; ++n) p.bleu_mean += bleu(candidate, references, n) / 4.0;
  p.meteor = meteor_lite(candidate, references);
  p.rouge = rouge_l(candidate, references);
  p.cider = cider_d(candidate, references, idf);
  p.fused = fuse_sentence_accuracy(p.bleu_mean, p.meteor, p.rouge, p.cider);
  return p;
}

/// Average fusion of BLEU, METEOR-lite, ROUGE-L and CIDEr-D/10.
inline double sentence_accuracy(const Tokens& candidate, const std::vector<Tokens>& references,
                                const IdfTable& idf) {
  return sentence_accuracy_parts(candidate, references, idf).fused;
}

}  // namespace xvqa
