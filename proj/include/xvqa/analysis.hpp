#pragma once

// Evaluation records, quality binning, case classification, dissection,
// ablation, caption-source control and quality sweeps, plus report writers.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "xvqa/dataset.hpp"
#include "xvqa/metrics.hpp"
#include "xvqa/pipeline.hpp"
#include "xvqa/reasoner.hpp"
#include "xvqa/synthworld.hpp"

namespace xvqa {

struct ResultRecord {
  std::string id;
  std::string predicted;
  double probability = 0;
  double accuracy = 0;  // vqa_accuracy
  QualityScores quality;
  AnswerType answer_type = AnswerType::other;
};

// ---------------------------------------------------------------------------
// Running the reasoner over instances

/// Reasoner inputs for `data`. The word-probability spans point into the
/// instances, which must outlive the result.
inline std::vector<ReasonerInput> reasoner_inputs(const std::vector<Instance>& data, const Vocabulary& vocab,
                                                  CaptionSource source, std::size_t max_len = 20) {
  std::vector<ReasonerInput> out;
  out.reserve(data.size());
  for (const auto& in : data) {
    ReasonerInput r;
    if (in.word_probs) r.word_probs = *in.word_probs;
    r.caption = encode_for_reasoner(caption_source_select(in, source, vocab), vocab, max_len);
    r.question = encode_for_reasoner(in.question, vocab, max_len);
    out.push_back(std::move(r));
  }
  return out;
}

template <class T = double>
ReasonerModel<T> train_reasoner_on(const std::vector<Instance>& train, const World& w, const ReasonerConfig& cfg,
                                   TrainTrace* trace = nullptr) {
  const auto inputs = reasoner_inputs(train, w.vocab, CaptionSource::generated, cfg.max_len);
  std::vector<ReasonerExample> ex;
  ex.reserve(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) ex.push_back({inputs[i], &train[i].answers});
  return train_reasoner<T>(ex, w.candidates, w.vocab.size(), w.word_list.size(), cfg, trace);
}

/// Trains in 32 or 64 bits; evaluation always runs on a 64-bit copy.
inline ReasonerModel<double> train_reasoner_at(const std::vector<Instance>& train, const World& w,
                                               const ReasonerConfig& cfg, bool single_precision = false,
                                               TrainTrace* trace = nullptr) {
  if (single_precision) return convert_reasoner<double>(train_reasoner_on<float>(train, w, cfg, trace));
  return train_reasoner_on<double>(train, w, cfg, trace);
}

namespace detail {

/// Runs f(i) for i in [0, n) over a few threads; f must only write slot i.
template <class F>
void parallel_for(std::size_t n, F&& f) {
  const std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t workers = std::min<std::size_t>(hw, n / 64 + 1);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < workers; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < n; i += workers) f(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace detail

/// Predicts every instance with the given caption source and scores it.
/// Sentence-side quality is measured on the caption actually fed to the
/// model.
inline std::vector<ResultRecord> evaluate_reasoner(const ReasonerModel<double>& m, const std::vector<Instance>& data,
                                                   const World& w, CaptionSource source = CaptionSource::generated,
                                                   std::size_t max_len = 20) {
  const auto inputs = reasoner_inputs(data, w.vocab, source, max_len);
  std::vector<ResultRecord> out(data.size());
  detail::parallel_for(data.size(), [&](std::size_t i) {
    const auto& in = data[i];
    const auto p = predict_answer(m, inputs[i], w.candidates);
    ResultRecord& r = out[i];
    r.id = in.id;
    r.predicted = p.answer;
    r.probability = p.probability;
    r.accuracy = vqa_accuracy(p.answer, in.answers);
    r.answer_type = in.question_type;
    if (in.word_probs && in.generated_caption) {
      Instance view = in;
      view.generated_caption = caption_source_select(in, source, w.vocab);
      r.quality = quality_scores(view, w);
    }
  });
  return out;
}

struct TypeAccuracy {
  double all = 0, yes_no = 0, number = 0, other = 0;  // percent
  std::size_t n_all = 0, n_yes_no = 0, n_number = 0, n_other = 0;
};

inline TypeAccuracy type_accuracy(const std::vector<ResultRecord>& recs) {
  TypeAccuracy t;
  for (const auto& r : recs) {
    t.all += r.accuracy;
    ++t.n_all;
    switch (r.answer_type) {
      case AnswerType::yes_no: t.yes_no += r.accuracy; ++t.n_yes_no; break;
      case AnswerType::number: t.number += r.accuracy; ++t.n_number; break;
      case AnswerType::other: t.other += r.accuracy; ++t.n_other; break;
    }
  }
  auto pct = [](double s, std::size_t n) { return n ? 100.0 * s / static_cast<double>(n) : 0.0; };
  t.all = pct(t.all, t.n_all);
  t.yes_no = pct(t.yes_no, t.n_yes_no);
  t.number = pct(t.number, t.n_number);
  t.other = pct(t.other, t.n_other);
  return t;
}

// ---------------------------------------------------------------------------
// Quality binning

inline std::vector<double> default_bin_edges() { return {0.0, 0.2, 0.8, 1.0}; }

inline void validate_bin_edges(const std::vector<double>& edges) {
  if (edges.size() < 2) throw std::invalid_argument("bin edges: need at least two edges");
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (!(edges[i] > edges[i - 1])) throw std::invalid_argument("bin edges must be strictly increasing");
  }
  if (edges.front() != 0.0 || edges.back() != 1.0) throw std::invalid_argument("bin edges must span [0, 1]");
}

struct BinRow {
  double lo = 0, hi = 0;
  bool closed = false;  // upper edge included
  std::size_t count = 0;
  double accuracy = 0;  // percent; 0 when empty
};

struct BinTable {
  std::string field;
  std::vector<BinRow> rows;  // empty when there were no records

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& r : rows) n += r.count;
    return n;
  }

  /// Accuracy never drops from one non-empty bin to the next.
  bool non_decreasing() const {
    std::optional<double> prev;
    for (const auto& r : rows) {
      if (!r.count) continue;
      if (prev && r.accuracy < *prev) return false;
      prev = r.accuracy;
    }
    return true;
  }

  /// Last non-empty bin minus first non-empty bin, in points.
  double top_minus_bottom() const {
    const BinRow *first = nullptr, *last = nullptr;
    for (const auto& r : rows) {
      if (!r.count) continue;
      if (!first) first = &r;
      last = &r;
    }
    return first ? last->accuracy - first->accuracy : 0.0;
  }
};

namespace detail {

/// Shortest of %.1f .. %.4f that keeps the value.
inline std::string edge_text(double v) {
  char buf[32];
  for (int d = 1; d <= 4; ++d) {
    std::snprintf(buf, sizeof buf, "%.*f", d, v);
    if (std::abs(std::stod(buf) - v) < 1e-12) break;
  }
  return buf;
}

}  // namespace detail

inline std::string bin_label(const BinRow& r) {
  return "[" + detail::edge_text(r.lo) + ", " + detail::edge_text(r.hi) + (r.closed ? "]" : ")");
}

inline BinTable bin_by_values(const std::vector<double>& scores, const std::vector<double>& accuracies,
                              std::string field, const std::vector<double>& edges = default_bin_edges()) {
  validate_bin_edges(edges);
  if (scores.size() != accuracies.size()) throw std::invalid_argument("bin_by_values: length mismatch");
  BinTable t;
  t.field = std::move(field);
  if (scores.empty()) return t;
  const std::size_t nb = edges.size() - 1;
  std::vector<double> sum(nb, 0.0);
  for (std::size_t b = 0; b < nb; ++b) t.rows.push_back({edges[b], edges[b + 1], b + 1 == nb, 0, 0});
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double s = std::clamp(scores[i], 0.0, 1.0);
    auto it = std::upper_bound(edges.begin(), edges.end(), s);
    std::size_t b = static_cast<std::size_t>(it - edges.begin());
    b = b == 0 ? 0 : std::min(b - 1, nb - 1);
    ++t.rows[b].count;
    sum[b] += accuracies[i];
  }
  for (std::size_t b = 0; b < nb; ++b) {
    if (t.rows[b].count) t.rows[b].accuracy = 100.0 * sum[b] / static_cast<double>(t.rows[b].count);
  }
  return t;
}

inline BinTable bin_by_quality(const std::vector<ResultRecord>& recs, QualityField field,
                               const std::vector<double>& edges = default_bin_edges()) {
  std::vector<double> s, a;
  for (const auto& r : recs) {
    s.push_back(quality_value(r.quality, field));
    a.push_back(r.accuracy);
  }
  return bin_by_values(s, a, quality_name(field), edges);
}

// ---------------------------------------------------------------------------
// Case types and dissection

struct CaseThresholds {
  double relevance = 0.2;
  double correct = 1.0;  // vqa_accuracy needed to count as correct

  void validate() const {
    if (!(relevance > 0 && relevance < 1)) throw std::invalid_argument("relevance threshold must lie in (0, 1)");
    if (!(correct > 0 && correct <= 1)) throw std::invalid_argument("correctness threshold must lie in (0, 1]");
  }
};

struct CaseRecord {
  std::string id;
  bool high_relevance = false;
  bool correct = false;
  int case_type = 0;  // 1 high/correct, 2 low/wrong, 3 high/wrong, 4 low/correct
  AnswerType answer_type = AnswerType::other;
};

inline int case_type(bool high_relevance, bool correct) {
  if (high_relevance) return correct ? 1 : 3;
  return correct ? 4 : 2;
}

inline CaseRecord classify_case(const ResultRecord& r, double relevance, const CaseThresholds& t = {}) {
  t.validate();
  CaseRecord c;
  c.id = r.id;
  c.high_relevance = relevance >= t.relevance;
  c.correct = r.accuracy >= t.correct - 1e-12;
  c.case_type = case_type(c.high_relevance, c.correct);
  c.answer_type = r.answer_type;
  return c;
}

/// Relevance deciding the band: the larger of word and sentence relevance
/// in full mode, the mode's own score otherwise.
inline double band_relevance(const QualityScores& q, AblationMode mode) {
  switch (mode) {
    case AblationMode::word: return q.word_question_relevance;
    case AblationMode::sentence: return q.sentence_question_relevance;
    case AblationMode::full: return std::max(q.word_question_relevance, q.sentence_question_relevance);
  }
  return 0;
}

inline std::vector<CaseRecord> classify_all(const std::vector<ResultRecord>& recs, AblationMode mode,
                                            const CaseThresholds& t = {}) {
  std::vector<CaseRecord> out;
  out.reserve(recs.size());
  for (const auto& r : recs) out.push_back(classify_case(r, band_relevance(r.quality, mode), t));
  return out;
}

struct DissectNode {
  std::string label;
  std::size_t count = 0;
  double percent = 0;  // of the parent; 100 at the root
  std::vector<DissectNode> children;

  const DissectNode& child(std::string_view l) const {
    for (const auto& c : children) {
      if (c.label == l) return c;
    }
    throw std::out_of_range("no dissection node " + std::string(l));
  }
};

/// QA -> {CA, WA} by correctness -> {GA, RA} by band -> {Y/N, O} by answer
/// type. GA holds low-relevance ("guessed") answers.
inline DissectNode dissect(const std::vector<CaseRecord>& cases) {
  auto pct = [](std::size_t n, std::size_t parent) {
    return parent ? 100.0 * static_cast<double>(n) / static_cast<double>(parent) : 0.0;
  };
  DissectNode root{"QA", cases.size(), 100.0, {}};
  for (bool correct : {true, false}) {
    DissectNode a{correct ? "CA" : "WA", 0, 0, {}};
    for (bool guessed : {true, false}) {
      DissectNode g{guessed ? "GA" : "RA", 0, 0, {}};
      std::size_t yn = 0, other = 0;
      for (const auto& c : cases) {
        if (c.correct != correct || c.high_relevance == guessed) continue;
        (c.answer_type == AnswerType::yes_no ? yn : other)++;
      }
      g.count = yn + other;
      g.children = {{"Y/N", yn, pct(yn, g.count), {}}, {"O", other, pct(other, g.count), {}}};
      a.count += g.count;
      a.children.push_back(std::move(g));
    }
    for (auto& g : a.children) g.percent = pct(g.count, a.count);
    a.percent = pct(a.count, root.count);
    root.children.push_back(std::move(a));
  }
  return root;
}

// ---------------------------------------------------------------------------
// Experiments

namespace seeds {
inline std::uint64_t explain_train(std::uint64_t s) { return derive_seed(s, "explain/train"); }
inline std::uint64_t explain_val(std::uint64_t s) { return derive_seed(s, "explain/val"); }
}  // namespace seeds

/// World with simulated explanations attached to both splits.
inline World explained_world(const GenConfig& g) {
  World w = generate_world(g);
  const auto k = ExplanationKnobs::from(g);
  simulate_explanations(w.train, w, k, seeds::explain_train(g.seed));
  simulate_explanations(w.val, w, k, seeds::explain_val(g.seed));
  return w;
}

struct AblationRow {
  AblationMode mode = AblationMode::full;
  TypeAccuracy accuracy;
  std::vector<ResultRecord> records;
};

struct AblationResult {
  std::vector<AblationRow> rows;  // word, sentence, full

  const AblationRow& row(AblationMode m) const {
    for (const auto& r : rows) {
      if (r.mode == m) return r;
    }
    throw std::out_of_range("no ablation row");
  }
};

/// Three reasoners identical except the mode, same seed, same split.
inline AblationResult run_ablation(const World& w, const ReasonerConfig& base,
                                   std::vector<ReasonerModel<double>>* models = nullptr, bool single_precision = false) {
  AblationResult res;
  for (auto mode : {AblationMode::word, AblationMode::sentence, AblationMode::full}) {
    ReasonerConfig cfg = base;
    cfg.mode = mode;
    auto m = train_reasoner_at(w.train, w, cfg, single_precision);
    AblationRow row;
    row.mode = mode;
    row.records = evaluate_reasoner(m, w.val, w, CaptionSource::generated, cfg.max_len);
    row.accuracy = type_accuracy(row.records);
    res.rows.push_back(std::move(row));
    if (models) models->push_back(std::move(m));
  }
  return res;
}

struct ControlRow {
  CaptionSource source = CaptionSource::generated;
  TypeAccuracy accuracy;
};

/// One sentence-mode model evaluated with each caption source.
inline std::vector<ControlRow> control_experiment(const ReasonerModel<double>& sentence_model, const World& w,
                                                  std::size_t max_len = 20) {
  std::vector<ControlRow> rows;
  for (auto s : {CaptionSource::null, CaptionSource::generated, CaptionSource::groundtruth}) {
    rows.push_back({s, type_accuracy(evaluate_reasoner(sentence_model, w.val, w, s, max_len))});
  }
  return rows;
}

enum class SweepKnob { detector_noise, relevance_drop, caption_corruption };

inline const char* knob_name(SweepKnob k) {
  switch (k) {
    case SweepKnob::detector_noise: return "detector_noise";
    case SweepKnob::relevance_drop: return "relevance_drop";
    case SweepKnob::caption_corruption: return "caption_corruption";
  }
  return "?";
}

struct SweepSpec {
  SweepKnob knob = SweepKnob::detector_noise;
  AblationMode model = AblationMode::word;
  QualityField field = QualityField::word_accuracy;
  bool hold_drop_at_zero = false;  // isolates accuracy from relevance
};

/// One sweep per quality field: accuracy fields vary their quality knob with
/// the queried object always present; relevance fields vary the drop rate.
inline std::vector<SweepSpec> default_sweeps() {
  return {{SweepKnob::detector_noise, AblationMode::word, QualityField::word_accuracy, true},
          {SweepKnob::relevance_drop, AblationMode::word, QualityField::word_question_relevance, false},
          {SweepKnob::caption_corruption, AblationMode::sentence, QualityField::sentence_accuracy, true},
          {SweepKnob::relevance_drop, AblationMode::sentence, QualityField::sentence_question_relevance, false}};
}

inline std::vector<double> default_sweep_grid() { return {0.0, 0.25, 0.5, 0.75, 1.0}; }

struct SweepResult {
  SweepSpec spec;
  std::vector<double> levels;
  std::vector<double> level_accuracy;  // percent, per level
  BinTable bins;                       // records pooled over all levels
  bool monotone = false;               // bins non-decreasing
};

/// Regenerates validation explanations at each knob level, evaluates the
/// fixed model and bins the pooled records by the sweep's quality field.
inline SweepResult quality_sweep(const ReasonerModel<double>& m, const World& w, const SweepSpec& spec,
                                 const std::vector<double>& grid, const std::vector<double>& edges,
                                 std::uint64_t seed, std::size_t max_len = 20) {
  if (grid.size() < 3) throw std::invalid_argument("quality_sweep: need at least three grid levels");
  if (m.mode != spec.model) throw std::invalid_argument("quality_sweep: model mode does not match the sweep");
  SweepResult res;
  res.spec = spec;
  res.levels = grid;
  std::vector<double> scores, accs;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    auto k = ExplanationKnobs::from(w.config);
    if (spec.hold_drop_at_zero) k.relevance_drop = 0;
    switch (spec.knob) {
      case SweepKnob::detector_noise: k.detector_noise = grid[i]; break;
      case SweepKnob::relevance_drop: k.relevance_drop = grid[i]; break;
      case SweepKnob::caption_corruption: k.caption_corruption = grid[i]; break;
    }
    std::vector<Instance> data = w.val;
    simulate_explanations(data, w, k,
                          derive_seed(seed, std::string("sweep/") + knob_name(spec.knob) + "/" + std::to_string(i)));
    const auto recs = evaluate_reasoner(m, data, w, CaptionSource::generated, max_len);
    res.level_accuracy.push_back(type_accuracy(recs).all);
    for (const auto& r : recs) {
      scores.push_back(quality_value(r.quality, spec.field));
      accs.push_back(r.accuracy);
    }
  }
  res.bins = bin_by_values(scores, accs, quality_name(spec.field), edges);
  res.monotone = res.bins.non_decreasing();
  return res;
}

// ---------------------------------------------------------------------------
// Reports: aligned text, CSV with a header row, JSON summaries.

namespace report {

inline std::string fmt(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

/// Left-aligned first column, right-aligned others.
inline std::string table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> w(header.size(), 0);
  auto widen = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size() && i < w.size(); ++i) w[i] = std::max(w[i], r[i].size());
  };
  widen(header);
  for (const auto& r : rows) widen(r);
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      const std::string pad(w[i] - r[i].size(), ' ');
      if (i) out << "  ";
      out << (i == 0 ? r[i] + pad : pad + r[i]);
    }
    out << '\n';
  };
  line(header);
  std::size_t total = 0;
  for (auto x : w) total += x;
  out << std::string(total + 2 * (w.size() - 1), '-') << '\n';
  for (const auto& r : rows) line(r);
  return out.str();
}

inline std::string csv(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) out << ',';
      if (r[i].find_first_of(",\"\n") != std::string::npos) {
        out << '"';
        for (char c : r[i]) out << (c == '"' ? "\"\"" : std::string(1, c));
        out << '"';
      } else {
        out << r[i];
      }
    }
    out << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return out.str();
}

inline std::vector<std::string> type_cells(const TypeAccuracy& a) {
  return {fmt(a.all), fmt(a.yes_no), fmt(a.number), fmt(a.other)};
}

inline const std::vector<std::string>& type_header() {
  static const std::vector<std::string> h = {"All", "Y/N", "Num", "Others"};
  return h;
}

inline std::string mode_label(AblationMode m) {
  switch (m) {
    case AblationMode::word: return "Word-based VQA";
    case AblationMode::sentence: return "Sentence-based VQA";
    case AblationMode::full: return "Full VQA";
  }
  return "?";
}

inline std::vector<std::vector<std::string>> ablation_rows(const AblationResult& r) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& row : r.rows) {
    std::vector<std::string> cells = {mode_label(row.mode)};
    for (auto& c : type_cells(row.accuracy)) cells.push_back(c);
    rows.push_back(std::move(cells));
  }
  return rows;
}

inline std::string ablation_text(const AblationResult& r) {
  std::vector<std::string> h = {"Model"};
  for (const auto& x : type_header()) h.push_back(x);
  return table(h, ablation_rows(r));
}

inline std::string ablation_csv(const AblationResult& r) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& row : r.rows) {
    std::vector<std::string> cells = {mode_name(row.mode)};
    for (auto& c : type_cells(row.accuracy)) cells.push_back(c);
    cells.push_back(std::to_string(row.accuracy.n_all));
    rows.push_back(std::move(cells));
  }
  return csv({"mode", "all", "yes_no", "number", "other", "count"}, rows);
}

inline std::string control_text(const std::vector<ControlRow>& rows) {
  std::vector<std::vector<std::string>> body;
  for (const auto& r : rows) {
    std::vector<std::string> cells = {caption_source_name(r.source)};
    for (auto& c : type_cells(r.accuracy)) cells.push_back(c);
    body.push_back(std::move(cells));
  }
  std::vector<std::string> h = {"Caption source"};
  for (const auto& x : type_header()) h.push_back(x);
  return table(h, body);
}

inline std::string control_csv(const std::vector<ControlRow>& rows) {
  std::vector<std::vector<std::string>> body;
  for (const auto& r : rows) {
    std::vector<std::string> cells = {caption_source_name(r.source)};
    for (auto& c : type_cells(r.accuracy)) cells.push_back(c);
    cells.push_back(std::to_string(r.accuracy.n_all));
    body.push_back(std::move(cells));
  }
  return csv({"source", "all", "yes_no", "number", "other", "count"}, body);
}

inline std::string bins_text(const BinTable& t) {
  std::vector<std::vector<std::string>> body;
  for (const auto& r : t.rows) body.push_back({bin_label(r), std::to_string(r.count), r.count ? fmt(r.accuracy) : "-"});
  return t.field + "\n" + table({"Bin", "Count", "Accuracy"}, body);
}

inline std::vector<std::vector<std::string>> bins_csv_rows(const BinTable& t, const std::string& prefix = "") {
  std::vector<std::vector<std::string>> body;
  for (const auto& r : t.rows) {
    std::vector<std::string> cells;
    if (!prefix.empty()) cells.push_back(prefix);
    for (auto& c : std::vector<std::string>{t.field, fmt(r.lo, 4), fmt(r.hi, 4), r.closed ? "closed" : "open",
                                            std::to_string(r.count), fmt(r.accuracy, 4)}) {
      cells.push_back(c);
    }
    body.push_back(std::move(cells));
  }
  return body;
}

inline std::string bins_csv(const std::vector<BinTable>& tables) {
  std::vector<std::vector<std::string>> body;
  for (const auto& t : tables) {
    for (auto& r : bins_csv_rows(t)) body.push_back(std::move(r));
  }
  return csv({"field", "lo", "hi", "upper", "count", "accuracy"}, body);
}

inline nlohmann::ordered_json to_json(const TypeAccuracy& a) {
  nlohmann::ordered_json j;
  j["all"] = a.all;
  j["yes_no"] = a.yes_no;
  j["number"] = a.number;
  j["other"] = a.other;
  j["count"] = a.n_all;
  return j;
}

inline nlohmann::ordered_json to_json(const BinTable& t) {
  nlohmann::ordered_json j;
  j["field"] = t.field;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& r : t.rows) {
    nlohmann::ordered_json b;
    b["bin"] = bin_label(r);
    b["count"] = r.count;
    b["accuracy"] = r.accuracy;
    rows.push_back(b);
  }
  j["bins"] = rows;
  j["non_decreasing"] = t.non_decreasing();
  j["top_minus_bottom"] = t.top_minus_bottom();
  return j;
}

inline nlohmann::ordered_json to_json(const DissectNode& n) {
  nlohmann::ordered_json j;
  j["label"] = n.label;
  j["count"] = n.count;
  j["percent"] = n.percent;
  if (!n.children.empty()) {
    auto c = nlohmann::ordered_json::array();
    for (const auto& ch : n.children) c.push_back(to_json(ch));
    j["children"] = c;
  }
  return j;
}

inline void dissect_lines(const DissectNode& n, int depth, std::ostringstream& out) {
  out << std::string(static_cast<std::size_t>(depth) * 2, ' ') << n.label << "  " << n.count << "  ("
      << fmt(n.percent, 1) << "%)\n";
  for (const auto& c : n.children) dissect_lines(c, depth + 1, out);
}

inline std::string dissect_text(const DissectNode& root, const CaseThresholds& t, AblationMode mode) {
  std::ostringstream out;
  out << "relevance threshold: " << fmt(t.relevance, 3) << "  correctness threshold: " << fmt(t.correct, 3)
      << "  band: " << (mode == AblationMode::full ? "max(word, sentence)" : mode_name(mode)) << " relevance\n";
  dissect_lines(root, 0, out);
  return out.str();
}

inline std::string dissect_csv(const DissectNode& root) {
  std::vector<std::vector<std::string>> body;
  auto walk = [&](auto&& self, const DissectNode& n, const std::string& path) -> void {
    const std::string p = path.empty() ? n.label : path + "/" + n.label;
    body.push_back({p, std::to_string(n.count), fmt(n.percent, 4)});
    for (const auto& c : n.children) self(self, c, p);
  };
  walk(walk, root, "");
  return csv({"node", "count", "percent"}, body);
}

inline std::string cases_csv(const std::vector<CaseRecord>& cases) {
  std::vector<std::vector<std::string>> body;
  for (const auto& c : cases) {
    body.push_back({c.id, c.high_relevance ? "high" : "low", c.correct ? "1" : "0", std::to_string(c.case_type),
                    answer_type_name(c.answer_type)});
  }
  return csv({"id", "band", "correct", "case_type", "answer_type"}, body);
}

inline std::string records_csv(const std::vector<ResultRecord>& recs) {
  std::vector<std::vector<std::string>> body;
  for (const auto& r : recs) {
    body.push_back({r.id, r.predicted, fmt(r.probability, 6), fmt(r.accuracy, 6), fmt(r.quality.word_accuracy, 6),
                    fmt(r.quality.word_question_relevance, 6), fmt(r.quality.sentence_accuracy, 6),
                    fmt(r.quality.sentence_question_relevance, 6), answer_type_name(r.answer_type)});
  }
  return csv({"id", "predicted", "probability", "accuracy", "word_accuracy", "word_question_relevance",
              "sentence_accuracy", "sentence_question_relevance", "answer_type"},
             body);
}

inline std::string sweep_text(const std::vector<SweepResult>& sweeps) {
  std::ostringstream out;
  for (const auto& s : sweeps) {
    out << "knob " << knob_name(s.spec.knob) << ", " << mode_name(s.spec.model) << " model";
    if (s.spec.hold_drop_at_zero) out << ", relevance_drop held at 0";
    out << "\n  level accuracy:";
    for (std::size_t i = 0; i < s.levels.size(); ++i) out << "  " << fmt(s.levels[i]) << "=" << fmt(s.level_accuracy[i]);
    out << "\n" << bins_text(s.bins);
    out << "non-decreasing: " << (s.monotone ? "yes" : "no") << "  top-bottom gap: " << fmt(s.bins.top_minus_bottom())
        << "\n\n";
  }
  // Effect-size comparison, reported only: top-bottom gap of relevance vs accuracy per model.
  for (auto mode : {AblationMode::word, AblationMode::sentence}) {
    const SweepResult *acc = nullptr, *rel = nullptr;
    for (const auto& s : sweeps) {
      if (s.spec.model != mode) continue;
      const bool is_rel = s.spec.field == QualityField::word_question_relevance ||
                          s.spec.field == QualityField::sentence_question_relevance;
      (is_rel ? rel : acc) = &s;
    }
    if (!acc || !rel) continue;
    const double ga = acc->bins.top_minus_bottom(), gr = rel->bins.top_minus_bottom();
    out << mode_name(mode) << " explanations: relevance gap " << fmt(gr) << " vs accuracy gap " << fmt(ga)
        << " (relevance " << (gr > ga ? "larger" : "not larger") << ")\n";
  }
  return out.str();
}

inline std::string sweep_csv(const std::vector<SweepResult>& sweeps) {
  std::vector<std::vector<std::string>> body;
  for (const auto& s : sweeps) {
    for (auto& r : bins_csv_rows(s.bins, knob_name(s.spec.knob))) {
      r.insert(r.begin() + 1, mode_name(s.spec.model));
      body.push_back(std::move(r));
    }
  }
  return csv({"knob", "model", "field", "lo", "hi", "upper", "count", "accuracy"}, body);
}

inline nlohmann::ordered_json sweep_json(const std::vector<SweepResult>& sweeps) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& s : sweeps) {
    nlohmann::ordered_json j;
    j["knob"] = knob_name(s.spec.knob);
    j["model"] = mode_name(s.spec.model);
    j["levels"] = s.levels;
    j["level_accuracy"] = s.level_accuracy;
    j["table"] = to_json(s.bins);
    j["monotone"] = s.monotone;
    arr.push_back(j);
  }
  return arr;
}

}  // namespace report

}  // namespace xvqa
