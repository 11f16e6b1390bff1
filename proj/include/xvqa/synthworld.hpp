#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "xvqa/dataset.hpp"
#include "xvqa/metrics.hpp"
#include "xvqa/random.hpp"
#include "xvqa/reasoner.hpp"
#include "xvqa/text.hpp"

namespace xvqa {

namespace lexicon {

inline const std::vector<std::string>& nouns() {
  static const std::vector<std::string> v = {"dog",  "cat",   "horse", "bird",  "cow",   "duck",  "goat",
                                             "rabbit", "bear", "frog",  "car",   "truck", "bike",  "boat",
                                             "kite", "ball",  "chair", "bench", "table", "lamp",  "cup",
                                             "bottle", "book", "phone", "clock"};
  return v;
}

inline const std::vector<std::string>& colors() {
  static const std::vector<std::string> v = {"red",   "blue",  "green",  "yellow", "black",
                                             "white", "brown", "orange", "pink",   "gray"};
  return v;
}

inline const std::vector<std::string>& actions() {
  static const std::vector<std::string> v = {"sitting",  "standing", "lying",  "running",
                                             "sleeping", "eating",   "jumping", "waiting"};
  return v;
}

inline const std::vector<std::string>& relations() {
  static const std::vector<std::string> v = {"near", "behind", "beside", "on", "under", "above", "below", "by"};
  return v;
}

inline const std::vector<std::string>& numbers() {
  static const std::vector<std::string> v = {"one", "two", "three"};
  return v;
}

inline std::string plural(const std::string& noun) {
  for (const char* suf : {"s", "x", "z", "ch", "sh"}) {
    const std::string s(suf);
    if (noun.size() > s.size() && noun.compare(noun.size() - s.size(), s.size(), s) == 0) return noun + "es";
  }
  return noun + "s";
}

inline std::size_t slot_width() { return nouns().size() + colors().size() + numbers().size() + actions().size(); }

}  // namespace lexicon

inline constexpr std::size_t kMaxObjects = 4;

struct GenConfig {
  std::uint64_t seed = 1;
  std::size_t train_size = 5000;
  std::size_t val_size = 1000;
  double yes_bias = 0.7;            // share of "yes" among yes/no questions
  double detector_noise = 0.2;      // word-probability noise
  double caption_corruption = 0.1;  // per content token
  double relevance_drop = 0.3;      // chance the queried object is absent from explanations
  double disagreement = 0.1;        // per human answer
  std::size_t answers_per_question = 10;
  std::size_t feature_dim = 128;
  double feature_noise = 0.1;
  std::size_t word_list_top_n = 80;
  std::size_t vocab_min_count = 1;
  std::size_t num_candidates = 32;
  double exist_attribute_rate = 0.3;
  // exist, verify, count, color, action
  std::array<double, 5> question_mix = {0.2, 0.18, 0.14, 0.24, 0.24};
  // full, no color, no action
  std::array<double, 3> caption_styles = {0.7, 0.15, 0.15};

  void validate() const {
    auto rate = [](double v, const char* name) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw std::invalid_argument(std::string(name) + " must lie in [0, 1], got " + std::to_string(v));
      }
    };
    rate(detector_noise, "detector_noise");
    rate(caption_corruption, "caption_corruption");
    rate(relevance_drop, "relevance_drop");
    rate(disagreement, "disagreement");
    rate(exist_attribute_rate, "exist_attribute_rate");
    if (!(yes_bias >= 0.5 && yes_bias <= 1.0)) {
      throw std::invalid_argument("yes_bias must lie in [0.5, 1], got " + std::to_string(yes_bias));
    }
    if (train_size == 0 || val_size == 0) throw std::invalid_argument("train_size and val_size must be positive");
    if (answers_per_question == 0) throw std::invalid_argument("answers_per_question must be positive");
    if (feature_dim == 0) throw std::invalid_argument("feature_dim must be positive");
    if (!(feature_noise >= 0)) throw std::invalid_argument("feature_noise must be non-negative");
    if (word_list_top_n == 0 || vocab_min_count == 0 || num_candidates == 0) {
      throw std::invalid_argument("word_list_top_n, vocab_min_count and num_candidates must be positive");
    }
    auto weights = [](const auto& w, const char* name) {
      double s = 0;
      for (double x : w) {
        if (!(x >= 0)) throw std::invalid_argument(std::string(name) + " weights must be non-negative");
        s += x;
      }
      if (!(s > 0)) throw std::invalid_argument(std::string(name) + " weights must not all be zero");
    };
    weights(question_mix, "question_mix");
    weights(caption_styles, "caption_styles");
  }
};

// ---------------------------------------------------------------------------
// Captions

enum class CaptionStyle { full, no_color, no_action };

namespace detail {

inline std::string noun_form(const SceneObject& o) {
  const auto& n = lexicon::nouns()[o.noun];
  return o.count == 1 ? n : lexicon::plural(n);
}

inline const char* copula(const SceneObject& o) { return o.count == 1 ? "is" : "are"; }

inline const std::string& number_word(std::size_t count) { return lexicon::numbers()[count - 1]; }

}  // namespace detail

/// Object `partner` of object i among the visible ones: objects 0 and 1 pair
/// with each other, the rest with object 0, falling back to any other
/// visible object.
inline std::optional<std::size_t> caption_partner(const Scene& s, std::size_t i, const std::vector<std::size_t>& visible) {
  const std::size_t n = s.objects.size();
  if (n < 2) return std::nullopt;
  auto is_visible = [&](std::size_t j) { return std::find(visible.begin(), visible.end(), j) != visible.end(); };
  std::vector<std::size_t> order = {i == 0 ? std::size_t{1} : std::size_t{0}};
  for (std::size_t j = 0; j < n; ++j) order.push_back(j);
  for (std::size_t j : order) {
    if (j != i && is_visible(j)) return j;
  }
  return std::nullopt;
}

/// Templated description of object i. Single-object scenes read
/// "the [num] color noun is action"; otherwise
/// "num color noun is action rel num' noun'" or "... all alone".
inline Tokens describe_object(const Scene& s, std::size_t i, std::optional<std::size_t> partner,
                              CaptionStyle style = CaptionStyle::full) {
  const SceneObject& o = s.objects.at(i);
  Tokens t;
  const bool sole = s.objects.size() == 1;
  if (sole) {
    t.push_back("the");
    if (o.count > 1) t.push_back(detail::number_word(o.count));
  } else {
    t.push_back(detail::number_word(o.count));
  }
  if (style != CaptionStyle::no_color) t.push_back(lexicon::colors()[o.color]);
  t.push_back(detail::noun_form(o));
  t.push_back(detail::copula(o));
  t.push_back(style == CaptionStyle::no_action ? "there" : lexicon::actions()[o.action]);
  if (sole) return t;
  if (partner) {
    const SceneObject& p = s.objects.at(*partner);
    const bool pair01 = i <= 1 && *partner <= 1;
    t.push_back(pair01 ? lexicon::relations()[s.relation] : "near");
    t.push_back(detail::number_word(p.count));
    t.push_back(detail::noun_form(p));
  } else {
    t.push_back("all");
    t.push_back("alone");
  }
  return t;
}

/// One full-style reference per object, object 0 first.
inline std::vector<Tokens> reference_captions(const Scene& s) {
  std::vector<std::size_t> all(s.objects.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  std::vector<Tokens> refs;
  for (std::size_t i = 0; i < all.size(); ++i) refs.push_back(describe_object(s, i, caption_partner(s, i, all)));
  return refs;
}

// ---------------------------------------------------------------------------
// Scene features: one-hot slots per object plus the relation, linearly
// projected and perturbed with Gaussian noise.

inline std::size_t description_dim() { return kMaxObjects * lexicon::slot_width() + lexicon::relations().size(); }

inline std::vector<double> scene_description(const Scene& s) {
  std::vector<double> d(description_dim(), 0.0);
  const std::size_t nN = lexicon::nouns().size(), nC = lexicon::colors().size(), nK = lexicon::numbers().size();
  for (std::size_t i = 0; i < s.objects.size() && i < kMaxObjects; ++i) {
    const auto& o = s.objects[i];
    const std::size_t base = i * lexicon::slot_width();
    d[base + o.noun] = 1;
    d[base + nN + o.color] = 1;
    d[base + nN + nC + (o.count - 1)] = 1;
    d[base + nN + nC + nK + o.action] = 1;
  }
  d[kMaxObjects * lexicon::slot_width() + s.relation] = 1;
  return d;
}

inline Tensor<double> feature_projection(std::size_t feature_dim, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "world/projection"));
  const std::size_t D = description_dim();
  Tensor<double> P({feature_dim, D});
  const double s = 1.0 / std::sqrt(static_cast<double>(kMaxObjects * 4 + 1));
  for (auto& v : P.values()) v = rng.normal() * s;
  return P;
}

inline std::vector<double> render_features(const Scene& s, const Tensor<double>& projection, double noise, Rng& rng) {
  const auto d = scene_description(s);
  std::vector<double> f(projection.dim(0), 0.0);
  for (std::size_t r = 0; r < f.size(); ++r) {
    const auto row = projection.row(r);
    double acc = 0;
    for (std::size_t k = 0; k < d.size(); ++k) acc += row[k] * d[k];
    f[r] = acc + noise * rng.normal();
  }
  return f;
}

// ---------------------------------------------------------------------------
// Scenes, questions, answers

namespace detail {

template <class T>
std::size_t pick_other(Rng& rng, std::size_t n, const T& exclude) {
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < n; ++i) {
    if (!exclude(i)) pool.push_back(i);
  }
  return pool.at(rng.index(pool.size()));
}

inline Scene sample_scene(Rng& rng) {
  Scene s;
  const std::size_t n = 1 + rng.weighted({0.3, 0.3, 0.25, 0.15});
  std::vector<std::size_t> nouns(lexicon::nouns().size());
  for (std::size_t i = 0; i < nouns.size(); ++i) nouns[i] = i;
  for (std::size_t i = 0; i < n; ++i) {  // partial Fisher-Yates: distinct nouns
    std::swap(nouns[i], nouns[i + rng.index(nouns.size() - i)]);
    SceneObject o;
    o.noun = nouns[i];
    o.color = rng.index(lexicon::colors().size());
    o.count = 1 + rng.weighted({0.5, 0.3, 0.2});
    o.action = rng.index(lexicon::actions().size());
    s.objects.push_back(o);
  }
  s.relation = rng.index(lexicon::relations().size());
  return s;
}

struct QuestionDraft {
  QuestionKind kind = QuestionKind::exist;
  Tokens question;
  std::string answer;
  std::vector<std::string> pool;  // answers a disagreeing annotator picks from
  std::optional<std::size_t> target;
};

inline QuestionDraft sample_question(const Scene& s, const GenConfig& cfg, Rng& rng) {
  QuestionDraft q;
  const std::size_t n = s.objects.size();
  q.kind = static_cast<QuestionKind>(rng.weighted({cfg.question_mix.begin(), cfg.question_mix.end()}));
  std::string text;
  switch (q.kind) {
    case QuestionKind::exist: {
      const bool yes = rng.bernoulli(cfg.yes_bias);
      std::size_t noun = 0;
      std::optional<std::size_t> color;
      if (yes) {
        q.target = rng.index(n);
        noun = s.objects[*q.target].noun;
        if (rng.bernoulli(cfg.exist_attribute_rate)) color = s.objects[*q.target].color;
      } else if (rng.bernoulli(cfg.exist_attribute_rate)) {
        // present noun, wrong color
        q.target = rng.index(n);
        noun = s.objects[*q.target].noun;
        color = pick_other(rng, lexicon::colors().size(), [&](std::size_t c) { return c == s.objects[*q.target].color; });
      } else {
        noun = pick_other(rng, lexicon::nouns().size(), [&](std::size_t k) {
          return std::any_of(s.objects.begin(), s.objects.end(), [&](const SceneObject& o) { return o.noun == k; });
        });
      }
      const bool plural = yes ? s.objects[*q.target].count > 1 : rng.bernoulli(0.5);
      const std::string attr = color ? lexicon::colors()[*color] + " " : "";
      const auto& nn = lexicon::nouns()[noun];
      text = plural ? "are there any " + attr + lexicon::plural(nn) : "is there a " + attr + nn;
      q.answer = yes ? "yes" : "no";
      q.pool = {"yes", "no"};
      break;
    }
    case QuestionKind::verify: {
      q.target = rng.index(n);
      const auto& o = s.objects[*q.target];
      const bool yes = rng.bernoulli(cfg.yes_bias);
      const std::size_t act =
          yes ? o.action : pick_other(rng, lexicon::actions().size(), [&](std::size_t a) { return a == o.action; });
      text = std::string(copula(o)) + " the " + lexicon::colors()[o.color] + " " + noun_form(o) + " " +
             lexicon::actions()[act];
      q.answer = yes ? "yes" : "no";
      q.pool = {"yes", "no"};
      break;
    }
    case QuestionKind::count: {
      q.target = rng.index(n);
      const auto& o = s.objects[*q.target];
      text = "how many " + lexicon::plural(lexicon::nouns()[o.noun]) + " are there";
      q.answer = number_word(o.count);
      q.pool = lexicon::numbers();
      break;
    }
    case QuestionKind::color: {
      q.target = rng.index(n);
      const auto& o = s.objects[*q.target];
      text = std::string("what color ") + copula(o) + " the " + noun_form(o);
      q.answer = lexicon::colors()[o.color];
      q.pool = lexicon::colors();
      break;
    }
    case QuestionKind::action:
    case QuestionKind::external: {
      q.kind = QuestionKind::action;
      q.target = rng.index(n);
      const auto& o = s.objects[*q.target];
      text = std::string("what ") + copula(o) + " the " + noun_form(o) + " doing";
      q.answer = lexicon::actions()[o.action];
      q.pool = lexicon::actions();
      break;
    }
  }
  q.question = tokenize(text);
  return q;
}

inline AnswerType answer_type_of(QuestionKind k) {
  switch (k) {
    case QuestionKind::exist:
    case QuestionKind::verify: return AnswerType::yes_no;
    case QuestionKind::count: return AnswerType::number;
    default: return AnswerType::other;
  }
}

}  // namespace detail

/// Human answers: each is the true answer with probability 1 - d, otherwise
/// another answer of the same kind.
inline std::vector<std::string> sample_human_answers(const std::string& truth, const std::vector<std::string>& pool,
                                                     std::size_t count, double disagreement, Rng& rng) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < count; ++i) {
    if (rng.uniform() >= disagreement) {
      out.push_back(truth);
    } else {
      std::vector<std::string> others;
      for (const auto& a : pool) {
        if (a != truth) others.push_back(a);
      }
      out.push_back(others.empty() ? truth : others[rng.index(others.size())]);
    }
  }
  return out;
}

/// Scene, question and answers of one instance; captions, labels and
/// features are filled by generate_world.
inline Instance sample_instance(const GenConfig& cfg, Rng& rng, std::string id) {
  Instance in;
  in.id = std::move(id);
  in.scene = detail::sample_scene(rng);
  auto q = detail::sample_question(*in.scene, cfg, rng);
  in.kind = q.kind;
  in.question = std::move(q.question);
  in.question_type = detail::answer_type_of(q.kind);
  in.target = q.target;
  in.answers = sample_human_answers(q.answer, q.pool, cfg.answers_per_question, cfg.disagreement, rng);
  in.captions = reference_captions(*in.scene);
  return in;
}

/// Generated data plus everything derived from the training split.
struct World {
  GenConfig config;
  std::vector<Instance> train, val;
  std::unordered_set<std::string> stop_words;
  WordList word_list;
  Vocabulary vocab;
  std::vector<std::string> content_tokens;  // corruption pool: vocabulary minus reserved and stop words
  IdfTable idf;                             // over validation references
  AnswerCandidates candidates;
};

namespace detail {

inline std::string instance_id(const char* split, std::size_t i) {
  std::string n = std::to_string(i);
  return std::string(split) + "-" + std::string(n.size() < 6 ? 6 - n.size() : 0, '0') + n;
}

}  // namespace detail

inline World generate_world(const GenConfig& cfg, std::unordered_set<std::string> stop_words = default_stop_word_set()) {
  cfg.validate();
  World w;
  w.config = cfg;
  w.stop_words = std::move(stop_words);
  Rng train_rng(derive_seed(cfg.seed, "world/train"));
  Rng val_rng(derive_seed(cfg.seed, "world/val"));
  for (std::size_t i = 0; i < cfg.train_size; ++i) w.train.push_back(sample_instance(cfg, train_rng, detail::instance_id("train", i)));
  for (std::size_t i = 0; i < cfg.val_size; ++i) w.val.push_back(sample_instance(cfg, val_rng, detail::instance_id("val", i)));

  std::vector<Tokens> train_refs, corpus;
  for (const auto& in : w.train) {
    corpus.push_back(in.question);
    for (const auto& c : in.captions) {
      train_refs.push_back(c);
      corpus.push_back(c);
    }
  }
  w.word_list = build_word_list(train_refs, cfg.word_list_top_n, w.stop_words);
  w.vocab = build_vocabulary(corpus, cfg.vocab_min_count);
  for (const auto& t : w.vocab.tokens()) {
    if (!Vocabulary::is_reserved(t) && !w.stop_words.count(t)) w.content_tokens.push_back(t);
  }

  const auto projection = feature_projection(cfg.feature_dim, cfg.seed);
  Rng feat_rng(derive_seed(cfg.seed, "world/features"));
  std::vector<std::vector<Tokens>> val_docs;
  for (auto* split : {&w.train, &w.val}) {
    for (auto& in : *split) {
      in.word_labels = word_label_vector(in.captions, w.word_list);
      in.scene_features = render_features(*in.scene, projection, cfg.feature_noise, feat_rng);
    }
  }
  for (const auto& in : w.val) val_docs.push_back(in.captions);
  w.idf = IdfTable::build(val_docs);

  std::vector<std::string> targets;
  for (const auto& in : w.train) targets.push_back(plurality_answer(in.answers));
  w.candidates = build_answer_candidates(targets, cfg.num_candidates);
  return w;
}

// ---------------------------------------------------------------------------
// Explanation simulation

/// p = clamp((1 - noise)·y + noise·u, eps, 1 - eps), u ~ U[0,1) per entry.
inline std::vector<double> perturb_word_probs(std::span<const double> y, double noise, Rng& rng, double eps = 1e-3) {
  if (!(noise >= 0.0 && noise <= 1.0)) throw std::invalid_argument("perturb_word_probs: noise must lie in [0, 1]");
  std::vector<double> p(y.size());
  for (std::size_t j = 0; j < y.size(); ++j) p[j] = std::clamp((1.0 - noise) * y[j] + noise * rng.uniform(), eps, 1.0 - eps);
  return p;
}

/// Replaces each non-stop token with a random pool token with probability
/// `rate`.
inline Tokens corrupt_caption(const Tokens& caption, double rate, Rng& rng, const std::vector<std::string>& pool,
                              const std::unordered_set<std::string>& stop_words) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw std::invalid_argument("corrupt_caption: rate must lie in [0, 1]");
  Tokens out = caption;
  if (pool.empty()) return out;
  for (auto& t : out) {
    if (stop_words.count(t)) continue;
    if (rng.uniform() < rate) t = pool[rng.index(pool.size())];
  }
  return out;
}

struct ExplanationKnobs {
  double detector_noise = 0.2;
  double caption_corruption = 0.1;
  double relevance_drop = 0.3;
  std::array<double, 3> caption_styles = {0.7, 0.15, 0.15};

  static ExplanationKnobs from(const GenConfig& c) {
    return {c.detector_noise, c.caption_corruption, c.relevance_drop, c.caption_styles};
  }
};

/// Simulated detector and captioner. With probability relevance_drop the
/// queried object is removed from the scene both explanations see; word
/// probabilities perturb the label vector of what remains, and the caption
/// describes the queried object if visible, else a random visible one.
/// Instances without scene metadata fall back to their labels and first
/// reference.
inline void simulate_explanations(std::vector<Instance>& data, const World& w, const ExplanationKnobs& k,
                                  std::uint64_t seed) {
  if (!(k.relevance_drop >= 0.0 && k.relevance_drop <= 1.0)) {
    throw std::invalid_argument("relevance_drop must lie in [0, 1]");
  }
  Rng rng(seed);
  for (auto& in : data) {
    if (!in.scene) {
      in.target_dropped = false;
      in.word_probs = perturb_word_probs(in.word_labels, k.detector_noise, rng);
      Tokens cap = in.captions.empty() ? Tokens{} : in.captions.front();
      in.generated_caption = corrupt_caption(cap, k.caption_corruption, rng, w.content_tokens, w.stop_words);
      continue;
    }
    const Scene& s = *in.scene;
    std::vector<std::size_t> visible;
    for (std::size_t i = 0; i < s.objects.size(); ++i) visible.push_back(i);
    in.target_dropped = in.target && rng.uniform() < k.relevance_drop;
    if (in.target_dropped) visible.erase(std::find(visible.begin(), visible.end(), *in.target));

    std::vector<Tokens> seen;
    for (auto i : visible) seen.push_back(describe_object(s, i, caption_partner(s, i, visible)));
    const auto y_visible = word_label_vector(seen, w.word_list);
    in.word_probs = perturb_word_probs(y_visible, k.detector_noise, rng);

    std::optional<std::size_t> subject;
    if (in.target && !in.target_dropped) subject = in.target;
    else if (!visible.empty()) subject = visible[rng.index(visible.size())];
    Tokens cap;
    if (subject) {
      const auto style = static_cast<CaptionStyle>(rng.weighted({k.caption_styles.begin(), k.caption_styles.end()}));
      cap = describe_object(s, *subject, caption_partner(s, *subject, visible), style);
    }
    in.generated_caption = corrupt_caption(cap, k.caption_corruption, rng, w.content_tokens, w.stop_words);
  }
}

// ---------------------------------------------------------------------------
// Caption sources for the control experiment

enum class CaptionSource { null, generated, groundtruth };

inline const char* caption_source_name(CaptionSource s) {
  switch (s) {
    case CaptionSource::null: return "null";
    case CaptionSource::generated: return "generated";
    case CaptionSource::groundtruth: return "gt";
  }
  return "?";
}

inline CaptionSource parse_caption_source(std::string_view s) {
  if (s == "null") return CaptionSource::null;
  if (s == "generated") return CaptionSource::generated;
  if (s == "gt" || s == "groundtruth" || s == "relevant-groundtruth") return CaptionSource::groundtruth;
  throw std::invalid_argument("unknown caption source '" + std::string(s) + "'");
}

/// null -> ["#end"]; generated -> the attached caption; groundtruth -> the
/// reference most relevant to the question (first on ties).
inline Tokens caption_source_select(const Instance& in, CaptionSource source, const Vocabulary& vocab) {
  switch (source) {
    case CaptionSource::null: return {std::string(kEndToken)};
    case CaptionSource::generated:
      if (!in.generated_caption) throw std::invalid_argument("instance " + in.id + " has no generated caption");
      return *in.generated_caption;
    case CaptionSource::groundtruth: {
      if (in.captions.empty()) throw std::invalid_argument("instance " + in.id + " has no reference captions");
      std::size_t best = 0;
      double best_r = -1;
      for (std::size_t i = 0; i < in.captions.size(); ++i) {
        const double r = sentence_question_relevance(in.captions[i], in.question, vocab).value;
        if (r > best_r) {
          best_r = r;
          best = i;
        }
      }
      return in.captions[best];
    }
  }
  return {};
}

/// Per-instance quality of the attached explanations. Requires word_probs
/// and generated_caption.
inline QualityScores quality_scores(const Instance& in, const World& w) {
  if (!in.word_probs) throw std::invalid_argument("instance " + in.id + " has no word probabilities");
  if (!in.generated_caption) throw std::invalid_argument("instance " + in.id + " has no generated caption");
  QualityScores q;
  q.word_accuracy = word_accuracy(in.word_labels, *in.word_probs).value;
  q.word_question_relevance =
      word_question_relevance(question_word_vector(in.question, w.word_list), *in.word_probs).value;
  q.sentence_accuracy = in.captions.empty() ? 0.0 : sentence_accuracy(*in.generated_caption, in.captions, w.idf);
  q.sentence_question_relevance = sentence_question_relevance(*in.generated_caption, in.question, w.vocab).value;
  return q;
}

}  // namespace xvqa
