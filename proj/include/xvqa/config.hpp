#pragma once

// Run configuration: every module's settings, one global seed, JSON
// round-trip. Precedence is defaults < file < explicit overrides.

#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "xvqa/analysis.hpp"
#include "xvqa/explainers.hpp"
#include "xvqa/reasoner.hpp"
#include "xvqa/synthworld.hpp"

namespace xvqa {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Precision { f64, f32 };

inline const char* precision_name(Precision p) { return p == Precision::f64 ? "f64" : "f32"; }

inline Precision parse_precision(std::string_view s) {
  if (s == "f64") return Precision::f64;
  if (s == "f32") return Precision::f32;
  throw ConfigError("precision must be f64 or f32, got '" + std::string(s) + "'");
}

struct AnalysisConfig {
  double relevance_threshold = 0.2;
  double correct_threshold = 1.0;
  std::vector<double> bins = default_bin_edges();
  std::vector<double> sweep_grid = default_sweep_grid();
  CaptionSource caption_source = CaptionSource::generated;
  bool model_explanations = false;  // evaluate on trained-explainer outputs
};

struct RunConfig {
  std::uint64_t seed = 1;
  Precision precision = Precision::f64;
  GenConfig data;  // data.seed is derived, not configured
  WordPredictorConfig word_predictor;
  CaptionGeneratorConfig caption_generator;
  ReasonerConfig reasoner;
  AnalysisConfig analysis;
  DecodeOptions decode;
  std::string stop_words;  // file; empty selects the built-in list
  std::string out;

  /// Labeled sub-seeds of the global seed.
  GenConfig gen() const {
    GenConfig g = data;
    g.seed = derive_seed(seed, "synthworld");
    return g;
  }
  WordPredictorConfig word_config() const {
    auto c = word_predictor;
    c.seed = derive_seed(seed, "word-predictor");
    return c;
  }
  CaptionGeneratorConfig caption_config() const {
    auto c = caption_generator;
    c.seed = derive_seed(seed, "caption-generator");
    return c;
  }
  ReasonerConfig reasoner_config(std::optional<AblationMode> mode = std::nullopt) const {
    auto c = reasoner;
    c.seed = derive_seed(seed, "reasoner");
    if (mode) c.mode = *mode;
    return c;
  }
  std::uint64_t sweep_seed() const { return derive_seed(seed, "sweep"); }
  CaseThresholds thresholds() const { return {analysis.relevance_threshold, analysis.correct_threshold}; }

  void validate() const {
    try {
      gen().validate();
      thresholds().validate();
      validate_bin_edges(analysis.bins);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    if (analysis.sweep_grid.size() < 3) throw ConfigError("sweep_grid needs at least three levels");
    for (double v : analysis.sweep_grid) {
      if (!(v >= 0 && v <= 1)) throw ConfigError("sweep_grid levels must lie in [0, 1]");
    }
    if (!(reasoner.dropout >= 0 && reasoner.dropout < 1)) throw ConfigError("reasoner.dropout must lie in [0, 1)");
    auto positive = [](std::size_t v, const char* name) {
      if (v == 0) throw ConfigError(std::string(name) + " must be positive");
    };
    positive(reasoner.embed_dim, "reasoner.embed_dim");
    positive(reasoner.hidden_dim, "reasoner.hidden_dim");
    positive(reasoner.batch_size, "reasoner.batch_size");
    positive(reasoner.max_len, "reasoner.max_len");
    positive(word_predictor.hidden_dim, "word_predictor.hidden_dim");
    positive(word_predictor.batch_size, "word_predictor.batch_size");
    positive(caption_generator.embed_dim, "caption_generator.embed_dim");
    positive(caption_generator.hidden_dim, "caption_generator.hidden_dim");
    positive(caption_generator.batch_size, "caption_generator.batch_size");
    positive(caption_generator.max_len, "caption_generator.max_len");
    positive(decode.max_len, "decode.max_len");
    positive(decode.beam_width, "decode.beam_width");
    for (double lr : {reasoner.learning_rate_high, reasoner.learning_rate_low, word_predictor.learning_rate,
                      caption_generator.learning_rate}) {
      if (!(lr > 0)) throw ConfigError("learning rates must be positive");
    }
  }
};

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::ordered_json to_json(const RunConfig& c) {
  using J = nlohmann::ordered_json;
  J j;
  j["seed"] = c.seed;
  j["precision"] = precision_name(c.precision);
  const auto& d = c.data;
  j["data"] = J{{"train_size", d.train_size},
                {"val_size", d.val_size},
                {"yes_bias", d.yes_bias},
                {"detector_noise", d.detector_noise},
                {"caption_corruption", d.caption_corruption},
                {"relevance_drop", d.relevance_drop},
                {"disagreement", d.disagreement},
                {"answers_per_question", d.answers_per_question},
                {"feature_dim", d.feature_dim},
                {"feature_noise", d.feature_noise},
                {"word_list_top_n", d.word_list_top_n},
                {"vocab_min_count", d.vocab_min_count},
                {"num_candidates", d.num_candidates},
                {"exist_attribute_rate", d.exist_attribute_rate},
                {"question_mix", d.question_mix},
                {"caption_styles", d.caption_styles}};
  j["stop_words"] = c.stop_words;
  const auto& w = c.word_predictor;
  j["word_predictor"] = J{{"hidden_dim", w.hidden_dim},
                          {"epochs", w.epochs},
                          {"batch_size", w.batch_size},
                          {"learning_rate", w.learning_rate}};
  const auto& g = c.caption_generator;
  j["caption_generator"] = J{{"embed_dim", g.embed_dim},     {"hidden_dim", g.hidden_dim},
                             {"epochs", g.epochs},           {"batch_size", g.batch_size},
                             {"learning_rate", g.learning_rate}, {"max_len", g.max_len}};
  j["decode"] = J{{"mode", c.decode.mode == DecodeMode::greedy ? "greedy" : "beam"},
                  {"max_len", c.decode.max_len},
                  {"beam_width", c.decode.beam_width}};
  const auto& r = c.reasoner;
  j["reasoner"] = J{{"mode", mode_name(r.mode)},
                    {"embed_dim", r.embed_dim},
                    {"hidden_dim", r.hidden_dim},
                    {"batch_norm", r.batch_norm},
                    {"dropout", r.dropout},
                    {"batch_size", r.batch_size},
                    {"epochs_high", r.epochs_high},
                    {"epochs_low", r.epochs_low},
                    {"learning_rate_high", r.learning_rate_high},
                    {"learning_rate_low", r.learning_rate_low},
                    {"max_len", r.max_len},
                    {"target", r.target == TargetRule::plurality ? "plurality" : "sample"}};
  const auto& a = c.analysis;
  j["analysis"] = J{{"relevance_threshold", a.relevance_threshold},
                    {"correct_threshold", a.correct_threshold},
                    {"bins", a.bins},
                    {"sweep_grid", a.sweep_grid},
                    {"caption_source", caption_source_name(a.caption_source)},
                    {"model_explanations", a.model_explanations}};
  j["out"] = c.out;
  return j;
}

namespace detail {

/// Reads the keys present in `j` into the matching fields; unknown keys and
/// wrong types are configuration errors.
class JsonReader {
 public:
  JsonReader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + "expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.push_back(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(where(key) + "wrong type");
    }
  }

  template <class F>
  void get_with(const char* key, F&& parse) {
    seen_.push_back(key);
    if (!j_.contains(key)) return;
    if (!j_.at(key).is_string()) throw ConfigError(where(key) + "expected a string");
    try {
      parse(j_.at(key).get<std::string>());
    } catch (const std::invalid_argument& e) {
      throw ConfigError(where(key) + e.what());
    }
  }

  std::optional<JsonReader> object(const char* key) {
    seen_.push_back(key);
    if (!j_.contains(key)) return std::nullopt;
    return JsonReader(j_.at(key), path_.empty() ? key : path_ + "." + key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (std::find(seen_.begin(), seen_.end(), k) == seen_.end()) throw ConfigError("unknown config key '" + (path_.empty() ? k : path_ + "." + k) + "'");
    }
  }

 private:
  std::string where(const char* key = nullptr) const {
    std::string p = path_;
    if (key) p = p.empty() ? key : p + "." + key;
    return p.empty() ? "" : p + ": ";
  }

  const nlohmann::json& j_;
  std::string path_;
  std::vector<std::string> seen_;
};

}  // namespace detail

/// Applies the keys of `j` on top of `c`.
inline void apply_json(RunConfig& c, const nlohmann::json& j) {
  detail::JsonReader r(j, "");
  r.get("seed", c.seed);
  r.get_with("precision", [&](const std::string& s) { c.precision = parse_precision(s); });
  if (auto d = r.object("data")) {
    auto& g = c.data;
    d->get("train_size", g.train_size);
    d->get("val_size", g.val_size);
    d->get("yes_bias", g.yes_bias);
    d->get("detector_noise", g.detector_noise);
    d->get("caption_corruption", g.caption_corruption);
    d->get("relevance_drop", g.relevance_drop);
    d->get("disagreement", g.disagreement);
    d->get("answers_per_question", g.answers_per_question);
    d->get("feature_dim", g.feature_dim);
    d->get("feature_noise", g.feature_noise);
    d->get("word_list_top_n", g.word_list_top_n);
    d->get("vocab_min_count", g.vocab_min_count);
    d->get("num_candidates", g.num_candidates);
    d->get("exist_attribute_rate", g.exist_attribute_rate);
    d->get("question_mix", g.question_mix);
    d->get("caption_styles", g.caption_styles);
    d->finish();
  }
  r.get("stop_words", c.stop_words);
  if (auto w = r.object("word_predictor")) {
    w->get("hidden_dim", c.word_predictor.hidden_dim);
    w->get("epochs", c.word_predictor.epochs);
    w->get("batch_size", c.word_predictor.batch_size);
    w->get("learning_rate", c.word_predictor.learning_rate);
    w->finish();
  }
  if (auto g = r.object("caption_generator")) {
    auto& cg = c.caption_generator;
    g->get("embed_dim", cg.embed_dim);
    g->get("hidden_dim", cg.hidden_dim);
    g->get("epochs", cg.epochs);
    g->get("batch_size", cg.batch_size);
    g->get("learning_rate", cg.learning_rate);
    g->get("max_len", cg.max_len);
    g->finish();
  }
  if (auto d = r.object("decode")) {
    d->get_with("mode", [&](const std::string& s) {
      if (s == "greedy") c.decode.mode = DecodeMode::greedy;
      else if (s == "beam") c.decode.mode = DecodeMode::beam;
      else throw std::invalid_argument("expected greedy or beam");
    });
    d->get("max_len", c.decode.max_len);
    d->get("beam_width", c.decode.beam_width);
    d->finish();
  }
  if (auto rr = r.object("reasoner")) {
    auto& rc = c.reasoner;
    rr->get_with("mode", [&](const std::string& s) { rc.mode = parse_mode(s); });
    rr->get("embed_dim", rc.embed_dim);
    rr->get("hidden_dim", rc.hidden_dim);
    rr->get("batch_norm", rc.batch_norm);
    rr->get("dropout", rc.dropout);
    rr->get("batch_size", rc.batch_size);
    rr->get("epochs_high", rc.epochs_high);
    rr->get("epochs_low", rc.epochs_low);
    rr->get("learning_rate_high", rc.learning_rate_high);
    rr->get("learning_rate_low", rc.learning_rate_low);
    rr->get("max_len", rc.max_len);
    rr->get_with("target", [&](const std::string& s) {
      if (s == "plurality") rc.target = TargetRule::plurality;
      else if (s == "sample") rc.target = TargetRule::sample;
      else throw std::invalid_argument("expected plurality or sample");
    });
    rr->finish();
  }
  if (auto a = r.object("analysis")) {
    auto& ac = c.analysis;
    a->get("relevance_threshold", ac.relevance_threshold);
    a->get("correct_threshold", ac.correct_threshold);
    a->get("bins", ac.bins);
    a->get("sweep_grid", ac.sweep_grid);
    a->get_with("caption_source", [&](const std::string& s) { ac.caption_source = parse_caption_source(s); });
    a->get("model_explanations", ac.model_explanations);
    a->finish();
  }
  r.get("out", c.out);
  r.finish();
}

inline RunConfig load_config_file(const std::string& path, RunConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config ") + path + ": " + e.what());
  }
  apply_json(base, j);
  return base;
}

/// Comma-separated reals, e.g. "0,0.2,0.8,1".
inline std::vector<double> parse_edges(std::string_view s) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const auto comma = s.find(',', pos);
    const std::string part(s.substr(pos, comma == std::string_view::npos ? s.size() - pos : comma - pos));
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(part, &used);
    } catch (const std::exception&) {
      throw ConfigError("cannot parse '" + part + "' as a number");
    }
    if (used != part.size()) throw ConfigError("cannot parse '" + part + "' as a number");
    out.push_back(v);
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

}  // namespace xvqa
