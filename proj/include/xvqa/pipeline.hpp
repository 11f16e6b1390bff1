#pragma once

// Glue between the generated world and the trained explainers: training
// sets, model-produced explanations, and precision conversion.

#include <string>
#include <vector>

#include "xvqa/explainers.hpp"
#include "xvqa/reasoner.hpp"
#include "xvqa/synthworld.hpp"

namespace xvqa {

inline std::vector<WordExample> word_examples(const std::vector<Instance>& data) {
  std::vector<WordExample> ex;
  ex.reserve(data.size());
  for (const auto& in : data) {
    if (in.scene_features.empty()) continue;
    ex.push_back({in.scene_features, in.word_labels});
  }
  return ex;
}

/// One example per instance, on its first reference.
inline std::vector<CaptionExample> caption_examples(const std::vector<Instance>& data, const Vocabulary& vocab) {
  std::vector<CaptionExample> ex;
  ex.reserve(data.size());
  for (const auto& in : data) {
    if (in.scene_features.empty() || in.captions.empty()) continue;
    ex.push_back({in.scene_features, vocab.encode(in.captions.front())});
  }
  return ex;
}

struct Explainers {
  WordPredictor<double> words;
  CaptionGenerator<double> captions;
};

inline Explainers train_explainers(const World& w, const WordPredictorConfig& wc, const CaptionGeneratorConfig& cc,
                                   TrainTrace* word_trace = nullptr, TrainTrace* caption_trace = nullptr) {
  Explainers e;
  e.words = train_word_predictor<double>(word_examples(w.train), wc, word_trace);
  e.captions = train_caption_generator<double>(caption_examples(w.train, w.vocab), w.vocab.size(), cc, caption_trace);
  return e;
}

/// Replaces simulated explanations with the models' outputs.
inline void attach_model_explanations(std::vector<Instance>& data, const Explainers& e, const Vocabulary& vocab,
                                      const DecodeOptions& opt = {}) {
  for (auto& in : data) {
    if (in.scene_features.empty()) throw std::invalid_argument("instance " + in.id + " has no scene features");
    in.word_probs = predict_words(e.words, in.scene_features);
    in.generated_caption = decode_tokens(generate_caption(e.captions, in.scene_features, opt), vocab);
  }
}

/// Copies a model into another precision.
template <class U, class T>
ReasonerModel<U> convert_reasoner(const ReasonerModel<T>& m) {
  ReasonerModel<U> out(m.mode, m.vocab_size(), m.word_dim, m.embed_dim(), m.hidden_dim(), m.num_answers(),
                       m.use_batch_norm);
  auto src = m.parameters();
  auto dst = out.parameters();
  src.push_back(&m.bn.running_mean);
  src.push_back(&m.bn.running_var);
  dst.push_back(&out.bn.running_mean);
  dst.push_back(&out.bn.running_var);
  for (std::size_t i = 0; i < src.size(); ++i) {
    auto s = src[i]->values();
    auto d = dst[i]->values();
    for (std::size_t k = 0; k < s.size(); ++k) d[k] = static_cast<U>(s[k]);
  }
  return out;
}

}  // namespace xvqa
