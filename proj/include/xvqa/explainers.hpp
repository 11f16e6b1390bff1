#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "xvqa/checkpoint.hpp"
#include "xvqa/layers.hpp"
#include "xvqa/lstm.hpp"
#include "xvqa/optim.hpp"
#include "xvqa/random.hpp"
#include "xvqa/tensor.hpp"
#include "xvqa/text.hpp"

namespace xvqa {

/// Per-epoch record shared by every trainer.
struct TrainTrace {
  std::vector<double> epoch_loss;
  std::vector<double> learning_rate;
  std::size_t used = 0;
  std::size_t skipped = 0;
};

namespace detail {

inline std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

template <class T>
void zero_all(const std::vector<Tensor<T>*>& ts) {
  for (Tensor<T>* t : ts) t->fill(T{0});
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Word predictor: features -> tanh hidden -> V logits.

struct WordExample {
  std::span<const double> features;
  std::span<const double> labels;
};

struct WordPredictorConfig {
  std::size_t hidden_dim = 64;
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double learning_rate = 0.005;
  std::uint64_t seed = 1;
};

template <class T = double>
struct WordPredictor {
  Tensor<T> W1, b1, W2, b2;

  WordPredictor() = default;
  WordPredictor(std::size_t feature_dim, std::size_t hidden_dim, std::size_t words)
      : W1({hidden_dim, feature_dim}), b1({hidden_dim}), W2({words, hidden_dim}), b2({words}) {}

  std::size_t feature_dim() const { return W1.dim(1); }
  std::size_t hidden_dim() const { return W1.dim(0); }
  std::size_t word_count() const { return W2.dim(0); }

  std::vector<Tensor<T>*> parameters() { return {&W1, &b1, &W2, &b2}; }
  std::vector<const Tensor<T>*> parameters() const { return {&W1, &b1, &W2, &b2}; }

  void init(Rng& rng) {
    init_uniform(W1, feature_dim(), rng);
    init_uniform(b1, feature_dim(), rng);
    init_uniform(W2, hidden_dim(), rng);
    init_uniform(b2, hidden_dim(), rng);
  }
};

inline constexpr const char* kWordPredictorKind = "word-predictor";

template <class T>
std::vector<T> word_logits(const WordPredictor<T>& m, std::span<const double> features, std::vector<T>* hidden = nullptr) {
  if (features.size() != m.feature_dim()) {
    throw ShapeError("word predictor expects " + std::to_string(m.feature_dim()) + " features, got " +
                     std::to_string(features.size()));
  }
  std::vector<T> x(features.begin(), features.end());
  std::vector<T> h(m.hidden_dim()), z(m.word_count());
  detail::affine_into<T>(x, m.W1, m.b1, h);
  for (T& v : h) v = std::tanh(v);
  detail::affine_into<T>(h, m.W2, m.b2, z);
  if (hidden) *hidden = std::move(h);
  return z;
}

/// p = sigmoid(logits), one probability per word-list entry.
template <class T>
std::vector<double> predict_words(const WordPredictor<T>& m, std::span<const double> features) {
  auto z = word_logits(m, features);
  std::vector<double> p(z.size());
  for (std::size_t j = 0; j < z.size(); ++j) p[j] = static_cast<double>(sigmoid(z[j]));
  return p;
}

/// Batch-mean of the summed element-wise sigmoid cross entropy. Gradients are
/// accumulated into `grads` when given.
template <class T>
T word_predictor_loss(const WordPredictor<T>& m, std::span<const WordExample> batch, WordPredictor<T>* grads) {
  if (batch.empty()) throw std::invalid_argument("word_predictor_loss: empty batch");
  const T inv_n = T{1} / static_cast<T>(batch.size());
  T total = 0;
  std::vector<T> h, dz(m.word_count()), dh(m.hidden_dim());
  for (const auto& ex : batch) {
    if (ex.labels.size() != m.word_count()) {
      throw ShapeError("word predictor expects " + std::to_string(m.word_count()) + " labels, got " +
                       std::to_string(ex.labels.size()));
    }
    auto z = word_logits(m, ex.features, &h);
    for (std::size_t j = 0; j < z.size(); ++j) {
      const T t = static_cast<T>(ex.labels[j]);
      total += std::max(z[j], T{0}) - z[j] * t + std::log1p(std::exp(-std::abs(z[j])));
      dz[j] = (sigmoid(z[j]) - t) * inv_n;
    }
    if (!grads) continue;
    std::fill(dh.begin(), dh.end(), T{0});
    detail::affine_backward_accumulate<T>(h, m.W2, dz, dh, grads->W2, grads->b2);
    for (std::size_t k = 0; k < dh.size(); ++k) dh[k] *= T{1} - h[k] * h[k];
    std::vector<T> x(ex.features.begin(), ex.features.end());
    detail::affine_backward_accumulate<T>(x, m.W1, dh, {}, grads->W1, grads->b1);
  }
  return total * inv_n;
}

template <class T = double>
WordPredictor<T> train_word_predictor(std::span<const WordExample> data, const WordPredictorConfig& cfg,
                                      TrainTrace* trace = nullptr) {
  if (data.empty()) throw std::invalid_argument("train_word_predictor: empty dataset");
  if (cfg.batch_size == 0 || cfg.hidden_dim == 0) throw std::invalid_argument("train_word_predictor: zero size");
  const std::size_t F = data[0].features.size(), V = data[0].labels.size();
  if (F == 0 || V == 0) throw ShapeError("train_word_predictor: empty features or labels");
  for (const auto& ex : data) {
    if (ex.features.size() != F || ex.labels.size() != V) {
      throw ShapeError("train_word_predictor: inconsistent feature or label dimension");
    }
  }
  Rng init_rng(derive_seed(cfg.seed, "word-predictor/init"));
  Rng order_rng(derive_seed(cfg.seed, "word-predictor/order"));
  WordPredictor<T> m(F, cfg.hidden_dim, V), g(F, cfg.hidden_dim, V);
  m.init(init_rng);
  Adam<T> opt(AdamConfig{cfg.learning_rate});
  auto params = m.parameters();
  auto grads = g.parameters();
  auto order = detail::iota_indices(data.size());
  std::vector<WordExample> batch;
  if (trace) trace->used = data.size();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    double sum = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i) batch.push_back(data[order[i]]);
      detail::zero_all(grads);
      sum += static_cast<double>(word_predictor_loss<T>(m, batch, &g)) * static_cast<double>(batch.size());
      opt.step(params, grads);
    }
    if (trace) {
      trace->epoch_loss.push_back(sum / static_cast<double>(data.size()));
      trace->learning_rate.push_back(cfg.learning_rate);
    }
  }
  return m;
}

template <class T>
void save_word_predictor(const std::string& path, const WordPredictor<T>& m) {
  save_checkpoint<T>(path, kWordPredictorKind, {m.feature_dim(), m.hidden_dim(), m.word_count()}, m.parameters());
}

inline WordPredictor<double> load_word_predictor(const std::string& path) {
  const Checkpoint c = load_checkpoint(path);
  if (c.dims.size() != 3) throw CheckpointError("checkpoint: word predictor needs 3 dims");
  WordPredictor<double> m(c.dims[0], c.dims[1], c.dims[2]);
  restore_tensors<double>(c, kWordPredictorKind, m.parameters());
  return m;
}

// ---------------------------------------------------------------------------
// Caption generator: the projected scene vector is the first LSTM input,
// then #start, the caption tokens; every step after the first predicts the
// next token, the last one #end.

struct CaptionExample {
  std::span<const double> features;
  std::vector<std::size_t> tokens;  // vocabulary ids, no framing tokens
};

struct CaptionGeneratorConfig {
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 64;
  std::size_t epochs = 8;
  std::size_t batch_size = 32;
  double learning_rate = 0.01;
  std::size_t max_len = 20;
  std::uint64_t seed = 2;
};

template <class T = double>
struct CaptionGenerator {
  Tensor<T> W_img, b_img;  // E x F, E
  Tensor<T> embedding;     // N x E
  LstmParams<T> lstm;      // E -> H
  Tensor<T> W_out, b_out;  // N x H, N

  CaptionGenerator() = default;
  CaptionGenerator(std::size_t feature_dim, std::size_t vocab_size, std::size_t embed_dim, std::size_t hidden_dim)
      : W_img({embed_dim, feature_dim}),
        b_img({embed_dim}),
        embedding({vocab_size, embed_dim}),
        lstm(embed_dim, hidden_dim),
        W_out({vocab_size, hidden_dim}),
        b_out({vocab_size}) {}

  std::size_t feature_dim() const { return W_img.dim(1); }
  std::size_t vocab_size() const { return embedding.dim(0); }
  std::size_t embed_dim() const { return embedding.dim(1); }
  std::size_t hidden_dim() const { return lstm.hidden_size; }

  std::vector<Tensor<T>*> parameters() {
    return {&W_img, &b_img, &embedding, &lstm.w_input, &lstm.w_hidden, &lstm.bias, &W_out, &b_out};
  }
  std::vector<const Tensor<T>*> parameters() const {
    return {&W_img, &b_img, &embedding, &lstm.w_input, &lstm.w_hidden, &lstm.bias, &W_out, &b_out};
  }

  void init(Rng& rng) {
    init_uniform(W_img, feature_dim(), rng);
    init_uniform(b_img, feature_dim(), rng);
    for (T& v : embedding.values()) v = static_cast<T>(rng.normal());
    for (Tensor<T>* t : lstm.parameters()) init_uniform(*t, hidden_dim(), rng);
    init_uniform(W_out, hidden_dim(), rng);
    init_uniform(b_out, hidden_dim(), rng);
  }
};

inline constexpr const char* kCaptionGeneratorKind = "caption-generator";

namespace detail {

template <class T>
std::vector<T> image_input(const CaptionGenerator<T>& m, std::span<const double> features) {
  if (features.size() != m.feature_dim()) {
    throw ShapeError("caption generator expects " + std::to_string(m.feature_dim()) + " features, got " +
                     std::to_string(features.size()));
  }
  std::vector<T> x(features.begin(), features.end()), out(m.embed_dim());
  affine_into<T>(x, m.W_img, m.b_img, out);
  return out;
}

template <class T>
std::vector<T> embed_row(const Tensor<T>& emb, std::size_t id) {
  if (id >= emb.dim(0)) throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary");
  auto r = emb.row(id);
  return {r.begin(), r.end()};
}

}  // namespace detail

/// Mean per-token cross entropy of one caption (tokens plus #end).
template <class T>
T caption_loss(const CaptionGenerator<T>& m, const CaptionExample& ex, CaptionGenerator<T>* grads, T scale = T{1}) {
  const std::size_t L = ex.tokens.size(), N = m.vocab_size();
  std::vector<std::vector<T>> inputs;
  inputs.reserve(L + 2);
  inputs.push_back(detail::image_input(m, ex.features));
  inputs.push_back(detail::embed_row(m.embedding, Vocabulary::kStart));
  for (auto id : ex.tokens) inputs.push_back(detail::embed_row(m.embedding, id));
  auto steps = lstm_forward(inputs, m.lstm);

  const T per_token = T{1} / static_cast<T>(L + 1);
  T loss = 0;
  std::vector<std::vector<T>> dh(steps.size());
  std::vector<T> logits(N);
  for (std::size_t t = 1; t < steps.size(); ++t) {
    const std::size_t target = t - 1 < L ? ex.tokens[t - 1] : Vocabulary::kEnd;
    detail::affine_into<T>(steps[t].h, m.W_out, m.b_out, logits);
    const T mx = *std::max_element(logits.begin(), logits.end());
    T sum = 0;
    for (T z : logits) sum += std::exp(z - mx);
    const T log_z = mx + std::log(sum);
    loss += log_z - logits[target];
    if (!grads) continue;
    for (std::size_t k = 0; k < N; ++k) logits[k] = std::exp(logits[k] - log_z) * per_token * scale;
    logits[target] -= per_token * scale;
    dh[t].assign(m.hidden_dim(), T{0});
    detail::affine_backward_accumulate<T>(steps[t].h, m.W_out, logits, dh[t], grads->W_out, grads->b_out);
  }
  if (grads) {
    auto dx = lstm_backward(steps, m.lstm, dh, grads->lstm);
    std::vector<T> x(ex.features.begin(), ex.features.end());
    detail::affine_backward_accumulate<T>(x, m.W_img, dx[0], {}, grads->W_img, grads->b_img);
    auto add_row = [&](std::size_t id, const std::vector<T>& d) {
      auto r = grads->embedding.row(id);
      for (std::size_t k = 0; k < d.size(); ++k) r[k] += d[k];
    };
    add_row(Vocabulary::kStart, dx[1]);
    for (std::size_t i = 0; i < L; ++i) add_row(ex.tokens[i], dx[i + 2]);
  }
  return loss * per_token;
}

/// Batch mean of caption_loss.
template <class T>
T caption_batch_loss(const CaptionGenerator<T>& m, std::span<const CaptionExample> batch, CaptionGenerator<T>* grads) {
  if (batch.empty()) throw std::invalid_argument("caption_batch_loss: empty batch");
  const T inv_n = T{1} / static_cast<T>(batch.size());
  T total = 0;
  for (const auto& ex : batch) total += caption_loss(m, ex, grads, inv_n);
  return total * inv_n;
}

/// Drops captions with no in-vocabulary content (all #unk or empty) and
/// truncates to max_len.
inline std::vector<CaptionExample> usable_captions(std::span<const CaptionExample> data, std::size_t max_len,
                                                   std::size_t* skipped = nullptr) {
  std::vector<CaptionExample> out;
  std::size_t dropped = 0;
  for (const auto& ex : data) {
    const bool any_known = std::any_of(ex.tokens.begin(), ex.tokens.end(),
                                       [](std::size_t id) { return id >= Vocabulary::kReserved; });
    if (!any_known) {
      ++dropped;
      continue;
    }
    CaptionExample e = ex;
    if (e.tokens.size() > max_len) e.tokens.resize(max_len);
    out.push_back(std::move(e));
  }
  if (skipped) *skipped = dropped;
  return out;
}

template <class T = double>
CaptionGenerator<T> train_caption_generator(std::span<const CaptionExample> data, std::size_t vocab_size,
                                            const CaptionGeneratorConfig& cfg, TrainTrace* trace = nullptr) {
  std::size_t skipped = 0;
  const auto usable = usable_captions(data, cfg.max_len, &skipped);
  if (usable.empty()) throw std::invalid_argument("train_caption_generator: no usable captions");
  if (cfg.batch_size == 0) throw std::invalid_argument("train_caption_generator: zero batch size");
  const std::size_t F = usable[0].features.size();
  for (const auto& ex : usable) {
    if (ex.features.size() != F) throw ShapeError("train_caption_generator: inconsistent feature dimension");
  }
  Rng init_rng(derive_seed(cfg.seed, "caption-generator/init"));
  Rng order_rng(derive_seed(cfg.seed, "caption-generator/order"));
  CaptionGenerator<T> m(F, vocab_size, cfg.embed_dim, cfg.hidden_dim), g(F, vocab_size, cfg.embed_dim, cfg.hidden_dim);
  m.init(init_rng);
  Adam<T> opt(AdamConfig{cfg.learning_rate});
  auto params = m.parameters();
  auto grads = g.parameters();
  auto order = detail::iota_indices(usable.size());
  std::vector<CaptionExample> batch;
  if (trace) {
    trace->used = usable.size();
    trace->skipped = skipped;
  }
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    double sum = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i) batch.push_back(usable[order[i]]);
      detail::zero_all(grads);
      sum += static_cast<double>(caption_batch_loss<T>(m, batch, &g)) * static_cast<double>(batch.size());
      opt.step(params, grads);
    }
    if (trace) {
      trace->epoch_loss.push_back(sum / static_cast<double>(usable.size()));
      trace->learning_rate.push_back(cfg.learning_rate);
    }
  }
  return m;
}

enum class DecodeMode { greedy, beam };

struct DecodeOptions {
  std::size_t max_len = 20;
  DecodeMode mode = DecodeMode::greedy;
  std::size_t beam_width = 3;
};

namespace detail {

template <class T>
struct DecodeState {
  std::vector<T> h, c;
};

template <class T>
DecodeState<T> decode_step(const CaptionGenerator<T>& m, const DecodeState<T>& s, const std::vector<T>& x) {
  auto st = lstm_cell_step<T>(x, s.h, s.c, m.lstm);
  return {std::move(st.h), std::move(st.c)};
}

/// log-softmax over the vocabulary with #start and #unk excluded.
template <class T>
std::vector<double> next_token_log_probs(const CaptionGenerator<T>& m, const std::vector<T>& h) {
  std::vector<T> z(m.vocab_size());
  affine_into<T>(h, m.W_out, m.b_out, z);
  z[Vocabulary::kStart] = -std::numeric_limits<T>::infinity();
  z[Vocabulary::kUnknown] = -std::numeric_limits<T>::infinity();
  const double mx = static_cast<double>(*std::max_element(z.begin(), z.end()));
  double sum = 0;
  for (T v : z) sum += std::exp(static_cast<double>(v) - mx);
  const double log_z = mx + std::log(sum);
  std::vector<double> out(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) out[k] = static_cast<double>(z[k]) - log_z;
  return out;
}

}  // namespace detail

/// Decoded token ids, framing tokens excluded. Ties go to the lower id.
template <class T>
std::vector<std::size_t> generate_caption(const CaptionGenerator<T>& m, std::span<const double> features,
                                          const DecodeOptions& opt = {}) {
  if (opt.max_len == 0) throw std::invalid_argument("generate_caption: max_len must be >= 1");
  const std::size_t H = m.hidden_dim();
  detail::DecodeState<T> s{std::vector<T>(H, T{0}), std::vector<T>(H, T{0})};
  s = detail::decode_step(m, s, detail::image_input(m, features));
  s = detail::decode_step(m, s, detail::embed_row(m.embedding, Vocabulary::kStart));

  if (opt.mode == DecodeMode::greedy || opt.beam_width <= 1) {
    std::vector<std::size_t> out;
    while (out.size() < opt.max_len) {
      auto lp = detail::next_token_log_probs(m, s.h);
      const std::size_t best = static_cast<std::size_t>(std::max_element(lp.begin(), lp.end()) - lp.begin());
      if (best == Vocabulary::kEnd) break;
      out.push_back(best);
      s = detail::decode_step(m, s, detail::embed_row(m.embedding, best));
    }
    return out;
  }

  struct Hyp {
    std::vector<std::size_t> ids;
    double score = 0;
    detail::DecodeState<T> state;
  };
  std::vector<Hyp> alive{{{}, 0.0, s}}, done;
  for (std::size_t len = 0; len < opt.max_len && !alive.empty(); ++len) {
    std::vector<Hyp> next;
    for (const auto& hyp : alive) {
      const auto lp = detail::next_token_log_probs(m, hyp.state.h);
      for (std::size_t k = 0; k < lp.size(); ++k) {
        if (!std::isfinite(lp[k])) continue;
        next.push_back({hyp.ids, hyp.score + lp[k], hyp.state});
        next.back().ids.push_back(k);
      }
    }
    std::stable_sort(next.begin(), next.end(), [](const Hyp& a, const Hyp& b) { return a.score > b.score; });
    if (next.size() > opt.beam_width) next.resize(opt.beam_width);
    alive.clear();
    for (auto& hyp : next) {
      if (hyp.ids.back() == Vocabulary::kEnd) {
        hyp.ids.pop_back();
        done.push_back(std::move(hyp));
      } else {
        hyp.state = detail::decode_step(m, hyp.state, detail::embed_row(m.embedding, hyp.ids.back()));
        alive.push_back(std::move(hyp));
      }
    }
  }
  const auto& pool = done.empty() ? alive : done;
  const auto it = std::max_element(pool.begin(), pool.end(), [](const Hyp& a, const Hyp& b) { return a.score < b.score; });
  return it == pool.end() ? std::vector<std::size_t>{} : it->ids;
}

inline Tokens decode_tokens(const std::vector<std::size_t>& ids, const Vocabulary& vocab) {
  Tokens out;
  for (auto id : ids) out.push_back(vocab.token(id));
  return out;
}

template <class T>
void save_caption_generator(const std::string& path, const CaptionGenerator<T>& m) {
  save_checkpoint<T>(path, kCaptionGeneratorKind, {m.feature_dim(), m.vocab_size(), m.embed_dim(), m.hidden_dim()},
                     m.parameters());
}

inline CaptionGenerator<double> load_caption_generator(const std::string& path) {
  const Checkpoint c = load_checkpoint(path);
  if (c.dims.size() != 4) throw CheckpointError("checkpoint: caption generator needs 4 dims");
  CaptionGenerator<double> m(c.dims[0], c.dims[1], c.dims[2], c.dims[3]);
  restore_tensors<double>(c, kCaptionGeneratorKind, m.parameters());
  return m;
}

}  // namespace xvqa
