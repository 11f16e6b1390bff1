#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "xvqa/checkpoint.hpp"
#include "xvqa/explainers.hpp"
#include "xvqa/layers.hpp"
#include "xvqa/lstm.hpp"
#include "xvqa/optim.hpp"
#include "xvqa/random.hpp"
#include "xvqa/tensor.hpp"
#include "xvqa/text.hpp"

namespace xvqa {

// ---------------------------------------------------------------------------
// Answer candidates

class AnswerCandidates {
 public:
  AnswerCandidates() = default;
  explicit AnswerCandidates(std::vector<std::string> answers) : answers_(std::move(answers)) {
    for (std::size_t i = 0; i < answers_.size(); ++i) {
      if (!index_.emplace(answers_[i], i).second) {
        throw std::invalid_argument("AnswerCandidates: duplicate answer '" + answers_[i] + "'");
      }
    }
  }

  std::size_t size() const { return answers_.size(); }
  const std::vector<std::string>& answers() const { return answers_; }
  const std::string& answer(std::size_t i) const { return answers_.at(i); }
  std::optional<std::size_t> find(std::string_view a) const {
    auto it = index_.find(normalize_answer(a));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    for (const auto& a : answers_) out << a << '\n';
  }

  static AnswerCandidates load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<std::string> answers;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty()) answers.push_back(line);
    }
    return AnswerCandidates(std::move(answers));
  }

 private:
  std::vector<std::string> answers_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// K most frequent normalized answers; descending count, lexicographic ties.
/// Returns fewer than K when fewer distinct answers exist.
inline AnswerCandidates build_answer_candidates(const std::vector<std::string>& answers, std::size_t K) {
  if (K < 1) throw std::invalid_argument("build_answer_candidates: K must be >= 1");
  std::map<std::string, std::size_t> counts;
  for (const auto& a : answers) {
    auto n = normalize_answer(a);
    if (!n.empty()) ++counts[n];
  }
  std::vector<std::string> out;
  for (const auto& [a, n] : detail::ranked_counts(counts)) {
    if (out.size() == K) break;
    out.push_back(a);
  }
  return AnswerCandidates(std::move(out));
}

/// Most common normalized answer, lexicographic tie-break.
inline std::string plurality_answer(const std::vector<std::string>& answers) {
  std::map<std::string, std::size_t> counts;
  for (const auto& a : answers) ++counts[normalize_answer(a)];
  if (counts.empty()) throw std::invalid_argument("plurality_answer: no answers");
  return detail::ranked_counts(counts).front().first;
}

// ---------------------------------------------------------------------------
// Model

enum class AblationMode { word, sentence, full };

inline const char* mode_name(AblationMode m) {
  switch (m) {
    case AblationMode::word: return "word";
    case AblationMode::sentence: return "sentence";
    case AblationMode::full: return "full";
  }
  return "?";
}

inline AblationMode parse_mode(std::string_view s) {
  if (s == "word") return AblationMode::word;
  if (s == "sentence") return AblationMode::sentence;
  if (s == "full") return AblationMode::full;
  throw std::invalid_argument("unknown ablation mode '" + std::string(s) + "'");
}

inline bool uses_words(AblationMode m) { return m != AblationMode::sentence; }
inline bool uses_caption(AblationMode m) { return m != AblationMode::word; }

enum class TargetRule { plurality, sample };

struct ReasonerConfig {
  AblationMode mode = AblationMode::full;
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 32;
  bool batch_norm = true;
  double dropout = 0.5;
  std::size_t batch_size = 128;
  std::size_t epochs_high = 10;  // at learning_rate_high
  std::size_t epochs_low = 10;   // then at learning_rate_low
  double learning_rate_high = 0.01;
  double learning_rate_low = 0.001;
  std::size_t max_len = 20;
  TargetRule target = TargetRule::plurality;
  std::uint64_t seed = 5;
};

enum class Encoder { question, caption };

template <class T = double>
struct ReasonerModel {
  AblationMode mode = AblationMode::full;
  std::size_t word_dim = 0;   // V
  Tensor<T> embedding;        // vocab x E, shared by both encoders
  LstmParams<T> question_lstm, caption_lstm;
  Tensor<T> W, b;             // K x d, K
  bool use_batch_norm = false;
  BatchNorm<T> bn;

  ReasonerModel() = default;
  ReasonerModel(AblationMode m, std::size_t vocab_size, std::size_t V, std::size_t E, std::size_t H, std::size_t K,
                bool batch_norm)
      : mode(m),
        word_dim(V),
        embedding({vocab_size, E}),
        question_lstm(E, H),
        caption_lstm(E, H),
        use_batch_norm(batch_norm) {
    W = Tensor<T>({K, feature_dim()});
    b = Tensor<T>({K});
    bn = BatchNorm<T>(feature_dim());
  }

  std::size_t vocab_size() const { return embedding.dim(0); }
  std::size_t embed_dim() const { return embedding.dim(1); }
  std::size_t hidden_dim() const { return question_lstm.hidden_size; }
  std::size_t num_answers() const { return W.dim(0); }

  /// V·[word in mode] + H·[sentence in mode] + H.
  std::size_t feature_dim() const {
    return (uses_words(mode) ? word_dim : 0) + (uses_caption(mode) ? hidden_dim() : 0) + hidden_dim();
  }

  std::vector<Tensor<T>*> parameters() {
    std::vector<Tensor<T>*> p = {&embedding,          &question_lstm.w_input, &question_lstm.w_hidden,
                                 &question_lstm.bias, &caption_lstm.w_input,  &caption_lstm.w_hidden,
                                 &caption_lstm.bias,  &W,                     &b};
    if (use_batch_norm) {
      p.push_back(&bn.gamma);
      p.push_back(&bn.beta);
    }
    return p;
  }

  std::vector<const Tensor<T>*> parameters() const {
    auto p = const_cast<ReasonerModel*>(this)->parameters();
    return {p.begin(), p.end()};
  }

  /// Same-shaped model with every parameter zero, used as a gradient buffer.
  ReasonerModel zeros_like() const {
    ReasonerModel g(mode, vocab_size(), word_dim, embed_dim(), hidden_dim(), num_answers(), use_batch_norm);
    g.bn.gamma.fill(T{0});
    return g;
  }

  /// N(0,1) embedding; uniform(±1/sqrt(fan_in)) elsewhere.
  void init(Rng& rng) {
    for (T& v : embedding.values()) v = static_cast<T>(rng.normal());
    for (auto* lstm : {&question_lstm, &caption_lstm}) {
      for (Tensor<T>* t : lstm->parameters()) init_uniform(*t, hidden_dim(), rng);
    }
    init_uniform(W, feature_dim(), rng);
    init_uniform(b, feature_dim(), rng);
  }

  const LstmParams<T>& encoder(Encoder e) const { return e == Encoder::question ? question_lstm : caption_lstm; }
  LstmParams<T>& encoder(Encoder e) { return e == Encoder::question ? question_lstm : caption_lstm; }
};

inline constexpr const char* kReasonerKind = "reasoner";

/// One reasoner input: word probabilities (may be empty in sentence mode),
/// caption and question as vocabulary ids.
struct ReasonerInput {
  std::span<const double> word_probs;
  std::vector<std::size_t> caption;
  std::vector<std::size_t> question;
};

/// Encodes tokens for an encoder: truncation to max_len, and an empty
/// sequence becomes the lone "#end" token.
inline std::vector<std::size_t> encode_for_reasoner(const Tokens& tokens, const Vocabulary& vocab,
                                                    std::size_t max_len = 20) {
  auto ids = vocab.encode(tokens);
  if (ids.size() > max_len) ids.resize(max_len);
  if (ids.empty()) ids.push_back(Vocabulary::kEnd);
  return ids;
}

namespace detail {

template <class T>
std::vector<LstmStep<T>> run_encoder(const ReasonerModel<T>& m, Encoder which, const std::vector<std::size_t>& ids) {
  if (ids.empty()) throw std::invalid_argument("encode_sequence: empty token sequence");
  std::vector<std::vector<T>> xs;
  xs.reserve(ids.size());
  for (auto id : ids) xs.push_back(embed_row(m.embedding, id));
  return lstm_forward(xs, m.encoder(which));
}

template <class T>
void backprop_encoder(const ReasonerModel<T>& m, Encoder which, const std::vector<std::size_t>& ids,
                      const std::vector<LstmStep<T>>& steps, std::span<const T> dh_final, ReasonerModel<T>& g) {
  std::vector<std::vector<T>> dh(steps.size());
  dh.back().assign(dh_final.begin(), dh_final.end());
  auto dx = lstm_backward(steps, m.encoder(which), dh, g.encoder(which));
  for (std::size_t t = 0; t < ids.size(); ++t) {
    auto row = g.embedding.row(ids[t]);
    for (std::size_t k = 0; k < row.size(); ++k) row[k] += dx[t][k];
  }
}

template <class T>
void check_input(const ReasonerModel<T>& m, const ReasonerInput& in) {
  if (in.question.empty()) throw std::invalid_argument("reason: missing question");
  if (uses_caption(m.mode) && in.caption.empty()) {
    throw std::invalid_argument(std::string("reason: ") + mode_name(m.mode) + " mode needs a caption");
  }
  if (uses_words(m.mode)) {
    if (in.word_probs.empty()) {
      throw std::invalid_argument(std::string("reason: ") + mode_name(m.mode) + " mode needs word probabilities");
    }
    if (in.word_probs.size() != m.word_dim) {
      throw ShapeError("reason: expected " + std::to_string(m.word_dim) + " word probabilities, got " +
                       std::to_string(in.word_probs.size()));
    }
  }
}

/// Forward pass state for one instance.
template <class T>
struct ReasonerTrace {
  std::vector<LstmStep<T>> caption_steps, question_steps;
};

/// Writes the mode-appropriate concatenation [v_w v_s v_q] into `v`.
template <class T>
void build_features(const ReasonerModel<T>& m, const ReasonerInput& in, std::span<T> v, ReasonerTrace<T>* trace) {
  check_input(m, in);
  std::size_t o = 0;
  if (uses_words(m.mode)) {
    for (double p : in.word_probs) v[o++] = static_cast<T>(p);
  }
  if (uses_caption(m.mode)) {
    auto steps = run_encoder(m, Encoder::caption, in.caption);
    for (T h : steps.back().h) v[o++] = h;
    if (trace) trace->caption_steps = std::move(steps);
  }
  auto steps = run_encoder(m, Encoder::question, in.question);
  for (T h : steps.back().h) v[o++] = h;
  if (trace) trace->question_steps = std::move(steps);
}

}  // namespace detail

/// Final hidden state of the selected encoder over the shared embedding.
template <class T>
std::vector<T> encode_sequence(const ReasonerModel<T>& m, Encoder which, const std::vector<std::size_t>& ids) {
  return detail::run_encoder(m, which, ids).back().h;
}

template <class T>
std::vector<T> reasoner_features(const ReasonerModel<T>& m, const ReasonerInput& in) {
  std::vector<T> v(m.feature_dim());
  detail::build_features<T>(m, in, v, nullptr);
  return v;
}

/// softmax(W·v + b) in evaluation mode.
template <class T>
std::vector<double> reason(const ReasonerModel<T>& m, const ReasonerInput& in) {
  auto v = reasoner_features(m, in);
  if (m.use_batch_norm) m.bn.forward_eval_inplace(v);
  std::vector<T> z(m.num_answers());
  detail::affine_into<T>(v, m.W, m.b, z);
  detail::softmax_inplace<T>(z);
  return {z.begin(), z.end()};
}

struct Prediction {
  std::string answer;
  std::size_t index = 0;
  double probability = 0;
};

/// Argmax answer; ties resolve to the earlier candidate.
template <class T>
Prediction predict_answer(const ReasonerModel<T>& m, const ReasonerInput& in, const AnswerCandidates& cands) {
  if (cands.size() != m.num_answers()) throw ShapeError("predict_answer: candidate count does not match the model");
  const auto p = reason(m, in);
  const auto best = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
  return {cands.answer(best), best, p[best]};
}

/// Options for one loss evaluation. `dropout_mask` (N x d) is applied when
/// given; batch statistics are used when the model has batch norm and
/// `batch_stats` is set.
template <class T>
struct ReasonerLossOptions {
  const Tensor<T>* dropout_mask = nullptr;
  bool batch_stats = true;
  bool update_running = false;
};

/// Mean softmax cross entropy over the batch; accumulates gradients into
/// `grads` when given.
template <class T>
T reasoner_loss(ReasonerModel<T>& m, std::span<const ReasonerInput> batch, std::span<const std::size_t> targets,
                const ReasonerLossOptions<T>& opt, ReasonerModel<T>* grads) {
  const std::size_t N = batch.size(), D = m.feature_dim(), K = m.num_answers();
  if (N == 0) throw std::invalid_argument("reasoner_loss: empty batch");
  if (targets.size() != N) throw ShapeError("reasoner_loss: target count mismatch");
  const bool bn_batch = m.use_batch_norm && opt.batch_stats;
  if (bn_batch && N < 2) throw std::invalid_argument("reasoner_loss: batch norm needs at least 2 instances");

  Tensor<T> v({N, D});
  std::vector<detail::ReasonerTrace<T>> traces(N);
  for (std::size_t n = 0; n < N; ++n) detail::build_features<T>(m, batch[n], v.row(n), &traces[n]);

  typename BatchNorm<T>::Cache cache;
  Tensor<T> u = v;
  if (bn_batch) {
    u = m.bn.forward_train(v, cache, opt.update_running);
  } else if (m.use_batch_norm) {
    for (std::size_t n = 0; n < N; ++n) m.bn.forward_eval_inplace(u.row(n));
  }
  if (opt.dropout_mask) {
    detail::require(opt.dropout_mask->shape() == u.shape(), "reasoner_loss: dropout mask shape mismatch");
    for (std::size_t k = 0; k < u.size(); ++k) u[k] *= (*opt.dropout_mask)[k];
  }

  const T inv_n = T{1} / static_cast<T>(N);
  T loss = 0;
  Tensor<T> du({N, D});
  std::vector<T> z(K);
  for (std::size_t n = 0; n < N; ++n) {
    if (targets[n] >= K) throw std::out_of_range("reasoner_loss: target out of range");
    detail::affine_into<T>(u.row(n), m.W, m.b, z);
    const T mx = *std::max_element(z.begin(), z.end());
    T sum = 0;
    for (T e : z) sum += std::exp(e - mx);
    const T log_z = mx + std::log(sum);
    loss += log_z - z[targets[n]];
    if (!grads) continue;
    for (std::size_t k = 0; k < K; ++k) z[k] = std::exp(z[k] - log_z) * inv_n;
    z[targets[n]] -= inv_n;
    detail::affine_backward_accumulate<T>(u.row(n), m.W, z, du.row(n), grads->W, grads->b);
  }
  if (!grads) return loss * inv_n;

  if (opt.dropout_mask) {
    for (std::size_t k = 0; k < du.size(); ++k) du[k] *= (*opt.dropout_mask)[k];
  }
  Tensor<T> dv = du;
  if (bn_batch) {
    dv = m.bn.backward(cache, du, grads->bn.gamma, grads->bn.beta);
  } else if (m.use_batch_norm) {
    // eval-mode batch norm is a fixed affine map per feature
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t d = 0; d < D; ++d) {
        const T inv = T{1} / std::sqrt(m.bn.running_var[d] + static_cast<T>(m.bn.epsilon));
        const T xhat = (v(n, d) - m.bn.running_mean[d]) * inv;
        grads->bn.gamma[d] += du(n, d) * xhat;
        grads->bn.beta[d] += du(n, d);
        dv(n, d) = du(n, d) * m.bn.gamma[d] * inv;
      }
    }
  }

  const std::size_t H = m.hidden_dim();
  const std::size_t cap_off = uses_words(m.mode) ? m.word_dim : 0;
  const std::size_t q_off = cap_off + (uses_caption(m.mode) ? H : 0);
  for (std::size_t n = 0; n < N; ++n) {
    auto row = dv.row(n);
    if (uses_caption(m.mode)) {
      detail::backprop_encoder<T>(m, Encoder::caption, batch[n].caption, traces[n].caption_steps,
                                  row.subspan(cap_off, H), *grads);
    }
    detail::backprop_encoder<T>(m, Encoder::question, batch[n].question, traces[n].question_steps,
                                row.subspan(q_off, H), *grads);
  }
  return loss * inv_n;
}

/// A training example: the input plus the human answers the target is drawn
/// from.
struct ReasonerExample {
  ReasonerInput input;
  const std::vector<std::string>* answers = nullptr;
};

/// Minibatch Adam with the two-phase learning-rate schedule. Examples whose
/// plurality answer is not a candidate are skipped (counted in the trace).
template <class T = double>
ReasonerModel<T> train_reasoner(std::span<const ReasonerExample> data, const AnswerCandidates& cands,
                                std::size_t vocab_size, std::size_t word_dim, const ReasonerConfig& cfg,
                                TrainTrace* trace = nullptr) {
  if (cands.size() == 0) throw std::invalid_argument("train_reasoner: no answer candidates");
  if (cfg.batch_size == 0) throw std::invalid_argument("train_reasoner: zero batch size");
  std::vector<std::size_t> usable, fixed_target;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!data[i].answers || data[i].answers->empty()) continue;
    if (auto k = cands.find(plurality_answer(*data[i].answers))) {
      usable.push_back(i);
      fixed_target.push_back(*k);
    }
  }
  if (usable.empty()) throw std::invalid_argument("train_reasoner: no usable training instances");
  if (trace) {
    trace->used = usable.size();
    trace->skipped = data.size() - usable.size();
  }

  ReasonerModel<T> m(cfg.mode, vocab_size, word_dim, cfg.embed_dim, cfg.hidden_dim, cands.size(), cfg.batch_norm);
  Rng init_rng(derive_seed(cfg.seed, "reasoner/init"));
  Rng order_rng(derive_seed(cfg.seed, "reasoner/order"));
  Rng drop_rng(derive_seed(cfg.seed, "reasoner/dropout"));
  Rng target_rng(derive_seed(cfg.seed, "reasoner/target"));
  m.init(init_rng);
  ReasonerModel<T> g = m.zeros_like();
  Adam<T> opt(AdamConfig{cfg.learning_rate_high});
  auto params = m.parameters();
  auto grads = g.parameters();

  std::vector<std::size_t> order = detail::iota_indices(usable.size());
  std::vector<ReasonerInput> batch;
  std::vector<std::size_t> targets;
  const std::size_t epochs = cfg.epochs_high + cfg.epochs_low;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    const double lr = epoch < cfg.epochs_high ? cfg.learning_rate_high : cfg.learning_rate_low;
    opt.config().learning_rate = lr;
    order_rng.shuffle(order);
    double sum = 0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      if (stop - start < 2 && cfg.batch_norm) continue;  // batch statistics undefined
      batch.clear();
      targets.clear();
      for (std::size_t i = start; i < stop; ++i) {
        const std::size_t u = usable[order[i]];
        batch.push_back(data[u].input);
        std::size_t t = fixed_target[order[i]];
        if (cfg.target == TargetRule::sample) {
          const auto& ans = *data[u].answers;
          if (auto k = cands.find(ans[target_rng.index(ans.size())])) t = *k;
        }
        targets.push_back(t);
      }
      Tensor<T> mask = dropout_mask<T>({batch.size(), m.feature_dim()}, cfg.dropout, drop_rng);
      ReasonerLossOptions<T> lo;
      lo.dropout_mask = cfg.dropout > 0 ? &mask : nullptr;
      lo.batch_stats = true;
      lo.update_running = true;
      detail::zero_all(grads);
      sum += static_cast<double>(reasoner_loss<T>(m, batch, targets, lo, &g)) * static_cast<double>(batch.size());
      seen += batch.size();
      opt.step(params, grads);
    }
    if (trace) {
      trace->epoch_loss.push_back(seen ? sum / static_cast<double>(seen) : 0.0);
      trace->learning_rate.push_back(lr);
    }
  }
  return m;
}

template <class T>
void save_reasoner(const std::string& path, const ReasonerModel<T>& m) {
  auto params = m.parameters();
  if (m.use_batch_norm) {
    params.push_back(&m.bn.running_mean);
    params.push_back(&m.bn.running_var);
  }
  save_checkpoint<T>(path, kReasonerKind,
                     {static_cast<std::uint64_t>(m.mode), m.vocab_size(), m.word_dim, m.embed_dim(), m.hidden_dim(),
                      m.num_answers(), m.use_batch_norm ? 1u : 0u},
                     params);
}

inline ReasonerModel<double> load_reasoner(const std::string& path) {
  const Checkpoint c = load_checkpoint(path);
  if (c.dims.size() != 7 || c.dims[0] > 2) throw CheckpointError("checkpoint: malformed reasoner header");
  ReasonerModel<double> m(static_cast<AblationMode>(c.dims[0]), c.dims[1], c.dims[2], c.dims[3], c.dims[4], c.dims[5],
                          c.dims[6] != 0);
  auto params = m.parameters();
  if (m.use_batch_norm) {
    params.push_back(&m.bn.running_mean);
    params.push_back(&m.bn.running_var);
  }
  restore_tensors<double>(c, kReasonerKind, params);
  return m;
}

}  // namespace xvqa
