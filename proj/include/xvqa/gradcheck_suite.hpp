#pragma once

// Randomized toy-batch gradient checks for the three trainable models.

#include <cstdint>
#include <string>
#include <vector>

#include "xvqa/explainers.hpp"
#include "xvqa/gradcheck.hpp"
#include "xvqa/reasoner.hpp"

namespace xvqa {

struct GradCheckSettings {
  double eps = 1e-3;
  Stencil stencil = Stencil::four_point;
  double param_scale = 0.5;
};

namespace detail {

template <class Model>
void randomize_parameters(Model& m, Rng& rng, double scale) {
  for (auto* t : m.parameters()) {
    for (auto& v : t->values()) v = rng.uniform(-scale, scale);
  }
}

template <class Model, class LossFn>
GradCheckResult check_model(Model& m, Model& g, LossFn&& loss, const GradCheckSettings& s) {
  auto params = m.parameters();
  auto gp = g.parameters();
  std::vector<const Tensor<double>*> analytic(gp.begin(), gp.end());
  return grad_check<double>(loss, std::span<Tensor<double>* const>(params),
                            std::span<const Tensor<double>* const>(analytic), s.eps, s.stencil);
}

inline std::vector<double> random_vector(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

inline std::vector<std::size_t> random_ids(Rng& rng, std::size_t len, std::size_t vocab) {
  std::vector<std::size_t> ids(len);
  for (auto& id : ids) id = Vocabulary::kReserved + rng.index(vocab - Vocabulary::kReserved);
  return ids;
}

}  // namespace detail

/// Sigmoid cross entropy through the two-layer word predictor.
inline GradCheckResult gradcheck_word_predictor(std::uint64_t seed, const GradCheckSettings& s = {}) {
  Rng rng(derive_seed(seed, "gradcheck/word"));
  const std::size_t F = 5, Hd = 4, V = 6, N = 3;
  WordPredictor<double> m(F, Hd, V), g(F, Hd, V);
  detail::randomize_parameters(m, rng, s.param_scale);
  std::vector<std::vector<double>> x, y;
  for (std::size_t i = 0; i < N; ++i) {
    x.push_back(detail::random_vector(rng, F, -1, 1));
    std::vector<double> lab(V);
    for (auto& v : lab) v = rng.bernoulli(0.4) ? 1.0 : 0.0;
    y.push_back(std::move(lab));
  }
  std::vector<WordExample> batch;
  for (std::size_t i = 0; i < N; ++i) batch.push_back({x[i], y[i]});
  word_predictor_loss<double>(m, batch, &g);
  return detail::check_model(m, g, [&] { return word_predictor_loss<double>(m, batch, nullptr); }, s);
}

/// Teacher-forced per-token cross entropy through the caption LSTM.
inline GradCheckResult gradcheck_caption_generator(std::uint64_t seed, const GradCheckSettings& s = {}) {
  Rng rng(derive_seed(seed, "gradcheck/caption"));
  const std::size_t F = 4, N = 9, E = 3, H = 4;
  CaptionGenerator<double> m(F, N, E, H), g(F, N, E, H);
  detail::randomize_parameters(m, rng, s.param_scale);
  std::vector<std::vector<double>> feats = {detail::random_vector(rng, F, -1, 1), detail::random_vector(rng, F, -1, 1)};
  std::vector<CaptionExample> batch = {{feats[0], detail::random_ids(rng, 2, N)},
                                       {feats[1], detail::random_ids(rng, 1 + rng.index(3), N)}};
  caption_batch_loss<double>(m, batch, &g);
  return detail::check_model(m, g, [&] { return caption_batch_loss<double>(m, batch, nullptr); }, s);
}

/// Answer cross entropy through the classifier, optional batch norm and
/// dropout, both encoders and the shared embedding.
inline GradCheckResult gradcheck_reasoner(std::uint64_t seed, AblationMode mode, bool batch_norm, bool dropout,
                                          const GradCheckSettings& s = {}) {
  Rng rng(derive_seed(seed, std::string("gradcheck/reasoner/") + mode_name(mode)));
  const std::size_t vocab = 10, V = 3, E = 3, H = 4, K = 4, N = 2;
  ReasonerModel<double> m(mode, vocab, V, E, H, K, batch_norm);
  detail::randomize_parameters(m, rng, s.param_scale);
  std::vector<std::vector<double>> probs;
  std::vector<ReasonerInput> batch;
  std::vector<std::size_t> targets;
  for (std::size_t i = 0; i < N; ++i) probs.push_back(detail::random_vector(rng, V, 0, 1));
  // token 3 appears in question and caption, exercising the tied embedding
  for (std::size_t i = 0; i < N; ++i) {
    auto cap = detail::random_ids(rng, 1 + rng.index(3), vocab);
    auto q = detail::random_ids(rng, 1 + rng.index(3), vocab);
    cap.push_back(3);
    q.insert(q.begin(), 3);
    batch.push_back({probs[i], std::move(cap), std::move(q)});
    targets.push_back(rng.index(K));
  }
  Tensor<double> mask = dropout_mask<double>({N, m.feature_dim()}, dropout ? 0.3 : 0.0, rng);
  ReasonerLossOptions<double> opt;
  opt.dropout_mask = dropout ? &mask : nullptr;
  auto g = m.zeros_like();
  reasoner_loss<double>(m, batch, targets, opt, &g);
  return detail::check_model(m, g, [&] { return reasoner_loss<double>(m, batch, targets, opt, nullptr); }, s);
}

struct GradCheckReport {
  struct Entry {
    std::string model;
    std::uint64_t seed = 0;
    GradCheckResult result;
  };
  std::vector<Entry> entries;

  double max_error() const {
    double m = 0;
    for (const auto& e : entries) m = std::max(m, e.result.max_relative_error);
    return m;
  }
};

/// Every model over `seeds` seeds; the reasoner in all three modes with and
/// without batch norm and dropout.
inline GradCheckReport run_gradcheck_suite(std::uint64_t base_seed, std::size_t seeds, const GradCheckSettings& s = {}) {
  GradCheckReport rep;
  for (std::size_t i = 0; i < seeds; ++i) {
    const std::uint64_t seed = base_seed + i;
    rep.entries.push_back({"word-predictor", seed, gradcheck_word_predictor(seed, s)});
    rep.entries.push_back({"caption-generator", seed, gradcheck_caption_generator(seed, s)});
    for (auto mode : {AblationMode::word, AblationMode::sentence, AblationMode::full}) {
      const bool bn = i % 2 == 1, drop = i % 3 != 0;
      rep.entries.push_back({std::string("reasoner-") + mode_name(mode) + (bn ? "-bn" : "") + (drop ? "-dropout" : ""),
                             seed, gradcheck_reasoner(seed, mode, bn, drop, s)});
    }
  }
  return rep;
}

}  // namespace xvqa
