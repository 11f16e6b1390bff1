#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "xvqa/checkpoint.hpp"
#include "xvqa/explainers.hpp"
#include "xvqa/gradcheck.hpp"
#include "xvqa/gradcheck_suite.hpp"

using namespace xvqa;

namespace {

// Features in [-1,1]^F, labels from fixed hyperplanes with a margin.
struct Separable {
  std::vector<std::vector<double>> x, y;
  std::vector<WordExample> examples;
};

Separable separable_set(std::size_t n, std::size_t F, std::size_t V, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<double>> planes(V, std::vector<double>(F));
  for (auto& p : planes) {
    for (auto& w : p) w = rng.uniform(-1, 1);
  }
  Separable s;
  while (s.x.size() < n) {
    std::vector<double> x(F);
    for (auto& v : x) v = rng.uniform(-1, 1);
    std::vector<double> y(V);
    bool margin = true;
    for (std::size_t j = 0; j < V; ++j) {
      double a = 0;
      for (std::size_t d = 0; d < F; ++d) a += planes[j][d] * x[d];
      margin &= std::abs(a) > 0.3;
      y[j] = a > 0 ? 1.0 : 0.0;
    }
    if (!margin) continue;
    s.x.push_back(std::move(x));
    s.y.push_back(std::move(y));
  }
  for (std::size_t i = 0; i < n; ++i) s.examples.push_back({s.x[i], s.y[i]});
  return s;
}

double cos_sim(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return d / std::sqrt(na * nb);
}

template <class Model>
void randomize(Model& m, std::uint64_t seed, double scale = 0.5) {
  Rng rng(seed);
  for (auto* t : m.parameters()) {
    for (auto& v : t->values()) v = rng.uniform(-scale, scale);
  }
}

}  // namespace

TEST(CheckpointTest, RoundTripAndHeaderErrors) {
  Tensor<double> a = Tensor<double>::matrix(2, 2, {1.5, -2, 3e-300, 4});
  Tensor<double> b = Tensor<double>::vector({0.25});
  std::stringstream ss;
  write_checkpoint<double>(ss, "demo", {2, 7}, {&a, &b});
  const std::string bytes = ss.str();
  EXPECT_EQ(bytes.substr(0, 8), "XVQACKPT");
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 1);  // version, little-endian
  auto c = read_checkpoint(ss);
  EXPECT_EQ(c.kind, "demo");
  EXPECT_EQ(c.dims, (std::vector<std::uint64_t>{2, 7}));
  ASSERT_EQ(c.tensors.size(), 2u);
  EXPECT_EQ(c.tensors[0], a);
  EXPECT_EQ(c.tensors[1], b);

  std::stringstream bad("NOTACKPT........");
  EXPECT_THROW(read_checkpoint(bad), CheckpointError);
  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(read_checkpoint(truncated), CheckpointError);

  Tensor<double> wrong({3});
  EXPECT_THROW(restore_tensors<double>(c, "demo", {&a, &wrong}), CheckpointError);
  EXPECT_THROW(restore_tensors<double>(c, "other", {&a, &b}), CheckpointError);
}

TEST(WordPredictorTest, ZeroWeightsGiveHalf) {
  WordPredictor<double> m(3, 4, 5);
  const std::vector<double> x = {1, -2, 3};
  for (double p : predict_words(m, x)) EXPECT_DOUBLE_EQ(p, 0.5);
  EXPECT_EQ(predict_words(m, x).size(), 5u);
  EXPECT_THROW(predict_words(m, std::vector<double>{1, 2}), ShapeError);
}

TEST(WordPredictorTest, SaturatedNegativeLogitsGiveZeroLoss) {
  WordPredictor<double> m(2, 1, 3);
  m.b2.fill(-50);
  const std::vector<double> x = {0.3, 0.7}, y = {0, 0, 0};
  const WordExample ex{x, y};
  EXPECT_NEAR(word_predictor_loss<double>(m, std::span(&ex, 1), nullptr), 0.0, 1e-20);
}

TEST(WordPredictorTest, LearnsSeparableSet) {
  auto s = separable_set(400, 6, 4, 21);
  WordPredictorConfig cfg;
  cfg.hidden_dim = 16;
  cfg.epochs = 150;
  cfg.batch_size = 32;
  cfg.learning_rate = 0.01;
  TrainTrace trace;
  auto m = train_word_predictor<double>(s.examples, cfg, &trace);
  ASSERT_EQ(trace.epoch_loss.size(), cfg.epochs);
  EXPECT_LT(trace.epoch_loss.back(), trace.epoch_loss.front());
  const double final_loss = word_predictor_loss<double>(m, s.examples, nullptr);
  EXPECT_LT(final_loss, 0.05);
  for (std::size_t i = 0; i < 20; ++i) {
    if (std::all_of(s.y[i].begin(), s.y[i].end(), [](double v) { return v == 0; })) continue;
    EXPECT_GT(cos_sim(s.y[i], predict_words(m, s.x[i])), 0.9);
  }
}

TEST(WordPredictorTest, DeterministicGivenSeed) {
  auto s = separable_set(50, 4, 3, 3);
  WordPredictorConfig cfg;
  cfg.epochs = 3;
  auto a = train_word_predictor<double>(s.examples, cfg);
  auto b = train_word_predictor<double>(s.examples, cfg);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(*a.parameters()[i], *b.parameters()[i]);
  EXPECT_THROW(train_word_predictor<double>(std::span<const WordExample>{}, cfg), std::invalid_argument);
}

TEST(WordPredictorTest, GradientCheck) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    EXPECT_LT(gradcheck_word_predictor(seed).max_relative_error, 1e-4) << "seed " << seed;
  }
}

TEST(CaptionGeneratorTest, GradientCheckTwoTokenCaption) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    EXPECT_LT(gradcheck_caption_generator(seed).max_relative_error, 1e-4) << "seed " << seed;
  }
}

TEST(CaptionGeneratorTest, InitialLossNearLogVocab) {
  const std::size_t N = 40;
  CaptionGenerator<double> m(5, N, 8, 16);
  Rng rng(9);
  m.init(rng);
  const std::vector<double> f = {0.1, 0.2, -0.3, 0.4, 0};
  const CaptionExample ex{f, {5, 9, 12}};
  EXPECT_NEAR(caption_loss<double>(m, ex, nullptr), std::log(static_cast<double>(N)), 0.35);
}

TEST(CaptionGeneratorTest, MemorizesSingleCaptionAndDecodesIt) {
  const std::vector<double> f = {0.2, -0.4, 0.9, 0.1};
  std::vector<CaptionExample> data = {{f, {4, 7, 5, 9}}};
  CaptionGeneratorConfig cfg;
  cfg.embed_dim = 8;
  cfg.hidden_dim = 16;
  cfg.epochs = 200;
  cfg.batch_size = 1;
  TrainTrace trace;
  auto m = train_caption_generator<double>(data, 12, cfg, &trace);
  EXPECT_LT(trace.epoch_loss.back(), 0.1);
  EXPECT_LT(trace.epoch_loss.back(), trace.epoch_loss.front());
  EXPECT_EQ(generate_caption(m, f), data[0].tokens);
  DecodeOptions beam;
  beam.mode = DecodeMode::beam;
  beam.beam_width = 3;
  EXPECT_EQ(generate_caption(m, f, beam), data[0].tokens);
  DecodeOptions one;
  one.max_len = 1;
  EXPECT_LE(generate_caption(m, f, one).size(), 1u);
  EXPECT_EQ(generate_caption(m, f), generate_caption(m, f));
  DecodeOptions zero;
  zero.max_len = 0;
  EXPECT_THROW(generate_caption(m, f, zero), std::invalid_argument);
}

TEST(CaptionGeneratorTest, NeverEmitsReservedTokens) {
  CaptionGenerator<double> m(3, 10, 4, 5);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    randomize(m, seed, 2.0);
    // bias the output strongly toward reserved ids
    m.b_out[Vocabulary::kStart] = 20;
    m.b_out[Vocabulary::kUnknown] = 20;
    const std::vector<double> f = {0.1 * static_cast<double>(seed), -1, 0.5};
    for (auto mode : {DecodeMode::greedy, DecodeMode::beam}) {
      DecodeOptions o;
      o.mode = mode;
      for (auto id : generate_caption(m, f, o)) {
        EXPECT_GE(id, Vocabulary::kReserved);
        EXPECT_LT(id, 10u);
      }
    }
  }
}

TEST(CaptionGeneratorTest, SkipsCaptionsWithoutKnownTokens) {
  const std::vector<double> f = {1, 2};
  std::vector<CaptionExample> data = {{f, {Vocabulary::kUnknown}}, {f, {}}, {f, {3, 4}}};
  std::size_t skipped = 0;
  auto kept = usable_captions(data, 20, &skipped);
  EXPECT_EQ(skipped, 2u);
  ASSERT_EQ(kept.size(), 1u);
  CaptionGeneratorConfig cfg;
  cfg.epochs = 1;
  TrainTrace trace;
  train_caption_generator<double>(data, 6, cfg, &trace);
  EXPECT_EQ(trace.skipped, 2u);
  EXPECT_THROW(train_caption_generator<double>(std::span(data).first(2), 6, cfg), std::invalid_argument);
}

TEST(CaptionGeneratorTest, CheckpointRoundTrip) {
  CaptionGenerator<double> m(3, 10, 4, 5);
  randomize(m, 77);
  const std::string path = ::testing::TempDir() + "/capgen.ckpt";
  save_caption_generator(path, m);
  auto back = load_caption_generator(path);
  for (std::size_t i = 0; i < m.parameters().size(); ++i) EXPECT_EQ(*back.parameters()[i], *m.parameters()[i]);
  EXPECT_THROW(load_word_predictor(path), CheckpointError);
}
