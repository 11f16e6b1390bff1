#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "xvqa/dataset.hpp"
#include "xvqa/synthworld.hpp"

using namespace xvqa;

namespace {

GenConfig small_config(std::size_t train = 600, std::size_t val = 1000) {
  GenConfig c;
  c.train_size = train;
  c.val_size = val;
  return c;
}

const World& shared_world() {
  static const World w = generate_world(small_config());
  return w;
}

Scene two_object_scene() {
  Scene s;
  s.objects = {{0, 0, 1, 1}, {17, 5, 2, 0}};  // one red dog standing; two white benches sitting
  s.relation = 2;                             // beside
  return s;
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

bool contains(const Tokens& t, const std::string& w) { return std::find(t.begin(), t.end(), w) != t.end(); }

}  // namespace

TEST(GenConfigTest, RejectsOutOfRangeRates) {
  GenConfig c;
  EXPECT_NO_THROW(c.validate());
  for (double GenConfig::*field : {&GenConfig::detector_noise, &GenConfig::caption_corruption, &GenConfig::relevance_drop,
                      &GenConfig::disagreement}) {
    GenConfig bad;
    bad.*field = 1.5;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    bad.*field = -0.1;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
  }
  GenConfig b;
  b.yes_bias = 0.4;
  EXPECT_THROW(b.validate(), std::invalid_argument);
  b.yes_bias = 1.0;
  EXPECT_NO_THROW(b.validate());
  b.train_size = 0;
  EXPECT_THROW(generate_world(b), std::invalid_argument);
}

TEST(LexiconTest, Plurals) {
  EXPECT_EQ(lexicon::plural("dog"), "dogs");
  EXPECT_EQ(lexicon::plural("bus"), "buses");
  EXPECT_EQ(lexicon::plural("box"), "boxes");
  EXPECT_EQ(lexicon::plural("bench"), "benches");
  EXPECT_EQ(lexicon::plural("dish"), "dishes");
}

TEST(DescribeTest, Templates) {
  const Scene s = two_object_scene();
  const std::vector<std::size_t> all = {0, 1};
  EXPECT_EQ(join(describe_object(s, 0, caption_partner(s, 0, all))), "one red dog is standing beside two benches");
  EXPECT_EQ(join(describe_object(s, 1, caption_partner(s, 1, all))), "two white benches are sitting beside one dog");
  EXPECT_EQ(join(describe_object(s, 0, std::nullopt)), "one red dog is standing all alone");
  EXPECT_EQ(join(describe_object(s, 0, 1, CaptionStyle::no_color)), "one dog is standing beside two benches");
  EXPECT_EQ(join(describe_object(s, 0, 1, CaptionStyle::no_action)), "one red dog is there beside two benches");

  Scene one;
  one.objects = {{1, 2, 3, 4}};
  EXPECT_EQ(join(describe_object(one, 0, std::nullopt)), "the three green cats are sleeping");
  one.objects[0].count = 1;
  EXPECT_EQ(join(describe_object(one, 0, std::nullopt)), "the green cat is sleeping");

  Scene three = two_object_scene();
  three.objects.push_back({3, 1, 1, 2});
  EXPECT_EQ(join(describe_object(three, 2, caption_partner(three, 2, {0, 1, 2}))), "one blue bird is lying near one dog");
  EXPECT_EQ(caption_partner(three, 2, {1, 2}), std::optional<std::size_t>(1));
  EXPECT_EQ(caption_partner(three, 0, {0}), std::nullopt);
  EXPECT_EQ(caption_partner(one, 0, {0}), std::nullopt);

  const auto refs = reference_captions(three);
  ASSERT_EQ(refs.size(), 3u);
  EXPECT_EQ(join(refs[0]), "one red dog is standing beside two benches");
}

TEST(SceneFeaturesTest, DescriptionIsOneHotPerSlot) {
  const Scene s = two_object_scene();
  const auto d = scene_description(s);
  EXPECT_EQ(d.size(), 192u);
  EXPECT_DOUBLE_EQ(std::accumulate(d.begin(), d.end(), 0.0), 9.0);  // 4 per object + relation
  const auto& w = shared_world();
  EXPECT_EQ(w.train[0].scene_features.size(), 128u);
}

TEST(GenerateTest, DeterministicJsonl) {
  auto c = small_config(200, 50);
  c.seed = 7;
  std::ostringstream a, b, other;
  const auto w1 = generate_world(c), w2 = generate_world(c);
  write_jsonl(a, w1.train);
  write_jsonl(b, w2.train);
  EXPECT_EQ(a.str(), b.str());
  c.seed = 8;
  write_jsonl(other, generate_world(c).train);
  EXPECT_NE(a.str(), other.str());
}

TEST(GenerateTest, WorldShape) {
  const auto& w = shared_world();
  EXPECT_EQ(w.train.size(), 600u);
  EXPECT_EQ(w.val.size(), 1000u);
  EXPECT_GE(w.word_list.size(), 40u);
  EXPECT_LE(w.word_list.size(), 60u);
  EXPECT_LE(w.candidates.size(), 32u);
  for (const auto& in : w.train) {
    EXPECT_EQ(in.answers.size(), 10u);
    ASSERT_TRUE(in.scene);
    EXPECT_EQ(in.captions.size(), in.scene->objects.size());  // every object mentioned
    // y is consistent with the references
    EXPECT_EQ(in.word_labels, word_label_vector(in.captions, w.word_list));
  }
}

TEST(GenerateTest, YesNoSplitFollowsBias) {
  for (double beta : {0.5, 0.9}) {
    GenConfig c;
    c.yes_bias = beta;
    Rng rng(derive_seed(11, "bias"));
    std::size_t yn = 0, yes = 0, i = 0;
    while (yn < 5000) {
      auto in = sample_instance(c, rng, std::to_string(i++));
      if (in.question_type != AnswerType::yes_no) continue;
      ++yn;
      if (plurality_answer(in.answers) == "yes") ++yes;
    }
    EXPECT_NEAR(static_cast<double>(yes) / 5000.0, beta, 0.03) << "beta " << beta;
  }
}

TEST(GenerateTest, ZeroDisagreementGivesUnanimousAnswers) {
  auto c = small_config(300, 10);
  c.disagreement = 0;
  for (const auto& in : generate_world(c).train) {
    for (const auto& a : in.answers) EXPECT_EQ(a, in.answers[0]);
    EXPECT_DOUBLE_EQ(vqa_accuracy(in.answers[0], in.answers), 1.0);
  }
}

TEST(GenerateTest, QuestionTemplatesAndAnswerTypes) {
  const auto& w = shared_world();
  for (const auto& in : w.train) {
    const auto q = join(in.question);
    switch (in.kind) {
      case QuestionKind::exist:
        EXPECT_TRUE(q.rfind("is there a ", 0) == 0 || q.rfind("are there any ", 0) == 0) << q;
        EXPECT_EQ(in.question_type, AnswerType::yes_no);
        break;
      case QuestionKind::count:
        EXPECT_EQ(q.rfind("how many ", 0), 0u) << q;
        EXPECT_EQ(in.question_type, AnswerType::number);
        break;
      case QuestionKind::color:
        EXPECT_EQ(q.rfind("what color ", 0), 0u) << q;
        EXPECT_EQ(in.question_type, AnswerType::other);
        break;
      case QuestionKind::action:
        EXPECT_EQ(q.rfind("what ", 0), 0u) << q;
        EXPECT_EQ(in.question.back(), "doing");
        break;
      default: EXPECT_EQ(in.question_type, AnswerType::yes_no);
    }
  }
}

TEST(PerturbTest, NoiseExtremes) {
  Rng rng(5);
  const std::vector<double> y = {1, 0, 0, 1, 0, 1, 0, 0, 0, 0};
  const auto p0 = perturb_word_probs(y, 0.0, rng);
  EXPECT_GT(cosine(y, p0).value, 0.999);
  for (double v : p0) {
    EXPECT_GE(v, 1e-3);
    EXPECT_LE(v, 1 - 1e-3);
  }
  EXPECT_THROW(perturb_word_probs(y, 1.5, rng), std::invalid_argument);

  // noise 1: p is uniform noise, so cos(y, p) matches an independent
  // Monte Carlo estimate of E[cos(y, u)] for k ones among V entries.
  const std::size_t V = 48, k = 10;
  std::vector<double> yk(V, 0.0);
  for (std::size_t j = 0; j < k; ++j) yk[j] = 1;
  double sim = 0, oracle = 0;
  Rng orng(99);
  const int n = 4000;
  for (int i = 0; i < n; ++i) {
    sim += cosine(yk, perturb_word_probs(yk, 1.0, rng)).value;
    double dot = 0, nu = 0;
    for (std::size_t j = 0; j < V; ++j) {
      const double u = orng.uniform();
      nu += u * u;
      if (j < k) dot += u;
    }
    oracle += dot / (std::sqrt(static_cast<double>(k)) * std::sqrt(nu));
  }
  EXPECT_NEAR(sim / n, oracle / n, 0.01);
}

TEST(PerturbTest, WordAccuracyStrictlyDecreasesWithNoise) {
  const auto& w = shared_world();
  double prev = 2;
  for (double noise : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    Rng rng(derive_seed(3, "noise"));
    std::vector<double> acc;
    for (const auto& in : w.val) acc.push_back(word_accuracy(in.word_labels, perturb_word_probs(in.word_labels, noise, rng)).value);
    EXPECT_LT(mean(acc), prev) << "noise " << noise;
    prev = mean(acc);
  }
}

TEST(CorruptTest, IdentityAtZeroAndStopWordsKept) {
  const auto& w = shared_world();
  Rng rng(1);
  const Tokens cap = tokenize("one red dog is standing beside two benches");
  EXPECT_EQ(corrupt_caption(cap, 0.0, rng, w.content_tokens, w.stop_words), cap);
  const auto all = corrupt_caption(cap, 1.0, rng, w.content_tokens, w.stop_words);
  ASSERT_EQ(all.size(), cap.size());
  EXPECT_EQ(all[3], "is");  // stop word untouched
  EXPECT_THROW(corrupt_caption(cap, -0.5, rng, w.content_tokens, w.stop_words), std::invalid_argument);
}

TEST(CorruptTest, SentenceAccuracyStrictlyDecreasesWithCorruption) {
  const auto& w = shared_world();
  double prev = 2;
  for (double rate : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    Rng rng(derive_seed(4, "corrupt"));
    std::vector<double> acc;
    for (const auto& in : w.val) {
      acc.push_back(sentence_accuracy(corrupt_caption(in.captions[0], rate, rng, w.content_tokens, w.stop_words),
                                      in.captions, w.idf));
    }
    EXPECT_LT(mean(acc), prev) << "rate " << rate;
    prev = mean(acc);
    // only stop words survive full corruption
    if (rate == 1.0) EXPECT_LT(mean(acc), 0.2);
  }
}

TEST(CorruptTest, ForcedSubstitutionOfQueriedObject) {
  // swapping the queried noun removes the caption's link to the question
  Instance in;
  in.id = "x";
  in.question = tokenize("what color is the frisbee");
  in.captions = {tokenize("a red frisbee is on the grass")};
  in.generated_caption = in.captions[0];
  (*in.generated_caption)[2] = "soccer";
  Vocabulary v = build_vocabulary({in.question, in.captions[0], *in.generated_caption}, 1);
  const double before = sentence_question_relevance(in.captions[0], in.question, v).value;
  const double after = sentence_question_relevance(*in.generated_caption, in.question, v).value;
  EXPECT_GT(before, after);
  EXPECT_FALSE(contains(*in.generated_caption, "frisbee"));
}

TEST(SimulateTest, DropRateMatchesRho) {
  auto c = small_config(100, 5000);
  const World w = generate_world(c);
  for (double rho : {0.0, 0.3, 0.5}) {
    std::vector<Instance> data = w.val;
    ExplanationKnobs k;
    k.relevance_drop = rho;
    k.caption_corruption = 0;
    simulate_explanations(data, w, k, 17);
    std::size_t with_target = 0, omitted = 0;
    for (const auto& in : data) {
      if (!in.target) continue;
      ++with_target;
      const auto& noun = lexicon::nouns()[in.scene->objects[*in.target].noun];
      const bool mentions = contains(*in.generated_caption, noun) || contains(*in.generated_caption, lexicon::plural(noun));
      EXPECT_EQ(!mentions, in.target_dropped) << in.id;
      omitted += !mentions;
    }
    EXPECT_GT(with_target, 4000u);
    EXPECT_NEAR(static_cast<double>(omitted) / static_cast<double>(with_target), rho, 0.03) << "rho " << rho;
  }
}

TEST(SimulateTest, CleanExplanationsReproduceLabels) {
  const auto& w = shared_world();
  std::vector<Instance> data(w.val.begin(), w.val.begin() + 200);
  ExplanationKnobs k;
  k.detector_noise = 0;
  k.caption_corruption = 0;
  k.relevance_drop = 0;
  k.caption_styles = {1, 0, 0};
  simulate_explanations(data, w, k, 3);
  for (const auto& in : data) {
    ASSERT_TRUE(in.word_probs);
    for (std::size_t j = 0; j < in.word_labels.size(); ++j) EXPECT_NEAR((*in.word_probs)[j], in.word_labels[j], 1.0001e-3);
    // the caption describes the queried object as its reference does
    if (in.target) EXPECT_EQ(*in.generated_caption, in.captions[*in.target]);
    const auto q = quality_scores(in, w);
    EXPECT_GT(q.word_accuracy, 0.999);
  }
}

TEST(SimulateTest, DeterministicGivenSeed) {
  const auto& w = shared_world();
  std::vector<Instance> a(w.val.begin(), w.val.begin() + 100), b = a;
  simulate_explanations(a, w, ExplanationKnobs::from(w.config), 9);
  simulate_explanations(b, w, ExplanationKnobs::from(w.config), 9);
  std::ostringstream sa, sb;
  write_jsonl(sa, a);
  write_jsonl(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
}

TEST(CaptionSourceTest, Selection) {
  Vocabulary v = build_vocabulary({tokenize("is there a dog one red dog two cats sitting")}, 1);
  Instance in;
  in.id = "q1";
  in.question = tokenize("is there a dog");
  in.captions = {tokenize("two cats sitting"), tokenize("one red dog sitting")};
  EXPECT_EQ(caption_source_select(in, CaptionSource::null, v), Tokens{"#end"});
  EXPECT_EQ(caption_source_select(in, CaptionSource::groundtruth, v), in.captions[1]);
  EXPECT_THROW(caption_source_select(in, CaptionSource::generated, v), std::invalid_argument);
  in.generated_caption = tokenize("one dog");
  EXPECT_EQ(caption_source_select(in, CaptionSource::generated, v), *in.generated_caption);

  in.captions = {tokenize("two cats sitting")};
  EXPECT_EQ(caption_source_select(in, CaptionSource::groundtruth, v), in.captions[0]);
  in.captions = {tokenize("two cats"), tokenize("cats sitting")};  // tie at zero: first
  EXPECT_EQ(caption_source_select(in, CaptionSource::groundtruth, v), in.captions[0]);
  in.captions.clear();
  EXPECT_THROW(caption_source_select(in, CaptionSource::groundtruth, v), std::invalid_argument);

  EXPECT_EQ(parse_caption_source("gt"), CaptionSource::groundtruth);
  EXPECT_THROW(parse_caption_source("best"), std::invalid_argument);
}

TEST(DatasetTest, JsonlRoundTripKeepsFieldOrder) {
  const auto& w = shared_world();
  std::vector<Instance> data(w.val.begin(), w.val.begin() + 20);
  simulate_explanations(data, w, ExplanationKnobs::from(w.config), 4);
  std::stringstream ss;
  write_jsonl(ss, data);
  const std::string text = ss.str();
  const auto first = text.substr(0, text.find('\n'));
  const std::vector<std::string> order = {"\"id\"", "\"question\"", "\"question_type\"", "\"answers\"", "\"captions\"",
                                          "\"word_labels\"", "\"scene_features\"", "\"word_probs\"",
                                          "\"generated_caption\""};
  std::size_t pos = 0;
  for (const auto& key : order) {
    const auto at = first.find(key);
    ASSERT_NE(at, std::string::npos) << key;
    EXPECT_GE(at, pos) << key;
    pos = at;
  }
  auto back = read_jsonl(ss);
  ASSERT_EQ(back.size(), data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    EXPECT_EQ(back[i].id, data[i].id);
    EXPECT_EQ(back[i].question, data[i].question);
    EXPECT_EQ(back[i].answers, data[i].answers);
    EXPECT_EQ(back[i].captions, data[i].captions);
    EXPECT_EQ(back[i].word_labels, data[i].word_labels);
    EXPECT_EQ(back[i].scene_features, data[i].scene_features);
    EXPECT_EQ(back[i].word_probs, data[i].word_probs);
    EXPECT_EQ(back[i].generated_caption, data[i].generated_caption);
  }
  std::ostringstream again;
  write_jsonl(again, back);
  EXPECT_EQ(again.str(), text);
}

TEST(DatasetTest, MalformedInputIsReported) {
  std::istringstream bad_json("{\"id\": \"a\"\n");
  EXPECT_THROW(read_jsonl(bad_json), DataError);
  std::istringstream missing("{\"id\": \"a\"}\n");
  EXPECT_THROW(read_jsonl(missing), DataError);
  std::istringstream bad_label(
      R"({"id":"a","question":"q","question_type":"other","answers":[],"captions":[],"word_labels":[2],"scene_features":[]})");
  EXPECT_THROW(read_jsonl(bad_label), DataError);
}

TEST(DatasetTest, ReadsVqaV1Files) {
  std::istringstream q(R"({"questions":[{"question_id":5,"image_id":1,"question":"Is there a dog?"},
                                        {"question_id":6,"image_id":1,"question":"How many cats?"}]})");
  std::istringstream a(R"({"annotations":[{"question_id":6,"answer_type":"number","answers":[{"answer":"2"},{"answer":"Two"}]},
                                          {"question_id":5,"answer_type":"yes/no","answers":[{"answer":"Yes"}]}]})");
  auto data = read_vqa_v1(q, a);
  ASSERT_EQ(data.size(), 2u);
  EXPECT_EQ(data[0].id, "5");
  EXPECT_EQ(join(data[0].question), "is there a dog");
  EXPECT_EQ(data[0].question_type, AnswerType::yes_no);
  EXPECT_EQ(data[0].answers, std::vector<std::string>{"yes"});
  EXPECT_EQ(data[1].answers, (std::vector<std::string>{"2", "two"}));
  EXPECT_TRUE(data[1].scene_features.empty());
  EXPECT_FALSE(data[1].word_probs);

  std::istringstream q2(R"({"questions":[{"question_id":9,"question":"x"}]})"), a2(R"({"annotations":[]})");
  EXPECT_THROW(read_vqa_v1(q2, a2), DataError);
}
