#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "xvqa/analysis.hpp"

using namespace xvqa;

namespace {

ResultRecord rec(std::string id, double acc, double score, AnswerType t = AnswerType::other) {
  ResultRecord r;
  r.id = std::move(id);
  r.accuracy = acc;
  r.quality = {score, score, score, score};
  r.answer_type = t;
  return r;
}

std::vector<ResultRecord> random_records(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  const double levels[] = {0, 1.0 / 3, 2.0 / 3, 1};
  std::vector<ResultRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    ResultRecord r;
    r.id = std::to_string(i);
    r.accuracy = levels[rng.index(4)];
    r.quality = {rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()};
    if (rng.bernoulli(0.1)) r.quality.word_question_relevance = 1.0;
    r.answer_type = static_cast<AnswerType>(rng.index(3));
    out.push_back(r);
  }
  return out;
}

GenConfig tiny_world_config() {
  GenConfig g;
  g.train_size = 1500;
  g.val_size = 300;
  return g;
}

ReasonerConfig quick_reasoner() {
  ReasonerConfig c;
  c.epochs_high = 3;
  c.epochs_low = 1;
  return c;
}

}  // namespace

TEST(BinTest, SpecExamples) {
  EXPECT_EQ(default_bin_edges(), (std::vector<double>{0.0, 0.2, 0.8, 1.0}));
  const auto t = bin_by_values({0.1, 0.5, 0.9}, {0, 1, 1}, "x");
  ASSERT_EQ(t.rows.size(), 3u);
  EXPECT_DOUBLE_EQ(t.rows[0].accuracy, 0.0);
  EXPECT_DOUBLE_EQ(t.rows[1].accuracy, 100.0);
  EXPECT_DOUBLE_EQ(t.rows[2].accuracy, 100.0);
  EXPECT_TRUE(t.non_decreasing());
  EXPECT_DOUBLE_EQ(t.top_minus_bottom(), 100.0);

  const auto ones = bin_by_values({1.0, 1.0, 1.0}, {1, 0, 1}, "x");
  EXPECT_EQ(ones.rows[2].count, 3u);
  EXPECT_TRUE(ones.rows[2].closed);
  EXPECT_EQ(bin_label(ones.rows[2]), "[0.8, 1.0]");
  EXPECT_EQ(bin_label(ones.rows[0]), "[0.0, 0.2)");

  // boundary values go up
  const auto edge = bin_by_values({0.2, 0.8, 0.0}, {1, 1, 1}, "x");
  EXPECT_EQ(edge.rows[0].count, 1u);
  EXPECT_EQ(edge.rows[1].count, 1u);
  EXPECT_EQ(edge.rows[2].count, 1u);

  EXPECT_TRUE(bin_by_quality({}, QualityField::word_accuracy).rows.empty());
  EXPECT_THROW(bin_by_values({0.5}, {1}, "x", {0, 0.5, 0.5, 1}), std::invalid_argument);
  EXPECT_THROW(bin_by_values({0.5}, {1}, "x", {0.1, 1}), std::invalid_argument);
}

TEST(BinTest, PartitionProperty) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto recs = random_records(seed, 50 + seed * 7);
    for (auto f : {QualityField::word_accuracy, QualityField::word_question_relevance, QualityField::sentence_accuracy,
                   QualityField::sentence_question_relevance}) {
      for (const auto& edges : {default_bin_edges(), std::vector<double>{0, 0.1, 0.3, 0.5, 0.9, 1}}) {
        const auto t = bin_by_quality(recs, f, edges);
        EXPECT_EQ(t.total(), recs.size());
        double weighted = 0, direct = 0;
        for (const auto& r : t.rows) weighted += r.accuracy * static_cast<double>(r.count);
        for (const auto& r : recs) direct += 100.0 * r.accuracy;
        EXPECT_NEAR(weighted, direct, 1e-9);
      }
    }
  }
}

TEST(CaseTest, FourTypes) {
  EXPECT_EQ(classify_case(rec("a", 1.0, 0), 0.85).case_type, 1);
  EXPECT_EQ(classify_case(rec("b", 0.0, 0), 0.05).case_type, 2);
  EXPECT_EQ(classify_case(rec("c", 0.0, 0), 0.85).case_type, 3);
  EXPECT_EQ(classify_case(rec("d", 1.0, 0), 0.05).case_type, 4);
  // strict correctness by default, relaxed on request
  EXPECT_FALSE(classify_case(rec("e", 2.0 / 3, 0), 0.5).correct);
  EXPECT_TRUE(classify_case(rec("e", 2.0 / 3, 0), 0.5, {0.2, 2.0 / 3}).correct);
  EXPECT_TRUE(classify_case(rec("f", 0, 0), 0.2).high_relevance);  // threshold inclusive
  EXPECT_THROW(classify_case(rec("g", 0, 0), 0.5, {0.0, 1.0}), std::invalid_argument);
  EXPECT_THROW(classify_case(rec("g", 0, 0), 0.5, {0.3, 1.5}), std::invalid_argument);
}

TEST(CaseTest, InvariantUnderMonotoneRescaling) {
  const auto recs = random_records(3, 400);
  const CaseThresholds t{0.3, 1.0};
  const CaseThresholds t2{std::pow(0.3, 3), 1.0};
  for (const auto& r : recs) {
    const double s = r.quality.sentence_question_relevance;
    const auto a = classify_case(r, s, t);
    const auto b = classify_case(r, std::pow(s, 3), t2);
    EXPECT_EQ(a.case_type, b.case_type);
    EXPECT_EQ(a.high_relevance, b.high_relevance);
    EXPECT_EQ(a.correct, b.correct);
  }
}

TEST(CaseTest, BandRelevanceByMode) {
  QualityScores q{0.9, 0.1, 0.8, 0.4};
  EXPECT_DOUBLE_EQ(band_relevance(q, AblationMode::word), 0.1);
  EXPECT_DOUBLE_EQ(band_relevance(q, AblationMode::sentence), 0.4);
  EXPECT_DOUBLE_EQ(band_relevance(q, AblationMode::full), 0.4);
}

TEST(DissectTest, PartitionLaws) {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const auto recs = random_records(seed, seed * 13);
    const auto cases = classify_all(recs, AblationMode::full);
    std::array<std::size_t, 5> types{};
    for (const auto& c : cases) ++types.at(static_cast<std::size_t>(c.case_type));
    EXPECT_EQ(types[1] + types[2] + types[3] + types[4], recs.size());

    const auto root = dissect(cases);
    EXPECT_EQ(root.count, recs.size());
    const auto& ca = root.child("CA");
    const auto& wa = root.child("WA");
    EXPECT_EQ(ca.count + wa.count, root.count);
    EXPECT_EQ(ca.child("RA").count, types[1]);
    EXPECT_EQ(ca.child("GA").count, types[4]);
    EXPECT_EQ(wa.child("RA").count, types[3]);
    EXPECT_EQ(wa.child("GA").count, types[2]);
    auto check = [&](auto&& self, const DissectNode& n) -> void {
      if (n.children.empty()) return;
      std::size_t sum = 0;
      double pct = 0;
      for (const auto& c : n.children) {
        sum += c.count;
        pct += c.percent;
        self(self, c);
      }
      EXPECT_EQ(sum, n.count) << n.label;
      if (n.count) EXPECT_NEAR(pct, 100.0, 1e-9) << n.label;
    };
    check(check, root);
  }
}

TEST(ReportTest, TablesCsvAndJson) {
  const auto recs = std::vector<ResultRecord>{rec("1", 1, 0.1, AnswerType::yes_no), rec("2", 0, 0.9),
                                              rec("3", 1.0 / 3, 0.5, AnswerType::number)};
  const auto t = bin_by_quality(recs, QualityField::sentence_accuracy);
  const auto text = report::bins_text(t);
  EXPECT_NE(text.find("sentence_accuracy"), std::string::npos);
  EXPECT_NE(text.find("[0.8, 1.0]"), std::string::npos);
  const auto csv = report::bins_csv({t});
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "field,lo,hi,upper,count,accuracy");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  EXPECT_EQ(report::to_json(t)["bins"].size(), 3u);

  const CaseThresholds th{0.25, 1.0};
  const auto root = dissect(classify_all(recs, AblationMode::word, th));
  const auto dt = report::dissect_text(root, th, AblationMode::word);
  EXPECT_NE(dt.find("relevance threshold: 0.250"), std::string::npos);
  EXPECT_NE(report::dissect_csv(root).find("QA/CA/GA/Y/N,1,"), std::string::npos);
  EXPECT_EQ(report::to_json(root)["children"].size(), 2u);

  EXPECT_EQ(report::csv({"a", "b"}, {{"x,y", "q\"z"}}), "a,b\n\"x,y\",\"q\"\"z\"\n");
  const auto tab = report::table({"Model", "All"}, {{"Full VQA", "68.00"}, {"w", "1.00"}});
  EXPECT_EQ(tab, "Model       All\n---------------\nFull VQA  68.00\nw          1.00\n");

  const auto ta = type_accuracy(recs);
  EXPECT_NEAR(ta.all, 100.0 * (4.0 / 3) / 3, 1e-9);
  EXPECT_DOUBLE_EQ(ta.yes_no, 100.0);
  EXPECT_NEAR(ta.number, 100.0 / 3, 1e-9);
  EXPECT_DOUBLE_EQ(ta.other, 0.0);
}

TEST(ExperimentTest, AblationAndControlAreDeterministic) {
  const World w = explained_world(tiny_world_config());
  std::vector<ReasonerModel<double>> models;
  const auto a = run_ablation(w, quick_reasoner(), &models);
  const auto b = run_ablation(w, quick_reasoner());
  EXPECT_EQ(report::ablation_csv(a), report::ablation_csv(b));
  ASSERT_EQ(a.rows.size(), 3u);
  for (const auto& row : a.rows) {
    ASSERT_EQ(row.records.size(), w.val.size());
    for (std::size_t i = 0; i < w.val.size(); ++i) EXPECT_EQ(row.records[i].id, w.val[i].id);
  }
  const auto text = report::ablation_text(a);
  EXPECT_NE(text.find("Word-based VQA"), std::string::npos);
  EXPECT_NE(text.find("Sentence-based VQA"), std::string::npos);
  EXPECT_NE(text.find("Full VQA"), std::string::npos);

  const auto c1 = control_experiment(models[1], w);
  const auto c2 = control_experiment(models[1], w);
  EXPECT_EQ(report::control_csv(c1), report::control_csv(c2));
  ASSERT_EQ(c1.size(), 3u);
  EXPECT_EQ(c1[0].source, CaptionSource::null);
  // the generated row reproduces the ablation's sentence row
  EXPECT_DOUBLE_EQ(c1[1].accuracy.all, a.row(AblationMode::sentence).accuracy.all);

  for (const auto& in : reasoner_inputs(w.val, w.vocab, CaptionSource::null)) {
    EXPECT_EQ(in.caption, std::vector<std::size_t>{Vocabulary::kEnd});
  }

  const auto sweep = quality_sweep(models[0], w, default_sweeps()[0], {0, 0.5, 1}, default_bin_edges(), 3);
  EXPECT_EQ(sweep.bins.total(), 3 * w.val.size());
  EXPECT_EQ(sweep.level_accuracy.size(), 3u);
  EXPECT_THROW(quality_sweep(models[0], w, default_sweeps()[0], {0, 1}, default_bin_edges(), 3), std::invalid_argument);
  EXPECT_THROW(quality_sweep(models[1], w, default_sweeps()[0], {0, 0.5, 1}, default_bin_edges(), 3),
               std::invalid_argument);
}

TEST(ExperimentTest, SubstitutedCaptionFlipsTheAnswer) {
  // A caption edit that swaps the queried attribute changes the reasoner's
  // answer to follow the caption.
  GenConfig g = tiny_world_config();
  g.train_size = 5000;
  const World w = explained_world(g);
  ReasonerConfig rc;
  rc.mode = AblationMode::sentence;
  const auto m = train_reasoner_on(w.train, w, rc);
  std::size_t tried = 0, followed = 0;
  for (const auto& in : w.val) {
    if (in.kind != QuestionKind::color) continue;
    Tokens cap = caption_source_select(in, CaptionSource::groundtruth, w.vocab);
    const auto& truth = lexicon::colors()[in.scene->objects[*in.target].color];
    auto it = std::find(cap.begin(), cap.end(), truth);
    if (it == cap.end()) continue;
    ReasonerInput x{{}, encode_for_reasoner(cap, w.vocab), encode_for_reasoner(in.question, w.vocab)};
    if (predict_answer(m, x, w.candidates).answer != truth) continue;
    const std::string swapped = lexicon::colors()[(in.scene->objects[*in.target].color + 3) % lexicon::colors().size()];
    *it = swapped;
    x.caption = encode_for_reasoner(cap, w.vocab);
    ++tried;
    followed += predict_answer(m, x, w.candidates).answer == swapped;
  }
  ASSERT_GT(tried, 20u);
  EXPECT_GT(static_cast<double>(followed) / static_cast<double>(tried), 0.5);
}
