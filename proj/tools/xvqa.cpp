// Command-line driver for the explain-then-reason pipeline.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "xvqa/xvqa.hpp"

namespace fs = std::filesystem;
using namespace xvqa;
using OJson = nlohmann::ordered_json;

namespace {

enum ExitCode { kOk = 0, kOther = 1, kUsage = 2, kMissingFile = 3, kConfig = 4, kGradcheck = 5, kData = 6 };

struct CliError : std::runtime_error {
  CliError(int c, std::string cat, const std::string& msg) : std::runtime_error(msg), code(c), category(std::move(cat)) {}
  int code;
  std::string category;
};

[[noreturn]] void missing(const std::string& what) { throw CliError(kMissingFile, "missing-file", what); }

void require_file(const std::string& path) {
  if (!fs::is_regular_file(path)) missing("no such file: " + path);
}

void require_dir(const std::string& path) {
  if (!fs::is_directory(path)) missing("no such directory: " + path);
}

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string mode;
  std::string caption_source;
  std::optional<double> relevance_threshold;
  std::string bins;
  std::vector<std::string> set;
  std::string model;
  std::string data;
  std::string explainers;
  std::string vqa_questions, vqa_annotations;
  std::vector<std::string> inputs;
  std::size_t gradcheck_seeds = 20;
  bool model_explanations = false;
};

/// "a.b.c=value" as a nested JSON object; the value is parsed as JSON when
/// possible and kept as a string otherwise.
nlohmann::json set_override(const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + kv + "'");
  const std::string path = kv.substr(0, eq), raw = kv.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  std::vector<std::string> keys;
  std::stringstream ss(path);
  for (std::string k; std::getline(ss, k, '.');) keys.push_back(k);
  nlohmann::json j = value;
  for (auto it = keys.rbegin(); it != keys.rend(); ++it) j = nlohmann::json{{*it, j}};
  return j;
}

RunConfig resolve_config(const Flags& f, const std::string& command) {
  RunConfig c;
  c.out = command;
  if (!f.config.empty()) {
    require_file(f.config);
    c = load_config_file(f.config, c);
  }
  for (const auto& kv : f.set) apply_json(c, set_override(kv));
  if (f.seed) c.seed = *f.seed;
  if (!f.out.empty()) c.out = f.out;
  try {
    if (!f.mode.empty()) c.reasoner.mode = parse_mode(f.mode);
    if (!f.caption_source.empty()) c.analysis.caption_source = parse_caption_source(f.caption_source);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (f.relevance_threshold) c.analysis.relevance_threshold = *f.relevance_threshold;
  if (!f.bins.empty()) c.analysis.bins = parse_edges(f.bins);
  if (f.model_explanations) c.analysis.model_explanations = true;
  c.validate();
  return c;
}

/// Run directory: --out (or the command name) under the output root, which
/// XVQA_OUTPUT_ROOT overrides. Absolute --out paths are used as given.
fs::path run_directory(const RunConfig& c) {
  const fs::path out(c.out);
  if (out.is_absolute()) return out;
  const char* root = std::getenv("XVQA_OUTPUT_ROOT");
  return fs::path(root && *root ? root : "runs") / out;
}

class Run {
 public:
  Run(RunConfig cfg) : cfg_(std::move(cfg)), dir_(run_directory(cfg_)) {
    fs::create_directories(dir_);
    write("config.json", to_json(cfg_).dump(2) + "\n");
  }

  const RunConfig& config() const { return cfg_; }
  const fs::path& dir() const { return dir_; }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void write(const std::string& name, const std::string& content) const {
    std::ofstream out(dir_ / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir_ / name).string());
    out << content;
  }

  void write_json(const std::string& name, const OJson& j) const { write(name, j.dump(2) + "\n"); }

  /// Text reports carry the thresholds they were produced with.
  std::string header() const {
    return "relevance threshold: " + report::fmt(cfg_.analysis.relevance_threshold, 3) +
           "  correctness threshold: " + report::fmt(cfg_.analysis.correct_threshold, 3) + "\n";
  }

  void write_text(const std::string& name, const std::string& body) const {
    write(name, header() + body);
    std::cout << header() << body;
  }

 private:
  RunConfig cfg_;
  fs::path dir_;
};

std::unordered_set<std::string> stop_words(const RunConfig& c) {
  if (c.stop_words.empty()) return default_stop_word_set();
  require_file(c.stop_words);
  return load_stop_words(c.stop_words);
}

World world_for(const RunConfig& c) {
  World w = generate_world(c.gen(), stop_words(c));
  const auto k = ExplanationKnobs::from(w.config);
  simulate_explanations(w.train, w, k, seeds::explain_train(w.config.seed));
  simulate_explanations(w.val, w, k, seeds::explain_val(w.config.seed));
  return w;
}

std::string lines(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += x + "\n";
  return s;
}

std::string trace_csv(const TrainTrace& t) {
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < t.epoch_loss.size(); ++i) {
    rows.push_back({std::to_string(i + 1), report::fmt(t.epoch_loss[i], 8), report::fmt(t.learning_rate[i], 6)});
  }
  return report::csv({"epoch", "loss", "learning_rate"}, rows);
}

ReasonerModel<double> trained_reasoner(const Run& run, const World& w, AblationMode mode, TrainTrace* trace = nullptr) {
  const auto& c = run.config();
  return train_reasoner_at(w.train, w, c.reasoner_config(mode), c.precision == Precision::f32, trace);
}

/// --model checkpoint if given, else a freshly trained reasoner.
ReasonerModel<double> reasoner_for(const Run& run, const World& w, const Flags& f, AblationMode mode) {
  if (f.model.empty()) return trained_reasoner(run, w, mode);
  require_file(f.model);
  auto m = load_reasoner(f.model);
  if (m.mode != mode) {
    throw CliError(kData, "data", std::string("checkpoint is a ") + mode_name(m.mode) + " model, expected " + mode_name(mode));
  }
  if (m.vocab_size() != w.vocab.size() || m.word_dim != w.word_list.size() || m.num_answers() != w.candidates.size()) {
    throw CliError(kData, "data", "checkpoint does not match this configuration's vocabulary or answers");
  }
  return m;
}

Explainers load_explainers(const std::string& dir) {
  require_dir(dir);
  require_file(dir + "/word_predictor.ckpt");
  require_file(dir + "/caption_generator.ckpt");
  return {load_word_predictor(dir + "/word_predictor.ckpt"), load_caption_generator(dir + "/caption_generator.ckpt")};
}

OJson quality_means(const std::vector<Instance>& data, const World& w) {
  double s[4] = {0, 0, 0, 0};
  for (const auto& in : data) {
    const auto q = quality_scores(in, w);
    s[0] += q.word_accuracy;
    s[1] += q.word_question_relevance;
    s[2] += q.sentence_accuracy;
    s[3] += q.sentence_question_relevance;
  }
  const double n = data.empty() ? 1.0 : static_cast<double>(data.size());
  OJson j;
  j["word_accuracy"] = s[0] / n;
  j["word_question_relevance"] = s[1] / n;
  j["sentence_accuracy"] = s[2] / n;
  j["sentence_question_relevance"] = s[3] / n;
  return j;
}

OJson vocab_summary(const std::vector<Tokens>& refs, const WordList& wl, const Vocabulary& v, const AnswerCandidates& a,
                    const std::unordered_set<std::string>& stops) {
  const auto cov = word_list_coverage(refs, wl, stops);
  OJson j;
  j["word_list_size"] = wl.size();
  j["vocabulary_size"] = v.size();
  j["candidates"] = a.size();
  j["coverage_all_tokens"] = cov.all_tokens;
  j["coverage_content_tokens"] = cov.content_tokens;
  return j;
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_gen_data(const Run& run) {
  const World w = world_for(run.config());
  write_jsonl(run.path("train.jsonl"), w.train);
  write_jsonl(run.path("val.jsonl"), w.val);
  run.write("word_list.txt", lines(w.word_list.words()));
  run.write("vocab.txt", lines(w.vocab.tokens()));
  w.candidates.save(run.path("candidates.txt"));
  std::vector<Tokens> refs;
  std::size_t yn = 0, yes = 0;
  for (const auto& in : w.train) {
    refs.insert(refs.end(), in.captions.begin(), in.captions.end());
    if (in.question_type == AnswerType::yes_no) {
      ++yn;
      yes += plurality_answer(in.answers) == "yes";
    }
  }
  OJson j = vocab_summary(refs, w.word_list, w.vocab, w.candidates, w.stop_words);
  j["train"] = w.train.size();
  j["val"] = w.val.size();
  j["yes_share"] = yn ? static_cast<double>(yes) / static_cast<double>(yn) : 0.0;
  j["val_explanation_quality"] = quality_means(w.val, w);
  run.write_json("summary.json", j);
  std::cout << j.dump(2) << "\n";
  return kOk;
}

int cmd_build_vocab(const Run& run, const Flags& f) {
  const auto& c = run.config();
  const auto stops = stop_words(c);
  std::vector<Instance> train;
  if (!f.vqa_questions.empty() || !f.vqa_annotations.empty()) {
    if (f.vqa_questions.empty() || f.vqa_annotations.empty()) {
      throw CliError(kUsage, "usage", "--vqa-questions and --vqa-annotations go together");
    }
    require_file(f.vqa_questions);
    require_file(f.vqa_annotations);
    train = read_vqa_v1(f.vqa_questions, f.vqa_annotations);
  } else if (!f.data.empty()) {
    require_file(f.data + "/train.jsonl");
    train = read_jsonl(f.data + "/train.jsonl");
  } else {
    train = generate_world(c.gen(), stops).train;
  }
  if (train.empty()) throw CliError(kData, "data", "no training instances");
  std::vector<Tokens> refs, corpus;
  std::vector<std::string> targets;
  for (const auto& in : train) {
    corpus.push_back(in.question);
    for (const auto& r : in.captions) {
      refs.push_back(r);
      corpus.push_back(r);
    }
    if (!in.answers.empty()) targets.push_back(plurality_answer(in.answers));
  }
  const auto wl = refs.empty() ? WordList() : build_word_list(refs, c.data.word_list_top_n, stops);
  const auto vocab = build_vocabulary(corpus, c.data.vocab_min_count);
  const auto cands = build_answer_candidates(targets, c.data.num_candidates);
  run.write("word_list.txt", lines(wl.words()));
  run.write("vocab.txt", lines(vocab.tokens()));
  cands.save(run.path("candidates.txt"));
  const OJson j = vocab_summary(refs, wl, vocab, cands, stops);
  run.write_json("vocab.json", j);
  std::cout << j.dump(2) << "\n";
  return kOk;
}

int cmd_train_explainers(const Run& run) {
  const auto& c = run.config();
  const World w = world_for(c);
  TrainTrace wt, ct;
  const Explainers e = train_explainers(w, c.word_config(), c.caption_config(), &wt, &ct);
  save_word_predictor(run.path("word_predictor.ckpt"), e.words);
  save_caption_generator(run.path("caption_generator.ckpt"), e.captions);
  run.write("word_predictor_trace.csv", trace_csv(wt));
  run.write("caption_generator_trace.csv", trace_csv(ct));

  std::vector<Instance> val = w.val;
  attach_model_explanations(val, e, w.vocab, c.decode);
  std::ostringstream samples;
  for (std::size_t i = 0; i < std::min<std::size_t>(20, val.size()); ++i) {
    samples << val[i].id << "\t" << join(*val[i].generated_caption) << "\t" << join(val[i].captions.front()) << "\n";
  }
  run.write("sample_captions.tsv", samples.str());
  OJson j;
  j["word_predictor_final_loss"] = wt.epoch_loss.back();
  j["caption_generator_final_loss"] = ct.epoch_loss.back();
  j["caption_generator_skipped"] = ct.skipped;
  j["val_quality_model"] = quality_means(val, w);
  j["val_quality_simulated"] = quality_means(w.val, w);
  run.write_json("explainers.json", j);
  std::cout << j.dump(2) << "\n";
  return kOk;
}

int cmd_train_reasoner(const Run& run) {
  const auto& c = run.config();
  const World w = world_for(c);
  TrainTrace trace;
  const auto m = trained_reasoner(run, w, c.reasoner.mode, &trace);
  save_reasoner(run.path("reasoner.ckpt"), m);
  w.candidates.save(run.path("candidates.txt"));
  run.write("vocab.txt", lines(w.vocab.tokens()));
  run.write("trace.csv", trace_csv(trace));
  const auto acc = type_accuracy(evaluate_reasoner(m, w.val, w, CaptionSource::generated, c.reasoner.max_len));
  OJson j;
  j["mode"] = mode_name(c.reasoner.mode);
  j["used"] = trace.used;
  j["skipped"] = trace.skipped;
  j["final_loss"] = trace.epoch_loss.back();
  j["val_accuracy"] = report::to_json(acc);
  run.write_json("summary.json", j);
  std::cout << j.dump(2) << "\n";
  return kOk;
}

int cmd_evaluate(const Run& run, const Flags& f) {
  const auto& c = run.config();
  World w = world_for(c);
  const auto mode = c.reasoner.mode;
  const auto m = reasoner_for(run, w, f, mode);
  std::vector<Instance> val = w.val;
  if (c.analysis.model_explanations) {
    if (f.explainers.empty()) throw CliError(kUsage, "usage", "model explanations need --explainers <dir>");
    attach_model_explanations(val, load_explainers(f.explainers), w.vocab, c.decode);
  }
  const auto recs = evaluate_reasoner(m, val, w, c.analysis.caption_source, c.reasoner.max_len);
  run.write("records.csv", report::records_csv(recs));
  const auto acc = type_accuracy(recs);
  std::vector<BinTable> tables;
  std::string text = std::string("mode: ") + mode_name(mode) + "  caption source: " +
                     caption_source_name(c.analysis.caption_source) + "\n";
  std::vector<std::string> h = {"Model"};
  for (const auto& x : report::type_header()) h.push_back(x);
  auto cells = report::type_cells(acc);
  cells.insert(cells.begin(), report::mode_label(mode));
  text += report::table(h, {cells}) + "\n";
  OJson bins = OJson::array();
  for (auto field : {QualityField::word_accuracy, QualityField::word_question_relevance,
                     QualityField::sentence_accuracy, QualityField::sentence_question_relevance}) {
    tables.push_back(bin_by_quality(recs, field, c.analysis.bins));
    text += report::bins_text(tables.back()) + "\n";
    bins.push_back(report::to_json(tables.back()));
  }
  run.write("bins.csv", report::bins_csv(tables));
  OJson j;
  j["mode"] = mode_name(mode);
  j["caption_source"] = caption_source_name(c.analysis.caption_source);
  j["relevance_threshold"] = c.analysis.relevance_threshold;
  j["accuracy"] = report::to_json(acc);
  j["bins"] = bins;
  run.write_json("summary.json", j);
  run.write_text("evaluate.txt", text);
  return kOk;
}

int cmd_ablate(const Run& run) {
  const auto& c = run.config();
  const World w = world_for(c);
  const auto res = run_ablation(w, c.reasoner_config(), nullptr, c.precision == Precision::f32);
  run.write("ablation.csv", report::ablation_csv(res));
  OJson j;
  j["relevance_threshold"] = c.analysis.relevance_threshold;
  for (const auto& row : res.rows) j["modes"][mode_name(row.mode)] = report::to_json(row.accuracy);
  const double word = res.row(AblationMode::word).accuracy.all, sent = res.row(AblationMode::sentence).accuracy.all,
               full = res.row(AblationMode::full).accuracy.all;
  j["ordered"] = word <= sent && sent <= full;
  j["full_minus_word"] = full - word;
  run.write_json("ablation.json", j);
  run.write_text("ablation.txt", report::ablation_text(res));
  return kOk;
}

int cmd_control(const Run& run, const Flags& f) {
  const auto& c = run.config();
  const World w = world_for(c);
  const auto m = reasoner_for(run, w, f, AblationMode::sentence);
  const auto rows = control_experiment(m, w, c.reasoner.max_len);
  run.write("control.csv", report::control_csv(rows));
  OJson j;
  j["relevance_threshold"] = c.analysis.relevance_threshold;
  for (const auto& r : rows) j["sources"][caption_source_name(r.source)] = report::to_json(r.accuracy);
  j["ordered"] = rows[0].accuracy.all < rows[1].accuracy.all && rows[1].accuracy.all < rows[2].accuracy.all;
  run.write_json("control.json", j);
  run.write_text("control.txt", report::control_text(rows));
  return kOk;
}

int cmd_sweep(const Run& run) {
  const auto& c = run.config();
  const World w = world_for(c);
  std::map<AblationMode, ReasonerModel<double>> models;
  std::vector<SweepResult> results;
  for (const auto& spec : default_sweeps()) {
    if (!models.count(spec.model)) models.emplace(spec.model, trained_reasoner(run, w, spec.model));
    results.push_back(
        quality_sweep(models.at(spec.model), w, spec, c.analysis.sweep_grid, c.analysis.bins, c.sweep_seed(), c.reasoner.max_len));
  }
  run.write("sweep.csv", report::sweep_csv(results));
  OJson j;
  j["relevance_threshold"] = c.analysis.relevance_threshold;
  j["sweeps"] = report::sweep_json(results);
  run.write_json("sweep.json", j);
  run.write_text("sweep.txt", report::sweep_text(results));
  return kOk;
}

int cmd_dissect(const Run& run, const Flags& f) {
  const auto& c = run.config();
  const World w = world_for(c);
  const auto mode = c.reasoner.mode;
  const auto m = reasoner_for(run, w, f, mode);
  const auto recs = evaluate_reasoner(m, w.val, w, CaptionSource::generated, c.reasoner.max_len);
  const auto cases = classify_all(recs, mode, c.thresholds());
  const auto root = dissect(cases);
  run.write("cases.csv", report::cases_csv(cases));
  run.write("dissect.csv", report::dissect_csv(root));
  OJson j;
  j["mode"] = mode_name(mode);
  j["relevance_threshold"] = c.analysis.relevance_threshold;
  j["correct_threshold"] = c.analysis.correct_threshold;
  j["tree"] = report::to_json(root);
  run.write_json("dissect.json", j);
  const std::string text = report::dissect_text(root, c.thresholds(), mode);
  run.write("dissect.txt", text);
  std::cout << text;
  return kOk;
}

int cmd_gradcheck(const Run& run, const Flags& f) {
  const auto rep = run_gradcheck_suite(run.config().seed, f.gradcheck_seeds);
  std::vector<std::vector<std::string>> rows;
  for (const auto& e : rep.entries) {
    char err[32];
    std::snprintf(err, sizeof err, "%.3e", e.result.max_relative_error);
    rows.push_back({e.model, std::to_string(e.seed), std::to_string(e.result.checked), err});
  }
  run.write("gradcheck.csv", report::csv({"model", "seed", "checked", "max_relative_error"}, rows));
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3e", rep.max_error());
  const bool ok = rep.max_error() < 1e-4;
  const std::string line = std::string("max relative error: ") + buf + " over " + std::to_string(rep.entries.size()) +
                           " checks (" + (ok ? "pass" : "FAIL") + ", tolerance 1e-4)\n";
  run.write("gradcheck.txt", line);
  std::cout << line;
  if (!ok) throw CliError(kGradcheck, "gradcheck", std::string("max relative error ") + buf + " exceeds 1e-4");
  return kOk;
}

/// Collects the text and JSON reports of earlier runs into one file.
int cmd_report(const Run& run, const Flags& f) {
  std::vector<fs::path> dirs;
  if (!f.inputs.empty()) {
    for (const auto& d : f.inputs) {
      require_dir(d);
      dirs.emplace_back(d);
    }
  } else {
    const fs::path root = run.dir().parent_path();
    if (fs::is_directory(root)) {
      for (const auto& e : fs::directory_iterator(root)) {
        if (e.is_directory() && e.path() != run.dir() && fs::exists(e.path() / "config.json")) dirs.push_back(e.path());
      }
    }
    std::sort(dirs.begin(), dirs.end());
  }
  if (dirs.empty()) missing("no run directories to report on");
  std::ostringstream text;
  OJson j = OJson::object();
  for (const auto& d : dirs) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(d)) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    const std::string name = d.filename().string();
    text << "== " << name << " ==\n";
    for (const auto& p : files) {
      std::ifstream in(p);
      std::stringstream body;
      body << in.rdbuf();
      static const std::set<std::string> artifacts = {"vocab.txt", "word_list.txt", "candidates.txt"};
      if (artifacts.count(p.filename().string())) continue;
      if (p.extension() == ".txt") {
        text << "-- " << p.filename().string() << "\n" << body.str() << "\n";
      } else if (p.extension() == ".json" && p.filename() != "config.json") {
        auto parsed = nlohmann::ordered_json::parse(body.str(), nullptr, false);
        if (parsed.is_discarded()) throw CliError(kData, "data", "malformed JSON in " + p.string());
        j[name][p.stem().string()] = parsed;
      }
    }
  }
  run.write("report.txt", text.str());
  run.write_json("report.json", j);
  std::cout << text.str();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Explainable two-step visual question answering on a synthetic micro-world"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config, "JSON run configuration");
  app.add_option("--seed", f.seed, "global seed");
  app.add_option("--out", f.out, "run directory (relative to the output root)");
  app.add_option("--mode", f.mode, "reasoner mode")->check(CLI::IsMember({"word", "sentence", "full"}));
  app.add_option("--caption-source", f.caption_source, "caption fed to the reasoner")
      ->check(CLI::IsMember({"null", "generated", "gt"}));
  app.add_option("--relevance-threshold", f.relevance_threshold, "high/low relevance boundary");
  app.add_option("--bins", f.bins, "comma-separated bin edges, e.g. 0,0.2,0.8,1");
  app.add_option("--set", f.set, "override any config key: section.key=value");

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"gen-data", "generate the synthetic dataset with simulated explanations"},
      {"build-vocab", "build word list, vocabulary and answer candidates"},
      {"train-explainers", "train the word predictor and caption generator"},
      {"train-reasoner", "train the answer reasoner"},
      {"evaluate", "evaluate a reasoner and bin accuracy by explanation quality"},
      {"ablate", "compare word, sentence and full reasoners"},
      {"control", "evaluate a sentence reasoner with null, generated and ground-truth captions"},
      {"sweep", "vary explanation quality knobs and bin accuracy"},
      {"dissect", "split answers into correct/wrong, guessed/reliable, yes-no/other"},
      {"gradcheck", "finite-difference gradient checks of every model"},
      {"report", "collect earlier runs into one report"}};
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, help] : commands) subs[name] = app.add_subcommand(name, help);
  subs["build-vocab"]->add_option("--data", f.data, "directory with train.jsonl");
  subs["build-vocab"]->add_option("--vqa-questions", f.vqa_questions, "VQA-v1 questions file");
  subs["build-vocab"]->add_option("--vqa-annotations", f.vqa_annotations, "VQA-v1 annotations file");
  for (const char* n : {"evaluate", "control", "dissect"}) subs[n]->add_option("--model", f.model, "reasoner checkpoint");
  subs["evaluate"]->add_option("--explainers", f.explainers, "directory with trained explainer checkpoints");
  subs["evaluate"]->add_flag("--model-explanations", f.model_explanations, "use trained explainers instead of simulated ones");
  subs["gradcheck"]->add_option("--seeds", f.gradcheck_seeds, "number of seeds")->check(CLI::PositiveNumber);
  subs["report"]->add_option("--inputs", f.inputs, "run directories to collect");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return kUsage;
  }

  std::string command;
  for (const auto& [name, sub] : subs) {
    if (sub->parsed()) command = name;
  }

  try {
    const Run run(resolve_config(f, command));
    if (command == "gen-data") return cmd_gen_data(run);
    if (command == "build-vocab") return cmd_build_vocab(run, f);
    if (command == "train-explainers") return cmd_train_explainers(run);
    if (command == "train-reasoner") return cmd_train_reasoner(run);
    if (command == "evaluate") return cmd_evaluate(run, f);
    if (command == "ablate") return cmd_ablate(run);
    if (command == "control") return cmd_control(run, f);
    if (command == "sweep") return cmd_sweep(run);
    if (command == "dissect") return cmd_dissect(run, f);
    if (command == "gradcheck") return cmd_gradcheck(run, f);
    if (command == "report") return cmd_report(run, f);
    throw CliError(kUsage, "usage", "unknown subcommand");
  } catch (const CliError& e) {
    std::cerr << "error: " << e.category << ": " << e.what() << "\n";
    return e.code;
  } catch (const ConfigError& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "error: data: " << e.what() << "\n";
    return kData;
  } catch (const CheckpointError& e) {
    std::cerr << "error: data: " << e.what() << "\n";
    return kData;
  } catch (const ShapeError& e) {
    std::cerr << "error: data: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return kOther;
  }
}
