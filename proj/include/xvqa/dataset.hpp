#pragma once

#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "xvqa/text.hpp"

namespace xvqa {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class AnswerType { yes_no, number, other };

inline const char* answer_type_name(AnswerType t) {
  switch (t) {
    case AnswerType::yes_no: return "yes/no";
    case AnswerType::number: return "number";
    case AnswerType::other: return "other";
  }
  return "?";
}

inline AnswerType parse_answer_type(std::string_view s) {
  if (s == "yes/no") return AnswerType::yes_no;
  if (s == "number") return AnswerType::number;
  if (s == "other") return AnswerType::other;
  throw DataError("unknown question_type '" + std::string(s) + "'");
}

struct SceneObject {
  std::size_t noun = 0;
  std::size_t color = 0;
  std::size_t count = 1;  // 1..3
  std::size_t action = 0;
};

struct Scene {
  std::vector<SceneObject> objects;
  std::size_t relation = 0;  // joins objects 0 and 1
};

enum class QuestionKind { exist, verify, count, color, action, external };

/// One question-answering record.
struct Instance {
  std::string id;
  Tokens question;
  AnswerType question_type = AnswerType::other;
  std::vector<std::string> answers;
  std::vector<Tokens> captions;       // references
  std::vector<double> word_labels;    // y over the word list
  std::vector<double> scene_features;
  std::optional<std::vector<double>> word_probs;
  std::optional<Tokens> generated_caption;

  // Generator metadata; kept in memory only.
  std::optional<Scene> scene;
  std::optional<std::size_t> target;  // queried object
  QuestionKind kind = QuestionKind::external;
  bool target_dropped = false;
};

// ---------------------------------------------------------------------------
// Line-delimited JSON: one object per line, fields in a fixed order.

inline nlohmann::ordered_json instance_to_json(const Instance& in) {
  nlohmann::ordered_json j;
  j["id"] = in.id;
  j["question"] = join(in.question);
  j["question_type"] = answer_type_name(in.question_type);
  j["answers"] = in.answers;
  auto caps = nlohmann::ordered_json::array();
  for (const auto& c : in.captions) caps.push_back(join(c));
  j["captions"] = caps;
  auto labels = nlohmann::ordered_json::array();
  for (double v : in.word_labels) labels.push_back(static_cast<int>(v));
  j["word_labels"] = labels;
  j["scene_features"] = in.scene_features;
  if (in.word_probs) j["word_probs"] = *in.word_probs;
  if (in.generated_caption) j["generated_caption"] = join(*in.generated_caption);
  return j;
}

inline Instance instance_from_json(const nlohmann::json& j) {
  try {
    Instance in;
    in.id = j.at("id").get<std::string>();
    in.question = tokenize(j.at("question").get<std::string>());
    in.question_type = parse_answer_type(j.at("question_type").get<std::string>());
    in.answers = j.at("answers").get<std::vector<std::string>>();
    for (const auto& c : j.at("captions")) in.captions.push_back(tokenize(c.get<std::string>()));
    for (const auto& v : j.at("word_labels")) {
      const int b = v.get<int>();
      if (b != 0 && b != 1) throw DataError("word_labels must be 0 or 1");
      in.word_labels.push_back(b);
    }
    in.scene_features = j.at("scene_features").get<std::vector<double>>();
    if (j.contains("word_probs")) in.word_probs = j["word_probs"].get<std::vector<double>>();
    if (j.contains("generated_caption")) in.generated_caption = tokenize(j["generated_caption"].get<std::string>());
    return in;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed instance: ") + e.what());
  }
}

inline void write_jsonl(std::ostream& out, const std::vector<Instance>& data) {
  for (const auto& in : data) out << instance_to_json(in).dump() << '\n';
}

inline void write_jsonl(const std::string& path, const std::vector<Instance>& data) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_jsonl(out, data);
}

inline std::vector<Instance> read_jsonl(std::istream& in) {
  std::vector<Instance> data;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError("line " + std::to_string(lineno) + ": " + e.what());
    }
    data.push_back(instance_from_json(j));
  }
  return data;
}

inline std::vector<Instance> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_jsonl(in);
}

// ---------------------------------------------------------------------------
// VQA-v1 style export: a questions file {"questions": [{question_id,
// question, ...}]} and an annotations file {"annotations": [{question_id,
// answer_type, answers: [{answer}]}]}. Only question/answer fields are
// carried over; captions, labels and features stay empty.

inline std::vector<Instance> read_vqa_v1(std::istream& questions, std::istream& annotations) {
  nlohmann::json q, a;
  try {
    q = nlohmann::json::parse(questions);
    a = nlohmann::json::parse(annotations);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("VQA file: ") + e.what());
  }
  try {
    std::map<std::int64_t, const nlohmann::json*> by_id;
    for (const auto& ann : a.at("annotations")) by_id[ann.at("question_id").get<std::int64_t>()] = &ann;
    std::vector<Instance> out;
    for (const auto& qq : q.at("questions")) {
      const auto qid = qq.at("question_id").get<std::int64_t>();
      auto it = by_id.find(qid);
      if (it == by_id.end()) throw DataError("question " + std::to_string(qid) + " has no annotation");
      const auto& ann = *it->second;
      Instance in;
      in.id = std::to_string(qid);
      in.question = tokenize(qq.at("question").get<std::string>());
      in.question_type = parse_answer_type(ann.at("answer_type").get<std::string>());
      for (const auto& ans : ann.at("answers")) in.answers.push_back(normalize_answer(ans.at("answer").get<std::string>()));
      out.push_back(std::move(in));
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("VQA file: ") + e.what());
  }
}

inline std::vector<Instance> read_vqa_v1(const std::string& questions_path, const std::string& annotations_path) {
  std::ifstream q(questions_path), a(annotations_path);
  if (!q) throw std::runtime_error("cannot open " + questions_path);
  if (!a) throw std::runtime_error("cannot open " + annotations_path);
  return read_vqa_v1(q, a);
}

}  // namespace xvqa
