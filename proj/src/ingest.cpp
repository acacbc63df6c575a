#include "priorshift/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <unordered_set>

#include <json.hpp>

#include "priorshift/errors.hpp"

namespace priorshift {

using nlohmann::json;

void Dataset::validate() const {
  std::unordered_set<std::int64_t> seen;
  seen.reserve(instances.size());
  for (const auto& inst : instances) {
    if (inst.type_id < 0 || static_cast<std::size_t>(inst.type_id) >= type_table.size())
      throw IntegrityError("question " + std::to_string(inst.question_id) + " has type id " +
                           std::to_string(inst.type_id) + " outside the type table");
    if (!seen.insert(inst.question_id).second)
      throw IntegrityError("duplicate question_id " + std::to_string(inst.question_id) +
                           " in dataset '" + name + "'");
  }
}

namespace {

// Streams the record objects of a VQA json file through `on_record`, without
// keeping them in the parsed document. Records live either in a flat top-level
// list or in the list stored under `list_key` of a top-level object.
void streamRecords(const std::filesystem::path& path, const std::string& list_key,
                   const std::function<void(const json&)>& on_record) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());

  int record_depth = -1;
  bool in_list = false;
  auto callback = [&](int depth, json::parse_event_t event, json& parsed) -> bool {
    if (depth == 0 && record_depth < 0) {
      if (event == json::parse_event_t::array_start) {
        record_depth = 1;
        in_list = true;
      } else if (event == json::parse_event_t::object_start) {
        record_depth = 2;
      }
      return true;
    }
    if (record_depth == 2 && depth == 1 && event == json::parse_event_t::key) {
      in_list = parsed.is_string() && parsed.get_ref<const std::string&>() == list_key;
      return true;
    }
    if (in_list && depth == record_depth && event == json::parse_event_t::object_end) {
      on_record(parsed);
      return false;
    }
    return true;
  };

  try {
    const json rest = json::parse(in, callback, /*allow_exceptions=*/true);
    (void)rest;
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), e.byte);
  } catch (const json::type_error& e) {
    throw ParseError(path.string() + ": unexpected field type: " + e.what(),
                     static_cast<std::uint64_t>(in.tellg()));
  } catch (const json::out_of_range& e) {
    throw ParseError(path.string() + ": missing field: " + e.what(),
                     static_cast<std::uint64_t>(in.tellg()));
  }
}

}  // namespace

std::vector<QuestionRecord> parseQuestions(const std::filesystem::path& path) {
  std::vector<QuestionRecord> out;
  std::unordered_set<std::int64_t> seen;
  streamRecords(path, "questions", [&](const json& r) {
    QuestionRecord q;
    q.question_id = r.at("question_id").get<std::int64_t>();
    q.image_id = r.at("image_id").get<std::int64_t>();
    q.question = r.at("question").get<std::string>();
    if (!seen.insert(q.question_id).second)
      throw IntegrityError(path.string() + ": duplicate question_id " + std::to_string(q.question_id));
    out.push_back(std::move(q));
  });
  return out;
}

std::vector<AnnotationRecord> parseAnnotations(const std::filesystem::path& path) {
  std::vector<AnnotationRecord> out;
  streamRecords(path, "annotations", [&](const json& r) {
    AnnotationRecord a;
    a.question_id = r.at("question_id").get<std::int64_t>();
    a.answer_type = categoryFromString(r.at("answer_type").get<std::string>());
    a.top_answer = normalizeText(r.at("multiple_choice_answer").get<std::string>());
    const auto& answers = r.at("answers");
    if (!answers.is_array() || answers.size() != 10)
      throw IntegrityError(path.string() + ": question_id " + std::to_string(a.question_id) +
                           " has " + std::to_string(answers.is_array() ? answers.size() : 0) +
                           " human answers, expected 10");
    a.human_answers.reserve(10);
    for (const auto& ans : answers) a.human_answers.push_back(normalizeText(ans.at("answer").get<std::string>()));
    if (auto it = r.find("question_type"); it != r.end() && it->is_string())
      a.question_type = it->get<std::string>();
    out.push_back(std::move(a));
  });
  return out;
}

AnswerVocabulary buildVocabulary(const std::vector<AnnotationRecord>& annotations, std::size_t k) {
  std::unordered_map<std::string, std::size_t> freq;
  for (const auto& a : annotations) ++freq[a.top_answer];
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) {
    return x.second != y.second ? x.second > y.second : x.first < y.first;
  });
  if (ranked.size() > k) ranked.resize(k);
  std::vector<std::string> entries;
  entries.reserve(ranked.size());
  for (auto& [answer, count] : ranked) entries.push_back(answer);
  return AnswerVocabulary(std::move(entries));
}

Dataset joinToDataset(const std::vector<QuestionRecord>& questions,
                      const std::vector<AnnotationRecord>& annotations,
                      const QuestionTypeTable& type_table, std::size_t vocab_size) {
  return joinToDataset(questions, annotations, type_table, buildVocabulary(annotations, vocab_size));
}

Dataset joinToDataset(const std::vector<QuestionRecord>& questions,
                      const std::vector<AnnotationRecord>& annotations,
                      const QuestionTypeTable& type_table, const AnswerVocabulary& vocabulary) {
  std::unordered_map<std::int64_t, std::size_t> by_id;
  by_id.reserve(questions.size());
  for (std::size_t i = 0; i < questions.size(); ++i) {
    if (!by_id.emplace(questions[i].question_id, i).second)
      throw IntegrityError("duplicate question_id " + std::to_string(questions[i].question_id));
  }

  Dataset data;
  data.vocabulary = vocabulary;
  data.type_table = type_table;
  data.instances.reserve(annotations.size());
  for (const auto& a : annotations) {
    auto it = by_id.find(a.question_id);
    if (it == by_id.end())
      throw IntegrityError("annotation for question_id " + std::to_string(a.question_id) +
                           " has no matching question");
    const auto& q = questions[it->second];
    Instance inst;
    inst.question_id = q.question_id;
    inst.image_id = q.image_id;
    inst.tokens = tokenize(q.question);
    std::optional<TypeId> annotated;
    if (a.question_type) annotated = type_table.find(*a.question_type);
    inst.type_id = annotated ? *annotated : matchPrefix(q.question, type_table);
    inst.annotated_category = a.answer_type;
    inst.human_answers = a.human_answers;
    inst.top_answer = a.top_answer;
    inst.top_answer_id = vocabulary.find(a.top_answer);
    data.instances.push_back(std::move(inst));
  }
  data.validate();
  return data;
}

Dataset withVocabulary(Dataset data, const AnswerVocabulary& vocabulary) {
  data.vocabulary = vocabulary;
  for (auto& inst : data.instances) inst.top_answer_id = vocabulary.find(inst.top_answer);
  return data;
}

// ---------------------------------------------------------------------------
// Dataset files

namespace {

json configToJson(const SyntheticConfig& c) {
  return json{{"n_types", c.n_types},
              {"answers_per_type", c.answers_per_type},
              {"n_train", c.n_train},
              {"n_test", c.n_test},
              {"bias_profile", std::string(toString(c.bias_profile))},
              {"alpha", c.alpha},
              {"feature_dim", c.feature_dim},
              {"feature_signal", c.feature_signal},
              {"answers_per_instance", c.answers_per_instance},
              {"seed", c.seed}};
}

SyntheticConfig configFromJson(const json& j) {
  SyntheticConfig c;
  c.n_types = j.at("n_types").get<int>();
  c.answers_per_type = j.at("answers_per_type").get<int>();
  c.n_train = j.at("n_train").get<int>();
  c.n_test = j.at("n_test").get<int>();
  c.bias_profile = biasProfileFromString(j.at("bias_profile").get<std::string>());
  c.alpha = j.at("alpha").get<double>();
  c.feature_dim = j.at("feature_dim").get<int>();
  c.feature_signal = j.at("feature_signal").get<double>();
  c.answers_per_instance = j.at("answers_per_instance").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

constexpr const char* kDatasetFormat = "priorshift-dataset/1";

}  // namespace

void writeDataset(const Dataset& data, const std::filesystem::path& path,
                  const std::optional<SyntheticConfig>& config) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());

  std::vector<std::string> prefixes(data.type_table.prefixes().begin(),
                                    data.type_table.prefixes().end() - 1);
  json header{{"format", kDatasetFormat},
              {"name", data.name},
              {"split", std::string(toString(data.tag))},
              {"vocabulary", data.vocabulary.entries()},
              {"type_table", prefixes},
              {"prefix_mode", data.type_table.mode() == PrefixMatchMode::RawCharacter ? "raw" : "token"},
              {"synthetic_config", config ? configToJson(*config) : json(nullptr)},
              {"count", data.instances.size()}};
  out << header.dump() << '\n';

  for (const auto& inst : data.instances) {
    json r{{"qid", inst.question_id},
           {"iid", inst.image_id},
           {"tokens", inst.tokens},
           {"type", inst.type_id},
           {"category", inst.annotated_category ? json(std::string(toString(*inst.annotated_category)))
                                                : json(nullptr)},
           {"answers", inst.human_answers},
           {"top", inst.top_answer}};
    if (inst.hasFeatures())
      r["features"] = std::vector<double>(inst.features.data(), inst.features.data() + inst.features.size());
    out << r.dump() << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

Dataset readDataset(const std::filesystem::path& path, std::optional<SyntheticConfig>* config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());

  std::uint64_t offset = 0;
  std::string line;
  auto parseLine = [&](const std::string& text) {
    try {
      return json::parse(text);
    } catch (const json::parse_error& e) {
      throw ParseError(path.string() + ": " + e.what(), offset + e.byte - (e.byte > 0));
    }
  };

  if (!std::getline(in, line)) throw ParseError(path.string() + ": empty dataset file", 0);
  const json header = parseLine(line);
  offset += line.size() + 1;
  if (!header.is_object() || header.value("format", "") != kDatasetFormat)
    throw ParseError(path.string() + ": not a " + std::string(kDatasetFormat) + " file", 0);

  Dataset data;
  try {
    data.name = header.at("name").get<std::string>();
    data.tag = splitFromString(header.at("split").get<std::string>());
    data.vocabulary = AnswerVocabulary(header.at("vocabulary").get<std::vector<std::string>>());
    const auto mode = header.value("prefix_mode", "token") == "raw" ? PrefixMatchMode::RawCharacter
                                                                     : PrefixMatchMode::TokenBoundary;
    data.type_table = QuestionTypeTable(header.at("type_table").get<std::vector<std::string>>(), mode);
    if (config) {
      const auto& c = header.at("synthetic_config");
      *config = c.is_null() ? std::nullopt : std::optional<SyntheticConfig>(configFromJson(c));
    }

    while (std::getline(in, line)) {
      if (line.empty()) {
        offset += 1;
        continue;
      }
      const json r = parseLine(line);
      Instance inst;
      inst.question_id = r.at("qid").get<std::int64_t>();
      inst.image_id = r.at("iid").get<std::int64_t>();
      inst.tokens = r.at("tokens").get<std::vector<std::string>>();
      inst.type_id = r.at("type").get<TypeId>();
      if (const auto& c = r.at("category"); !c.is_null())
        inst.annotated_category = categoryFromString(c.get<std::string>());
      inst.human_answers = r.at("answers").get<std::vector<std::string>>();
      inst.top_answer = r.at("top").get<std::string>();
      inst.top_answer_id = data.vocabulary.find(inst.top_answer);
      if (auto it = r.find("features"); it != r.end()) {
        const auto v = it->get<std::vector<double>>();
        inst.features = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
      }
      data.instances.push_back(std::move(inst));
      offset += line.size() + 1;
    }
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what(), offset);
  }
  data.validate();
  return data;
}

}  // namespace priorshift
