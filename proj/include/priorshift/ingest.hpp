#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "priorshift/core.hpp"

namespace priorshift {

struct QuestionRecord {
  std::int64_t question_id = 0;
  std::int64_t image_id = 0;
  std::string question;
};

struct AnnotationRecord {
  std::int64_t question_id = 0;
  Category answer_type = Category::Other;
  std::string top_answer;                  // normalized multiple_choice_answer
  std::vector<std::string> human_answers;  // normalized, exactly 10
  std::optional<std::string> question_type;
};

struct Dataset {
  std::vector<Instance> instances;
  AnswerVocabulary vocabulary;
  QuestionTypeTable type_table;
  SplitTag tag = SplitTag::Train;
  std::string name;

  std::size_t size() const noexcept { return instances.size(); }
  bool empty() const noexcept { return instances.empty(); }

  /// Throws IntegrityError on out-of-range type ids or duplicate question ids.
  void validate() const;
};

/// Parses a VQA questions file: {"questions": [...]} or a flat list.
/// Records are streamed; memory is bounded by one record plus the output.
std::vector<QuestionRecord> parseQuestions(const std::filesystem::path& path);
/// Parses a VQA annotations file: {"annotations": [...]} or a flat list.
std::vector<AnnotationRecord> parseAnnotations(const std::filesystem::path& path);

/// The `k` most frequent top answers, ties broken lexicographically.
AnswerVocabulary buildVocabulary(const std::vector<AnnotationRecord>& annotations, std::size_t k);

/// Joins annotations to their questions; the vocabulary is built from the
/// annotations' top answers.
Dataset joinToDataset(const std::vector<QuestionRecord>& questions,
                      const std::vector<AnnotationRecord>& annotations,
                      const QuestionTypeTable& type_table, std::size_t vocab_size = 3000);
/// Same, reusing an existing vocabulary (e.g. the training split's).
Dataset joinToDataset(const std::vector<QuestionRecord>& questions,
                      const std::vector<AnnotationRecord>& annotations,
                      const QuestionTypeTable& type_table, const AnswerVocabulary& vocabulary);

/// Re-resolves `top_answer_id` of every instance against a new vocabulary.
Dataset withVocabulary(Dataset data, const AnswerVocabulary& vocabulary);

enum class BiasProfile { Skewed, Inverse, Uniform };

struct SyntheticConfig {
  int n_types = 6;
  int answers_per_type = 4;
  int n_train = 2000;
  int n_test = 1000;
  BiasProfile bias_profile = BiasProfile::Skewed;
  double alpha = 0.5;         // Dirichlet concentration of per-type priors
  int feature_dim = 0;        // 0 selects the vocabulary size
  double feature_signal = 0.5;
  int answers_per_instance = 10;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const SyntheticConfig&, const SyntheticConfig&) = default;
};

std::string_view toString(BiasProfile p);
BiasProfile biasProfileFromString(std::string_view s);

struct SyntheticData {
  Dataset train;
  Dataset test;
  /// Per-type answer distributions used to draw train and test answers
  /// (rows over the type's own answer list, in vocabulary order).
  std::vector<std::vector<double>> train_distributions;
  std::vector<std::vector<double>> test_distributions;
  /// Vocabulary ids each type can answer with.
  std::vector<std::vector<AnswerId>> type_answers;
};

/// Normalized elementwise reciprocal of a strictly positive distribution.
std::vector<double> reciprocalDistribution(const std::vector<double>& p);

/// Deterministic in `config.seed`. Type t is a yes/no type when t % 3 == 0,
/// a counting type when t % 3 == 1 and an open-ended type otherwise.
SyntheticData generateSynthetic(const SyntheticConfig& config);

/// Line-delimited dataset file: a JSON header line (name, split, vocabulary,
/// type table, optional synthetic config) followed by one JSON record per line.
void writeDataset(const Dataset& data, const std::filesystem::path& path,
                  const std::optional<SyntheticConfig>& config = std::nullopt);
Dataset readDataset(const std::filesystem::path& path,
                    std::optional<SyntheticConfig>* config = nullptr);

/// Binary feature file, little-endian:
///   char[8] "PSFEAT01" | u32 dim | u32 reserved (0) | u64 count |
///   count x { i64 question_id | dim x f64 }
using FeatureMap = std::unordered_map<std::int64_t, Eigen::VectorXd>;
void writeFeatures(const FeatureMap& features, const std::filesystem::path& path);
FeatureMap readFeatures(const std::filesystem::path& path);
/// Copies vectors onto matching instances; returns the number attached.
std::size_t attachFeatures(Dataset& data, const FeatureMap& features);

}  // namespace priorshift
