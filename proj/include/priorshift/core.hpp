#pragma once

// Shared domain types: answer vocabulary, question-type prefixes, instances,
// and the soft accuracy metric.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

namespace priorshift {

using AnswerId = std::int32_t;
using TypeId = std::int32_t;

enum class Category { YesNo, Number, Other };
enum class SplitTag { Train, Val, Test };

inline constexpr int kCategoryCount = 3;

std::string_view toString(Category c);
std::string_view toString(SplitTag s);
Category categoryFromString(std::string_view s);  // also accepts "yes/no"
SplitTag splitFromString(std::string_view s);

/// Lowercase, drop punctuation (a '.' between two digits is kept), collapse
/// whitespace runs to one space, trim.
std::string normalizeText(std::string_view text);
std::vector<std::string> tokenize(std::string_view text);

/// True for normalized strings made of digits with at most one inner '.'.
bool isNumeric(std::string_view normalized);

/// Ordered set of distinct normalized answers; the position is the answer id.
class AnswerVocabulary {
 public:
  AnswerVocabulary() = default;
  explicit AnswerVocabulary(std::vector<std::string> entries);

  std::size_t size() const noexcept { return entries_.size(); }
  const std::string& operator[](AnswerId id) const { return entries_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& entries() const noexcept { return entries_; }

  /// Id of an answer after normalization, if present.
  std::optional<AnswerId> find(std::string_view answer) const;

  friend bool operator==(const AnswerVocabulary& a, const AnswerVocabulary& b) {
    return a.entries_ == b.entries_;
  }

 private:
  std::vector<std::string> entries_;
  std::unordered_map<std::string, AnswerId> index_;
};

enum class PrefixMatchMode { TokenBoundary, RawCharacter };

/// Question-type prefixes, with the empty catch-all prefix always last.
class QuestionTypeTable {
 public:
  QuestionTypeTable() = default;
  /// `prefixes` excludes the catch-all; it is appended automatically.
  explicit QuestionTypeTable(std::vector<std::string> prefixes,
                             PrefixMatchMode mode = PrefixMatchMode::TokenBoundary);

  /// The 65 packaged VQA question types.
  static QuestionTypeTable packaged(PrefixMatchMode mode = PrefixMatchMode::TokenBoundary);
  /// One prefix per line; a blank line (the catch-all) terminates the list.
  static QuestionTypeTable fromFile(const std::filesystem::path& path,
                                    PrefixMatchMode mode = PrefixMatchMode::TokenBoundary);
  static QuestionTypeTable fromText(std::string_view text,
                                    PrefixMatchMode mode = PrefixMatchMode::TokenBoundary);

  /// Number of types including the catch-all.
  std::size_t size() const noexcept { return prefixes_.size(); }
  TypeId catchAll() const noexcept { return static_cast<TypeId>(prefixes_.size() - 1); }
  const std::string& prefix(TypeId t) const { return prefixes_.at(static_cast<std::size_t>(t)); }
  const std::vector<std::string>& prefixes() const noexcept { return prefixes_; }
  PrefixMatchMode mode() const noexcept { return mode_; }

  /// Exact lookup of a normalized prefix string (used for annotated types).
  std::optional<TypeId> find(std::string_view prefix) const;

  std::string toText() const;

  friend bool operator==(const QuestionTypeTable& a, const QuestionTypeTable& b) {
    return a.prefixes_ == b.prefixes_ && a.mode_ == b.mode_;
  }

 private:
  std::vector<std::string> prefixes_;
  std::vector<std::vector<std::string>> prefix_tokens_;
  PrefixMatchMode mode_ = PrefixMatchMode::TokenBoundary;

  friend TypeId matchPrefix(std::string_view, const QuestionTypeTable&);
};

/// Longest matching prefix of the normalized question; catch-all otherwise.
TypeId matchPrefix(std::string_view question_text, const QuestionTypeTable& table);

struct Instance {
  std::int64_t question_id = 0;
  std::int64_t image_id = 0;
  std::vector<std::string> tokens;
  TypeId type_id = 0;
  std::optional<Category> annotated_category;
  std::vector<std::string> human_answers;  // normalized
  std::string top_answer;                  // normalized
  std::optional<AnswerId> top_answer_id;   // empty when out of vocabulary
  Eigen::VectorXd features;                // size 0 when absent

  bool hasFeatures() const noexcept { return features.size() > 0; }
};

/// Annotation wins; otherwise yes/no -> YesNo, numeric -> Number, else Other.
Category categoryOf(const Instance& instance);

enum class MetricMode { Simple, Official };

/// Soft VQA accuracy of `candidate` against the human answers. Both sides
/// are compared after normalization. Throws ValidationError on an empty set.
double softScore(const std::vector<std::string>& human_answers, std::string_view candidate,
                 MetricMode mode = MetricMode::Simple);

/// Sparse soft-score target: answer id -> score, for in-vocabulary answers.
using SoftScoreVector = std::map<AnswerId, double>;

SoftScoreVector softScores(const Instance& instance, const AnswerVocabulary& vocab,
                           MetricMode mode = MetricMode::Simple);

}  // namespace priorshift
