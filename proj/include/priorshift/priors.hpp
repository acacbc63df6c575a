#pragma once

// Per-question-type answer priors, their thresholded inversion, and sampling
// or closed-form scoring of predictors built on them.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "priorshift/ingest.hpp"
#include "priorshift/rng.hpp"

namespace priorshift {

using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ProbabilityMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Row-stochastic answer distribution per type plus a fallback row used for
/// types without mass. Rows are either all-zero or sum to 1.
struct AnswerDistribution {
  ProbabilityMatrix rows;
  Eigen::RowVectorXd fallback;

  Eigen::Index types() const noexcept { return rows.rows(); }
  Eigen::Index answers() const noexcept { return rows.cols(); }
  /// The row for `type_id`, or the fallback when that row is empty. Throws
  /// ValidationError when both are empty.
  Eigen::RowVectorXd rowFor(TypeId type_id) const { return rowView(type_id); }
  /// Non-owning view of the same row.
  Eigen::Map<const Eigen::RowVectorXd> rowView(TypeId type_id) const;
};

/// Counts of top answers per (type, answer).
class PriorTable {
 public:
  PriorTable() = default;
  PriorTable(std::size_t n_types, std::size_t n_answers);
  explicit PriorTable(CountMatrix counts);

  const CountMatrix& counts() const noexcept { return counts_; }
  std::size_t types() const noexcept { return static_cast<std::size_t>(counts_.rows()); }
  std::size_t answers() const noexcept { return static_cast<std::size_t>(counts_.cols()); }

  /// Row-normalized probabilities, with the global marginal as fallback.
  AnswerDistribution distribution() const;

  PriorTable& operator+=(const PriorTable& other);
  friend bool operator==(const PriorTable& a, const PriorTable& b) { return a.counts_ == b.counts_; }

 private:
  CountMatrix counts_;
};

/// Normalized reciprocal counts; zero wherever the count is zero or below the
/// threshold.
struct InvertedPriorTable {
  ProbabilityMatrix probabilities;
  Eigen::RowVectorXd fallback;           // inverted global marginal
  std::set<AnswerId> retained_answers;   // union over rows
  std::vector<TypeId> flagged_rows;      // nonzero source rows emptied by the threshold
  std::int64_t min_count = 1;

  AnswerDistribution distribution() const { return {probabilities, fallback}; }
};

/// counts[t][k] = number of instances of type t with in-vocabulary top answer k.
/// Counted with a parallel reduction over instance chunks.
PriorTable accumulate(const Dataset& data);

InvertedPriorTable invert(const PriorTable& table, std::int64_t min_count = 1);

/// Number of answers that survive `min_count` in at least one row.
std::size_t retainedAnswerCount(const PriorTable& table, std::int64_t min_count);
/// The threshold whose retained-answer count is closest to `target` (ties to
/// the smaller threshold).
std::int64_t calibrateMinCount(const PriorTable& table, std::size_t target);

/// Index drawn from the row of `type_id` (fallback when empty).
AnswerId sampleAnswer(const AnswerDistribution& dist, TypeId type_id, Rng& rng);
/// One-hot score vector of length K at a sampled answer.
Eigen::VectorXd samplePrediction(const AnswerDistribution& dist, TypeId type_id, Rng& rng);

/// 100 * mean over filtered instances of sum_k q(k|t) * softScore(k).
/// `category` empty means all instances. Throws ValidationError when the
/// filtered set is empty.
double expectedAccuracy(const AnswerDistribution& dist, const Dataset& data,
                        std::optional<Category> category = std::nullopt,
                        MetricMode metric = MetricMode::Simple);

/// Per-instance expected soft score (no filtering), in [0, 1].
std::vector<double> expectedScores(const AnswerDistribution& dist, const Dataset& data,
                                   MetricMode metric = MetricMode::Simple);

/// Sparse text form: header, then "type_id<TAB>answer_id<TAB>count" lines for
/// nonzero cells in row-major order.
std::string priorTableToString(const PriorTable& table);
PriorTable priorTableFromString(const std::string& text);
void writePriorTable(const PriorTable& table, const std::filesystem::path& path);
PriorTable readPriorTable(const std::filesystem::path& path);

}  // namespace priorshift
