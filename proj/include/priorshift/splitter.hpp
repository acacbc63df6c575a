#pragma once

// Changing-priors split construction, held-out validation and shift metrics.

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "priorshift/ingest.hpp"

namespace priorshift {

/// (question type, top answer) cluster. Instances whose top answer is outside
/// the vocabulary share the sentinel answer id `vocabulary.size()`.
struct ClusterKey {
  TypeId type_id = 0;
  AnswerId answer_id = 0;

  friend auto operator<=>(const ClusterKey&, const ClusterKey&) = default;
};

ClusterKey clusterOf(const Instance& inst, const AnswerVocabulary& vocab);

struct SplitParams {
  double test_fraction = 0.33;
  double coverage_threshold = 0.95;
  int repair_iterations = 100;
  std::uint64_t seed = 0;
};

struct SplitAssignment {
  std::map<ClusterKey, SplitTag> cluster_to_split;  // Train or Test only
  std::set<std::int64_t> val_ids;
  std::uint64_t seed = 0;
  double test_fraction = 0.0;
  double coverage_threshold = 0.0;
  /// Fraction of distinct test-question tokens that also occur in train questions.
  double coverage = 1.0;
  std::uint64_t val_seed = 0;
  /// Types whose instances all fall in a single cluster (cannot straddle splits).
  std::vector<TypeId> single_cluster_types;
  std::vector<std::string> warnings;
  int swaps = 0;

  SplitTag splitOf(const Instance& inst, const AnswerVocabulary& vocab) const;
  friend bool operator==(const SplitAssignment&, const SplitAssignment&) = default;
};

/// Seeded shuffle of the clusters, greedy fill of Test up to
/// `test_fraction * N`, then a swap-repair pass for word coverage.
///
/// Repair: while coverage < threshold and fewer than `repair_iterations`
/// swaps were made, pick the Test cluster (not yet moved) contributing the
/// most tokens absent from Train, ties to the earlier shuffle position, and
/// swap it with the not-yet-moved Train cluster of the same type whose size
/// is nearest (ties to the earlier shuffle position) among those keeping the
/// Test count within one maximum cluster size of the target. Stops when no
/// such pair exists.
SplitAssignment buildCpSplits(const Dataset& data, const SplitParams& params);

/// Samples `n_val` Train question ids without replacement into val_ids.
SplitAssignment holdOutValidation(SplitAssignment assignment, const Dataset& data, std::size_t n_val,
                                  std::uint64_t seed);

/// `n_val` ids drawn uniformly without replacement from `ids` (order kept by
/// draw). Throws ValidationError when n_val >= ids.size() and n_val > 0.
std::vector<std::int64_t> sampleHoldout(const std::vector<std::int64_t>& ids, std::size_t n_val,
                                        std::uint64_t seed);

/// Materializes the Train/Val/Test datasets of an assignment.
struct MaterializedSplits {
  Dataset train;
  Dataset val;
  Dataset test;
};
MaterializedSplits materialize(const Dataset& data, const SplitAssignment& assignment);

/// Fraction of distinct test tokens present in the train tokens (1 if the
/// test side has no tokens).
double wordCoverage(const std::vector<const Instance*>& train, const std::vector<const Instance*>& test);

struct TypeShift {
  TypeId type_id = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  double total_variation = 0.0;
  /// Spearman correlation between p_train(a|t) and 1/p_test(a|t) over answers
  /// with mass in both; NaN when fewer than two such answers or a constant side.
  double inversion = 0.0;
};

struct ShiftReport {
  std::vector<TypeShift> types;        // types present in both splits
  std::vector<TypeId> train_only;
  std::vector<TypeId> test_only;
  double mean_total_variation = 0.0;
  double mean_inversion = 0.0;         // over types with a defined score
  std::size_t inversion_defined = 0;
};

/// Conditional answer distributions use top answers (out-of-vocabulary
/// answers are kept as their own outcome).
ShiftReport measureShift(const Dataset& train, const Dataset& test);

/// Spearman rank correlation with average ranks for ties; NaN if undefined.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

/// Text manifest. Round-trips bit-exactly through readManifest.
std::string manifestToString(const SplitAssignment& a);
SplitAssignment manifestFromString(const std::string& text);
void writeManifest(const SplitAssignment& a, const std::filesystem::path& path);
SplitAssignment readManifest(const std::filesystem::path& path);

}  // namespace priorshift
