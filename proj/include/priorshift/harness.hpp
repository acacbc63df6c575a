#pragma once

// Evaluation protocol: held-out in-domain validation carved from the training
// split, evaluation of one trained predictor on both Val and Test (never
// retrained, never selected on Test), lambda sweeps and split audits.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "priorshift/predictors.hpp"
#include "priorshift/splitter.hpp"

namespace priorshift {

enum class EvalMode { Sampled, Expected };
std::string_view toString(EvalMode m);
EvalMode evalModeFromString(std::string_view s);

/// Report rows: All first, then the three answer categories.
enum class ReportCategory { All, YesNo, Number, Other };
inline constexpr std::array<ReportCategory, 4> kReportCategories{ReportCategory::All, ReportCategory::YesNo,
                                                                  ReportCategory::Number, ReportCategory::Other};
std::string_view toString(ReportCategory c);
ReportCategory reportCategoryFromString(std::string_view s);

struct CategoryCell {
  std::size_t n = 0;
  std::optional<double> accuracy;  // percentage; empty when n == 0

  friend bool operator==(const CategoryCell&, const CategoryCell&) = default;
};

struct SplitReport {
  std::string dataset;
  std::array<CategoryCell, 4> cells;  // indexed by ReportCategory

  CategoryCell& operator[](ReportCategory c) { return cells[static_cast<std::size_t>(c)]; }
  const CategoryCell& operator[](ReportCategory c) const { return cells[static_cast<std::size_t>(c)]; }
  bool empty() const { return cells[0].n == 0; }
  /// Builds a report from per-instance scores in [0, 1].
  static SplitReport fromScores(const Dataset& data, const std::vector<double>& scores);

  friend bool operator==(const SplitReport&, const SplitReport&) = default;
};

struct EvalReport {
  std::string predictor;
  EvalMode mode = EvalMode::Sampled;
  std::uint64_t seed = 0;
  std::optional<double> lambda;
  std::map<SplitTag, SplitReport> splits;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Sampled: one draw per instance from Rng(seed); learned predictors score
/// their argmax. Expected: closed form, prior samplers only.
SplitReport evaluate(const Predictor& p, const Dataset& data, EvalMode mode, std::uint64_t seed = 0,
                     MetricMode metric = MetricMode::Simple);

/// Standard deviation (in accuracy points) of the sampled-mode All accuracy
/// of a prior sampler around its expectation: 100 * sqrt(sum_i var_i) / N.
double sampledStandardError(const AnswerDistribution& dist, const Dataset& data,
                            MetricMode metric = MetricMode::Simple);

struct PredictorSpec {
  enum class Kind { RandomPrior, InvertedPrior, Learned, Regularized };
  Kind kind = Kind::RandomPrior;
  bool masked = false;
  /// InvertedPrior threshold; when empty it is calibrated to `retained_target`.
  std::optional<std::int64_t> min_count;
  std::size_t retained_target = 1105;
  TrainingHyper hyper;
};
PredictorSpec::Kind predictorKindFromString(std::string_view s);

/// Builds the predictor from training data only.
Predictor buildPredictor(const PredictorSpec& spec, const Dataset& train);

struct ProtocolOptions {
  std::size_t n_val = 8000;
  bool other_only = false;
  std::uint64_t seed = 0;
  EvalMode mode = EvalMode::Expected;
  MetricMode metric = MetricMode::Simple;
};

/// Keeps instances of one answer category.
Dataset filterCategory(const Dataset& data, Category c);

/// Splits `train` into (train minus val, val) with `n_val` ids drawn by seed.
std::pair<Dataset, Dataset> carveValidation(const Dataset& train, std::size_t n_val, std::uint64_t seed);

struct ProtocolResult {
  EvalReport report;  // Val and Test
  Predictor predictor;
};

/// Carves Val from `train`, optionally restricts every split to Other, builds
/// the predictor on the remaining training data and evaluates it on Val and
/// Test. Expected mode falls back to sampled for predictors without a closed
/// form (learned models are always scored by argmax).
ProtocolResult runProtocol(const Dataset& train, const Dataset& test, const PredictorSpec& spec,
                           const ProtocolOptions& options);

struct SweepPoint {
  double lambda = 0.0;
  std::vector<EvalReport> runs;  // one per seed, in seed order
  /// Mean and population standard deviation over runs, per split and category.
  std::map<SplitTag, std::array<double, 4>> mean;
  std::map<SplitTag, std::array<double, 4>> spread;
};

struct SweepCurve {
  std::vector<SweepPoint> points;  // strictly increasing lambda
};

/// Default grid 0,1,2,3,4,5,6,8,10,12.
std::vector<double> defaultLambdaGrid();

/// One regularized model per (lambda, seed), trained and evaluated in
/// parallel; results are merged in grid order.
SweepCurve lambdaSweep(const Dataset& train, const Dataset& test, const std::vector<double>& grid,
                       const TrainingHyper& base, const std::vector<std::uint64_t>& seeds,
                       const ProtocolOptions& options);

/// Rebuilds a curve from the reports of its runs (e.g. parsed from CSV).
SweepCurve curveFromReports(const std::vector<EvalReport>& reports);

struct AuditOptions {
  double margin = 10.0;
  std::optional<std::int64_t> min_count;  // empty: calibrate to retained_target
  std::size_t retained_target = 1105;
  MetricMode metric = MetricMode::Simple;
};

struct AuditReport {
  ShiftReport shift;
  SplitReport random_prior;    // expected accuracy on test, train priors
  SplitReport inverted_prior;  // expected accuracy on test, inverted train priors
  std::int64_t min_count = 1;
  double margin = 10.0;
  bool inversion_exploitable = false;
};

/// Shift measurement plus a gamability probe on the test split.
AuditReport auditSplit(const Dataset& train, const Dataset& test, const AuditOptions& options = {});

/// Pools two datasets (test answers re-resolved against train's vocabulary).
Dataset poolDatasets(const Dataset& a, const Dataset& b);
/// Uniform per-instance resplit into (train, test).
std::pair<Dataset, Dataset> iidResplit(const Dataset& pooled, double test_fraction, std::uint64_t seed);

// --- Emitters ---------------------------------------------------------------

/// CSV columns: predictor,dataset,split,category,n,accuracy,mode,seed,lambda
inline constexpr const char* kCsvHeader = "predictor,dataset,split,category,n,accuracy,mode,seed,lambda";
std::string reportToCsv(const std::vector<EvalReport>& reports);
std::vector<EvalReport> reportsFromCsv(const std::string& csv);
std::string curveToCsv(const SweepCurve& curve);

/// Aligned plain-text table, one row per report, Val block then Test block;
/// unavailable cells render as "--".
std::string reportToTable(const std::vector<EvalReport>& reports);
std::string auditToText(const AuditReport& audit, const Dataset& train);

/// Static SVG line chart of accuracy versus lambda for the Val and Test
/// splits in one category.
std::string curveToSvg(const SweepCurve& curve, ReportCategory category = ReportCategory::All);

void writeText(const std::string& text, const std::filesystem::path& path);
std::string readText(const std::filesystem::path& path);

}  // namespace priorshift
