#include "priorshift/harness.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <set>
#include <thread>

#include "priorshift/errors.hpp"

namespace priorshift {

std::string_view toString(EvalMode m) { return m == EvalMode::Expected ? "expected" : "sampled"; }

EvalMode evalModeFromString(std::string_view s) {
  if (s == "expected") return EvalMode::Expected;
  if (s == "sampled") return EvalMode::Sampled;
  throw ValidationError("unknown evaluation mode '" + std::string(s) + "'");
}

std::string_view toString(ReportCategory c) {
  switch (c) {
    case ReportCategory::All: return "All";
    case ReportCategory::YesNo: return "YesNo";
    case ReportCategory::Number: return "Nb";
    case ReportCategory::Other: return "Other";
  }
  return "All";
}

ReportCategory reportCategoryFromString(std::string_view s) {
  for (auto c : kReportCategories)
    if (toString(c) == s) return c;
  throw ValidationError("unknown report category '" + std::string(s) + "'");
}

namespace {

ReportCategory asReport(Category c) {
  switch (c) {
    case Category::YesNo: return ReportCategory::YesNo;
    case Category::Number: return ReportCategory::Number;
    case Category::Other: return ReportCategory::Other;
  }
  return ReportCategory::Other;
}

}  // namespace

SplitReport SplitReport::fromScores(const Dataset& data, const std::vector<double>& scores) {
  if (scores.size() != data.size()) throw ValidationError("score count does not match dataset size");
  SplitReport r;
  r.dataset = data.name;
  std::array<double, 4> sums{};
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto c = static_cast<std::size_t>(asReport(categoryOf(data.instances[i])));
    sums[0] += scores[i];
    sums[c] += scores[i];
    ++r.cells[0].n;
    ++r.cells[c].n;
  }
  for (std::size_t c = 0; c < 4; ++c)
    if (r.cells[c].n > 0) r.cells[c].accuracy = 100.0 * sums[c] / static_cast<double>(r.cells[c].n);
  return r;
}

SplitReport evaluate(const Predictor& p, const Dataset& data, EvalMode mode, std::uint64_t seed,
                     MetricMode metric) {
  if (mode == EvalMode::Expected) {
    if (!p.hasExpectation())
      throw ValidationError("expected mode is only defined for prior samplers, not '" + p.describe() + "'");
    return SplitReport::fromScores(data, expectedScores(p.distribution(), data, metric));
  }
  Rng rng(seed);
  std::vector<double> scores;
  scores.reserve(data.size());
  for (const auto& inst : data.instances) {
    const auto s = predict(p, inst, &rng);
    const auto k = argmaxLowest(s);
    scores.push_back(k < static_cast<Eigen::Index>(data.vocabulary.size())
                         ? softScore(inst.human_answers, data.vocabulary[static_cast<AnswerId>(k)], metric)
                         : 0.0);
  }
  return SplitReport::fromScores(data, scores);
}

double sampledStandardError(const AnswerDistribution& dist, const Dataset& data, MetricMode metric) {
  if (data.empty()) return 0.0;
  double var = 0.0;
  for (const auto& inst : data.instances) {
    const auto row = dist.rowView(inst.type_id);
    double m1 = 0.0, m2 = 0.0;
    for (const auto& [id, s] : softScores(inst, data.vocabulary, metric)) {
      m1 += row[id] * s;
      m2 += row[id] * s * s;
    }
    var += std::max(0.0, m2 - m1 * m1);
  }
  return 100.0 * std::sqrt(var) / static_cast<double>(data.size());
}

PredictorSpec::Kind predictorKindFromString(std::string_view s) {
  using K = PredictorSpec::Kind;
  if (s == "random") return K::RandomPrior;
  if (s == "inverted") return K::InvertedPrior;
  if (s == "learned") return K::Learned;
  if (s == "regularized") return K::Regularized;
  throw ValidationError("unknown predictor '" + std::string(s) + "' (random|inverted|learned|regularized)");
}

Predictor buildPredictor(const PredictorSpec& spec, const Dataset& train) {
  auto build = [&]() -> Predictor {
    switch (spec.kind) {
      case PredictorSpec::Kind::RandomPrior:
        return Predictor::randomPrior(accumulate(train));
      case PredictorSpec::Kind::InvertedPrior: {
        const auto table = accumulate(train);
        const auto m = spec.min_count ? *spec.min_count : calibrateMinCount(table, spec.retained_target);
        return Predictor::invertedPrior(table, m);
      }
      case PredictorSpec::Kind::Learned:
        return Predictor::learned(trainLearned(train, spec.hyper));
      case PredictorSpec::Kind::Regularized:
        return Predictor::learned(trainRegularized(train, spec.hyper));
    }
    throw ValidationError("unknown predictor kind");
  };
  auto p = build();
  return spec.masked ? Predictor::masked(std::move(p)) : p;
}

Dataset filterCategory(const Dataset& data, Category c) {
  Dataset out;
  out.vocabulary = data.vocabulary;
  out.type_table = data.type_table;
  out.tag = data.tag;
  out.name = data.name + "-" + std::string(toString(asReport(c)));
  for (const auto& inst : data.instances)
    if (categoryOf(inst) == c) out.instances.push_back(inst);
  return out;
}

std::pair<Dataset, Dataset> carveValidation(const Dataset& train, std::size_t n_val, std::uint64_t seed) {
  std::vector<std::int64_t> ids;
  ids.reserve(train.size());
  for (const auto& inst : train.instances) ids.push_back(inst.question_id);
  const auto drawn = sampleHoldout(ids, n_val, seed);
  const std::set<std::int64_t> val_ids(drawn.begin(), drawn.end());

  Dataset rest, val;
  for (auto* d : {&rest, &val}) {
    d->vocabulary = train.vocabulary;
    d->type_table = train.type_table;
  }
  rest.tag = SplitTag::Train;
  val.tag = SplitTag::Val;
  rest.name = train.name;
  val.name = train.name + "-val";
  for (const auto& inst : train.instances) (val_ids.contains(inst.question_id) ? val : rest).instances.push_back(inst);
  return {std::move(rest), std::move(val)};
}

ProtocolResult runProtocol(const Dataset& train, const Dataset& test, const PredictorSpec& spec,
                           const ProtocolOptions& options) {
  if (train.empty() || test.empty()) throw ValidationError("protocol needs nonempty train and test data");
  if (!(train.vocabulary == test.vocabulary) || !(train.type_table == test.type_table))
    throw ValidationError("train and test must share vocabulary and type table");

  auto [fit, val] = carveValidation(train, options.n_val, options.seed);
  Dataset eval_test = test;
  if (options.other_only) {
    fit = filterCategory(fit, Category::Other);
    val = filterCategory(val, Category::Other);
    eval_test = filterCategory(eval_test, Category::Other);
  }

  Predictor predictor = buildPredictor(spec, fit);
  const EvalMode mode =
      options.mode == EvalMode::Expected && !predictor.hasExpectation() ? EvalMode::Sampled : options.mode;

  EvalReport report;
  report.predictor = predictor.describe();
  report.mode = mode;
  report.seed = options.seed;
  if (spec.kind == PredictorSpec::Kind::Regularized) report.lambda = spec.hyper.lambda;
  // Val and Test use distinct sampling streams.
  report.splits[SplitTag::Val] =
      val.empty() ? SplitReport{val.name, {}} : evaluate(predictor, val, mode, deriveSeed(options.seed, 1), options.metric);
  report.splits[SplitTag::Test] = evaluate(predictor, eval_test, mode, deriveSeed(options.seed, 2), options.metric);
  return ProtocolResult{std::move(report), std::move(predictor)};
}

std::vector<double> defaultLambdaGrid() { return {0, 1, 2, 3, 4, 5, 6, 8, 10, 12}; }

namespace {

void aggregate(SweepPoint& point) {
  for (const auto& run : point.runs) {
    for (const auto& [tag, split] : run.splits) {
      auto& mean = point.mean[tag];
      auto& spread = point.spread[tag];
      mean.fill(0.0);
      spread.fill(0.0);
    }
  }
  for (auto& [tag, mean] : point.mean) {
    for (std::size_t c = 0; c < 4; ++c) {
      std::vector<double> xs;
      for (const auto& run : point.runs) {
        auto it = run.splits.find(tag);
        if (it != run.splits.end() && it->second.cells[c].accuracy) xs.push_back(*it->second.cells[c].accuracy);
      }
      if (xs.empty()) {
        mean[c] = std::nan("");
        point.spread[tag][c] = std::nan("");
        continue;
      }
      double m = 0.0;
      for (double x : xs) m += x;
      m /= static_cast<double>(xs.size());
      double v = 0.0;
      for (double x : xs) v += (x - m) * (x - m);
      mean[c] = m;
      point.spread[tag][c] = std::sqrt(v / static_cast<double>(xs.size()));
    }
  }
}

}  // namespace

SweepCurve lambdaSweep(const Dataset& train, const Dataset& test, const std::vector<double>& grid,
                       const TrainingHyper& base, const std::vector<std::uint64_t>& seeds,
                       const ProtocolOptions& options) {
  if (grid.empty()) throw ValidationError("lambda grid is empty");
  if (seeds.empty()) throw ValidationError("sweep needs at least one seed");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) throw ValidationError("lambda grid must be strictly increasing");

  struct Job {
    std::size_t point, run;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < grid.size(); ++i)
    for (std::size_t s = 0; s < seeds.size(); ++s) jobs.push_back({i, s});

  SweepCurve curve;
  curve.points.resize(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    curve.points[i].lambda = grid[i];
    curve.points[i].runs.resize(seeds.size());
  }

  auto runJob = [&](const Job& job) {
    PredictorSpec spec;
    spec.kind = PredictorSpec::Kind::Regularized;
    spec.hyper = base;
    spec.hyper.lambda = grid[job.point];
    spec.hyper.seed = seeds[job.run];
    ProtocolOptions opts = options;
    opts.seed = seeds[job.run];
    return runProtocol(train, test, spec, opts).report;
  };

  // Each job writes only its own slot; the merge order is fixed by the grid.
  const std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  for (std::size_t start = 0; start < jobs.size(); start += workers) {
    std::vector<std::future<EvalReport>> pending;
    const std::size_t end = std::min(jobs.size(), start + workers);
    for (std::size_t j = start; j < end; ++j) pending.push_back(std::async(std::launch::async, runJob, jobs[j]));
    for (std::size_t j = start; j < end; ++j)
      curve.points[jobs[j].point].runs[jobs[j].run] = pending[j - start].get();
  }
  for (auto& p : curve.points) aggregate(p);
  return curve;
}

SweepCurve curveFromReports(const std::vector<EvalReport>& reports) {
  std::map<double, SweepPoint> by_lambda;
  for (const auto& r : reports) {
    if (!r.lambda) throw ValidationError("report without lambda cannot join a sweep curve");
    auto& p = by_lambda[*r.lambda];
    p.lambda = *r.lambda;
    p.runs.push_back(r);
  }
  SweepCurve curve;
  for (auto& [lambda, p] : by_lambda) {
    aggregate(p);
    curve.points.push_back(std::move(p));
  }
  return curve;
}

AuditReport auditSplit(const Dataset& train, const Dataset& test, const AuditOptions& options) {
  AuditReport audit;
  audit.shift = measureShift(train, test);
  audit.margin = options.margin;
  const Dataset aligned = train.vocabulary == test.vocabulary ? test : withVocabulary(test, train.vocabulary);
  const auto table = accumulate(train);
  audit.min_count = options.min_count ? *options.min_count : calibrateMinCount(table, options.retained_target);
  const auto random = Predictor::randomPrior(table);
  const auto inverted = Predictor::invertedPrior(table, audit.min_count);
  audit.random_prior = evaluate(random, aligned, EvalMode::Expected, 0, options.metric);
  audit.inverted_prior = evaluate(inverted, aligned, EvalMode::Expected, 0, options.metric);
  const auto& r = audit.random_prior[ReportCategory::YesNo];
  const auto& i = audit.inverted_prior[ReportCategory::YesNo];
  audit.inversion_exploitable = r.accuracy && i.accuracy && (*i.accuracy - *r.accuracy) > options.margin;
  return audit;
}

Dataset poolDatasets(const Dataset& a, const Dataset& b) {
  if (!(a.type_table == b.type_table)) throw ValidationError("cannot pool datasets with different type tables");
  Dataset pooled = a;
  pooled.name = a.name + "+" + b.name;
  const Dataset aligned = withVocabulary(b, a.vocabulary);
  pooled.instances.insert(pooled.instances.end(), aligned.instances.begin(), aligned.instances.end());
  pooled.validate();
  return pooled;
}

std::pair<Dataset, Dataset> iidResplit(const Dataset& pooled, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ValidationError("test_fraction must lie in (0, 1)");
  std::vector<std::size_t> order(pooled.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(pooled.size())));
  std::vector<bool> is_test(pooled.size(), false);
  for (std::size_t i = 0; i < n_test; ++i) is_test[order[i]] = true;

  Dataset train, test;
  for (auto* d : {&train, &test}) {
    d->vocabulary = pooled.vocabulary;
    d->type_table = pooled.type_table;
  }
  train.tag = SplitTag::Train;
  test.tag = SplitTag::Test;
  train.name = pooled.name + "-iid-train";
  test.name = pooled.name + "-iid-test";
  for (std::size_t i = 0; i < pooled.size(); ++i) (is_test[i] ? test : train).instances.push_back(pooled.instances[i]);
  return {std::move(train), std::move(test)};
}

}  // namespace priorshift
