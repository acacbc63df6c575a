#include <doctest.h>

#include <filesystem>

#include "oracles.hpp"
#include "priorshift/errors.hpp"
#include "priorshift/priors.hpp"

using namespace priorshift;

TEST_CASE("accumulate counts top answers per type") {
  std::vector<std::pair<int, int>> rows{{0, 0}, {0, 0}, {0, 1}, {1, 2}};
  const auto d = oracle::handmade({"yes", "no", "red"}, 2, rows);
  const auto t = accumulate(d);
  CHECK(t.types() == 3);  // two prefixes plus the catch-all
  CHECK(t.answers() == 3);
  CHECK(t.counts()(0, 0) == 2);
  CHECK(t.counts()(0, 1) == 1);
  CHECK(t.counts()(1, 2) == 1);
  CHECK(t.counts().sum() == 4);

  auto empty = d;
  empty.instances.clear();
  CHECK(accumulate(empty).counts().sum() == 0);

  auto with_oov = d;
  with_oov.instances[0].top_answer_id.reset();
  CHECK(accumulate(with_oov).counts()(0, 0) == 1);
}

TEST_CASE("parallel accumulation equals a naive count") {
  SyntheticConfig cfg;
  cfg.n_types = 12;
  cfg.answers_per_type = 8;
  cfg.n_train = 150000;
  cfg.n_test = 1;
  cfg.feature_dim = 1;  // below K would be rejected; use K
  cfg.feature_dim = 0;
  cfg.seed = 2;
  auto d = generateSynthetic(cfg).train;
  for (auto& inst : d.instances) inst.features = Eigen::VectorXd();
  const auto t = accumulate(d);
  CountMatrix naive = CountMatrix::Zero(t.counts().rows(), t.counts().cols());
  for (const auto& inst : d.instances)
    if (inst.top_answer_id) ++naive(inst.type_id, *inst.top_answer_id);
  CHECK(t.counts() == naive);
}

TEST_CASE("distribution rows and fallback") {
  std::vector<std::pair<int, int>> rows;
  oracle::repeat(rows, 0, 0, 3);
  oracle::repeat(rows, 0, 1, 1);
  oracle::repeat(rows, 1, 1, 4);
  const auto d = oracle::handmade({"yes", "no"}, 3, rows);
  const auto dist = accumulate(d).distribution();
  CHECK(dist.rowFor(0)[0] == doctest::Approx(0.75));
  CHECK(dist.rowFor(1)[1] == doctest::Approx(1.0));
  // Type 2 is unseen: the global marginal is used.
  CHECK(dist.rowFor(2)[0] == doctest::Approx(3.0 / 8));
  CHECK(dist.rowFor(2)[1] == doctest::Approx(5.0 / 8));
  for (TypeId t = 0; t < 2; ++t) CHECK(dist.rowFor(t).sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("invert") {
  SUBCASE("two-answer row") {
    std::vector<std::pair<int, int>> rows;
    oracle::repeat(rows, 0, 0, 90);
    oracle::repeat(rows, 0, 1, 10);
    const auto inv = invert(accumulate(oracle::handmade({"yes", "no"}, 1, rows)), 1);
    CHECK(inv.probabilities(0, 0) == doctest::Approx(0.1));
    CHECK(inv.probabilities(0, 1) == doctest::Approx(0.9));
  }
  SUBCASE("empty bins stay empty") {
    std::vector<std::pair<int, int>> rows;
    oracle::repeat(rows, 0, 0, 5);
    const auto table = accumulate(oracle::handmade({"a", "b"}, 1, rows));
    for (std::int64_t m = 1; m <= 5; ++m) {
      const auto inv = invert(table, m);
      CHECK(inv.probabilities(0, 0) == doctest::Approx(1.0));
      CHECK(inv.probabilities(0, 1) == 0.0);
    }
    const auto gone = invert(table, 6);
    CHECK(gone.probabilities.row(0).sum() == 0.0);
    CHECK(gone.flagged_rows == std::vector<TypeId>{0});
  }
  SUBCASE("support preservation and rank reversal on random tables") {
    Rng rng(8);
    for (int trial = 0; trial < 30; ++trial) {
      CountMatrix c(5, 9);
      for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = rng.uniform() < 0.4 ? 0 : 1 + rng.below(200);
      const PriorTable table(c);
      const std::int64_t m = 1 + static_cast<std::int64_t>(rng.below(40));
      const auto inv = invert(table, m);
      for (Eigen::Index t = 0; t < c.rows(); ++t) {
        const double sum = inv.probabilities.row(t).sum();
        CHECK((sum == 0.0 || std::abs(sum - 1.0) < 1e-12));
        for (Eigen::Index a = 0; a < c.cols(); ++a) {
          CHECK((inv.probabilities(t, a) > 0) == (c(t, a) >= m && c(t, a) > 0));
          for (Eigen::Index b = 0; b < c.cols(); ++b) {
            if (inv.probabilities(t, a) == 0 || inv.probabilities(t, b) == 0 || c(t, a) == c(t, b)) continue;
            CHECK((c(t, a) < c(t, b)) == (inv.probabilities(t, a) > inv.probabilities(t, b)));
          }
        }
      }
      // Inverting twice restores the original ranking on strictly positive rows.
      CountMatrix pos(1, 6);
      for (Eigen::Index a = 0; a < 6; ++a) pos(0, a) = 1 + rng.below(50);
      const auto once = invert(PriorTable(pos), 1).probabilities;
      for (Eigen::Index a = 0; a < 6; ++a)
        for (Eigen::Index b = 0; b < 6; ++b)
          if (pos(0, a) != pos(0, b))
            CHECK((pos(0, a) > pos(0, b)) == (1.0 / once(0, a) > 1.0 / once(0, b)));
    }
  }
  CHECK_THROWS_AS(invert(PriorTable(2, 2), 0), ValidationError);
}

TEST_CASE("threshold calibration") {
  CountMatrix c(2, 6);
  c << 50, 20, 10, 5, 2, 1,  //
      0, 30, 0, 8, 0, 3;
  const PriorTable t(c);
  CHECK(retainedAnswerCount(t, 1) == 6);
  CHECK(retainedAnswerCount(t, 6) == 4);
  CHECK(retainedAnswerCount(t, 100) == 0);
  CHECK(retainedAnswerCount(t, calibrateMinCount(t, 4)) == 4);
  CHECK(calibrateMinCount(t, 6) == 1);
}

TEST_CASE("sampling") {
  Rng rng(4);
  AnswerDistribution one{ProbabilityMatrix::Zero(1, 10), Eigen::RowVectorXd::Zero(10)};
  one.rows(0, 7) = 1.0;
  for (int i = 0; i < 100; ++i) {
    const auto v = samplePrediction(one, 0, rng);
    CHECK(v.sum() == 1.0);
    CHECK(v[7] == 1.0);
  }
  AnswerDistribution half{ProbabilityMatrix::Zero(2, 2), Eigen::RowVectorXd::Constant(2, 0.5)};
  half.rows.row(0).setConstant(0.5);
  int hits = 0;
  for (int i = 0; i < 100000; ++i) hits += sampleAnswer(half, 0, rng) == 0;
  CHECK(std::abs(hits / 100000.0 - 0.5) < 0.01);
  // Row 1 is empty: the fallback is used.
  hits = 0;
  for (int i = 0; i < 10000; ++i) hits += sampleAnswer(half, 1, rng) == 0;
  CHECK(std::abs(hits / 10000.0 - 0.5) < 0.03);

  AnswerDistribution none{ProbabilityMatrix::Zero(1, 2), Eigen::RowVectorXd::Zero(2)};
  CHECK_THROWS_AS(sampleAnswer(none, 0, rng), ValidationError);
}

TEST_CASE("expectedAccuracy") {
  SUBCASE("uniform row gives 100/K") {
    std::vector<std::pair<int, int>> rows;
    for (int a = 0; a < 5; ++a) oracle::repeat(rows, 0, a, 3);
    const auto d = oracle::handmade({"a", "b", "c", "d", "e"}, 1, rows);
    const AnswerDistribution u{ProbabilityMatrix::Constant(2, 5, 0.2), Eigen::RowVectorXd::Constant(5, 0.2)};
    CHECK(expectedAccuracy(u, d) == doctest::Approx(20.0));
  }
  SUBCASE("constant answers per type give 100") {
    std::vector<std::pair<int, int>> rows;
    oracle::repeat(rows, 0, 0, 4);
    oracle::repeat(rows, 1, 2, 6);
    const auto d = oracle::handmade({"yes", "no", "red"}, 2, rows);
    CHECK(expectedAccuracy(accumulate(d).distribution(), d) == doctest::Approx(100.0));
    CHECK(expectedAccuracy(accumulate(d).distribution(), d, Category::YesNo) == doctest::Approx(100.0));
    CHECK_THROWS_AS(expectedAccuracy(accumulate(d).distribution(), d, Category::Number), ValidationError);
  }
  SUBCASE("agrees with Monte Carlo") {
    SyntheticConfig cfg;
    cfg.n_train = 1000;
    cfg.n_test = 1000;
    cfg.answers_per_instance = 10;
    cfg.seed = 21;
    const auto s = generateSynthetic(cfg);
    const auto dist = accumulate(s.train).distribution();
    const double closed = expectedAccuracy(dist, s.test);
    const double mc = oracle::monteCarloAccuracy(dist, s.test, 100000, 5);
    CHECK(std::abs(closed - mc) < 0.3);
  }
  SUBCASE("training priors beat uniform on their own data") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      SyntheticConfig cfg;
      cfg.seed = seed;
      const auto s = generateSynthetic(cfg);
      const auto prior = accumulate(s.train);
      const auto k = static_cast<Eigen::Index>(s.train.vocabulary.size());
      const AnswerDistribution u{ProbabilityMatrix::Constant(static_cast<Eigen::Index>(prior.types()), k, 1.0 / k),
                                 Eigen::RowVectorXd::Constant(k, 1.0 / k)};
      CHECK(expectedAccuracy(prior.distribution(), s.train) >= expectedAccuracy(u, s.train));
    }
  }
}

TEST_CASE("prior table text round trip") {
  CountMatrix c(3, 4);
  c << 1, 0, 0, 7,  //
      0, 0, 0, 0,   //
      5, 123456789012, 0, 2;
  const PriorTable t(c);
  CHECK(priorTableFromString(priorTableToString(t)) == t);
  const auto path = std::filesystem::path(PRIORSHIFT_TEST_TMP) / "prior.txt";
  std::filesystem::create_directories(path.parent_path());
  writePriorTable(t, path);
  CHECK(readPriorTable(path) == t);
  CHECK_THROWS_AS(priorTableFromString("not a table"), ParseError);

  PriorTable a(c), b(c);
  a += b;
  CHECK(a.counts()(2, 1) == 2 * 123456789012LL);
}
