#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "priorshift/errors.hpp"
#include "priorshift/splitter.hpp"

using namespace priorshift;

namespace {

std::size_t maxClusterSize(const Dataset& d) {
  std::map<ClusterKey, std::size_t> sizes;
  for (const auto& inst : d.instances) ++sizes[clusterOf(inst, d.vocabulary)];
  std::size_t m = 0;
  for (const auto& [k, s] : sizes) m = std::max(m, s);
  return m;
}

}  // namespace

TEST_CASE("buildCpSplits matches the reference greedy rule") {
  for (std::uint64_t seed : {1, 2, 3, 4, 5, 6}) {
    const auto data = oracle::splitFixture(600, seed);
    SplitParams params;
    params.seed = seed * 17;
    const auto got = buildCpSplits(data, params);
    const auto want = oracle::referenceCpSplit(data, params);
    CHECK(got.cluster_to_split == want.assignment);
    CHECK(got.swaps == want.swaps);
    CHECK(got.coverage == doctest::Approx(want.coverage));
  }
}

TEST_CASE("buildCpSplits invariants") {
  const auto data = oracle::splitFixture(900, 11);
  SplitParams params;
  params.seed = 5;
  const auto a = buildCpSplits(data, params);

  SUBCASE("deterministic") { CHECK(a == buildCpSplits(data, params)); }
  SUBCASE("repair runs on the fixture") { CHECK(a.swaps > 0); }
  SUBCASE("cluster atomicity and size fidelity") {
    const auto m = materialize(data, a);
    std::map<ClusterKey, std::set<SplitTag>> seen;
    for (const auto* part : {&m.train, &m.test})
      for (const auto& inst : part->instances) seen[clusterOf(inst, data.vocabulary)].insert(part->tag);
    for (const auto& [k, tags] : seen) CHECK(tags.size() == 1);
    CHECK(m.train.size() + m.test.size() == data.size());
    const double target = params.test_fraction * static_cast<double>(data.size());
    CHECK(std::abs(static_cast<double>(m.test.size()) - target) <= static_cast<double>(maxClusterSize(data)));
  }
  SUBCASE("coverage reported honestly") {
    const auto m = materialize(data, a);
    std::vector<const Instance*> tr, te;
    for (const auto& i : m.train.instances) tr.push_back(&i);
    for (const auto& i : m.test.instances) te.push_back(&i);
    CHECK(wordCoverage(tr, te) == doctest::Approx(a.coverage));
    if (a.coverage < params.coverage_threshold) CHECK_FALSE(a.warnings.empty());
  }
  SUBCASE("out-of-vocabulary answers form one cluster per type") {
    auto d = data;
    for (std::size_t i = 0; i < d.size(); i += 7) d.instances[i].top_answer_id.reset();
    const auto s = buildCpSplits(d, params);
    for (const auto& [k, tag] : s.cluster_to_split) CHECK(k.answer_id <= static_cast<AnswerId>(d.vocabulary.size()));
    const auto m = materialize(d, s);
    CHECK(m.train.size() + m.test.size() == d.size());
  }
  CHECK_THROWS_AS(buildCpSplits(Dataset{}, params), ValidationError);
  params.test_fraction = 1.0;
  CHECK_THROWS_AS(buildCpSplits(data, params), ValidationError);
}

TEST_CASE("single-cluster types are reported") {
  auto data = oracle::splitFixture(300, 2);
  for (auto& inst : data.instances)
    if (inst.type_id == 0) inst.top_answer_id = 0;
  const auto s = buildCpSplits(data, SplitParams{});
  CHECK(std::find(s.single_cluster_types.begin(), s.single_cluster_types.end(), 0) != s.single_cluster_types.end());
}

TEST_CASE("holdout sampling") {
  std::vector<std::int64_t> ids(100);
  std::iota(ids.begin(), ids.end(), 1000);
  const auto a = sampleHoldout(ids, 30, 7);
  CHECK(a.size() == 30);
  CHECK(std::set<std::int64_t>(a.begin(), a.end()).size() == 30);
  CHECK(a == sampleHoldout(ids, 30, 7));
  CHECK(a != sampleHoldout(ids, 30, 8));
  CHECK(sampleHoldout(ids, 0, 7).empty());
  CHECK_THROWS_AS(sampleHoldout(ids, 100, 7), ValidationError);

  const auto data = oracle::splitFixture(400, 3);
  auto s = holdOutValidation(buildCpSplits(data, SplitParams{}), data, 40, 9);
  const auto m = materialize(data, s);
  CHECK(m.val.size() == 40);
  for (const auto& inst : m.val.instances) CHECK(s.cluster_to_split.at(clusterOf(inst, data.vocabulary)) == SplitTag::Train);
  CHECK(m.train.size() + m.val.size() + m.test.size() == data.size());
}

TEST_CASE("manifest round trip") {
  const auto data = oracle::splitFixture(400, 8);
  SplitParams params;
  params.seed = 123456789012345ULL;
  params.test_fraction = 0.3;
  auto s = holdOutValidation(buildCpSplits(data, params), data, 25, 4);
  s.warnings.push_back("a note");
  const auto text = manifestToString(s);
  CHECK(manifestFromString(text) == s);
  const auto path = std::filesystem::path(PRIORSHIFT_TEST_TMP) / "manifest.txt";
  std::filesystem::create_directories(path.parent_path());
  writeManifest(s, path);
  CHECK(readManifest(path) == s);
  CHECK_THROWS_AS(manifestFromString("garbage"), ParseError);
}

TEST_CASE("measureShift") {
  SyntheticConfig cfg;
  cfg.bias_profile = BiasProfile::Inverse;
  cfg.n_train = 6000;
  cfg.n_test = 6000;
  const auto d = generateSynthetic(cfg);

  SUBCASE("identical splits") {
    const auto r = measureShift(d.train, d.train);
    for (const auto& t : r.types) CHECK(t.total_variation == 0.0);
    CHECK(r.mean_total_variation == 0.0);
    CHECK(r.train_only.empty());
    CHECK(r.test_only.empty());
  }
  SUBCASE("inverse profile is detected as inverted") {
    const auto r = measureShift(d.train, d.test);
    CHECK(r.mean_total_variation > 0.2);
    CHECK(r.inversion_defined > 0);
    CHECK(r.mean_inversion > 0.5);
  }
  SUBCASE("types present on one side only") {
    Dataset test = d.test;
    std::erase_if(test.instances, [](const Instance& i) { return i.type_id == 1; });
    const auto r = measureShift(d.train, test);
    CHECK(r.train_only == std::vector<TypeId>{1});
  }
}

TEST_CASE("spearman") {
  CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(spearman({1, 2, 3, 4}, {4, 3, 2, 1}) == doctest::Approx(-1.0));
  CHECK(std::isnan(spearman({1, 1, 1}, {1, 2, 3})));
  CHECK(std::isnan(spearman({1}, {2})));
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> x(12), y(12);
    for (auto& v : x) v = static_cast<double>(rng.below(5));
    for (auto& v : y) v = rng.uniform();
    if (std::isnan(spearman(x, y))) continue;
    CHECK(spearman(x, y) == doctest::Approx(oracle::spearman(x, y)));
  }
}

TEST_CASE("two balanced clusters split apart") {
  std::vector<std::pair<int, int>> rows;
  oracle::repeat(rows, 0, 0, 100);
  oracle::repeat(rows, 0, 1, 100);
  const auto d = oracle::handmade({"yes", "no"}, 1, rows);
  SplitParams params;
  params.test_fraction = 0.5;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    params.seed = seed;
    const auto s = buildCpSplits(d, params);
    const auto m = materialize(d, s);
    CHECK(m.train.size() == 100);
    CHECK(m.test.size() == 100);
    CHECK(m.train.instances[0].top_answer_id != m.test.instances[0].top_answer_id);
    CHECK(s.coverage == 1.0);  // identical word sets everywhere
    CHECK(s.swaps == 0);
  }
}

TEST_CASE("reference rule on 3 types x 4 answers x 50 instances") {
  std::vector<std::pair<int, int>> rows;
  Rng rng(12);
  for (int t = 0; t < 3; ++t)
    for (int a = 0; a < 4; ++a) oracle::repeat(rows, t, 4 * t + a, 10 + static_cast<int>(rng.below(30)));
  std::vector<std::string> answers;
  for (int i = 0; i < 12; ++i) answers.push_back("ans" + std::to_string(i));
  auto d = oracle::handmade(answers, 3, rows);
  for (auto& inst : d.instances)
    if (*inst.top_answer_id % 3 == 0) inst.tokens.push_back("only" + std::to_string(*inst.top_answer_id));
  SplitParams params;
  params.test_fraction = 0.3;
  params.seed = 77;
  const auto got = buildCpSplits(d, params);
  const auto want = oracle::referenceCpSplit(d, params);
  CHECK(got.cluster_to_split == want.assignment);
  CHECK(got.swaps == want.swaps);
}

TEST_CASE("total variation of a flipped two-answer prior") {
  std::vector<std::pair<int, int>> tr, te;
  oracle::repeat(tr, 0, 0, 90);
  oracle::repeat(tr, 0, 1, 10);
  oracle::repeat(te, 0, 0, 10);
  oracle::repeat(te, 0, 1, 90);
  const auto a = oracle::handmade({"yes", "no"}, 1, tr);
  auto b = oracle::handmade({"yes", "no"}, 1, te);
  for (auto& inst : b.instances) inst.question_id += 1000;
  const auto r = measureShift(a, b);
  REQUIRE(r.types.size() == 1);
  CHECK(r.types[0].total_variation == doctest::Approx(0.8));
  CHECK(r.types[0].inversion == doctest::Approx(1.0));
}

TEST_CASE("changing-priors splits shift more than random splits") {
  SyntheticConfig cfg;
  cfg.n_types = 8;
  cfg.answers_per_type = 6;
  cfg.n_train = 3000;
  cfg.n_test = 1;
  cfg.alpha = 2.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    cfg.seed = seed;
    const auto pool = generateSynthetic(cfg).train;
    SplitParams params;
    params.seed = seed;
    const auto m = materialize(pool, buildCpSplits(pool, params));
    Rng rng(seed);
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    Dataset tr = pool, te = pool;
    tr.instances.clear();
    te.instances.clear();
    for (std::size_t i = 0; i < order.size(); ++i)
      (i < m.test.size() ? te : tr).instances.push_back(pool.instances[order[i]]);
    CHECK(measureShift(m.train, m.test).mean_total_variation > measureShift(tr, te).mean_total_variation);
  }
}
