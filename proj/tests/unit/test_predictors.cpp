#include <doctest.h>

#include <filesystem>

#include "oracles.hpp"
#include "priorshift/errors.hpp"
#include "priorshift/predictors.hpp"

using namespace priorshift;

namespace {

Eigen::VectorXd randomVector(Rng& rng, Eigen::Index n, double scale) {
  Eigen::VectorXd v(n);
  for (auto& x : v) x = scale * rng.normal();
  return v;
}

Eigen::VectorXd randomTarget(Rng& rng, Eigen::Index n) {
  Eigen::VectorXd a(n);
  for (auto& x : a) x = std::floor(rng.uniform() * 4.0) / 3.0;
  a[static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)))] = 1.0 + 1e-3;  // unique maximizer
  return a.cwiseMin(1.0 + 1e-3);
}

// Flattened (weights, bias) parameter vector of a model.
Eigen::VectorXd flatten(const LinearModel& m) {
  Eigen::VectorXd p(m.weights.size() + m.bias.size());
  p.head(m.weights.size()) = Eigen::Map<const Eigen::VectorXd>(m.weights.data(), m.weights.size());
  p.tail(m.bias.size()) = m.bias;
  return p;
}

void unflatten(LinearModel& m, const Eigen::VectorXd& p) {
  m.weights = Eigen::Map<const Eigen::MatrixXd>(p.data(), m.weights.rows(), m.weights.cols());
  m.bias = p.tail(m.bias.size());
}

SyntheticData smallSynthetic(std::uint64_t seed, int n_train = 300) {
  SyntheticConfig cfg;
  cfg.n_types = 4;
  cfg.answers_per_type = 3;
  cfg.n_train = n_train;
  cfg.n_test = 100;
  cfg.seed = seed;
  return generateSynthetic(cfg);
}

}  // namespace

TEST_CASE("lossBce") {
  const Eigen::VectorXd z = Eigen::VectorXd::Zero(4);
  const Eigen::VectorXd a = Eigen::VectorXd::Constant(4, 0.5);
  CHECK(lossBce(z, a) == doctest::Approx(std::log(2.0)));
  Eigen::VectorXd big(2), one(2);
  big << 1000.0, -1000.0;
  one << 1.0, 0.0;
  CHECK(lossBce(big, one) == doctest::Approx(0.0));
  CHECK(std::isfinite(lossBce(-big, one)));
  CHECK(lossBce(-big, one) == doctest::Approx(1000.0));
  Eigen::VectorXd nan = z;
  nan[1] = std::nan("");
  CHECK_THROWS_AS(lossBce(nan, a), ValidationError);
  CHECK_THROWS_AS(lossBce(Eigen::VectorXd::Zero(3), a), ValidationError);
}

TEST_CASE("lossAux") {
  Eigen::VectorXd target(4);
  target << 0.0, 1.0, 0.3, 0.0;
  CHECK(lossAux(Eigen::VectorXd::Zero(4), target) == doctest::Approx(0.25));
  Eigen::VectorXd peaked = Eigen::VectorXd::Zero(4);
  peaked[1] = 50.0;
  CHECK(lossAux(peaked, target) > 0.999);
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    const auto z = randomVector(rng, 7, 3.0);
    CHECK(softmax(z).sum() == doctest::Approx(1.0).epsilon(1e-12));
    const double l = lossAux(z, randomTarget(rng, 7));
    CHECK(l > 0.0);
    CHECK(l < 1.0);
  }
}

TEST_CASE("loss gradients match finite differences") {
  Rng rng(17);
  for (int point = 0; point < 100; ++point) {
    const Eigen::Index k = 2 + static_cast<Eigen::Index>(rng.below(9));
    const auto z = randomVector(rng, k, 2.0);
    const auto a = randomTarget(rng, k);
    const auto fb = [&](const Eigen::VectorXd& x) { return lossBce(x, a); };
    const auto fa = [&](const Eigen::VectorXd& x) { return lossAux(x, a); };
    CHECK(oracle::relativeError(lossBceGradient(z, a), oracle::numericGradient(fb, z)) < 1e-5);
    CHECK(oracle::relativeError(lossAuxGradient(z, a), oracle::numericGradient(fa, z)) < 1e-5);
  }
}

TEST_CASE("composite objective gradient matches finite differences") {
  Rng rng(23);
  for (int point = 0; point < 20; ++point) {
    const Eigen::Index k = 4;
    LinearModel model(k, 8, 3);
    unflatten(model, randomVector(rng, model.weights.size() + model.bias.size(), 0.5));
    std::vector<EncodedInput> inputs(5);
    std::vector<Eigen::VectorXd> targets(5);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      inputs[i].question = hashTokens({"tok" + std::to_string(rng.below(6)), "x", "y" + std::to_string(i)}, 8);
      inputs[i].visual = randomVector(rng, 3, 1.0);
      targets[i] = randomTarget(rng, k);
    }
    const auto partner = rng.derangement(inputs.size());
    const double lambda = 3.0 * rng.uniform();
    const auto g = batchGradient(model, inputs, targets, partner, lambda);
    LinearModel probe = model;
    const auto f = [&](const Eigen::VectorXd& p) {
      unflatten(probe, p);
      return batchObjective(probe, inputs, targets, partner, lambda);
    };
    Eigen::VectorXd analytic(g.weights.size() + g.bias.size());
    analytic.head(g.weights.size()) = Eigen::Map<const Eigen::VectorXd>(g.weights.data(), g.weights.size());
    analytic.tail(g.bias.size()) = g.bias;
    CHECK(oracle::relativeError(analytic, oracle::numericGradient(f, flatten(model))) < 1e-5);
    CHECK(g.objective == doctest::Approx(batchObjective(model, inputs, targets, partner, lambda)));
  }
}

TEST_CASE("maskTop") {
  Eigen::VectorXd v(3);
  v << 3, 1, 2;
  const auto once = maskTop(v);
  CHECK(argmaxLowest(once) == 2);
  const auto twice = maskTop(once);
  CHECK(std::isinf(twice[0]));
  CHECK(std::isinf(twice[2]));
  CHECK(argmaxLowest(twice) == 1);
  CHECK(argmaxLowest(maskTop(Eigen::VectorXd::Zero(4))) == 1);  // index 0 masked on ties
  CHECK_THROWS_AS(maskTop(Eigen::VectorXd::Zero(1)), ValidationError);

  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const auto s = randomVector(rng, 2 + static_cast<Eigen::Index>(rng.below(20)), 1.0);
    CHECK(argmaxLowest(maskTop(s)) != argmaxLowest(s));
  }
}

TEST_CASE("epochBatches") {
  const auto b = epochBatches(129, 64, 5, 0);
  std::vector<std::size_t> all;
  for (const auto& x : b) all.insert(all.end(), x.begin(), x.end());
  std::sort(all.begin(), all.end());
  CHECK(all.size() == 129);
  CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
  CHECK(b.size() == 2);  // the trailing single instance joins the previous batch
  CHECK(b.back().size() == 65);
  CHECK(epochBatches(130, 64, 5, 0).size() == 3);
  CHECK(epochBatches(129, 64, 5, 0) == b);
  CHECK(epochBatches(129, 64, 5, 1) != b);
}

TEST_CASE("trainLearned") {
  SUBCASE("memorizes a single instance") {
    auto d = smallSynthetic(1).train;
    d.instances.resize(1);
    TrainingHyper h;
    h.epochs = 400;
    h.hash_dim = 32;
    const auto m = trainLearned(d, h);
    const auto in = encode(d.instances[0], m.hash_dim, m.feature_dim);
    const auto target = targetScores(d.instances[0], d.vocabulary);
    // Soft targets put a floor under BCE: the mean binary entropy of the targets.
    double floor = 0.0;
    for (double a : target)
      if (a > 0.0 && a < 1.0) floor -= a * std::log(a) + (1.0 - a) * std::log(1.0 - a);
    floor /= static_cast<double>(target.size());
    CHECK(lossBce(m.logits(in), target) - floor < 0.01);
    CHECK(m.loss_trace.size() == 400);
  }
  SUBCASE("deterministic per seed") {
    const auto d = smallSynthetic(2).train;
    TrainingHyper h;
    h.epochs = 3;
    h.hash_dim = 64;
    h.seed = 4;
    CHECK(trainLearned(d, h) == trainLearned(d, h));
    auto h2 = h;
    h2.seed = 5;
    CHECK_FALSE(trainLearned(d, h) == trainLearned(d, h2));
  }
  SUBCASE("training step equals the batch gradient step") {
    auto d = smallSynthetic(3).train;
    d.instances.resize(40);
    TrainingHyper h;
    h.epochs = 1;
    h.batch_size = 40;
    h.hash_dim = 16;
    h.learning_rate = 0.7;
    const auto m = trainLearned(d, h);
    LinearModel zero(static_cast<Eigen::Index>(d.vocabulary.size()), 16, m.feature_dim);
    std::vector<EncodedInput> in;
    std::vector<Eigen::VectorXd> tg;
    const auto batches = epochBatches(40, 40, h.seed, 0);
    for (auto i : batches[0]) {
      in.push_back(encode(d.instances[i], 16, m.feature_dim));
      tg.push_back(targetScores(d.instances[i], d.vocabulary));
    }
    const auto g = batchGradient(zero, in, tg, {}, 0.0);
    CHECK((m.weights - (-0.7 * g.weights)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((m.bias - (-0.7 * g.bias)).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("errors") {
    auto d = smallSynthetic(4).train;
    TrainingHyper h;
    d.instances[3].features = Eigen::VectorXd();
    CHECK_THROWS_AS(trainLearned(d, h), ValidationError);
    CHECK_THROWS_AS(trainLearned(Dataset{}, h), ValidationError);
    // Extreme inputs overflow the logits after the first update.
    auto extreme = smallSynthetic(4).train;
    for (auto& inst : extreme.instances) inst.features *= 1e300;
    CHECK_THROWS_AS(trainLearned(extreme, h), DivergenceError);
  }
}

TEST_CASE("trainRegularized") {
  const auto d = smallSynthetic(6).train;
  TrainingHyper h;
  h.hash_dim = 32;
  h.pretrain_epochs = 3;
  h.epochs = 4;
  h.seed = 8;

  SUBCASE("lambda zero equals continued plain training") {
    h.lambda = 0.0;
    auto plain = h;
    plain.epochs = h.pretrain_epochs + h.epochs;
    const auto a = trainRegularized(d, h);
    const auto b = trainLearned(d, plain);
    CHECK(a.weights == b.weights);
    CHECK(a.bias == b.bias);
    CHECK(a.loss_trace == b.loss_trace);
  }
  SUBCASE("huge lambda drives question-only predictions away from the answer") {
    auto tiny = d;
    tiny.instances.resize(24);
    h.lambda = 1e6;
    h.learning_rate = 1e-4;
    h.epochs = 30;
    const auto m = trainRegularized(tiny, h);
    const double k = static_cast<double>(tiny.vocabulary.size());
    double mean_aux = 0.0;
    for (const auto& inst : tiny.instances) {
      const auto in = encode(inst, m.hash_dim, m.feature_dim);
      const Eigen::VectorXd zero = Eigen::VectorXd::Zero(m.feature_dim);
      mean_aux += lossAux(m.logits(in.question, zero), targetScores(inst, tiny.vocabulary));
    }
    mean_aux /= static_cast<double>(tiny.size());
    CHECK(mean_aux < 1.0 / k + 0.05);
  }
  SUBCASE("needs batches of two") {
    h.batch_size = 1;
    h.lambda = 1.0;
    CHECK_THROWS_AS(trainRegularized(d, h), ValidationError);
  }
}

TEST_CASE("checkpoint round trip") {
  const auto d = smallSynthetic(9).train;
  TrainingHyper h;
  h.hash_dim = 16;
  h.epochs = 2;
  h.lambda = 0.5;
  h.pretrain_epochs = 1;
  h.metric = MetricMode::Official;
  const auto m = trainRegularized(d, h);
  const auto path = std::filesystem::path(PRIORSHIFT_TEST_TMP) / "model.bin";
  std::filesystem::create_directories(path.parent_path());
  writeModel(m, path);
  CHECK(readModel(path) == m);
  CHECK_THROWS_AS(readModel(path.string() + ".missing"), IoError);
}

TEST_CASE("Predictor variants") {
  const auto s = smallSynthetic(10, 600);
  const auto table = accumulate(s.train);
  Rng rng(1);

  const auto random = Predictor::randomPrior(table);
  CHECK(random.needsRng());
  CHECK(random.hasExpectation());
  CHECK(random.describe() == "random-prior");
  const auto v = predict(random, s.test.instances[0], &rng);
  CHECK(v.sum() == 1.0);
  CHECK_THROWS_AS(predict(random, s.test.instances[0]), ValidationError);

  const auto inverted = Predictor::invertedPrior(table, 2);
  CHECK(inverted.describe() == "inverted-prior(min_count=2)");

  TrainingHyper h;
  h.hash_dim = 32;
  h.epochs = 3;
  const auto learned = Predictor::learned(trainLearned(s.train, h));
  CHECK_FALSE(learned.needsRng());
  CHECK_FALSE(learned.hasExpectation());
  CHECK_THROWS_AS(learned.distribution(), ValidationError);

  const auto masked = Predictor::masked(learned);
  for (const auto& inst : s.test.instances) {
    const auto base = predict(learned, inst);
    const auto m = predict(masked, inst);
    CHECK(argmaxLowest(m) != argmaxLowest(base));
  }
  CHECK_FALSE(masked.hasExpectation());

  auto no_features = s.test.instances[0];
  no_features.features = Eigen::VectorXd();
  bool substituted = false;
  predict(learned, no_features, nullptr, &substituted);
  CHECK(substituted);

  const auto masked_sampler = Predictor::masked(random);
  const auto ms = predict(masked_sampler, s.test.instances[0], &rng);
  CHECK(std::isinf(ms.minCoeff()));
}
