#include <algorithm>
#include <string>

#include "priorshift/errors.hpp"
#include "priorshift/ingest.hpp"
#include "priorshift/rng.hpp"

namespace priorshift {

std::string_view toString(BiasProfile p) {
  switch (p) {
    case BiasProfile::Skewed: return "skewed";
    case BiasProfile::Inverse: return "inverse";
    case BiasProfile::Uniform: return "uniform";
  }
  return "skewed";
}

BiasProfile biasProfileFromString(std::string_view s) {
  if (s == "skewed") return BiasProfile::Skewed;
  if (s == "inverse") return BiasProfile::Inverse;
  if (s == "uniform") return BiasProfile::Uniform;
  throw ValidationError("unknown bias profile '" + std::string(s) + "'");
}

void SyntheticConfig::validate() const {
  if (n_types < 1 || answers_per_type < 2 || n_train < 1 || n_test < 1 || answers_per_instance < 1)
    throw ValidationError("synthetic config: counts must be positive (answers_per_type >= 2)");
  if (!(alpha > 0.0)) throw ValidationError("synthetic config: alpha must be > 0");
  if (!(feature_signal >= 0.0 && feature_signal <= 1.0))
    throw ValidationError("synthetic config: feature_signal must lie in [0, 1]");
  if (feature_dim < 0) throw ValidationError("synthetic config: feature_dim must be >= 0");
}

namespace {

constexpr int kDistractorPool = 40;
constexpr double kMinProbability = 1e-3;

enum class TypeKind { YesNo, Number, Other };

TypeKind kindOf(int t) {
  switch (t % 3) {
    case 0: return TypeKind::YesNo;
    case 1: return TypeKind::Number;
    default: return TypeKind::Other;
  }
}

std::vector<double> dirichlet(Rng& rng, std::size_t n, double alpha) {
  std::vector<double> p(n);
  double total = 0.0;
  for (auto& x : p) total += (x = rng.gamma(alpha));
  // Floor tiny components so the reciprocal profile stays finite.
  double floored = 0.0;
  for (auto& x : p) floored += (x = std::max(x / total, kMinProbability));
  for (auto& x : p) x /= floored;
  return p;
}

}  // namespace

std::vector<double> reciprocalDistribution(const std::vector<double>& p) {
  std::vector<double> q(p.size());
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) total += (q[i] = 1.0 / p[i]);
  for (auto& x : q) x /= total;
  return q;
}

namespace {

struct World {
  AnswerVocabulary vocab;
  QuestionTypeTable types;
  std::vector<std::vector<AnswerId>> type_answers;
};

World buildWorld(const SyntheticConfig& c) {
  std::vector<std::string> entries{"yes", "no"};
  for (int j = 1; j <= c.answers_per_type; ++j) entries.push_back(std::to_string(j));
  const std::size_t first_other = entries.size();
  for (int t = 0; t < c.n_types; ++t)
    if (kindOf(t) == TypeKind::Other)
      for (int j = 0; j < c.answers_per_type; ++j)
        entries.push_back("a" + std::to_string(t) + "w" + std::to_string(j));

  std::vector<std::string> prefixes;
  std::vector<std::vector<AnswerId>> type_answers(static_cast<std::size_t>(c.n_types));
  std::size_t next_other = first_other;
  for (int t = 0; t < c.n_types; ++t) {
    auto& ids = type_answers[static_cast<std::size_t>(t)];
    const std::string tag = "q" + std::to_string(t);
    switch (kindOf(t)) {
      case TypeKind::YesNo:
        prefixes.push_back("is " + tag);
        ids = {0, 1};
        break;
      case TypeKind::Number:
        prefixes.push_back("how many " + tag);
        for (int j = 0; j < c.answers_per_type; ++j) ids.push_back(2 + j);
        break;
      case TypeKind::Other:
        prefixes.push_back("what " + tag);
        for (int j = 0; j < c.answers_per_type; ++j) ids.push_back(static_cast<AnswerId>(next_other++));
        break;
    }
  }
  return World{AnswerVocabulary(std::move(entries)), QuestionTypeTable(std::move(prefixes)),
               std::move(type_answers)};
}

Dataset drawSplit(const SyntheticConfig& c, const World& world,
                  const std::vector<std::vector<double>>& distributions, int count,
                  std::int64_t first_id, SplitTag tag, std::uint64_t stream) {
  Rng rng(deriveSeed(c.seed, stream));
  const int dim = c.feature_dim > 0 ? c.feature_dim : static_cast<int>(world.vocab.size());
  const double s = c.feature_signal;

  Dataset data;
  data.vocabulary = world.vocab;
  data.type_table = world.types;
  data.tag = tag;
  data.name = std::string("synthetic-") + std::string(toString(tag));
  data.instances.reserve(static_cast<std::size_t>(count));

  for (int i = 0; i < count; ++i) {
    const auto t = static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(c.n_types)));
    const auto& ids = world.type_answers[t];
    const std::size_t pick = rng.categorical(distributions[t]);
    const AnswerId answer = ids[pick];

    Instance inst;
    inst.question_id = first_id + i;
    inst.image_id = inst.question_id;
    inst.type_id = static_cast<TypeId>(t);
    inst.tokens = tokenize(world.types.prefix(inst.type_id));
    const int distractors = 2 + static_cast<int>(rng.below(3));
    for (int d = 0; d < distractors; ++d) inst.tokens.push_back("w" + std::to_string(rng.below(kDistractorPool)));

    // A strict majority agrees on the drawn answer so it is the unique mode.
    const int n = c.answers_per_instance;
    const int agree = n / 2 + 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - n / 2)));
    inst.top_answer = world.vocab[answer];
    inst.top_answer_id = answer;
    for (int h = 0; h < n; ++h) {
      if (h < agree) {
        inst.human_answers.push_back(inst.top_answer);
      } else {
        inst.human_answers.push_back(world.vocab[ids[rng.below(ids.size())]]);
      }
    }

    inst.features.resize(dim);
    for (int d = 0; d < dim; ++d) inst.features[d] = (1.0 - s) * rng.normal();
    inst.features[answer] += s;
    data.instances.push_back(std::move(inst));
  }
  return data;
}

}  // namespace

SyntheticData generateSynthetic(const SyntheticConfig& config) {
  config.validate();
  World world = buildWorld(config);
  if (config.feature_dim > 0 && static_cast<std::size_t>(config.feature_dim) < world.vocab.size())
    throw ValidationError("synthetic config: feature_dim must be >= vocabulary size (" +
                          std::to_string(world.vocab.size()) + ")");

  SyntheticData out;
  Rng prior_rng(deriveSeed(config.seed, 1));
  for (const auto& ids : world.type_answers) {
    std::vector<double> p;
    if (config.bias_profile == BiasProfile::Uniform) {
      p.assign(ids.size(), 1.0 / static_cast<double>(ids.size()));
    } else {
      p = dirichlet(prior_rng, ids.size(), config.alpha);
    }
    out.train_distributions.push_back(p);
    out.test_distributions.push_back(config.bias_profile == BiasProfile::Inverse ? reciprocalDistribution(p) : p);
  }

  out.train = drawSplit(config, world, out.train_distributions, config.n_train, 1, SplitTag::Train, 2);
  out.test = drawSplit(config, world, out.test_distributions, config.n_test,
                       static_cast<std::int64_t>(config.n_train) + 1, SplitTag::Test, 3);
  out.type_answers = std::move(world.type_answers);
  return out;
}

}  // namespace priorshift
