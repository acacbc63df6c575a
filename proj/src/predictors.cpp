#include "priorshift/predictors.hpp"

#include <cstdio>

#include "priorshift/errors.hpp"

namespace priorshift {

Predictor Predictor::randomPrior(const PriorTable& table) {
  return Predictor(RandomPriorPredictor{table.distribution()});
}

Predictor Predictor::invertedPrior(const PriorTable& table, std::int64_t min_count) {
  auto inv = invert(table, min_count);
  auto dist = inv.distribution();
  return Predictor(InvertedPriorPredictor{std::move(inv), std::move(dist)});
}

Predictor Predictor::learned(LinearModel model) {
  return Predictor(LearnedPredictor{std::make_shared<const LinearModel>(std::move(model))});
}

Predictor Predictor::masked(Predictor inner) {
  return Predictor(MaskedPredictor{std::make_shared<const Predictor>(std::move(inner))});
}

bool Predictor::needsRng() const {
  return std::visit(
      [](const auto& v) -> bool {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, MaskedPredictor>) return v.inner->needsRng();
        else return !std::is_same_v<T, LearnedPredictor>;
      },
      variant_);
}

bool Predictor::hasExpectation() const {
  return std::holds_alternative<RandomPriorPredictor>(variant_) ||
         std::holds_alternative<InvertedPriorPredictor>(variant_);
}

const AnswerDistribution& Predictor::distribution() const {
  if (const auto* r = std::get_if<RandomPriorPredictor>(&variant_)) return r->distribution;
  if (const auto* i = std::get_if<InvertedPriorPredictor>(&variant_)) return i->distribution;
  throw ValidationError("predictor '" + describe() + "' has no answer distribution");
}

std::string Predictor::describe() const {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, RandomPriorPredictor>) {
          return "random-prior";
        } else if constexpr (std::is_same_v<T, InvertedPriorPredictor>) {
          return "inverted-prior(min_count=" + std::to_string(v.table.min_count) + ")";
        } else if constexpr (std::is_same_v<T, LearnedPredictor>) {
          char buf[64];
          std::snprintf(buf, sizeof buf, "learned(lambda=%g)", v.model->hyper.lambda);
          return buf;
        } else {
          return "masked(" + v.inner->describe() + ")";
        }
      },
      variant_);
}

Eigen::VectorXd predict(const Predictor& p, const Instance& inst, Rng* rng, bool* substituted_features) {
  return std::visit(
      [&](const auto& v) -> Eigen::VectorXd {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, LearnedPredictor>) {
          const auto& m = *v.model;
          return m.logits(encode(inst, m.hash_dim, m.feature_dim, substituted_features));
        } else if constexpr (std::is_same_v<T, MaskedPredictor>) {
          return maskTop(predict(*v.inner, inst, rng, substituted_features));
        } else {
          if (!rng) throw ValidationError("sampling predictor '" + p.describe() + "' needs an rng state");
          return samplePrediction(v.distribution, inst.type_id, *rng);
        }
      },
      p.variant());
}

}  // namespace priorshift
