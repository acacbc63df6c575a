#pragma once

// Prediction methods behind one interface: prior samplers, the inverted
// sampler, a linear learned model (optionally trained with the random-feature
// regularizer) and top-answer masking of any inner predictor.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "priorshift/losses.hpp"
#include "priorshift/priors.hpp"

namespace priorshift {

struct TrainingHyper {
  double learning_rate = 4.0;
  int epochs = 20;           // trainLearned: all epochs; trainRegularized: phase-2 epochs
  int batch_size = 64;
  double lambda = 0.0;
  int pretrain_epochs = 10;  // phase 1 of trainRegularized
  int hash_dim = 2048;       // question bag-of-tokens dimension
  std::uint64_t seed = 0;
  MetricMode metric = MetricMode::Simple;

  friend bool operator==(const TrainingHyper&, const TrainingHyper&) = default;
};

/// Sparse hashed bag-of-tokens (index, count), sorted by index.
using TokenFeatures = std::vector<std::pair<Eigen::Index, double>>;
TokenFeatures hashTokens(const std::vector<std::string>& tokens, int hash_dim);

/// A question/visual input pair ready for the linear model.
template <typename Scalar>
struct EncodedInputT {
  TokenFeatures question;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> visual;
};
using EncodedInput = EncodedInputT<double>;

/// logits = W [phi(q); v] + b, with W of shape K x (hash_dim + feature_dim).
template <typename Scalar>
struct LinearModelT {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Matrix weights;
  Vector bias;
  int hash_dim = 0;
  int feature_dim = 0;
  TrainingHyper hyper;
  std::vector<double> loss_trace;  // mean training objective per epoch

  LinearModelT() = default;
  LinearModelT(Eigen::Index answers, int hash_dim_, int feature_dim_)
      : weights(Matrix::Zero(answers, hash_dim_ + feature_dim_)),
        bias(Vector::Zero(answers)),
        hash_dim(hash_dim_),
        feature_dim(feature_dim_) {}

  Eigen::Index answers() const noexcept { return bias.size(); }

  template <typename DerivedV>
  Vector logits(const TokenFeatures& question, const Eigen::MatrixBase<DerivedV>& visual) const {
    Vector z = bias;
    for (const auto& [j, x] : question) z += static_cast<Scalar>(x) * weights.col(j);
    if (feature_dim > 0) z.noalias() += weights.rightCols(feature_dim) * visual;
    return z;
  }
  Vector logits(const EncodedInputT<Scalar>& in) const { return logits(in.question, in.visual); }

  friend bool operator==(const LinearModelT& a, const LinearModelT& b) {
    return a.weights == b.weights && a.bias == b.bias && a.hash_dim == b.hash_dim &&
           a.feature_dim == b.feature_dim && a.hyper == b.hyper && a.loss_trace == b.loss_trace;
  }
};
using LinearModel = LinearModelT<double>;

/// Encodes an instance; a missing feature vector becomes zeros and sets
/// `*substituted` when given.
EncodedInput encode(const Instance& inst, int hash_dim, int feature_dim, bool* substituted = nullptr);
/// Dense soft-score target vector of length K.
Eigen::VectorXd targetScores(const Instance& inst, const AnswerVocabulary& vocab,
                             MetricMode metric = MetricMode::Simple);

/// Objective and parameter gradients of one mini-batch:
///   (1/B) sum_i [ lossBce(f(q_i, v_i), a_i) + lambda * lossAux(f(q_i, v_perm[i]), a_i) ]
/// `partner` maps each batch position to the position whose visual features
/// replace its own in the auxiliary term; ignored when lambda == 0.
struct BatchGradient {
  double objective = 0.0;
  Eigen::MatrixXd weights;
  Eigen::VectorXd bias;
};
BatchGradient batchGradient(const LinearModel& model, std::span<const EncodedInput> inputs,
                            std::span<const Eigen::VectorXd> targets, std::span<const std::size_t> partner,
                            double lambda);
/// Objective value only (same definition as batchGradient).
double batchObjective(const LinearModel& model, std::span<const EncodedInput> inputs,
                      std::span<const Eigen::VectorXd> targets, std::span<const std::size_t> partner,
                      double lambda);

/// Shuffled mini-batches of one epoch; depends only on (seed, epoch, n). A
/// trailing batch of one instance is merged into the previous batch.
std::vector<std::vector<std::size_t>> epochBatches(std::size_t n, int batch_size, std::uint64_t seed, int epoch);

/// Plain mini-batch gradient descent on the mean BCE loss for `hyper.epochs`.
LinearModel trainLearned(const Dataset& train, const TrainingHyper& hyper);
/// `hyper.pretrain_epochs` of BCE training, then `hyper.epochs` epochs of
/// BCE + lambda * auxiliary loss on within-batch deranged visual features.
LinearModel trainRegularized(const Dataset& train, const TrainingHyper& hyper);

/// Checkpoint: text header (hyperparameters, dimensions) terminated by "end",
/// then little-endian f64 blocks: weights (row-major), bias, loss trace.
void writeModel(const LinearModel& model, const std::filesystem::path& path);
LinearModel readModel(const std::filesystem::path& path);

// ---------------------------------------------------------------------------

class Predictor;

struct RandomPriorPredictor {
  AnswerDistribution distribution;
};
struct InvertedPriorPredictor {
  InvertedPriorTable table;
  AnswerDistribution distribution;
};
struct LearnedPredictor {
  std::shared_ptr<const LinearModel> model;
};
struct MaskedPredictor {
  std::shared_ptr<const Predictor> inner;
};

class Predictor {
 public:
  using Variant = std::variant<RandomPriorPredictor, InvertedPriorPredictor, LearnedPredictor, MaskedPredictor>;

  static Predictor randomPrior(const PriorTable& table);
  static Predictor invertedPrior(const PriorTable& table, std::int64_t min_count);
  static Predictor learned(LinearModel model);
  static Predictor masked(Predictor inner);

  const Variant& variant() const noexcept { return variant_; }
  /// True for sampler variants (and masks over them).
  bool needsRng() const;
  /// True when a closed-form expected accuracy exists (unmasked samplers).
  bool hasExpectation() const;
  /// Distribution of an unmasked sampler; throws otherwise.
  const AnswerDistribution& distribution() const;
  std::string describe() const;

 private:
  explicit Predictor(Variant v) : variant_(std::move(v)) {}
  Variant variant_;
};

/// Score vector over the K answers. Samplers require `rng`.
Eigen::VectorXd predict(const Predictor& p, const Instance& inst, Rng* rng = nullptr,
                        bool* substituted_features = nullptr);

}  // namespace priorshift
