#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "priorshift/errors.hpp"
#include "priorshift/predictors.hpp"

namespace priorshift {

TokenFeatures hashTokens(const std::vector<std::string>& tokens, int hash_dim) {
  if (hash_dim <= 0) return {};
  std::map<Eigen::Index, double> bins;
  for (const auto& tok : tokens) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char c : tok) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    bins[static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(hash_dim))] += 1.0;
  }
  return {bins.begin(), bins.end()};
}

EncodedInput encode(const Instance& inst, int hash_dim, int feature_dim, bool* substituted) {
  EncodedInput in;
  in.question = hashTokens(inst.tokens, hash_dim);
  if (inst.hasFeatures()) {
    if (inst.features.size() != feature_dim)
      throw ValidationError("question " + std::to_string(inst.question_id) + " has " +
                            std::to_string(inst.features.size()) + " features, model expects " +
                            std::to_string(feature_dim));
    in.visual = inst.features;
  } else {
    in.visual = Eigen::VectorXd::Zero(feature_dim);
    if (substituted && feature_dim > 0) *substituted = true;
  }
  return in;
}

Eigen::VectorXd targetScores(const Instance& inst, const AnswerVocabulary& vocab, MetricMode metric) {
  Eigen::VectorXd a = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(vocab.size()));
  for (const auto& [id, score] : softScores(inst, vocab, metric)) a[id] = score;
  return a;
}

namespace {

void checkBatch(std::span<const EncodedInput> inputs, std::span<const Eigen::VectorXd> targets,
                std::span<const std::size_t> partner, double lambda) {
  if (inputs.empty() || inputs.size() != targets.size())
    throw ValidationError("batch: inputs and targets must be nonempty and equally long");
  if (lambda != 0.0 && partner.size() != inputs.size())
    throw ValidationError("batch: partner map must cover the batch when lambda != 0");
}

}  // namespace

double batchObjective(const LinearModel& model, std::span<const EncodedInput> inputs,
                      std::span<const Eigen::VectorXd> targets, std::span<const std::size_t> partner,
                      double lambda) {
  checkBatch(inputs, targets, partner, lambda);
  double total = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    total += lossBce(model.logits(inputs[i]), targets[i]);
    if (lambda != 0.0)
      total += lambda * lossAux(model.logits(inputs[i].question, inputs[partner[i]].visual), targets[i]);
  }
  return total / static_cast<double>(inputs.size());
}

namespace {

// Per-instance logit gradients of one batch, all taken at the same parameters.
struct Contribution {
  const TokenFeatures* question;
  const Eigen::VectorXd* visual;
  Eigen::VectorXd dz;
};

double batchContributions(const LinearModel& model, std::span<const EncodedInput> inputs,
                          std::span<const Eigen::VectorXd> targets, std::span<const std::size_t> partner,
                          double lambda, std::vector<Contribution>& out) {
  checkBatch(inputs, targets, partner, lambda);
  out.clear();
  double objective = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto z = model.logits(inputs[i]);
    objective += lossBce(z, targets[i]);
    out.push_back({&inputs[i].question, &inputs[i].visual, lossBceGradient(z, targets[i])});
    if (lambda != 0.0) {
      const auto& shuffled = inputs[partner[i]].visual;
      const auto zr = model.logits(inputs[i].question, shuffled);
      objective += lambda * lossAux(zr, targets[i]);
      out.push_back({&inputs[i].question, &shuffled, lambda * lossAuxGradient(zr, targets[i])});
    }
  }
  return objective / static_cast<double>(inputs.size());
}

}  // namespace

BatchGradient batchGradient(const LinearModel& model, std::span<const EncodedInput> inputs,
                            std::span<const Eigen::VectorXd> targets, std::span<const std::size_t> partner,
                            double lambda) {
  std::vector<Contribution> parts;
  BatchGradient g;
  g.objective = batchContributions(model, inputs, targets, partner, lambda, parts);
  g.weights = Eigen::MatrixXd::Zero(model.weights.rows(), model.weights.cols());
  g.bias = Eigen::VectorXd::Zero(model.answers());
  const int fd = model.feature_dim;
  const double inv_b = 1.0 / static_cast<double>(inputs.size());
  for (const auto& c : parts) {
    for (const auto& [j, x] : *c.question) g.weights.col(j) += (inv_b * x) * c.dz;
    if (fd > 0) g.weights.rightCols(fd).noalias() += (inv_b * c.dz) * c.visual->transpose();
    g.bias += inv_b * c.dz;
  }
  return g;
}

std::vector<std::vector<std::size_t>> epochBatches(std::size_t n, int batch_size, std::uint64_t seed, int epoch) {
  if (batch_size < 1) throw ValidationError("batch size must be >= 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(deriveSeed(seed, 0x10000 + static_cast<std::uint64_t>(epoch)));
  rng.shuffle(order);

  std::vector<std::vector<std::size_t>> batches;
  const auto b = static_cast<std::size_t>(batch_size);
  for (std::size_t start = 0; start < n; start += b)
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + b)));
  if (batches.size() >= 2 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  return batches;
}

namespace {

struct TrainingSet {
  std::vector<EncodedInput> inputs;
  std::vector<Eigen::VectorXd> targets;
};

TrainingSet prepare(const Dataset& train, const TrainingHyper& hyper, int& feature_dim) {
  if (train.empty()) throw ValidationError("training set is empty");
  if (hyper.batch_size < 1 || hyper.epochs < 0 || hyper.pretrain_epochs < 0 || hyper.hash_dim < 0)
    throw ValidationError("invalid training hyperparameters");
  if (!(hyper.learning_rate > 0.0) || !std::isfinite(hyper.lambda))
    throw ValidationError("learning rate must be > 0 and lambda finite");
  feature_dim = static_cast<int>(train.instances.front().features.size());
  TrainingSet set;
  set.inputs.reserve(train.size());
  set.targets.reserve(train.size());
  for (const auto& inst : train.instances) {
    if (!inst.hasFeatures())
      throw ValidationError("training instance " + std::to_string(inst.question_id) + " has no features");
    set.inputs.push_back(encode(inst, hyper.hash_dim, feature_dim));
    set.targets.push_back(targetScores(inst, train.vocabulary, hyper.metric));
  }
  return set;
}

void runEpochs(LinearModel& model, const TrainingSet& set, const TrainingHyper& hyper, int first_epoch,
               int n_epochs, double lambda) {
  const std::size_t n = set.inputs.size();
  std::vector<EncodedInput> batch_inputs;
  std::vector<Eigen::VectorXd> batch_targets;
  std::vector<Contribution> parts;
  const int fd = model.feature_dim;
  for (int epoch = first_epoch; epoch < first_epoch + n_epochs; ++epoch) {
    Rng derange(deriveSeed(hyper.seed, 0x20000 + static_cast<std::uint64_t>(epoch)));
    double epoch_total = 0.0;
    for (const auto& batch : epochBatches(n, hyper.batch_size, hyper.seed, epoch)) {
      std::vector<std::size_t> partner;
      if (lambda != 0.0) {
        if (batch.size() < 2)
          throw ValidationError("regularized training needs mini-batches of at least 2 instances");
        partner = derange.derangement(batch.size());
      }
      batch_inputs.clear();
      batch_targets.clear();
      for (auto i : batch) {
        batch_inputs.push_back(set.inputs[i]);
        batch_targets.push_back(set.targets[i]);
      }
      double objective = 0.0;
      try {
        objective = batchContributions(model, batch_inputs, batch_targets, partner, lambda, parts);
      } catch (const ValidationError& e) {
        // The losses reject non-finite logits; during training that means divergence.
        throw DivergenceError(e.what(), epoch);
      }
      if (!std::isfinite(objective)) throw DivergenceError("training objective is not finite", epoch);
      // Same step as subtracting batchGradient, touching only the used columns.
      const double step = hyper.learning_rate / static_cast<double>(batch.size());
      for (const auto& c : parts) {
        for (const auto& [j, x] : *c.question) model.weights.col(j) -= (step * x) * c.dz;
        if (fd > 0) model.weights.rightCols(fd).noalias() -= (step * c.dz) * c.visual->transpose();
        model.bias -= step * c.dz;
      }
      epoch_total += objective * static_cast<double>(batch.size());
    }
    if (!model.weights.allFinite() || !model.bias.allFinite())
      throw DivergenceError("model weights are not finite", epoch);
    model.loss_trace.push_back(epoch_total / static_cast<double>(n));
  }
}

}  // namespace

LinearModel trainLearned(const Dataset& train, const TrainingHyper& hyper) {
  int feature_dim = 0;
  const auto set = prepare(train, hyper, feature_dim);
  LinearModel model(static_cast<Eigen::Index>(train.vocabulary.size()), hyper.hash_dim, feature_dim);
  model.hyper = hyper;
  runEpochs(model, set, hyper, 0, hyper.epochs, 0.0);
  return model;
}

LinearModel trainRegularized(const Dataset& train, const TrainingHyper& hyper) {
  if (hyper.batch_size < 2) throw ValidationError("regularized training needs batch size >= 2");
  int feature_dim = 0;
  const auto set = prepare(train, hyper, feature_dim);
  if (set.inputs.size() < 2) throw ValidationError("regularized training needs at least 2 instances");
  LinearModel model(static_cast<Eigen::Index>(train.vocabulary.size()), hyper.hash_dim, feature_dim);
  model.hyper = hyper;
  runEpochs(model, set, hyper, 0, hyper.pretrain_epochs, 0.0);
  runEpochs(model, set, hyper, hyper.pretrain_epochs, hyper.epochs, hyper.lambda);
  return model;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr const char* kModelMagic = "PSLINEAR 1";

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void putF64(std::ostream& out, double v) {
  std::array<unsigned char, 8> bytes;
  std::memcpy(bytes.data(), &v, 8);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(reinterpret_cast<const char*>(bytes.data()), 8);
}

double getF64(std::istream& in, const std::filesystem::path& path) {
  std::array<unsigned char, 8> bytes;
  const auto offset = static_cast<std::uint64_t>(in.tellg());
  if (!in.read(reinterpret_cast<char*>(bytes.data()), 8))
    throw ParseError(path.string() + ": truncated weight block", offset);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  double v;
  std::memcpy(&v, bytes.data(), 8);
  return v;
}

}  // namespace

void writeModel(const LinearModel& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  const auto& h = m.hyper;
  out << kModelMagic << '\n'
      << "answers " << m.answers() << '\n'
      << "hash_dim " << m.hash_dim << '\n'
      << "feature_dim " << m.feature_dim << '\n'
      << "learning_rate " << fmt17(h.learning_rate) << '\n'
      << "epochs " << h.epochs << '\n'
      << "batch_size " << h.batch_size << '\n'
      << "lambda " << fmt17(h.lambda) << '\n'
      << "pretrain_epochs " << h.pretrain_epochs << '\n'
      << "seed " << h.seed << '\n'
      << "metric " << (h.metric == MetricMode::Official ? "official" : "simple") << '\n'
      << "trace " << m.loss_trace.size() << '\n'
      << "end\n";
  for (Eigen::Index r = 0; r < m.weights.rows(); ++r)
    for (Eigen::Index c = 0; c < m.weights.cols(); ++c) putF64(out, m.weights(r, c));
  for (Eigen::Index r = 0; r < m.bias.size(); ++r) putF64(out, m.bias[r]);
  for (double v : m.loss_trace) putF64(out, v);
  if (!out) throw IoError("write failed for " + path.string());
}

LinearModel readModel(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kModelMagic)
    throw ParseError(path.string() + ": not a model checkpoint", 0);

  std::map<std::string, std::string> header;
  while (std::getline(in, line) && line != "end") {
    const auto space = line.find(' ');
    if (space == std::string::npos)
      throw ParseError(path.string() + ": bad header line '" + line + "'", static_cast<std::uint64_t>(in.tellg()));
    header[line.substr(0, space)] = line.substr(space + 1);
  }
  if (line != "end") throw ParseError(path.string() + ": unterminated header", static_cast<std::uint64_t>(in.tellg()));
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = header.find(key);
    if (it == header.end()) throw ParseError(path.string() + ": missing header key '" + key + "'", 0);
    return it->second;
  };

  TrainingHyper h;
  Eigen::Index answers = 0;
  std::size_t trace = 0;
  try {
    answers = std::stol(get("answers"));
    h.hash_dim = std::stoi(get("hash_dim"));
    h.learning_rate = std::strtod(get("learning_rate").c_str(), nullptr);
    h.epochs = std::stoi(get("epochs"));
    h.batch_size = std::stoi(get("batch_size"));
    h.lambda = std::strtod(get("lambda").c_str(), nullptr);
    h.pretrain_epochs = std::stoi(get("pretrain_epochs"));
    h.seed = std::stoull(get("seed"));
    h.metric = get("metric") == "official" ? MetricMode::Official : MetricMode::Simple;
    trace = std::stoul(get("trace"));
  } catch (const std::logic_error&) {
    throw ParseError(path.string() + ": malformed header value", 0);
  }
  const int feature_dim = std::stoi(get("feature_dim"));
  if (answers < 0 || h.hash_dim < 0 || feature_dim < 0) throw ParseError(path.string() + ": negative dimension", 0);

  LinearModel m(answers, h.hash_dim, feature_dim);
  m.hyper = h;
  for (Eigen::Index r = 0; r < m.weights.rows(); ++r)
    for (Eigen::Index c = 0; c < m.weights.cols(); ++c) m.weights(r, c) = getF64(in, path);
  for (Eigen::Index r = 0; r < m.bias.size(); ++r) m.bias[r] = getF64(in, path);
  m.loss_trace.resize(trace);
  for (auto& v : m.loss_trace) v = getF64(in, path);
  return m;
}

}  // namespace priorshift
