#include "priorshift/priors.hpp"

#include <algorithm>
#include <fstream>
#include <future>
#include <sstream>
#include <thread>

#include "priorshift/errors.hpp"

namespace priorshift {

Eigen::Map<const Eigen::RowVectorXd> AnswerDistribution::rowView(TypeId type_id) const {
  if (type_id >= 0 && type_id < rows.rows()) {
    Eigen::Map<const Eigen::RowVectorXd> row(rows.data() + type_id * rows.cols(), rows.cols());
    if (row.sum() > 0.0) return row;
  }
  if (fallback.size() == answers() && fallback.sum() > 0.0)
    return Eigen::Map<const Eigen::RowVectorXd>(fallback.data(), fallback.size());
  throw ValidationError("answer distribution is empty for type " + std::to_string(type_id) +
                        " and has no fallback mass");
}

PriorTable::PriorTable(std::size_t n_types, std::size_t n_answers)
    : counts_(CountMatrix::Zero(static_cast<Eigen::Index>(n_types), static_cast<Eigen::Index>(n_answers))) {}

PriorTable::PriorTable(CountMatrix counts) : counts_(std::move(counts)) {
  if ((counts_.array() < 0).any()) throw ValidationError("prior counts must be nonnegative");
}

PriorTable& PriorTable::operator+=(const PriorTable& other) {
  if (other.counts_.rows() != counts_.rows() || other.counts_.cols() != counts_.cols())
    throw ValidationError("prior table shapes differ");
  counts_ += other.counts_;
  return *this;
}

namespace {

Eigen::RowVectorXd normalized(const Eigen::RowVectorXd& row) {
  const double s = row.sum();
  return s > 0.0 ? Eigen::RowVectorXd(row / s) : row;
}

}  // namespace

AnswerDistribution PriorTable::distribution() const {
  AnswerDistribution d;
  d.rows = counts_.cast<double>();
  for (Eigen::Index t = 0; t < d.rows.rows(); ++t) d.rows.row(t) = normalized(d.rows.row(t));
  d.fallback = normalized(counts_.cast<double>().colwise().sum());
  return d;
}

PriorTable accumulate(const Dataset& data) {
  const auto n_types = data.type_table.size();
  const auto k = data.vocabulary.size();
  const std::size_t n = data.instances.size();
  const std::size_t workers = std::clamp<std::size_t>(n / 50000, 1, std::max(1u, std::thread::hardware_concurrency()));

  auto count = [&](std::size_t begin, std::size_t end) {
    CountMatrix c = CountMatrix::Zero(static_cast<Eigen::Index>(n_types), static_cast<Eigen::Index>(k));
    for (std::size_t i = begin; i < end; ++i) {
      const auto& inst = data.instances[i];
      if (!inst.top_answer_id) continue;
      if (inst.type_id < 0 || static_cast<std::size_t>(inst.type_id) >= n_types)
        throw IntegrityError("instance type id outside the type table");
      ++c(inst.type_id, *inst.top_answer_id);
    }
    return PriorTable(std::move(c));
  };

  if (workers == 1) return count(0, n);
  std::vector<std::future<PriorTable>> parts;
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t b = 0; b < n; b += chunk) parts.push_back(std::async(std::launch::async, count, b, std::min(n, b + chunk)));
  PriorTable total(n_types, k);
  for (auto& p : parts) total += p.get();
  return total;
}

namespace {

// Inverts one count row in place of `out`; returns false when nothing survives.
bool invertRow(const Eigen::Ref<const Eigen::Matrix<std::int64_t, 1, Eigen::Dynamic>>& counts,
               std::int64_t min_count, Eigen::Ref<Eigen::RowVectorXd> out) {
  out.setZero();
  double total = 0.0;
  for (Eigen::Index a = 0; a < counts.size(); ++a) {
    if (counts[a] > 0 && counts[a] >= min_count) {
      out[a] = 1.0 / static_cast<double>(counts[a]);
      total += out[a];
    }
  }
  if (total <= 0.0) return false;
  out /= total;
  return true;
}

}  // namespace

InvertedPriorTable invert(const PriorTable& table, std::int64_t min_count) {
  if (min_count < 1) throw ValidationError("invert: min_count must be >= 1");
  const auto& c = table.counts();
  InvertedPriorTable inv;
  inv.min_count = min_count;
  inv.probabilities = ProbabilityMatrix::Zero(c.rows(), c.cols());
  for (Eigen::Index t = 0; t < c.rows(); ++t) {
    Eigen::RowVectorXd row(c.cols());
    if (invertRow(c.row(t), min_count, row)) {
      inv.probabilities.row(t) = row;
      for (Eigen::Index a = 0; a < row.size(); ++a)
        if (row[a] > 0.0) inv.retained_answers.insert(static_cast<AnswerId>(a));
    } else if (c.row(t).sum() > 0) {
      inv.flagged_rows.push_back(static_cast<TypeId>(t));
    }
  }
  const Eigen::Matrix<std::int64_t, 1, Eigen::Dynamic> marginal = c.colwise().sum();
  inv.fallback.resize(c.cols());
  if (!invertRow(marginal, min_count, inv.fallback)) inv.fallback.setZero();
  return inv;
}

std::size_t retainedAnswerCount(const PriorTable& table, std::int64_t min_count) {
  const auto& c = table.counts();
  if (c.size() == 0) return 0;
  const auto col_max = c.colwise().maxCoeff();
  std::size_t n = 0;
  for (Eigen::Index a = 0; a < col_max.size(); ++a) n += col_max[a] > 0 && col_max[a] >= min_count;
  return n;
}

std::int64_t calibrateMinCount(const PriorTable& table, std::size_t target) {
  const auto& c = table.counts();
  if (c.size() == 0) throw ValidationError("calibrateMinCount: empty table");
  std::vector<std::int64_t> maxima;
  const auto col_max = c.colwise().maxCoeff();
  for (Eigen::Index a = 0; a < col_max.size(); ++a)
    if (col_max[a] > 0) maxima.push_back(col_max[a]);
  if (maxima.empty()) throw ValidationError("calibrateMinCount: all counts are zero");
  maxima.push_back(1);
  std::sort(maxima.begin(), maxima.end());
  maxima.erase(std::unique(maxima.begin(), maxima.end()), maxima.end());

  // Retained count only changes at the distinct column maxima.
  std::int64_t best = 1;
  std::size_t best_gap = static_cast<std::size_t>(-1);
  for (std::int64_t m : maxima) {
    const std::size_t r = retainedAnswerCount(table, m);
    const std::size_t gap = r > target ? r - target : target - r;
    if (gap < best_gap) {
      best_gap = gap;
      best = m;
    }
  }
  return best;
}

AnswerId sampleAnswer(const AnswerDistribution& dist, TypeId type_id, Rng& rng) {
  const auto row = dist.rowView(type_id);
  const auto k = rng.categorical(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
  return static_cast<AnswerId>(k);
}

Eigen::VectorXd samplePrediction(const AnswerDistribution& dist, TypeId type_id, Rng& rng) {
  Eigen::VectorXd scores = Eigen::VectorXd::Zero(dist.answers());
  scores[sampleAnswer(dist, type_id, rng)] = 1.0;
  return scores;
}

std::vector<double> expectedScores(const AnswerDistribution& dist, const Dataset& data, MetricMode metric) {
  std::vector<double> out;
  out.reserve(data.size());
  for (const auto& inst : data.instances) {
    const auto row = dist.rowView(inst.type_id);
    double e = 0.0;
    // Only answers a human gave can score.
    for (const auto& [id, score] : softScores(inst, data.vocabulary, metric))
      if (id < row.size()) e += row[id] * score;
    out.push_back(e);
  }
  return out;
}

double expectedAccuracy(const AnswerDistribution& dist, const Dataset& data, std::optional<Category> category,
                        MetricMode metric) {
  const auto scores = expectedScores(dist, data, metric);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (category && categoryOf(data.instances[i]) != *category) continue;
    sum += scores[i];
    ++n;
  }
  if (n == 0) throw ValidationError("expectedAccuracy: no instances match the category filter");
  return 100.0 * sum / static_cast<double>(n);
}

// ---------------------------------------------------------------------------

namespace {
constexpr const char* kPriorHeader = "# priorshift prior table v1";
}

std::string priorTableToString(const PriorTable& table) {
  std::ostringstream out;
  const auto& c = table.counts();
  out << kPriorHeader << '\n' << "shape\t" << c.rows() << '\t' << c.cols() << '\n';
  for (Eigen::Index t = 0; t < c.rows(); ++t)
    for (Eigen::Index a = 0; a < c.cols(); ++a)
      if (c(t, a) != 0) out << t << '\t' << a << '\t' << c(t, a) << '\n';
  return out.str();
}

PriorTable priorTableFromString(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::uint64_t offset = 0;
  if (!std::getline(in, line) || line != kPriorHeader) throw ParseError("prior table: missing header", 0);
  offset += line.size() + 1;
  std::string tag;
  Eigen::Index rows = 0, cols = 0;
  if (!std::getline(in, line)) throw ParseError("prior table: missing shape", offset);
  std::istringstream shape(line);
  if (!(shape >> tag >> rows >> cols) || tag != "shape" || rows < 0 || cols < 0)
    throw ParseError("prior table: bad shape line", offset);
  offset += line.size() + 1;
  CountMatrix c = CountMatrix::Zero(rows, cols);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream cell(line);
    Eigen::Index t = 0, a = 0;
    std::int64_t n = 0;
    if (!(cell >> t >> a >> n) || t < 0 || t >= rows || a < 0 || a >= cols || n < 0)
      throw ParseError("prior table: bad cell line '" + line + "'", offset);
    c(t, a) = n;
    offset += line.size() + 1;
  }
  return PriorTable(std::move(c));
}

void writePriorTable(const PriorTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << priorTableToString(table);
  if (!out) throw IoError("write failed for " + path.string());
}

PriorTable readPriorTable(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return priorTableFromString(buf.str());
}

}  // namespace priorshift
