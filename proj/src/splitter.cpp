#include "priorshift/splitter.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "priorshift/errors.hpp"
#include "priorshift/rng.hpp"

namespace priorshift {

ClusterKey clusterOf(const Instance& inst, const AnswerVocabulary& vocab) {
  const auto oov = static_cast<AnswerId>(vocab.size());
  return ClusterKey{inst.type_id, inst.top_answer_id.value_or(oov)};
}

SplitTag SplitAssignment::splitOf(const Instance& inst, const AnswerVocabulary& vocab) const {
  auto it = cluster_to_split.find(clusterOf(inst, vocab));
  if (it == cluster_to_split.end())
    throw ValidationError("question " + std::to_string(inst.question_id) + " belongs to no assigned cluster");
  if (it->second == SplitTag::Train && val_ids.contains(inst.question_id)) return SplitTag::Val;
  return it->second;
}

double wordCoverage(const std::vector<const Instance*>& train, const std::vector<const Instance*>& test) {
  std::unordered_set<std::string> train_words;
  for (const auto* inst : train) train_words.insert(inst->tokens.begin(), inst->tokens.end());
  std::unordered_set<std::string> test_words;
  for (const auto* inst : test) test_words.insert(inst->tokens.begin(), inst->tokens.end());
  if (test_words.empty()) return 1.0;
  std::size_t covered = 0;
  for (const auto& w : test_words) covered += train_words.contains(w);
  return static_cast<double>(covered) / static_cast<double>(test_words.size());
}

namespace {

struct Cluster {
  ClusterKey key;
  std::size_t size = 0;
  std::vector<std::uint32_t> words;  // distinct word ids
  bool test = false;
  bool moved = false;
};

// Word-presence bookkeeping for the repair pass: per word, the number of
// Train and Test clusters containing it.
class CoverageTracker {
 public:
  explicit CoverageTracker(std::size_t n_words) : train_(n_words, 0), test_(n_words, 0) {}

  void add(const Cluster& c) {
    for (auto w : c.words) bump(w, c.test, +1);
  }
  void remove(const Cluster& c) {
    for (auto w : c.words) bump(w, c.test, -1);
  }

  bool inTrain(std::uint32_t w) const { return train_[w] > 0; }

  double coverage() const {
    return test_words_ == 0 ? 1.0 : static_cast<double>(covered_) / static_cast<double>(test_words_);
  }

 private:
  void bump(std::uint32_t w, bool test, int delta) {
    const bool was_test = test_[w] > 0, was_covered = was_test && train_[w] > 0;
    (test ? test_[w] : train_[w]) += delta;
    const bool is_test = test_[w] > 0, is_covered = is_test && train_[w] > 0;
    test_words_ += static_cast<long>(is_test) - static_cast<long>(was_test);
    covered_ += static_cast<long>(is_covered) - static_cast<long>(was_covered);
  }

  std::vector<int> train_, test_;
  long test_words_ = 0;
  long covered_ = 0;
};

}  // namespace

SplitAssignment buildCpSplits(const Dataset& data, const SplitParams& params) {
  if (data.empty()) throw ValidationError("buildCpSplits: empty dataset");
  if (!(params.test_fraction > 0.0 && params.test_fraction < 1.0))
    throw ValidationError("buildCpSplits: test_fraction must lie in (0, 1)");
  if (!(params.coverage_threshold > 0.0 && params.coverage_threshold <= 1.0))
    throw ValidationError("buildCpSplits: coverage_threshold must lie in (0, 1]");

  std::unordered_map<std::string, std::uint32_t> word_ids;
  std::map<ClusterKey, std::set<std::uint32_t>> cluster_words;
  std::map<ClusterKey, std::size_t> cluster_sizes;
  for (const auto& inst : data.instances) {
    const auto key = clusterOf(inst, data.vocabulary);
    ++cluster_sizes[key];
    auto& words = cluster_words[key];
    for (const auto& tok : inst.tokens)
      words.insert(word_ids.emplace(tok, static_cast<std::uint32_t>(word_ids.size())).first->second);
  }

  std::vector<Cluster> clusters;
  clusters.reserve(cluster_sizes.size());
  for (const auto& [key, size] : cluster_sizes) {
    const auto& words = cluster_words[key];
    clusters.push_back(Cluster{key, size, {words.begin(), words.end()}});
  }
  Rng rng(params.seed);
  rng.shuffle(clusters);

  const double n = static_cast<double>(data.size());
  const double target = params.test_fraction * n;
  std::size_t test_count = 0;
  std::size_t max_size = 0;
  for (auto& c : clusters) {
    max_size = std::max(max_size, c.size);
    if (static_cast<double>(test_count) < target) {
      c.test = true;
      test_count += c.size;
    }
  }

  CoverageTracker tracker(word_ids.size());
  for (const auto& c : clusters) tracker.add(c);

  SplitAssignment out;
  out.seed = params.seed;
  out.test_fraction = params.test_fraction;
  out.coverage_threshold = params.coverage_threshold;

  const double lower = target - static_cast<double>(max_size);
  const double upper = target + static_cast<double>(max_size);
  while (tracker.coverage() < params.coverage_threshold && out.swaps < params.repair_iterations) {
    // Candidates ranked by uncovered-word contribution, then shuffle position.
    std::vector<std::pair<std::size_t, std::size_t>> candidates;  // (uncovered, index)
    for (std::size_t i = 0; i < clusters.size(); ++i) {
      const auto& c = clusters[i];
      if (!c.test || c.moved) continue;
      std::size_t uncovered = 0;
      for (auto w : c.words) uncovered += !tracker.inTrain(w);
      if (uncovered > 0) candidates.emplace_back(uncovered, i);
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });

    std::size_t chosen = clusters.size(), partner = clusters.size();
    for (const auto& [uncovered, i] : candidates) {
      const auto& c = clusters[i];
      std::size_t best_gap = std::numeric_limits<std::size_t>::max();
      for (std::size_t j = 0; j < clusters.size(); ++j) {
        const auto& p = clusters[j];
        if (p.test || p.moved || p.key.type_id != c.key.type_id) continue;
        const double after = static_cast<double>(test_count) - static_cast<double>(c.size) +
                             static_cast<double>(p.size);
        if (after < lower || after > upper) continue;
        const std::size_t gap = p.size > c.size ? p.size - c.size : c.size - p.size;
        if (gap < best_gap) {
          best_gap = gap;
          partner = j;
        }
      }
      if (partner != clusters.size()) {
        chosen = i;
        break;
      }
    }
    if (chosen == clusters.size()) break;

    auto& c = clusters[chosen];
    auto& p = clusters[partner];
    tracker.remove(c);
    tracker.remove(p);
    c.test = false;
    p.test = true;
    c.moved = p.moved = true;
    tracker.add(c);
    tracker.add(p);
    test_count = test_count - c.size + p.size;
    ++out.swaps;
  }

  out.coverage = tracker.coverage();
  if (out.coverage < params.coverage_threshold) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "coverage %.6f below threshold %.6f after %d swaps", out.coverage,
                  params.coverage_threshold, out.swaps);
    out.warnings.emplace_back(buf);
  }

  std::map<TypeId, std::size_t> clusters_per_type;
  for (const auto& c : clusters) {
    out.cluster_to_split.emplace(c.key, c.test ? SplitTag::Test : SplitTag::Train);
    ++clusters_per_type[c.key.type_id];
  }
  for (const auto& [t, count] : clusters_per_type)
    if (count == 1) out.single_cluster_types.push_back(t);
  return out;
}

std::vector<std::int64_t> sampleHoldout(const std::vector<std::int64_t>& ids, std::size_t n_val,
                                        std::uint64_t seed) {
  if (n_val == 0) return {};
  if (n_val >= ids.size())
    throw ValidationError("validation size " + std::to_string(n_val) + " must be smaller than the " +
                          std::to_string(ids.size()) + " training instances");
  std::vector<std::int64_t> pool = ids;
  Rng rng(seed);
  for (std::size_t i = 0; i < n_val; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(n_val);
  return pool;
}

SplitAssignment holdOutValidation(SplitAssignment assignment, const Dataset& data, std::size_t n_val,
                                  std::uint64_t seed) {
  std::vector<std::int64_t> train_ids;
  for (const auto& inst : data.instances) {
    auto it = assignment.cluster_to_split.find(clusterOf(inst, data.vocabulary));
    if (it != assignment.cluster_to_split.end() && it->second == SplitTag::Train)
      train_ids.push_back(inst.question_id);
  }
  const auto drawn = sampleHoldout(train_ids, n_val, seed);
  assignment.val_ids = std::set<std::int64_t>(drawn.begin(), drawn.end());
  assignment.val_seed = seed;
  return assignment;
}

MaterializedSplits materialize(const Dataset& data, const SplitAssignment& assignment) {
  MaterializedSplits out;
  for (auto* d : {&out.train, &out.val, &out.test}) {
    d->vocabulary = data.vocabulary;
    d->type_table = data.type_table;
  }
  out.train.tag = SplitTag::Train;
  out.val.tag = SplitTag::Val;
  out.test.tag = SplitTag::Test;
  out.train.name = data.name + "-cp-train";
  out.val.name = data.name + "-cp-val";
  out.test.name = data.name + "-cp-test";
  for (const auto& inst : data.instances) {
    switch (assignment.splitOf(inst, data.vocabulary)) {
      case SplitTag::Train: out.train.instances.push_back(inst); break;
      case SplitTag::Val: out.val.instances.push_back(inst); break;
      case SplitTag::Test: out.test.instances.push_back(inst); break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shift metrics

namespace {

std::vector<double> averageRanks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ValidationError("spearman: length mismatch");
  if (x.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const auto rx = averageRanks(x), ry = averageRanks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

ShiftReport measureShift(const Dataset& train, const Dataset& test) {
  if (!(train.type_table == test.type_table))
    throw ValidationError("measureShift: train and test use different type tables");
  using Counts = std::map<AnswerId, std::size_t>;
  auto histogram = [](const Dataset& d) {
    std::map<TypeId, Counts> h;
    const auto oov = static_cast<AnswerId>(d.vocabulary.size());
    for (const auto& inst : d.instances) ++h[inst.type_id][inst.top_answer_id.value_or(oov)];
    return h;
  };
  // Answers are compared by string so differing vocabularies cannot alias ids.
  auto byString = [](const Dataset& d, const Counts& c) {
    std::map<std::string, double> p;
    std::size_t total = 0;
    for (const auto& [a, n] : c) total += n;
    const auto oov = static_cast<AnswerId>(d.vocabulary.size());
    for (const auto& [a, n] : c)
      p[a == oov ? std::string("\x01oov") : d.vocabulary[a]] = static_cast<double>(n) / static_cast<double>(total);
    return std::pair{p, total};
  };

  const auto htrain = histogram(train), htest = histogram(test);
  ShiftReport report;
  for (const auto& [t, counts] : htrain) {
    auto it = htest.find(t);
    if (it == htest.end()) {
      report.train_only.push_back(t);
      continue;
    }
    const auto [ptrain, ntrain] = byString(train, counts);
    const auto [ptest, ntest] = byString(test, it->second);
    TypeShift s;
    s.type_id = t;
    s.n_train = ntrain;
    s.n_test = ntest;
    double tv = 0.0;
    std::vector<double> x, y;
    for (const auto& [a, p] : ptrain) {
      auto jt = ptest.find(a);
      const double q = jt == ptest.end() ? 0.0 : jt->second;
      tv += std::abs(p - q);
      if (q > 0.0) {
        x.push_back(p);
        y.push_back(1.0 / q);
      }
    }
    for (const auto& [a, q] : ptest)
      if (!ptrain.contains(a)) tv += q;
    s.total_variation = std::min(1.0, 0.5 * tv);
    s.inversion = spearman(x, y);
    report.types.push_back(s);
  }
  for (const auto& [t, counts] : htest)
    if (!htrain.contains(t)) report.test_only.push_back(t);

  double tv_sum = 0.0, inv_sum = 0.0;
  for (const auto& s : report.types) {
    tv_sum += s.total_variation;
    if (!std::isnan(s.inversion)) {
      inv_sum += s.inversion;
      ++report.inversion_defined;
    }
  }
  if (!report.types.empty()) report.mean_total_variation = tv_sum / static_cast<double>(report.types.size());
  report.mean_inversion = report.inversion_defined > 0
                              ? inv_sum / static_cast<double>(report.inversion_defined)
                              : std::numeric_limits<double>::quiet_NaN();
  return report;
}

// ---------------------------------------------------------------------------
// Manifest

namespace {

std::string formatDouble(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

constexpr const char* kManifestHeader = "# priorshift split manifest v1";

}  // namespace

std::string manifestToString(const SplitAssignment& a) {
  std::ostringstream out;
  out << kManifestHeader << '\n';
  out << "seed\t" << a.seed << '\n';
  out << "test_fraction\t" << formatDouble(a.test_fraction) << '\n';
  out << "coverage_threshold\t" << formatDouble(a.coverage_threshold) << '\n';
  out << "coverage\t" << formatDouble(a.coverage) << '\n';
  out << "swaps\t" << a.swaps << '\n';
  out << "val_seed\t" << a.val_seed << '\n';
  out << "single_cluster_types\t" << a.single_cluster_types.size();
  for (auto t : a.single_cluster_types) out << '\t' << t;
  out << '\n';
  for (const auto& w : a.warnings) out << "warning\t" << w << '\n';
  out << "clusters\t" << a.cluster_to_split.size() << '\n';
  for (const auto& [key, split] : a.cluster_to_split)
    out << key.type_id << '\t' << key.answer_id << '\t' << toString(split) << '\n';
  out << "val_ids\t" << a.val_ids.size() << '\n';
  for (auto id : a.val_ids) out << id << '\n';
  return out.str();
}

SplitAssignment manifestFromString(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::uint64_t offset = 0;
  auto next = [&]() -> std::string& {
    if (!std::getline(in, line)) throw ParseError("split manifest: unexpected end of file", offset);
    offset += line.size() + 1;
    return line;
  };
  auto field = [&](const std::string& name) {
    const auto& l = next();
    if (l.rfind(name + "\t", 0) != 0) throw ParseError("split manifest: expected '" + name + "'", offset);
    return l.substr(name.size() + 1);
  };
  auto toU64 = [&](const std::string& s) {
    std::size_t used = 0;
    try {
      const auto v = std::stoull(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return static_cast<std::uint64_t>(v);
    } catch (const std::exception&) {
      throw ParseError("split manifest: bad integer '" + s + "'", offset);
    }
  };
  auto toI64 = [&](const std::string& s) {
    try {
      return static_cast<std::int64_t>(std::stoll(s));
    } catch (const std::exception&) {
      throw ParseError("split manifest: bad integer '" + s + "'", offset);
    }
  };
  auto toDouble = [&](const std::string& s) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') throw ParseError("split manifest: bad number '" + s + "'", offset);
    return v;
  };

  if (next() != kManifestHeader) throw ParseError("split manifest: missing header", 0);
  SplitAssignment a;
  a.seed = toU64(field("seed"));
  a.test_fraction = toDouble(field("test_fraction"));
  a.coverage_threshold = toDouble(field("coverage_threshold"));
  a.coverage = toDouble(field("coverage"));
  a.swaps = static_cast<int>(toI64(field("swaps")));
  a.val_seed = toU64(field("val_seed"));
  {
    std::istringstream parts(field("single_cluster_types"));
    std::string tok;
    std::getline(parts, tok, '\t');
    const auto count = toU64(tok);
    for (std::uint64_t i = 0; i < count; ++i) {
      if (!std::getline(parts, tok, '\t')) throw ParseError("split manifest: truncated type list", offset);
      a.single_cluster_types.push_back(static_cast<TypeId>(toI64(tok)));
    }
  }
  std::string l = next();
  while (l.rfind("warning\t", 0) == 0) {
    a.warnings.push_back(l.substr(8));
    l = next();
  }
  if (l.rfind("clusters\t", 0) != 0) throw ParseError("split manifest: expected 'clusters'", offset);
  const auto n_clusters = toU64(l.substr(9));
  for (std::uint64_t i = 0; i < n_clusters; ++i) {
    std::istringstream parts(next());
    std::string t, ans, split;
    if (!std::getline(parts, t, '\t') || !std::getline(parts, ans, '\t') || !std::getline(parts, split))
      throw ParseError("split manifest: malformed cluster line", offset);
    const ClusterKey key{static_cast<TypeId>(toI64(t)), static_cast<AnswerId>(toI64(ans))};
    const auto tag = split == "train" ? SplitTag::Train
                     : split == "test" ? SplitTag::Test
                                       : throw ParseError("split manifest: bad split '" + split + "'", offset);
    if (!a.cluster_to_split.emplace(key, tag).second)
      throw IntegrityError("split manifest: cluster listed twice");
  }
  const auto n_val = toU64(field("val_ids"));
  for (std::uint64_t i = 0; i < n_val; ++i) a.val_ids.insert(toI64(next()));
  return a;
}

void writeManifest(const SplitAssignment& a, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << manifestToString(a);
  if (!out) throw IoError("write failed for " + path.string());
}

SplitAssignment readManifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return manifestFromString(buf.str());
}

}  // namespace priorshift
