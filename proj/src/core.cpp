#include "priorshift/core.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "priorshift/errors.hpp"
#include "priorshift/question_types_data.hpp"

namespace priorshift {

std::string_view toString(Category c) {
  switch (c) {
    case Category::YesNo: return "yes/no";
    case Category::Number: return "number";
    case Category::Other: return "other";
  }
  return "other";
}

std::string_view toString(SplitTag s) {
  switch (s) {
    case SplitTag::Train: return "train";
    case SplitTag::Val: return "val";
    case SplitTag::Test: return "test";
  }
  return "train";
}

Category categoryFromString(std::string_view s) {
  const std::string n = normalizeText(s);
  if (n == "yes/no" || n == "yesno" || n == "yes no") return Category::YesNo;
  if (n == "number" || n == "nb") return Category::Number;
  if (n == "other") return Category::Other;
  throw ValidationError("unknown answer category '" + std::string(s) + "'");
}

SplitTag splitFromString(std::string_view s) {
  if (s == "train") return SplitTag::Train;
  if (s == "val") return SplitTag::Val;
  if (s == "test") return SplitTag::Test;
  throw ValidationError("unknown split '" + std::string(s) + "'");
}

namespace {

bool isDigit(char c) { return c >= '0' && c <= '9'; }

}  // namespace

std::string normalizeText(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (std::ispunct(c)) {
      // Keep '/' so "yes/no" style labels survive, and decimal points.
      const bool decimal = c == '.' && i > 0 && i + 1 < text.size() && isDigit(text[i - 1]) &&
                           isDigit(text[i + 1]);
      if (!decimal && c != '/') {
        // Punctuation separates words ("dog's" -> "dogs", "left,right" -> "left right").
        if (c != '\'') pending_space = !out.empty();
        continue;
      }
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::istringstream in(normalizeText(text));
  std::string tok;
  while (in >> tok) tokens.push_back(tok);
  return tokens;
}

bool isNumeric(std::string_view s) {
  if (s.empty()) return false;
  int dots = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (isDigit(s[i])) continue;
    if (s[i] == '.' && i > 0 && i + 1 < s.size() && ++dots == 1) continue;
    return false;
  }
  return true;
}

AnswerVocabulary::AnswerVocabulary(std::vector<std::string> entries) {
  entries_.reserve(entries.size());
  for (auto& e : entries) {
    std::string n = normalizeText(e);
    const auto id = static_cast<AnswerId>(entries_.size());
    if (!index_.emplace(n, id).second)
      throw ValidationError("duplicate vocabulary entry '" + n + "'");
    entries_.push_back(std::move(n));
  }
  if (entries_.size() < 2) throw ValidationError("answer vocabulary needs at least 2 entries");
}

std::optional<AnswerId> AnswerVocabulary::find(std::string_view answer) const {
  auto it = index_.find(std::string(answer));
  if (it == index_.end()) it = index_.find(normalizeText(answer));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

QuestionTypeTable::QuestionTypeTable(std::vector<std::string> prefixes, PrefixMatchMode mode)
    : mode_(mode) {
  for (auto& p : prefixes) {
    std::string n = normalizeText(p);
    if (n.empty()) throw ValidationError("only the trailing catch-all prefix may be empty");
    if (std::find(prefixes_.begin(), prefixes_.end(), n) != prefixes_.end())
      throw ValidationError("duplicate question-type prefix '" + n + "'");
    prefix_tokens_.push_back(tokenize(n));
    prefixes_.push_back(std::move(n));
  }
  prefixes_.emplace_back();
  prefix_tokens_.emplace_back();
}

QuestionTypeTable QuestionTypeTable::packaged(PrefixMatchMode mode) {
  return fromText(detail::kDefaultQuestionTypes, mode);
}

QuestionTypeTable QuestionTypeTable::fromText(std::string_view text, PrefixMatchMode mode) {
  std::vector<std::string> prefixes;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (normalizeText(line).empty()) break;
    prefixes.push_back(line);
  }
  return QuestionTypeTable(std::move(prefixes), mode);
}

QuestionTypeTable QuestionTypeTable::fromFile(const std::filesystem::path& path, PrefixMatchMode mode) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open prefix table " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return fromText(buf.str(), mode);
}

std::optional<TypeId> QuestionTypeTable::find(std::string_view prefix) const {
  const std::string n = normalizeText(prefix);
  for (std::size_t i = 0; i < prefixes_.size(); ++i)
    if (prefixes_[i] == n) return static_cast<TypeId>(i);
  return std::nullopt;
}

std::string QuestionTypeTable::toText() const {
  std::string out;
  for (const auto& p : prefixes_) {
    out += p;
    out += '\n';
  }
  return out;
}

TypeId matchPrefix(std::string_view question_text, const QuestionTypeTable& table) {
  if (table.prefixes_.empty()) throw ValidationError("empty question-type table");
  TypeId best = table.catchAll();
  std::size_t best_len = 0;
  if (table.mode_ == PrefixMatchMode::RawCharacter) {
    const std::string q = normalizeText(question_text);
    for (std::size_t i = 0; i + 1 < table.prefixes_.size(); ++i) {
      const auto& p = table.prefixes_[i];
      if (p.size() > best_len && q.starts_with(p)) {
        best = static_cast<TypeId>(i);
        best_len = p.size();
      }
    }
    return best;
  }
  const auto tokens = tokenize(question_text);
  for (std::size_t i = 0; i + 1 < table.prefix_tokens_.size(); ++i) {
    const auto& p = table.prefix_tokens_[i];
    if (p.size() <= best_len || p.size() > tokens.size()) continue;
    if (std::equal(p.begin(), p.end(), tokens.begin())) {
      best = static_cast<TypeId>(i);
      best_len = p.size();
    }
  }
  return best;
}

Category categoryOf(const Instance& instance) {
  if (instance.annotated_category) return *instance.annotated_category;
  if (instance.top_answer == "yes" || instance.top_answer == "no") return Category::YesNo;
  if (isNumeric(instance.top_answer)) return Category::Number;
  return Category::Other;
}

namespace {

// Agreement of `count` matching answers out of a multiset of size n, with the
// 3-of-10 threshold rescaled for n != 10.
double agreement(std::size_t count, std::size_t n) {
  const double scaled = static_cast<double>(count) * 10.0 / (3.0 * static_cast<double>(n));
  return std::min(scaled, 1.0);
}

}  // namespace

double softScore(const std::vector<std::string>& human_answers, std::string_view candidate,
                 MetricMode mode) {
  const std::size_t n = human_answers.size();
  if (n == 0) throw ValidationError("softScore: empty human answer set");
  const std::string c = normalizeText(candidate);
  std::size_t count = 0;
  for (const auto& a : human_answers)
    if (a == c || normalizeText(a) == c) ++count;
  if (mode == MetricMode::Simple || n == 1) return agreement(count, n);
  // Leave-one-out average: dropping a matching answer lowers the count by one.
  const double matched = static_cast<double>(count) * agreement(count - (count > 0), n);
  const double unmatched = static_cast<double>(n - count) * agreement(count, n);
  return (matched + unmatched) / static_cast<double>(n);
}

SoftScoreVector softScores(const Instance& instance, const AnswerVocabulary& vocab, MetricMode mode) {
  SoftScoreVector out;
  for (const auto& a : instance.human_answers) {
    const auto id = vocab.find(a);
    if (!id || out.contains(*id)) continue;
    out.emplace(*id, softScore(instance.human_answers, a, mode));
  }
  return out;
}

}  // namespace priorshift
