#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "priorshift/errors.hpp"
#include "priorshift/harness.hpp"

namespace priorshift {

namespace {

// Shortest text that parses back to the same double.
std::string exactNumber(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc()) throw ValidationError("cannot format number");
  return std::string(buf, end);
}

std::string fixed(double x, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

std::string csvField(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> splitCsvLine(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  if (quoted) throw ParseError("unterminated quote on CSV line " + std::to_string(line_no), 0);
  return fields;
}

double parseDouble(const std::string& s, std::size_t line_no) {
  double x = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ParseError("bad number '" + s + "' on CSV line " + std::to_string(line_no), 0);
  return x;
}

template <typename Int>
Int parseInt(const std::string& s, std::size_t line_no) {
  Int x = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ParseError("bad integer '" + s + "' on CSV line " + std::to_string(line_no), 0);
  return x;
}

SplitTag splitTagFromCsv(const std::string& s) {
  if (s == "val") return SplitTag::Val;
  if (s == "test") return SplitTag::Test;
  if (s == "train") return SplitTag::Train;
  throw ValidationError("unknown split '" + s + "'");
}

std::string splitName(SplitTag t) {
  switch (t) {
    case SplitTag::Train: return "train";
    case SplitTag::Val: return "val";
    case SplitTag::Test: return "test";
  }
  return "test";
}

std::string pad(const std::string& s, std::size_t width, bool left) {
  if (s.size() >= width) return s;
  return left ? s + std::string(width - s.size(), ' ') : std::string(width - s.size(), ' ') + s;
}

}  // namespace

std::string reportToCsv(const std::vector<EvalReport>& reports) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const auto& r : reports) {
    for (const auto& [tag, split] : r.splits) {
      for (auto c : kReportCategories) {
        const auto& cell = split[c];
        out += csvField(r.predictor) + "," + csvField(split.dataset) + "," + splitName(tag) + "," +
               std::string(toString(c)) + "," + std::to_string(cell.n) + "," +
               (cell.accuracy ? exactNumber(*cell.accuracy) : std::string()) + "," + std::string(toString(r.mode)) +
               "," + std::to_string(r.seed) + "," + (r.lambda ? exactNumber(*r.lambda) : std::string()) + "\n";
      }
    }
  }
  return out;
}

std::string curveToCsv(const SweepCurve& curve) {
  std::vector<EvalReport> all;
  for (const auto& p : curve.points) all.insert(all.end(), p.runs.begin(), p.runs.end());
  return reportToCsv(all);
}

std::vector<EvalReport> reportsFromCsv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  std::size_t line_no = 0;
  // Leading '#' lines carry run provenance.
  while (std::getline(in, line) && (++line_no, !line.empty() && line[0] == '#')) {
  }
  if (line != kCsvHeader) throw ParseError("missing or unexpected CSV header", 0);

  std::vector<EvalReport> reports;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = splitCsvLine(line, line_no);
    if (f.size() != 9) throw ParseError("expected 9 CSV fields on line " + std::to_string(line_no), 0);
    const auto mode = evalModeFromString(f[6]);
    const auto seed = parseInt<std::uint64_t>(f[7], line_no);
    const std::optional<double> lambda = f[8].empty() ? std::nullopt : std::optional(parseDouble(f[8], line_no));
    const auto tag = splitTagFromCsv(f[2]);
    const auto cat = reportCategoryFromString(f[3]);

    // Consecutive rows with the same identity belong to one report; a split
    // seen again starts a new report.
    const bool same = !reports.empty() && reports.back().predictor == f[0] && reports.back().mode == mode &&
                      reports.back().seed == seed && reports.back().lambda == lambda;
    const bool repeat = same && reports.back().splits.contains(tag) && cat == ReportCategory::All;
    if (!same || repeat) {
      EvalReport r;
      r.predictor = f[0];
      r.mode = mode;
      r.seed = seed;
      r.lambda = lambda;
      reports.push_back(std::move(r));
    }
    auto& split = reports.back().splits[tag];
    split.dataset = f[1];
    auto& cell = split[cat];
    cell.n = parseInt<std::size_t>(f[4], line_no);
    cell.accuracy = f[5].empty() ? std::nullopt : std::optional(parseDouble(f[5], line_no));
  }
  return reports;
}

std::string reportToTable(const std::vector<EvalReport>& reports) {
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"Method", "Val All", "Val Y/N", "Val Nb", "Val Other", "Test All", "Test Y/N", "Test Nb",
                  "Test Other"});
  for (const auto& r : reports) {
    std::vector<std::string> row{r.predictor};
    for (auto tag : {SplitTag::Val, SplitTag::Test}) {
      auto it = r.splits.find(tag);
      for (auto c : kReportCategories) {
        if (it == r.splits.end() || !it->second[c].accuracy)
          row.push_back("--");
        else
          row.push_back(fixed(*it->second[c].accuracy, 2));
      }
    }
    rows.push_back(std::move(row));
  }
  std::vector<std::size_t> width(rows.front().size(), 0);
  for (const auto& row : rows)
    for (std::size_t j = 0; j < row.size(); ++j) width[j] = std::max(width[j], row[j].size());

  std::string out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      if (j > 0) out += "  ";
      out += pad(rows[i][j], width[j], j == 0);
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    out += "\n";
    if (i == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w;
      out += std::string(total + 2 * (width.size() - 1), '-') + "\n";
    }
  }
  return out;
}

std::string auditToText(const AuditReport& audit, const Dataset& train) {
  std::ostringstream out;
  const auto& shift = audit.shift;
  out << "types in both splits: " << shift.types.size() << "\n";
  out << "train-only types: " << shift.train_only.size() << "\n";
  out << "test-only types: " << shift.test_only.size() << "\n";
  out << "mean total variation: " << fixed(shift.mean_total_variation, 4) << "\n";
  out << "mean inversion score: "
      << (shift.inversion_defined > 0 ? fixed(shift.mean_inversion, 4) : std::string("--")) << " (over "
      << shift.inversion_defined << " types)\n";
  out << "\n";

  std::size_t name_w = 4;
  for (const auto& t : shift.types) name_w = std::max(name_w, train.type_table.prefix(t.type_id).size() + 2);
  out << pad("type", name_w, true) << "  " << pad("n_train", 8, false) << "  " << pad("n_test", 8, false) << "  "
      << pad("TV", 7, false) << "  " << pad("inversion", 9, false) << "\n";
  for (const auto& t : shift.types) {
    out << pad("\"" + train.type_table.prefix(t.type_id) + "\"", name_w, true) << "  "
        << pad(std::to_string(t.n_train), 8, false) << "  " << pad(std::to_string(t.n_test), 8, false) << "  "
        << pad(fixed(t.total_variation, 4), 7, false) << "  "
        << pad(std::isnan(t.inversion) ? std::string("--") : fixed(t.inversion, 4), 9, false) << "\n";
  }
  out << "\n";

  auto cell = [](const SplitReport& r, ReportCategory c) {
    return r[c].accuracy ? fixed(*r[c].accuracy, 2) : std::string("--");
  };
  out << "expected test accuracy (train priors)    ";
  for (auto c : kReportCategories) out << "  " << toString(c) << " " << cell(audit.random_prior, c);
  out << "\n";
  out << "expected test accuracy (inverted priors) ";
  for (auto c : kReportCategories) out << "  " << toString(c) << " " << cell(audit.inverted_prior, c);
  out << "\n";
  out << "inversion threshold min_count: " << audit.min_count << "\n";
  out << "inversion exploitable (YesNo gain > " << fixed(audit.margin, 1)
      << " points): " << (audit.inversion_exploitable ? "yes" : "no") << "\n";
  return out.str();
}

std::string curveToSvg(const SweepCurve& curve, ReportCategory category) {
  constexpr double W = 640, H = 400, L = 60, R = 20, T = 30, B = 50;
  const auto ci = static_cast<std::size_t>(category);

  struct Series {
    SplitTag tag;
    const char* label;
    const char* color;
  };
  const Series series[] = {{SplitTag::Val, "Val", "#1f77b4"}, {SplitTag::Test, "Test", "#d62728"}};

  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const auto& p : curve.points) {
    xmin = std::min(xmin, p.lambda);
    xmax = std::max(xmax, p.lambda);
    for (const auto& s : series) {
      auto it = p.mean.find(s.tag);
      if (it == p.mean.end() || std::isnan(it->second[ci])) continue;
      const double sd = p.spread.at(s.tag)[ci];
      ymin = std::min(ymin, it->second[ci] - (std::isnan(sd) ? 0.0 : sd));
      ymax = std::max(ymax, it->second[ci] + (std::isnan(sd) ? 0.0 : sd));
    }
  }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1;
  if (!std::isfinite(ymin)) ymin = 0, ymax = 100;
  if (xmax - xmin < 1e-12) xmin -= 1, xmax += 1;
  if (ymax - ymin < 1e-9) ymin -= 1, ymax += 1;
  const double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << " " << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
    << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";

  for (int i = 0; i <= 4; ++i) {
    const double y = ymin + (ymax - ymin) * i / 4.0;
    o << "<text x=\"" << L - 6 << "\" y=\"" << fixed(py(y) + 4, 1) << "\" text-anchor=\"end\">" << fixed(y, 1)
      << "</text>\n";
  }
  for (const auto& p : curve.points)
    o << "<text x=\"" << fixed(px(p.lambda), 1) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">"
      << exactNumber(p.lambda) << "</text>\n";
  o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">lambda</text>\n";
  o << "<text x=\"15\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 15 "
    << (T + H - B) / 2 << ")\">accuracy " << toString(category) << " (%)</text>\n";

  int legend = 0;
  for (const auto& s : series) {
    std::vector<std::pair<double, double>> pts;
    std::vector<double> sds;
    for (const auto& p : curve.points) {
      auto it = p.mean.find(s.tag);
      if (it == p.mean.end() || std::isnan(it->second[ci])) continue;
      pts.emplace_back(px(p.lambda), py(it->second[ci]));
      const double sd = p.spread.at(s.tag)[ci];
      sds.push_back(std::isnan(sd) ? 0.0 : sd);
    }
    if (pts.empty()) continue;
    if (pts.size() > 1) {
      o << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"2\" points=\"";
      for (std::size_t i = 0; i < pts.size(); ++i)
        o << (i ? " " : "") << fixed(pts[i].first, 1) << "," << fixed(pts[i].second, 1);
      o << "\"/>\n";
    }
    const double scale = (H - T - B) / (ymax - ymin);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (sds[i] > 0)
        o << "<line x1=\"" << fixed(pts[i].first, 1) << "\" y1=\"" << fixed(pts[i].second - sds[i] * scale, 1)
          << "\" x2=\"" << fixed(pts[i].first, 1) << "\" y2=\"" << fixed(pts[i].second + sds[i] * scale, 1)
          << "\" stroke=\"" << s.color << "\"/>\n";
      o << "<circle cx=\"" << fixed(pts[i].first, 1) << "\" cy=\"" << fixed(pts[i].second, 1) << "\" r=\"3.5\" fill=\""
        << s.color << "\"/>\n";
    }
    const double ly = T + 14.0 * legend++;
    o << "<rect x=\"" << W - R - 70 << "\" y=\"" << ly - 9 << "\" width=\"10\" height=\"10\" fill=\"" << s.color
      << "\"/>\n";
    o << "<text x=\"" << W - R - 55 << "\" y=\"" << ly << "\">" << s.label << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

void writeText(const std::string& text, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::string readText(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace priorshift
