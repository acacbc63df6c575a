// priorshift command line: dataset ingestion, synthetic data, split
// construction, audits, training, evaluation, lambda sweeps and reports.

#include <cstdio>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "priorshift/errors.hpp"
#include "priorshift/harness.hpp"

namespace ps = priorshift;

namespace {

std::vector<double> parseList(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    double x = 0.0;
    try {
      x = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw ps::ValidationError("bad list element '" + item + "'");
    out.push_back(x);
  }
  if (out.empty()) throw ps::ValidationError("empty list '" + s + "'");
  return out;
}

ps::MetricMode metricFromString(const std::string& s) {
  if (s == "simple") return ps::MetricMode::Simple;
  if (s == "official") return ps::MetricMode::Official;
  throw ps::ValidationError("unknown metric '" + s + "' (simple|official)");
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// Provenance header: one "# key=value" line per setting.
struct Header {
  std::string command;
  std::vector<std::pair<std::string, std::string>> items;

  Header& add(const std::string& key, const std::string& value) {
    items.emplace_back(key, value);
    return *this;
  }
  std::string text() const {
    std::string out = "# priorshift " + command + "\n";
    for (const auto& [k, v] : items) out += "# " + k + "=" + v + "\n";
    return out;
  }
};

void emit(const std::string& text, const std::string& path) {
  if (path.empty() || path == "-")
    std::cout << text;
  else
    ps::writeText(text, path);
}

void addHyperOptions(CLI::App* cmd, ps::TrainingHyper& h, std::string& metric) {
  cmd->add_option("--learning-rate", h.learning_rate, "SGD step size")->capture_default_str();
  cmd->add_option("--epochs", h.epochs, "Epochs (regularized: phase-2 epochs)")->capture_default_str();
  cmd->add_option("--batch-size", h.batch_size, "Mini-batch size")->capture_default_str();
  cmd->add_option("--lambda", h.lambda, "Auxiliary loss weight")->capture_default_str();
  cmd->add_option("--pretrain-epochs", h.pretrain_epochs, "Plain BCE epochs before the regularizer")
      ->capture_default_str();
  cmd->add_option("--hash-dim", h.hash_dim, "Hashed bag-of-tokens dimension")->capture_default_str();
  cmd->add_option("--metric", metric, "Soft-score metric: simple|official")->capture_default_str();
}

void addHyperHeader(Header& h, const ps::TrainingHyper& hyper) {
  h.add("learning_rate", fmt(hyper.learning_rate))
      .add("epochs", std::to_string(hyper.epochs))
      .add("batch_size", std::to_string(hyper.batch_size))
      .add("lambda", fmt(hyper.lambda))
      .add("pretrain_epochs", std::to_string(hyper.pretrain_epochs))
      .add("hash_dim", std::to_string(hyper.hash_dim));
}

ps::PrefixMatchMode prefixModeFromString(const std::string& s) {
  if (s == "token") return ps::PrefixMatchMode::TokenBoundary;
  if (s == "raw") return ps::PrefixMatchMode::RawCharacter;
  throw ps::ValidationError("unknown prefix mode '" + s + "' (token|raw)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Answer-prior baselines, changing-priors splits and shift audits for VQA-style data"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "Global seed for every random choice")->capture_default_str();

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Join VQA question and annotation files into a dataset");
  std::string questions, annotations, ingest_out, vocab_from, types_file, prefix_mode = "token", ingest_split = "train",
                                                                            ingest_name, features_file;
  std::size_t vocab_size = 3000;
  ingest->add_option("--questions", questions, "Questions json")->required()->check(CLI::ExistingFile);
  ingest->add_option("--annotations", annotations, "Annotations json")->required()->check(CLI::ExistingFile);
  ingest->add_option("--out", ingest_out, "Output dataset (.jsonl)")->required();
  ingest->add_option("--vocab-from", vocab_from, "Reuse the vocabulary of an existing dataset");
  ingest->add_option("--vocab-size", vocab_size, "Top-K answers when building a vocabulary")->capture_default_str();
  ingest->add_option("--types", types_file, "Question-type prefix file (default: packaged list)");
  ingest->add_option("--prefix-mode", prefix_mode, "Prefix matching: token|raw")->capture_default_str();
  ingest->add_option("--split", ingest_split, "Split tag: train|val|test")->capture_default_str();
  ingest->add_option("--name", ingest_name, "Dataset name (default: output file stem)");
  ingest->add_option("--features", features_file, "Binary feature file to attach");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic train/test pair");
  ps::SyntheticConfig sc;
  std::string profile = "skewed", synth_train, synth_test;
  synth->add_option("--types", sc.n_types, "Number of question types")->capture_default_str();
  synth->add_option("--answers-per-type", sc.answers_per_type, "Answers per type")->capture_default_str();
  synth->add_option("--n-train", sc.n_train, "Training instances")->capture_default_str();
  synth->add_option("--n-test", sc.n_test, "Test instances")->capture_default_str();
  synth->add_option("--profile", profile, "Bias profile: skewed|inverse|uniform")->capture_default_str();
  synth->add_option("--alpha", sc.alpha, "Dirichlet concentration of the priors")->capture_default_str();
  synth->add_option("--feature-dim", sc.feature_dim, "Visual feature dimension (0: vocabulary size)")
      ->capture_default_str();
  synth->add_option("--feature-signal", sc.feature_signal, "Answer signal in the features")->capture_default_str();
  synth->add_option("--out-train", synth_train, "Output train dataset")->required();
  synth->add_option("--out-test", synth_test, "Output test dataset")->required();

  // split
  auto* split = app.add_subcommand("split", "Build changing-priors splits from a pooled dataset");
  std::string split_data, manifest, split_train, split_val, split_test;
  ps::SplitParams sp;
  std::size_t split_nval = 0;
  split->add_option("--data", split_data, "Pooled dataset")->required();
  split->add_option("--manifest", manifest, "Output split manifest")->required();
  split->add_option("--test-fraction", sp.test_fraction, "Target test fraction")->capture_default_str();
  split->add_option("--coverage", sp.coverage_threshold, "Word coverage threshold")->capture_default_str();
  split->add_option("--repair-iterations", sp.repair_iterations, "Maximum repair swaps")->capture_default_str();
  split->add_option("--n-val", split_nval, "Validation ids held out from train")->capture_default_str();
  split->add_option("--out-train", split_train, "Materialized train dataset");
  split->add_option("--out-val", split_val, "Materialized val dataset");
  split->add_option("--out-test", split_test, "Materialized test dataset");

  // audit
  auto* audit = app.add_subcommand("audit", "Measure prior shift and probe inversion exploitability");
  std::string audit_train, audit_test, audit_out, audit_metric = "simple";
  ps::AuditOptions ao;
  std::int64_t audit_min_count = 0;
  audit->add_option("--train", audit_train, "Training dataset")->required();
  audit->add_option("--test", audit_test, "Test dataset")->required();
  audit->add_option("--margin", ao.margin, "YesNo accuracy gain that flags a split")->capture_default_str();
  audit->add_option("--min-count", audit_min_count, "Inversion threshold (0: calibrate)")->capture_default_str();
  audit->add_option("--retained-target", ao.retained_target, "Retained answers for calibration")
      ->capture_default_str();
  audit->add_option("--metric", audit_metric, "Soft-score metric: simple|official")->capture_default_str();
  audit->add_option("--out", audit_out, "Output text file (default: stdout)");

  // train
  auto* train = app.add_subcommand("train", "Fit a predictor on a training dataset");
  std::string train_data, train_out, train_kind = "learned", train_metric = "simple";
  ps::TrainingHyper train_hyper;
  train->add_option("--train", train_data, "Training dataset")->required();
  train->add_option("--predictor", train_kind, "random|inverted|learned|regularized")->capture_default_str();
  train->add_option("--out", train_out, "Checkpoint (learned) or prior table (random/inverted)")->required();
  addHyperOptions(train, train_hyper, train_metric);

  // eval
  auto* eval = app.add_subcommand("eval", "Protocol: carve Val from train, fit once, evaluate Val and Test");
  std::string eval_train, eval_test, eval_kind = "random", eval_mode = "expected", eval_metric = "simple", eval_csv,
                                     eval_table, eval_model;
  ps::TrainingHyper eval_hyper;
  ps::ProtocolOptions eval_opts;
  std::int64_t eval_min_count = 0;
  std::size_t eval_target = 1105;
  bool eval_masked = false;
  eval->add_option("--train", eval_train, "Training dataset")->required();
  eval->add_option("--test", eval_test, "Test dataset")->required();
  eval->add_option("--predictor", eval_kind, "random|inverted|learned|regularized")->capture_default_str();
  eval->add_option("--model", eval_model, "Evaluate a saved checkpoint instead of training");
  eval->add_flag("--masked", eval_masked, "Mask the top-scoring answer");
  eval->add_option("--min-count", eval_min_count, "Inversion threshold (0: calibrate)")->capture_default_str();
  eval->add_option("--retained-target", eval_target, "Retained answers for calibration")->capture_default_str();
  eval->add_option("--n-val", eval_opts.n_val, "Validation instances held out from train")->capture_default_str();
  eval->add_flag("--other-only", eval_opts.other_only, "Restrict every split to Other questions");
  eval->add_option("--mode", eval_mode, "expected|sampled")->capture_default_str();
  eval->add_option("--csv", eval_csv, "CSV output (default: stdout)");
  eval->add_option("--table", eval_table, "Plain-text table output");
  addHyperOptions(eval, eval_hyper, eval_metric);

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Lambda sweep of the regularized model");
  std::string sweep_train, sweep_test, sweep_grid = "0,1,2,3,4,5,6,8,10,12", sweep_seeds = "0", sweep_csv, sweep_svg,
                                       sweep_metric = "simple", sweep_category = "All";
  ps::TrainingHyper sweep_hyper;
  ps::ProtocolOptions sweep_opts;
  sweep->add_option("--train", sweep_train, "Training dataset")->required();
  sweep->add_option("--test", sweep_test, "Test dataset")->required();
  sweep->add_option("--grid", sweep_grid, "Comma-separated increasing lambdas")->capture_default_str();
  sweep->add_option("--seeds", sweep_seeds, "Comma-separated run seeds")->capture_default_str();
  sweep->add_option("--n-val", sweep_opts.n_val, "Validation instances held out from train")->capture_default_str();
  sweep->add_flag("--other-only", sweep_opts.other_only, "Restrict every split to Other questions");
  sweep->add_option("--csv", sweep_csv, "CSV output (default: stdout)");
  sweep->add_option("--svg", sweep_svg, "SVG chart output");
  sweep->add_option("--category", sweep_category, "Chart category: All|YesNo|Nb|Other")->capture_default_str();
  addHyperOptions(sweep, sweep_hyper, sweep_metric);

  // report
  auto* report = app.add_subcommand("report", "Render a CSV report as a table, CSV or SVG curve");
  std::string report_in, report_format = "table", report_out, report_category = "All";
  report->add_option("--csv", report_in, "Input CSV")->required();
  report->add_option("--format", report_format, "table|csv|svg")->capture_default_str();
  report->add_option("--category", report_category, "SVG category: All|YesNo|Nb|Other")->capture_default_str();
  report->add_option("--out", report_out, "Output file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*ingest) {
      const auto mode = prefixModeFromString(prefix_mode);
      const auto table = types_file.empty() ? ps::QuestionTypeTable::packaged(mode)
                                            : ps::QuestionTypeTable::fromFile(types_file, mode);
      const auto qs = ps::parseQuestions(questions);
      const auto as = ps::parseAnnotations(annotations);
      ps::Dataset data = vocab_from.empty() ? ps::joinToDataset(qs, as, table, vocab_size)
                                            : ps::joinToDataset(qs, as, table, ps::readDataset(vocab_from).vocabulary);
      data.tag = ps::splitFromString(ingest_split);
      data.name = ingest_name.empty() ? std::filesystem::path(ingest_out).stem().string() : ingest_name;
      if (!features_file.empty()) {
        const auto attached = ps::attachFeatures(data, ps::readFeatures(features_file));
        std::cerr << "attached features to " << attached << " of " << data.size() << " instances\n";
      }
      ps::writeDataset(data, ingest_out);
      std::cout << "wrote " << data.size() << " instances, " << data.vocabulary.size() << " answers, "
                << data.type_table.size() << " types to " << ingest_out << "\n";
    } else if (*synth) {
      sc.bias_profile = ps::biasProfileFromString(profile);
      sc.seed = seed;
      const auto d = ps::generateSynthetic(sc);
      ps::writeDataset(d.train, synth_train, sc);
      ps::writeDataset(d.test, synth_test, sc);
      std::cout << "wrote " << d.train.size() << " train and " << d.test.size() << " test instances (profile "
                << profile << ", seed " << seed << ")\n";
    } else if (*split) {
      const auto data = ps::readDataset(split_data);
      sp.seed = seed;
      auto assignment = ps::buildCpSplits(data, sp);
      if (split_nval > 0) assignment = ps::holdOutValidation(assignment, data, split_nval, ps::deriveSeed(seed, 1));
      ps::writeManifest(assignment, manifest);
      for (const auto& w : assignment.warnings) std::cerr << "warning: " << w << "\n";
      const auto m = ps::materialize(data, assignment);
      if (!split_train.empty()) ps::writeDataset(m.train, split_train);
      if (!split_val.empty()) ps::writeDataset(m.val, split_val);
      if (!split_test.empty()) ps::writeDataset(m.test, split_test);
      std::cout << "train " << m.train.size() << ", val " << m.val.size() << ", test " << m.test.size()
                << ", coverage " << assignment.coverage << ", swaps " << assignment.swaps << "\n";
    } else if (*audit) {
      const auto tr = ps::readDataset(audit_train);
      const auto te = ps::readDataset(audit_test);
      if (audit_min_count > 0) ao.min_count = audit_min_count;
      ao.metric = metricFromString(audit_metric);
      const auto result = ps::auditSplit(tr, te, ao);
      Header h{"audit", {}};
      h.add("train", tr.name).add("test", te.name).add("margin", fmt(ao.margin))
          .add("min_count", audit_min_count > 0 ? std::to_string(audit_min_count) : "calibrated")
          .add("retained_target", std::to_string(ao.retained_target)).add("metric", audit_metric);
      emit(h.text() + ps::auditToText(result, tr), audit_out);
    } else if (*train) {
      const auto data = ps::readDataset(train_data);
      train_hyper.seed = seed;
      train_hyper.metric = metricFromString(train_metric);
      const auto kind = ps::predictorKindFromString(train_kind);
      if (kind == ps::PredictorSpec::Kind::RandomPrior || kind == ps::PredictorSpec::Kind::InvertedPrior) {
        ps::writePriorTable(ps::accumulate(data), train_out);
      } else {
        const auto model = kind == ps::PredictorSpec::Kind::Learned ? ps::trainLearned(data, train_hyper)
                                                                    : ps::trainRegularized(data, train_hyper);
        ps::writeModel(model, train_out);
        if (!model.loss_trace.empty()) std::cout << "final epoch objective " << model.loss_trace.back() << "\n";
      }
      std::cout << "wrote " << train_out << "\n";
    } else if (*eval) {
      const auto tr = ps::readDataset(eval_train);
      const auto te = ps::readDataset(eval_test);
      eval_opts.seed = seed;
      eval_opts.mode = ps::evalModeFromString(eval_mode);
      eval_opts.metric = metricFromString(eval_metric);
      eval_hyper.seed = seed;
      eval_hyper.metric = eval_opts.metric;
      ps::PredictorSpec spec;
      spec.kind = ps::predictorKindFromString(eval_kind);
      spec.masked = eval_masked;
      if (eval_min_count > 0) spec.min_count = eval_min_count;
      spec.retained_target = eval_target;
      spec.hyper = eval_hyper;

      ps::EvalReport rep;
      if (!eval_model.empty()) {
        // A saved model is evaluated as-is on the protocol's Val and Test.
        auto [fit, val] = ps::carveValidation(tr, eval_opts.n_val, seed);
        ps::Dataset test = te;
        if (eval_opts.other_only) {
          val = ps::filterCategory(val, ps::Category::Other);
          test = ps::filterCategory(test, ps::Category::Other);
        }
        auto model = ps::readModel(eval_model);
        rep.lambda = model.hyper.lambda;
        auto p = ps::Predictor::learned(std::move(model));
        if (eval_masked) p = ps::Predictor::masked(std::move(p));
        rep.predictor = p.describe();
        rep.mode = ps::EvalMode::Sampled;
        rep.seed = seed;
        rep.splits[ps::SplitTag::Val] =
            val.empty() ? ps::SplitReport{val.name, {}}
                        : ps::evaluate(p, val, ps::EvalMode::Sampled, ps::deriveSeed(seed, 1), eval_opts.metric);
        rep.splits[ps::SplitTag::Test] =
            ps::evaluate(p, test, ps::EvalMode::Sampled, ps::deriveSeed(seed, 2), eval_opts.metric);
      } else {
        rep = ps::runProtocol(tr, te, spec, eval_opts).report;
      }
      Header h{"eval", {}};
      h.add("train", tr.name).add("test", te.name).add("predictor", eval_kind).add("masked", eval_masked ? "1" : "0")
          .add("seed", std::to_string(seed)).add("n_val", std::to_string(eval_opts.n_val))
          .add("other_only", eval_opts.other_only ? "1" : "0").add("mode", eval_mode).add("metric", eval_metric)
          .add("min_count", eval_min_count > 0 ? std::to_string(eval_min_count) : "calibrated")
          .add("retained_target", std::to_string(eval_target));
      if (spec.kind == ps::PredictorSpec::Kind::Learned || spec.kind == ps::PredictorSpec::Kind::Regularized)
        addHyperHeader(h, eval_hyper);
      if (!eval_model.empty()) h.add("model", eval_model);
      emit(h.text() + ps::reportToCsv({rep}), eval_csv);
      if (!eval_table.empty()) ps::writeText(h.text() + ps::reportToTable({rep}), eval_table);
    } else if (*sweep) {
      const auto tr = ps::readDataset(sweep_train);
      const auto te = ps::readDataset(sweep_test);
      std::vector<std::uint64_t> seeds;
      for (double s : parseList(sweep_seeds)) {
        if (s < 0 || s != static_cast<double>(static_cast<std::uint64_t>(s)))
          throw ps::ValidationError("seeds must be non-negative integers");
        seeds.push_back(static_cast<std::uint64_t>(s));
      }
      sweep_opts.metric = metricFromString(sweep_metric);
      sweep_opts.seed = seed;
      sweep_hyper.metric = sweep_opts.metric;
      const auto grid = parseList(sweep_grid);
      const auto curve = ps::lambdaSweep(tr, te, grid, sweep_hyper, seeds, sweep_opts);
      Header h{"sweep", {}};
      h.add("train", tr.name).add("test", te.name).add("grid", sweep_grid).add("seeds", sweep_seeds)
          .add("n_val", std::to_string(sweep_opts.n_val)).add("other_only", sweep_opts.other_only ? "1" : "0")
          .add("metric", sweep_metric);
      addHyperHeader(h, sweep_hyper);
      emit(h.text() + ps::curveToCsv(curve), sweep_csv);
      if (!sweep_svg.empty()) ps::writeText(ps::curveToSvg(curve, ps::reportCategoryFromString(sweep_category)), sweep_svg);
    } else if (*report) {
      const auto reports = ps::reportsFromCsv(ps::readText(report_in));
      if (report_format == "table")
        emit(ps::reportToTable(reports), report_out);
      else if (report_format == "csv")
        emit(ps::reportToCsv(reports), report_out);
      else if (report_format == "svg")
        emit(ps::curveToSvg(ps::curveFromReports(reports), ps::reportCategoryFromString(report_category)), report_out);
      else
        throw ps::ValidationError("unknown format '" + report_format + "' (table|csv|svg)");
    }
  } catch (const ps::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ps::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
