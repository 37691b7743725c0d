#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tcl/bench.hpp"
#include "tcl/error.hpp"
#include "tcl/metrics.hpp"
#include "tcl/persist.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;  // empty: the plan's out, else ./tcl-out
};

// The --config document is an experiment plan; subcommands start from it.
tcl::ExperimentPlan base_plan(const Globals& g) {
  json j = g.config.empty() ? json::object() : tcl::read_json(g.config);
  if (g.seed) {
    j["seed"] = *g.seed;
    for (const char* block : {"detector", "tcl"}) {
      if (j.contains(block)) j[block]["seed"] = *g.seed;
    }
  }
  tcl::ExperimentPlan plan = tcl::plan_from_json(j);
  if (!g.out.empty()) plan.out = g.out;
  if (plan.out.empty()) plan.out = "tcl-out";
  return plan;
}

fs::path out_dir(const Globals& g) {
  const fs::path dir = base_plan(g).out;
  fs::create_directories(dir);
  return dir;
}

void write_matrix_csv(const tcl::Matrix& m, std::span<const std::size_t> ids, const fs::path& path) {
  std::string text = "row_id";
  for (std::size_t c = 0; c < m.cols(); ++c) text += ",e" + std::to_string(c);
  text += "\n";
  for (std::size_t r = 0; r < m.rows(); ++r) {
    text += std::to_string(ids.empty() ? r : ids[r]);
    for (double v : m.row(r)) text += "," + tcl::format_double(v);
    text += "\n";
  }
  tcl::write_text(text, path);
}

tcl::Vector read_scores(const fs::path& path) {
  const tcl::RawTable t = tcl::read_csv(path);
  if (t.header.size() != 2 || t.header[1] != "score") {
    throw tcl::FormatError(path.string() + ": expected columns row_id,score");
  }
  tcl::Vector s;
  s.reserve(t.rows.size());
  for (const auto& row : t.rows) s.push_back(tcl::parse_double(row[1]));
  return s;
}

// A dataset directory, or a split directory (its D_in side).
tcl::Dataset load_features(const fs::path& dir, std::vector<std::size_t>* ids, bool ood = false) {
  if (fs::exists(dir / "split.json")) {
    tcl::SplitPair pair = tcl::load_split(dir);
    if (ood) {
      if (ids) *ids = pair.ood_rows;
      return std::move(pair.d_ood);
    }
    if (ids) *ids = pair.in_rows;
    return std::move(pair.d_in);
  }
  if (ood) throw tcl::ArgumentError("--ood needs a split directory");
  return tcl::load_dataset(dir, ids);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tabular contrastive learning with OOD-aware splits"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Seed for every stochastic stage");
  app.add_option("--config", g.config, "Experiment plan (JSON)")->check(CLI::ExistingFile);
  app.add_option("--out", g.out, "Output directory");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Parse, type and encode a CSV file");
  std::string in_csv, in_target, in_task, in_delim = ",";
  std::size_t in_cutoff = 20;
  std::vector<std::string> in_numeric, in_categorical;
  ingest->add_option("csv", in_csv, "Input CSV")->required()->check(CLI::ExistingFile);
  ingest->add_option("--target", in_target, "Target column");
  ingest->add_option("--task", in_task, "classification or regression");
  ingest->add_option("--delimiter", in_delim, "Field delimiter");
  ingest->add_option("--cutoff", in_cutoff, "Max distinct values for an inferred categorical");
  ingest->add_option("--numeric", in_numeric, "Force numeric columns");
  ingest->add_option("--categorical", in_categorical, "Force categorical columns");

  // detect
  auto* det = app.add_subcommand("detect", "Score rows for OOD-ness and write a histogram");
  std::string det_data, det_kind, det_norm;
  std::optional<double> det_threshold, det_quantile;
  std::optional<std::size_t> det_tail, det_bins;
  det->add_option("dataset", det_data, "Dataset directory")->required();
  det->add_option("--detector", det_kind, "openmax or temperature");
  det->add_option("--norm", det_norm, "L1 or L2 (OpenMax distance)");
  det->add_option("--tail", det_tail, "Weibull tail size");
  det->add_option("--bins", det_bins, "Histogram bins");
  auto* thr_opt = det->add_option("--threshold", det_threshold, "Explicit threshold");
  det->add_option("--quantile", det_quantile, "Threshold quantile")->excludes(thr_opt);

  // split
  auto* spl = app.add_subcommand("split", "Split a dataset at a score threshold");
  std::string spl_data, spl_scores;
  std::optional<double> spl_threshold;
  spl->add_option("dataset", spl_data, "Dataset directory")->required();
  spl->add_option("--scores", spl_scores, "scores.csv from detect")->required();
  spl->add_option("--threshold", spl_threshold, "Score threshold (default: detection.json)");
  bool spl_validate = true;
  spl->add_flag("!--no-validate", spl_validate, "Skip the probe validation");

  // train
  auto* trn = app.add_subcommand("train", "Train the contrastive encoder");
  std::string trn_data, trn_noise;
  std::optional<std::size_t> trn_epochs, trn_batch, trn_hidden, trn_latent;
  std::optional<double> trn_lr, trn_tol, trn_temp, trn_sigma, trn_mask;
  trn->add_option("data", trn_data, "Dataset or split directory (D_in)")->required();
  trn->add_option("--epochs", trn_epochs, "Maximum epochs");
  trn->add_option("--batch", trn_batch, "Batch size");
  trn->add_option("--hidden", trn_hidden, "Hidden width");
  trn->add_option("--latent", trn_latent, "Latent width");
  trn->add_option("--lr", trn_lr, "Adam learning rate");
  trn->add_option("--tolerance", trn_tol, "Stabilization tolerance (0 disables)");
  trn->add_option("--temperature", trn_temp, "Contrastive temperature");
  trn->add_option("--noise", trn_noise, "gaussian or mask");
  trn->add_option("--sigma", trn_sigma, "Gaussian noise std");
  trn->add_option("--mask-p", trn_mask, "Masking probability");

  // embed
  auto* emb = app.add_subcommand("embed", "Encode a dataset with a trained model");
  std::string emb_model, emb_data;
  emb->add_option("--model", emb_model, "model.json")->required()->check(CLI::ExistingFile);
  emb->add_option("data", emb_data, "Dataset or split directory")->required();
  bool emb_ood = false;
  emb->add_flag("--ood", emb_ood, "Use the OOD side of a split");

  // fit-head
  auto* fh = app.add_subcommand("fit-head", "Fit a logistic or linear head");
  std::string fh_data, fh_model, fh_kind;
  fh->add_option("data", fh_data, "Dataset or split directory")->required();
  fh->add_option("--model", fh_model, "Encode with this model first")->check(CLI::ExistingFile);
  fh->add_option("--head", fh_kind, "logistic or linear");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Score a head on a dataset");
  std::string ev_data, ev_head, ev_model;
  ev->add_option("data", ev_data, "Dataset or split directory")->required();
  bool ev_ood = false;
  ev->add_flag("--ood", ev_ood, "Use the OOD side of a split");
  ev->add_option("--head", ev_head, "head.json")->required()->check(CLI::ExistingFile);
  ev->add_option("--model", ev_model, "Encode with this model first")->check(CLI::ExistingFile);

  // tradeoff
  auto* tr = app.add_subcommand("tradeoff", "Speed/accuracy trade-off of one (P, t) pair");
  double tr_p = 0.0, tr_t = 0.0;
  std::string tr_task = "classification";
  tr->add_option("-p,--metric", tr_p, "Task metric")->required();
  tr->add_option("-t,--seconds", tr_t, "Training seconds")->required();
  tr->add_option("--task", tr_task, "classification or regression");

  // report
  auto* rep = app.add_subcommand("report", "Render a report in another format");
  std::string rep_in, rep_fmt = "markdown", rep_path;
  rep->add_option("report", rep_in, "report.json")->required()->check(CLI::ExistingFile);
  rep->add_option("--format", rep_fmt, "json, markdown or csv");
  rep->add_option("-o,--output", rep_path, "Write here instead of stdout");

  // compare
  auto* cmp = app.add_subcommand("compare", "Rank reports by trade-off");
  std::vector<std::string> cmp_in;
  cmp->add_option("reports", cmp_in, "report.json files")->required()->check(CLI::ExistingFile);

  // run
  auto* run = app.add_subcommand("run", "Run the whole pipeline from --config");
  std::string run_data;
  run->add_option("dataset", run_data, "Override the plan's dataset path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // usage errors share the configuration exit code
    return app.exit(e) == 0 ? 0 : tcl::exit_code(tcl::ErrorKind::Config);
  }

  try {
    if (*ingest) {
      tcl::ExperimentPlan plan = base_plan(g);
      if (!in_target.empty()) plan.schema.target = in_target;
      if (plan.schema.target.empty()) throw tcl::ConfigError("ingest: --target is required");
      if (!in_task.empty()) plan.schema.task = tcl::parse_task(in_task);
      if (in_delim.size() != 1) throw tcl::ConfigError("ingest: delimiter must be one character");
      plan.csv.delimiter = in_delim[0];
      if (ingest->count("--cutoff")) plan.schema.cardinality_cutoff = in_cutoff;
      for (const auto& c : in_numeric) plan.schema.overrides[c] = tcl::ColumnKind::Numeric;
      for (const auto& c : in_categorical) plan.schema.overrides[c] = tcl::ColumnKind::Categorical;
      const tcl::Dataset ds = tcl::ingest_csv(in_csv, plan.schema, std::nullopt, plan.csv);
      const fs::path dir = out_dir(g) / "dataset";
      tcl::save_dataset(ds, dir);
      std::cout << "ingested " << ds.n() << " rows, " << ds.d() << " encoded features ("
                << ds.schema.numeric_count() << " numeric, " << ds.schema.categorical_count()
                << " categorical), task " << tcl::to_string(ds.task()) << " -> " << dir.string()
                << "\n";
    } else if (*det) {
      tcl::ExperimentPlan plan = base_plan(g);
      tcl::DetectorConfig cfg = plan.detector;
      if (!det_kind.empty()) cfg.detector = tcl::parse_detector(det_kind);
      if (!det_norm.empty()) cfg.norm = tcl::parse_norm(det_norm);
      if (det_tail) cfg.tail = *det_tail;
      if (det_bins) cfg.bins = *det_bins;
      if (det_threshold) cfg.threshold = det_threshold;
      if (det_quantile) {
        cfg.quantile = *det_quantile;
        cfg.threshold.reset();
      }
      const tcl::Dataset ds = tcl::load_dataset(det_data);
      const tcl::Detection d = tcl::detect(ds, cfg);
      const fs::path dir = out_dir(g);
      std::string scores = "row_id,score\n";
      for (std::size_t i = 0; i < d.scores.size(); ++i) {
        scores += std::to_string(i) + "," + tcl::format_double(d.scores[i]) + "\n";
      }
      tcl::write_text(scores, dir / "scores.csv");
      tcl::write_text(d.histogram.to_csv(), dir / "histogram.csv");
      tcl::write_json({{"detector", d.detector},
                       {"threshold", d.threshold},
                       {"config", tcl::to_json(cfg)}},
                      dir / "detection.json");
      std::cout << d.detector << " scores for " << d.scores.size() << " rows; threshold "
                << tcl::format_double(d.threshold) << " -> " << (dir / "scores.csv").string()
                << ", " << (dir / "histogram.csv").string() << "\n";
    } else if (*spl) {
      tcl::ExperimentPlan plan = base_plan(g);
      const tcl::Dataset ds = tcl::load_dataset(spl_data);
      const tcl::Vector scores = read_scores(spl_scores);
      std::string detector = tcl::to_string(plan.detector.detector);
      double threshold = 0.0;
      const fs::path det_json = fs::path(spl_scores).parent_path() / "detection.json";
      if (spl_threshold) {
        threshold = *spl_threshold;
      } else if (fs::exists(det_json)) {
        const json dj = tcl::read_json(det_json);
        threshold = dj.at("threshold").get<double>();
        detector = dj.at("detector").get<std::string>();
      } else {
        throw tcl::ConfigError("split: --threshold is required without detection.json");
      }
      const tcl::SplitPair pair = tcl::split_by_threshold(
          ds, scores, threshold, {detector, plan.detector.norm, plan.seed});
      const fs::path dir = out_dir(g) / "split";
      tcl::save_split(pair, dir);
      std::cout << "M = " << pair.m() << " in-distribution, N = " << pair.n()
                << " out-of-distribution -> " << dir.string() << "\n";
      if (spl_validate) {
        tcl::RngStream rng(plan.seed, 0x5B1);
        const tcl::SplitReport rep = tcl::validate_split(pair, rng);
        tcl::write_json(tcl::to_json(rep), out_dir(g) / "validation.json");
        std::cout << rep.metric << ": ID train " << tcl::display_sig(rep.id_train, 4)
                  << ", ID test " << tcl::display_sig(rep.id_test, 4) << ", OOD train "
                  << tcl::display_sig(rep.ood_train, 4) << ", OOD test "
                  << tcl::display_sig(rep.ood_test, 4) << "\n";
      }
    } else if (*trn) {
      tcl::ExperimentPlan plan = base_plan(g);
      tcl::TclConfig cfg = plan.tcl;
      if (trn_epochs) cfg.max_epochs = *trn_epochs;
      if (trn_batch) cfg.batch_size = *trn_batch;
      if (trn_hidden) cfg.hidden = *trn_hidden;
      if (trn_latent) cfg.latent = *trn_latent;
      if (trn_lr) cfg.learning_rate = *trn_lr;
      if (trn_tol) cfg.tolerance = *trn_tol;
      if (trn_temp) cfg.temperature = *trn_temp;
      if (!trn_noise.empty()) cfg.noise = tcl::parse_noise_mode(trn_noise);
      if (trn_sigma) cfg.sigma = *trn_sigma;
      if (trn_mask) cfg.mask_p = *trn_mask;
      const tcl::Dataset ds = load_features(trn_data, nullptr);
      auto [model, trace] = tcl::train_tcl(ds.features, cfg);
      const fs::path dir = out_dir(g);
      tcl::save_model(model, dir / "model.json");
      tcl::write_json(tcl::to_json(trace), dir / "trace.json");
      std::cout << "trained " << trace.epochs << " epochs (" << tcl::to_string(trace.stop)
                << ") in " << tcl::display_sig(trace.seconds, 4) << " s; L_t "
                << tcl::display_sig(trace.total.front(), 4) << " -> "
                << tcl::display_sig(trace.total.back(), 4) << "\n";
    } else if (*emb) {
      const tcl::TclModel model = tcl::load_model(emb_model);
      std::vector<std::size_t> ids;
      const tcl::Dataset ds = load_features(emb_data, &ids, emb_ood);
      const tcl::Matrix e = tcl::embed(model, ds.features);
      const fs::path path = out_dir(g) / "embeddings.csv";
      write_matrix_csv(e, ids, path);
      std::cout << e.rows() << " x " << e.cols() << " embeddings -> " << path.string() << "\n";
    } else if (*fh) {
      tcl::ExperimentPlan plan = base_plan(g);
      const tcl::Dataset ds = load_features(fh_data, nullptr);
      tcl::Matrix x = ds.features;
      if (!fh_model.empty()) x = tcl::embed(tcl::load_model(fh_model), x);
      tcl::HeadKind kind = plan.head.value_or(ds.task() == tcl::TaskKind::Classification
                                                  ? tcl::HeadKind::Logistic
                                                  : tcl::HeadKind::Linear);
      if (!fh_kind.empty()) kind = tcl::parse_head_kind(fh_kind);
      const tcl::Head head = kind == tcl::HeadKind::Logistic
                                 ? tcl::fit_logistic(x, ds.labels, {}, ds.schema.class_count())
                                 : tcl::fit_linear(x, ds.labels);
      const fs::path path = out_dir(g) / "head.json";
      tcl::write_json(tcl::to_json(head), path);
      std::cout << tcl::to_string(head.kind) << " head on " << x.cols() << " features -> "
                << path.string() << "\n";
    } else if (*ev) {
      std::vector<std::size_t> ids;
      const tcl::Dataset ds = load_features(ev_data, &ids, ev_ood);
      tcl::Matrix x = ds.features;
      if (!ev_model.empty()) x = tcl::embed(tcl::load_model(ev_model), x);
      const tcl::Head head = tcl::head_from_json(tcl::read_json(ev_head));
      const tcl::Vector pred = tcl::predict(head, x);
      json res;
      if (ds.task() == tcl::TaskKind::Classification) {
        res = {{"f1_macro", tcl::metric_f1_macro(ds.labels, pred)},
               {"accuracy", tcl::metric_accuracy(ds.labels, pred)}};
      } else {
        res = {{"rmse", tcl::metric_rmse(ds.labels, pred)}, {"r2", tcl::metric_r2(ds.labels, pred)}};
      }
      res["rows"] = ds.n();
      tcl::write_json(res, out_dir(g) / "evaluation.json");
      std::cout << res.dump(2) << "\n";
    } else if (*tr) {
      const double t = tcl::tradeoff(tr_p, tr_t, tcl::parse_task(tr_task));
      std::cout << tcl::format_double(t) << " (" << tcl::display_sig(t, 2) << ")\n";
    } else if (*rep) {
      const tcl::BenchReport r = tcl::report_from_json(tcl::read_json(rep_in));
      const auto fmt = tcl::parse_report_format(rep_fmt);
      if (rep_path.empty()) {
        std::cout << tcl::render_report(r, fmt);
      } else {
        tcl::emit_report(r, fmt, rep_path);
      }
    } else if (*cmp) {
      std::vector<tcl::BenchReport> reports;
      for (const auto& p : cmp_in) reports.push_back(tcl::report_from_json(tcl::read_json(p)));
      std::cout << tcl::render_comparison(tcl::compare_models(std::move(reports)));
    } else if (*run) {
      tcl::ExperimentPlan plan = base_plan(g);
      if (!run_data.empty()) plan.dataset = run_data;
      if (plan.dataset.empty()) throw tcl::ConfigError("run: plan has no dataset");
      const tcl::BenchReport r = tcl::run_experiment(plan);
      std::cout << tcl::render_report(r, tcl::ReportFormat::Markdown);
    }
  } catch (const tcl::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return tcl::exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return tcl::exit_code(tcl::ErrorKind::Io);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
