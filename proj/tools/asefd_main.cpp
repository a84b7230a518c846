// asefd: command-line front end for the enhancement + fall-detection pipeline.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>

#include <CLI11.hpp>
#include <json.hpp>

#include "asefd/ase.hpp"
#include "asefd/classify.hpp"
#include "asefd/cost.hpp"
#include "asefd/error.hpp"
#include "asefd/eval.hpp"
#include "asefd/features.hpp"
#include "asefd/ingest.hpp"
#include "asefd/preprocess.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace asefd;
using namespace asefd::cli;

namespace {

constexpr const char* kVersion = "1.0.0";

struct Invocation {
  std::string command;
  std::vector<std::string> argv;
  fs::path config_file;
  RunConfig cfg;
  std::vector<std::string> problems;

  // Command-specific inputs.
  fs::path frames_dir;
  fs::path input;
  fs::path model;
  fs::path meta;
  fs::path features;
  std::string alphas_text;
  std::string classifiers_text;
  int alpha = -1;
  bool table_mflops = false;
  bool include_folds = true;

  std::vector<std::string> outputs;
};

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::MissingFile, "cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::MissingFile, "cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::BadFormat, path.string() + ": " + e.what());
  }
}

fs::path output(Invocation& inv, const std::string& name) {
  fs::create_directories(inv.cfg.out);
  inv.outputs.push_back(name);
  return inv.cfg.out / name;
}

void write_provenance(const Invocation& inv) {
  json doc{
      {"tool", "asefd"},
      {"version", kVersion},
      {"compiler", __VERSION__},
      {"command", inv.command},
      {"argv", inv.argv},
      {"config", inv.cfg.to_json()},
      {"inputs",
       {{"frames", inv.frames_dir.string()},
        {"input", inv.input.string()},
        {"model", inv.model.string()},
        {"meta", inv.meta.string()},
        {"features", inv.features.string()},
        {"alpha", inv.alpha}}},
      {"outputs", inv.outputs},
  };
  fs::create_directories(inv.cfg.out);
  write_json(inv.cfg.out / "run.json", doc);
}

DatasetManifest load_dataset(const RunConfig& cfg) {
  DatasetManifest m = cfg.dataset == "synthetic" ? synth_manifest(cfg.synth) : load_manifest(cfg.dataset);
  if (!cfg.vertical_axis.empty()) m.vertical_axis = parse_axis(cfg.vertical_axis);
  return m;
}

int single_alpha(const Invocation& inv) {
  if (inv.alpha >= 0) return inv.alpha;
  if (inv.cfg.alphas.size() == 1) return inv.cfg.alphas.front();
  throw Error(Errc::Config, "this command needs exactly one alpha (--alpha)");
}

// ---------------------------------------------------------------------------

void cmd_synth(Invocation& inv) {
  auto m = synth_manifest(inv.cfg.synth);
  fs::create_directories(inv.cfg.out);
  write_dataset(m, inv.cfg.out);
  inv.outputs.push_back("manifest.json");
  inv.outputs.push_back("trials/");
  std::printf("wrote %zu trials from %d subjects to %s\n", m.trials.size(), inv.cfg.synth.subjects,
              inv.cfg.out.string().c_str());
}

// Impact windows -> LR/HR frame pairs plus a per-frame index.
void cmd_ingest(Invocation& inv) {
  const auto m = load_dataset(inv.cfg);
  const int alpha = single_alpha(inv);
  const WindowSpec window{m.window_backward_s, m.window_forward_s};
  std::vector<Frame> lr, hr;
  json entries = json::array();
  for (const auto& t : m.trials) {
    const auto pair = make_frame_pair(impact_window(t, window), alpha, t.rate_hz);
    lr.push_back(pair.lr);
    hr.push_back(pair.hr);
    entries.push_back({{"subject_id", t.subject_id}, {"activity_code", t.activity_code}, {"label", to_string(t.label)}});
  }
  const std::string lr_name = "lr_alpha" + std::to_string(alpha) + ".asef";
  save_frames(output(inv, lr_name), lr);
  save_frames(output(inv, "hr.asef"), hr);
  write_json(output(inv, "frames.json"), {{"dataset", to_string(m.dataset)},
                                          {"alpha", alpha},
                                          {"vertical_axis", to_string(m.vertical_axis)},
                                          {"lr", lr_name},
                                          {"hr", "hr.asef"},
                                          {"frames", entries}});
  std::printf("%zu frame pairs at alpha %d (%zu values per LR frame)\n", lr.size(), alpha, lr.front().values.size());
}

void cmd_train_ase(Invocation& inv) {
  const auto meta = read_json(inv.frames_dir / "frames.json");
  const int alpha = meta.at("alpha").get<int>();
  const auto lr = load_frames(inv.frames_dir / meta.at("lr").get<std::string>());
  const auto hr = load_frames(inv.frames_dir / meta.at("hr").get<std::string>());
  if (lr.size() != hr.size()) throw Error(Errc::BadFormat, "LR and HR frame counts differ");
  std::vector<FramePair> pairs;
  for (std::size_t i = 0; i < lr.size(); ++i) pairs.push_back({lr[i], hr[i]});

  TrainSpec spec = inv.cfg.train;
  spec.seed = inv.cfg.seed;
  const auto config = build_config(alpha, inv.cfg.l2_weight, inv.cfg.dropout);
  std::ofstream history(output(inv, "ase_history.csv"));
  history << "epoch,train_mae,val_mae,best_val_mae\n";
  const auto result = train(pairs, config, spec, [&](const EpochStats& e) {
    history << e.epoch << ',' << e.train_mae << ',' << e.val_mae << ',' << e.best_val_mae << '\n';
  });
  const std::string name = "ase_alpha" + std::to_string(alpha) + ".asem";
  result.model.save(output(inv, name));
  std::printf("trained %zu epochs, best validation MAE %.5f at epoch %d -> %s\n", result.history.size(),
              result.history.back().best_val_mae, result.best_epoch, name.c_str());
}

void cmd_enhance(Invocation& inv) {
  const auto model = AseModel::load(inv.model);
  const auto frames = load_frames(inv.input);
  const auto enhanced = enhance_batch(model, frames);
  const std::string name = "enhanced_alpha" + std::to_string(model.config().alpha) + ".asef";
  save_frames(output(inv, name), enhanced);
  std::printf("enhanced %zu frames -> %s\n", enhanced.size(), name.c_str());
}

void cmd_features(Invocation& inv) {
  const auto meta = read_json(inv.meta);
  const auto frames = load_frames(inv.input);
  const auto& entries = meta.at("frames");
  if (entries.size() != frames.size()) throw Error(Errc::BadFormat, "frame index and frame file disagree in length");
  const Axis vertical = parse_axis(inv.cfg.vertical_axis.empty() ? meta.at("vertical_axis").get<std::string>()
                                                                  : inv.cfg.vertical_axis);
  std::vector<FeatureRow> rows;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    Frame f = frames[i].per_axis_len == kHrPerAxis ? frames[i] : resample_frame(frames[i], kHrPerAxis);
    if (f.normalized()) f = denormalize(f);
    FeatureRow row;
    row.subject_id = entries[i].at("subject_id").get<std::string>();
    row.label = parse_label(entries[i].at("label").get<std::string>());
    row.features = frame_features(f, vertical);
    rows.push_back(std::move(row));
  }
  write_feature_csv(output(inv, "features.csv"), rows);
  std::printf("%zu feature rows x %zu features\n", rows.size(), kFeatureCount);
}

void cmd_train_fd(Invocation& inv) {
  const auto rows = read_feature_csv(inv.features);
  if (rows.empty()) throw Error(Errc::EmptyFile, "no feature rows in " + inv.features.string());
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(kFeatureCount));
  std::vector<Label> y;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < kFeatureCount; ++c) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i].features[c];
    y.push_back(rows[i].label);
  }
  const auto kinds = inv.cfg.classifier_kinds();
  if (kinds.size() != 1) throw Error(Errc::Config, "train-fd needs exactly one classifier");
  const auto detector = fit_detector(x, y, kinds.front(), inv.cfg.svm);
  const std::string name = "detector_" + to_string(kinds.front()) + ".fdm";
  detector.save(output(inv, name));
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < rows.size(); ++i) cm.add(y[i], detector.predict(x.row(static_cast<Eigen::Index>(i)).transpose()));
  std::printf("training accuracy %.4f on %zu rows -> %s\n", *metrics(cm).acc, rows.size(), name.c_str());
}

std::vector<FrontEnd> front_ends(AseMode mode) {
  switch (mode) {
    case AseMode::Off: return {FrontEnd::Original};
    case AseMode::On: return {FrontEnd::Ase};
    case AseMode::Both: break;
  }
  return {FrontEnd::Original, FrontEnd::Ase};
}

SweepSpec sweep_spec(const Invocation& inv) {
  SweepSpec spec;
  spec.alphas = inv.cfg.alphas;
  spec.classifiers = inv.cfg.classifier_kinds();
  spec.front_ends = front_ends(inv.cfg.ase_mode());
  spec.l2_weight = inv.cfg.l2_weight;
  spec.dropout = inv.cfg.dropout;
  spec.train = inv.cfg.train;
  spec.train.seed = inv.cfg.seed;
  spec.svm = inv.cfg.svm;
  spec.jobs = inv.cfg.jobs;
  return spec;
}

void print_reports(const std::vector<EvalReport>& reports) {
  std::printf("%-9s %-4s %-20s %9s %8s %8s %8s %8s\n", "rate_hz", "clf", "front_end", "alpha", "acc", "sen", "spe", "pre");
  auto show = [](const std::optional<double>& v) {
    char buf[16];
    if (v) std::snprintf(buf, sizeof buf, "%.4f", *v);
    else std::snprintf(buf, sizeof buf, "UNDEF");
    return std::string(buf);
  };
  for (const auto& r : reports) {
    std::printf("%-9.2f %-4s %-20s %9d %8s %8s %8s %8s\n", r.rate_hz, to_string(r.classifier).c_str(),
                r.front_end_name.c_str(), r.alpha, show(r.mean.acc).c_str(), show(r.mean.sen).c_str(),
                show(r.mean.spe).c_str(), show(r.mean.pre).c_str());
  }
}

void cmd_eval(Invocation& inv) {
  const auto m = load_dataset(inv.cfg);
  auto spec = sweep_spec(inv);
  spec.alphas = {single_alpha(inv)};
  if (spec.classifiers.size() != 1 || spec.front_ends.size() != 1) {
    throw Error(Errc::Config, "eval runs one cell: give one classifier and --ase on or off");
  }
  const auto reports = sweep(m, spec);
  const auto& r = reports.front();
  const std::string stem = "eval_" + to_string(r.classifier) + "_" + to_string(r.front_end) + "_alpha" +
                           std::to_string(r.alpha);
  write_report_csv(output(inv, stem + ".csv"), reports, true);
  write_report_json(output(inv, stem + ".json"), reports);
  print_reports(reports);
}

void cmd_sweep(Invocation& inv) {
  const auto m = load_dataset(inv.cfg);
  const auto reports = sweep(m, sweep_spec(inv));
  write_report_csv(output(inv, "sweep_summary.csv"), reports, false);
  if (inv.include_folds) write_report_csv(output(inv, "sweep_folds.csv"), reports, true);
  write_report_json(output(inv, "sweep_report.json"), reports);
  write_accuracy_table(output(inv, "sweep_accuracy.csv"), reports);
  print_reports(reports);
}

void cmd_cost(Invocation& inv) {
  const auto& model = inv.cfg.cost;
  model.validate();
  auto fmt_battery = [](const CostEstimate& e) {
    return e.battery_life_h ? std::to_string(*e.battery_life_h) : std::string("UNBOUNDED");
  };
  if (inv.table_mflops) {
    std::ofstream out(output(inv, "cost_reference_mflops.csv"));
    out << "mflops,power_ma,ref_power_ma,battery_h,ref_battery_h,battery_rel_err,response_s,"
           "ref_response_s,response_rel_err\n";
    std::printf("%8s %10s %10s %10s %10s %8s %8s\n", "MFLOPs", "power", "battery", "ref_bat", "response",
                "ref_rt", "bat_err");
    for (const auto& row : reference_cost_rows()) {
      const auto e = estimate(model, row.mflops);
      const double eb = std::fabs(*e.battery_life_h - row.battery_h) / row.battery_h;
      const double er = std::fabs(e.response_time_s - row.response_s) / row.response_s;
      out << row.mflops << ',' << e.power_ma << ',' << row.power_ma << ',' << fmt_battery(e) << ',' << row.battery_h
          << ',' << eb << ',' << e.response_time_s << ',' << row.response_s << ',' << er << '\n';
      std::printf("%8.1f %10.1f %10.2f %10.1f %10.2f %8.1f %7.1f%%\n", row.mflops, e.power_ma, *e.battery_life_h,
                  row.battery_h, e.response_time_s, row.response_s, 100 * eb);
    }
    return;
  }
  std::ofstream out(output(inv, "cost_by_alpha.csv"));
  out << "alpha,parameters,mflops,power_ma,battery_h,response_s\n";
  std::printf("%5s %12s %10s %10s %10s %10s\n", "alpha", "parameters", "MFLOPs", "power", "battery", "response");
  for (int a : inv.cfg.alphas) {
    const auto cfg = build_config(a);
    std::size_t params = 0;
    for (const auto& s : layer_shapes(cfg)) params += static_cast<std::size_t>(s.rows) * static_cast<std::size_t>(s.cols + 1);
    const double mflops = count_mflops(cfg);
    const auto e = estimate(model, mflops);
    out << a << ',' << params << ',' << mflops << ',' << e.power_ma << ',' << fmt_battery(e) << ','
        << e.response_time_s << '\n';
    std::printf("%5d %12zu %10.2f %10.1f %10.3f %10.3f\n", a, params, mflops, e.power_ma, *e.battery_life_h,
                e.response_time_s);
  }
}

// ---------------------------------------------------------------------------

void add_common(CLI::App* sub, Invocation& inv) {
  auto& c = inv.cfg;
  sub->add_option("--config", inv.config_file, "JSON config (or a previous run.json); flags override it");
  sub->add_option("-o,--out", c.out, "Output directory")->capture_default_str();
  sub->add_option("--seed", c.seed, "Base seed for training")->capture_default_str();
}

void add_dataset(CLI::App* sub, Invocation& inv) {
  auto& c = inv.cfg;
  sub->add_option("--dataset", c.dataset, "\"synthetic\" or a manifest JSON path")->capture_default_str();
  sub->add_option("--subjects", c.synth.subjects, "Synthetic subjects")->capture_default_str();
  sub->add_option("--trials", c.synth.trials_per_subject, "Synthetic trials per subject")->capture_default_str();
  sub->add_option("--rate", c.synth.rate_hz, "Synthetic sampling rate (Hz)")->capture_default_str();
  sub->add_option("--duration", c.synth.duration_s, "Synthetic trial length (s)")->capture_default_str();
  sub->add_option("--synth-seed", c.synth.seed, "Synthetic generator seed")->capture_default_str();
  sub->add_option("--vertical-axis", c.vertical_axis, "Override the dataset's vertical axis (x, y, z)");
}

void add_training(CLI::App* sub, Invocation& inv) {
  auto& c = inv.cfg;
  sub->add_option("--l2", c.l2_weight, "L2 weight penalty")->capture_default_str();
  sub->add_option("--dropout", c.dropout, "Dropout on encoder dense activations")->capture_default_str();
  sub->add_option("--epochs", c.train.max_epochs, "Maximum epochs")->capture_default_str();
  sub->add_option("--batch", c.train.batch_size, "Minibatch size")->capture_default_str();
  sub->add_option("--step", c.train.step_size, "Adam step size")->capture_default_str();
  sub->add_option("--patience", c.train.patience, "Early-stopping patience (epochs)")->capture_default_str();
  sub->add_option("--stop-train-mae", c.train.stop_train_mae, "Stop once training MAE falls below this (0: off)")
      ->capture_default_str();
}

void add_classifier(CLI::App* sub, Invocation& inv) {
  auto& c = inv.cfg;
  sub->add_option("--classifiers,--classifier", inv.classifiers_text, "Comma list of svm, knn");
  sub->add_option("--svm-box", c.svm.box, "SVM box constraint C")->capture_default_str();
  sub->add_option("--svm-kernel-scale", c.svm.kernel_scale, "RBF kernel scale sigma")->capture_default_str();
}

// A run.json also records the command's file inputs; reuse them as defaults.
void apply_recorded_inputs(Invocation& inv, const json& doc) {
  if (!doc.contains("inputs") || !doc.at("inputs").is_object()) return;
  const auto& in = doc.at("inputs");
  auto path = [&](const char* key, fs::path& dst) {
    if (in.contains(key) && in.at(key).is_string() && !in.at(key).get<std::string>().empty()) {
      dst = in.at(key).get<std::string>();
    }
  };
  path("frames", inv.frames_dir);
  path("input", inv.input);
  path("model", inv.model);
  path("meta", inv.meta);
  path("features", inv.features);
  if (in.contains("alpha") && in.at("alpha").is_number_integer()) inv.alpha = in.at("alpha").get<int>();
}

void require_inputs(Invocation& inv) {
  auto need = [&](bool ok, const char* what) {
    if (!ok) inv.problems.push_back(std::string(what) + " is required for " + inv.command);
  };
  const auto& c = inv.command;
  if (c == "ingest") need(inv.alpha >= 0, "--alpha");
  if (c == "train-ase") need(!inv.frames_dir.empty(), "--frames");
  if (c == "enhance") {
    need(!inv.model.empty(), "--model");
    need(!inv.input.empty(), "--input");
  }
  if (c == "features") {
    need(!inv.input.empty(), "--input");
    need(!inv.meta.empty(), "--meta");
  }
  if (c == "train-fd") need(!inv.features.empty(), "--features");
}

void emit_error(std::string_view code, const std::string& message) {
  std::string escaped;
  for (char ch : message) {
    if (ch == '"' || ch == '\\') escaped += '\\';
    escaped += ch == '\n' ? ' ' : ch;
  }
  std::fprintf(stderr, "error: code=%.*s message=\"%s\"\n", static_cast<int>(code.size()), code.data(),
               escaped.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  Invocation inv;
  for (int i = 0; i < argc; ++i) inv.argv.emplace_back(argv[i]);

  CLI::App app{"Accelerometer signal enhancement and fall detection"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::map<std::string, std::function<void(Invocation&)>> handlers;
  auto sub = [&](const char* name, const char* help, void (*fn)(Invocation&)) {
    auto* s = app.add_subcommand(name, help);
    add_common(s, inv);
    handlers[name] = fn;
    return s;
  };

  auto* synth = sub("synth", "Write a synthetic dataset (CSV trials + manifest.json)", cmd_synth);
  add_dataset(synth, inv);

  auto* ingest = sub("ingest", "Window trials and write LR/HR frame pairs", cmd_ingest);
  add_dataset(ingest, inv);
  ingest->add_option("--alpha", inv.alpha, "Downsampling factor exponent (0..7)");

  auto* train_ase = sub("train-ase", "Train an enhancement model on ingested frame pairs", cmd_train_ase);
  train_ase->add_option("--frames", inv.frames_dir, "Directory written by ingest");
  add_training(train_ase, inv);

  auto* enh = sub("enhance", "Enhance LR frames with a trained model", cmd_enhance);
  enh->add_option("--model", inv.model, "Model checkpoint (.asem)");
  enh->add_option("--input", inv.input, "Frame file (.asef)");

  auto* feat = sub("features", "Extract the 54 features from frames", cmd_features);
  feat->add_option("--input", inv.input, "Frame file (.asef)");
  feat->add_option("--meta", inv.meta, "frames.json written by ingest");
  feat->add_option("--vertical-axis", inv.cfg.vertical_axis, "Override the vertical axis (x, y, z)");

  auto* train_fd = sub("train-fd", "Fit the standardizer and a classifier on a feature CSV", cmd_train_fd);
  train_fd->add_option("--features", inv.features, "Feature CSV");
  add_classifier(train_fd, inv);

  auto* eval = sub("eval", "Leave-one-subject-out evaluation of one configuration", cmd_eval);
  add_dataset(eval, inv);
  add_training(eval, inv);
  add_classifier(eval, inv);
  eval->add_option("--alpha", inv.alpha, "Downsampling factor exponent (0..7)");
  eval->add_option("--ase", inv.cfg.ase, "on or off");
  eval->add_option("--jobs", inv.cfg.jobs, "Worker threads over folds")->capture_default_str();

  auto* sw = sub("sweep", "Evaluate every (alpha, front end, classifier) cell", cmd_sweep);
  add_dataset(sw, inv);
  add_training(sw, inv);
  add_classifier(sw, inv);
  sw->add_option("--alphas", inv.alphas_text, "Alpha list, e.g. 0..7 or 0,4,7");
  sw->add_option("--ase", inv.cfg.ase, "on, off or both")->capture_default_str();
  sw->add_option("--jobs", inv.cfg.jobs, "Worker threads over folds")->capture_default_str();
  sw->add_flag("!--no-folds", inv.include_folds, "Skip the per-fold CSV");

  auto* cost = sub("cost", "FLOPs, power, battery life and response time", cmd_cost);
  cost->add_flag("--table-v-mflops,--reference-mflops", inv.table_mflops, "Estimate from the reference MFLOPs column");
  cost->add_option("--alphas", inv.alphas_text, "Alpha list for per-configuration estimates");
  cost->add_option("--clock-hz", inv.cfg.cost.clock_hz)->capture_default_str();
  cost->add_option("--battery-mah", inv.cfg.cost.battery_mah)->capture_default_str();
  cost->add_option("--ma-per-mflop", inv.cfg.cost.ma_per_mflop)->capture_default_str();
  cost->add_option("--cycles-per-flop", inv.cfg.cost.cycles_per_flop)->capture_default_str();

  // A config file supplies defaults that explicit flags then override, so it
  // has to be applied before the real parse.
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--config") inv.config_file = argv[i + 1];
  }
  try {
    if (!inv.config_file.empty()) {
      load_config_file(inv.cfg, inv.config_file, inv.problems);
      apply_recorded_inputs(inv, read_json(inv.config_file));
    }
  } catch (const Error& e) {
    emit_error(errc_name(e.code()), e.what());
    return 2;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    emit_error("usage", e.what());
    return 2;
  }

  try {
    for (auto* s : app.get_subcommands()) inv.command = s->get_name();
    if (!inv.alphas_text.empty()) {
      try {
        inv.cfg.alphas = parse_alpha_list(inv.alphas_text);
      } catch (const Error& e) {
        inv.problems.push_back(e.what());
      }
    }
    require_inputs(inv);
    if (inv.alpha > kMaxAlpha) inv.problems.push_back("alpha must be within [0, 7]");
    if (inv.alpha >= 0 && (inv.command == "ingest" || inv.command == "eval")) inv.cfg.alphas = {inv.alpha};
    if (!inv.classifiers_text.empty()) inv.cfg.classifiers = split_list(inv.classifiers_text);
    if (inv.command == "eval" && inv.cfg.ase == "both") inv.problems.push_back("eval needs --ase on or off");
    validate(inv.cfg, inv.problems);
    raise_if_any(inv.problems);

    handlers.at(inv.command)(inv);
    write_provenance(inv);
  } catch (const Error& e) {
    emit_error(errc_name(e.code()), e.what());
    return 1;
  } catch (const std::exception& e) {
    emit_error("internal", e.what());
    return 1;
  }
  return 0;
}
