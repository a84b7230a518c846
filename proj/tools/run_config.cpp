#include "run_config.hpp"

#include <fstream>
#include <sstream>

#include "asefd/error.hpp"
#include "asefd/preprocess.hpp"

namespace asefd::cli {

using nlohmann::json;

AseMode RunConfig::ase_mode() const {
  if (ase == "off") return AseMode::Off;
  if (ase == "on") return AseMode::On;
  return AseMode::Both;
}

std::vector<ClassifierKind> RunConfig::classifier_kinds() const {
  std::vector<ClassifierKind> kinds;
  for (const auto& c : classifiers) kinds.push_back(parse_classifier(c));
  return kinds;
}

json RunConfig::to_json() const {
  return {
      {"dataset", dataset},
      {"synth",
       {{"subjects", synth.subjects},
        {"trials_per_subject", synth.trials_per_subject},
        {"rate_hz", synth.rate_hz},
        {"duration_s", synth.duration_s},
        {"seed", synth.seed}}},
      {"alphas", alphas},
      {"classifiers", classifiers},
      {"ase", ase},
      {"l2", l2_weight},
      {"dropout", dropout},
      {"train",
       {{"epochs", train.max_epochs},
        {"batch", train.batch_size},
        {"step", train.step_size},
        {"patience", train.patience},
        {"stop_train_mae", train.stop_train_mae}}},
      {"svm", {{"box", svm.box}, {"kernel_scale", svm.kernel_scale}, {"tolerance", svm.tolerance}}},
      {"cost",
       {{"clock_hz", cost.clock_hz},
        {"battery_mah", cost.battery_mah},
        {"ma_per_mflop", cost.ma_per_mflop},
        {"cycles_per_flop", cost.cycles_per_flop}}},
      {"jobs", jobs},
      {"seed", seed},
      {"out", out.string()},
      {"vertical_axis", vertical_axis},
  };
}

namespace {

template <typename T>
void take(const json& obj, const char* key, T& dst, const std::string& where, std::vector<std::string>& problems) {
  if (!obj.contains(key)) return;
  try {
    dst = obj.at(key).get<T>();
  } catch (const json::exception&) {
    problems.push_back(where + key + ": wrong type");
  }
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where,
                std::vector<std::string>& problems) {
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) problems.push_back("unknown key " + where + key);
  }
}

}  // namespace

void apply_json(RunConfig& cfg, const json& input, std::vector<std::string>& problems) {
  const json& doc = input.contains("config") && input.at("config").is_object() ? input.at("config") : input;
  if (!doc.is_object()) {
    problems.push_back("config must be a JSON object");
    return;
  }
  check_keys(doc,
             {"dataset", "synth", "alphas", "classifiers", "ase", "l2", "dropout", "train", "svm", "cost", "jobs",
              "seed", "out", "vertical_axis"},
             "", problems);
  take(doc, "dataset", cfg.dataset, "", problems);
  take(doc, "ase", cfg.ase, "", problems);
  take(doc, "l2", cfg.l2_weight, "", problems);
  take(doc, "dropout", cfg.dropout, "", problems);
  take(doc, "jobs", cfg.jobs, "", problems);
  take(doc, "seed", cfg.seed, "", problems);
  take(doc, "vertical_axis", cfg.vertical_axis, "", problems);
  if (doc.contains("out")) {
    std::string out;
    take(doc, "out", out, "", problems);
    if (!out.empty()) cfg.out = out;
  }
  if (doc.contains("alphas")) {
    const auto& a = doc.at("alphas");
    if (a.is_string()) {
      try {
        cfg.alphas = parse_alpha_list(a.get<std::string>());
      } catch (const Error& e) {
        problems.push_back(std::string("alphas: ") + e.what());
      }
    } else {
      take(doc, "alphas", cfg.alphas, "", problems);
    }
  }
  if (doc.contains("classifiers")) {
    const auto& c = doc.at("classifiers");
    if (c.is_string()) cfg.classifiers = split_list(c.get<std::string>());
    else take(doc, "classifiers", cfg.classifiers, "", problems);
  }
  if (doc.contains("synth")) {
    const auto& s = doc.at("synth");
    check_keys(s, {"subjects", "trials_per_subject", "rate_hz", "duration_s", "seed"}, "synth.", problems);
    take(s, "subjects", cfg.synth.subjects, "synth.", problems);
    take(s, "trials_per_subject", cfg.synth.trials_per_subject, "synth.", problems);
    take(s, "rate_hz", cfg.synth.rate_hz, "synth.", problems);
    take(s, "duration_s", cfg.synth.duration_s, "synth.", problems);
    take(s, "seed", cfg.synth.seed, "synth.", problems);
  }
  if (doc.contains("train")) {
    const auto& t = doc.at("train");
    check_keys(t, {"epochs", "batch", "step", "patience", "stop_train_mae"}, "train.", problems);
    take(t, "epochs", cfg.train.max_epochs, "train.", problems);
    take(t, "batch", cfg.train.batch_size, "train.", problems);
    take(t, "step", cfg.train.step_size, "train.", problems);
    take(t, "patience", cfg.train.patience, "train.", problems);
    take(t, "stop_train_mae", cfg.train.stop_train_mae, "train.", problems);
  }
  if (doc.contains("svm")) {
    const auto& s = doc.at("svm");
    check_keys(s, {"box", "kernel_scale", "tolerance"}, "svm.", problems);
    take(s, "box", cfg.svm.box, "svm.", problems);
    take(s, "kernel_scale", cfg.svm.kernel_scale, "svm.", problems);
    take(s, "tolerance", cfg.svm.tolerance, "svm.", problems);
  }
  if (doc.contains("cost")) {
    const auto& c = doc.at("cost");
    check_keys(c, {"clock_hz", "battery_mah", "ma_per_mflop", "cycles_per_flop"}, "cost.", problems);
    take(c, "clock_hz", cfg.cost.clock_hz, "cost.", problems);
    take(c, "battery_mah", cfg.cost.battery_mah, "cost.", problems);
    take(c, "ma_per_mflop", cfg.cost.ma_per_mflop, "cost.", problems);
    take(c, "cycles_per_flop", cfg.cost.cycles_per_flop, "cost.", problems);
  }
}

void load_config_file(RunConfig& cfg, const std::filesystem::path& path, std::vector<std::string>& problems) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::MissingFile, "cannot read config " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw Error(Errc::Config, "config " + path.string() + " is not valid JSON: " + e.what());
  }
  apply_json(cfg, doc, problems);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

std::vector<int> parse_alpha_list(const std::string& text) {
  auto to_int = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw Error(Errc::Config, "cannot parse alpha list \"" + text + "\"");
    }
  };
  std::vector<int> out;
  for (const auto& item : split_list(text)) {
    const auto dots = item.find("..");
    if (dots == std::string::npos) {
      out.push_back(to_int(item));
      continue;
    }
    const int lo = to_int(item.substr(0, dots)), hi = to_int(item.substr(dots + 2));
    if (lo > hi) throw Error(Errc::Config, "empty alpha range \"" + item + "\"");
    for (int a = lo; a <= hi; ++a) out.push_back(a);
  }
  return out;
}

void validate(const RunConfig& cfg, std::vector<std::string>& problems) {
  for (int a : cfg.alphas) {
    if (a < 0 || a > kMaxAlpha) problems.push_back("alpha " + std::to_string(a) + " outside [0, 7]");
  }
  for (const auto& c : cfg.classifiers) {
    if (c != "svm" && c != "knn") problems.push_back("unknown classifier \"" + c + "\" (svm, knn)");
  }
  if (cfg.ase != "on" && cfg.ase != "off" && cfg.ase != "both") {
    problems.push_back("ase must be on, off or both, got \"" + cfg.ase + "\"");
  }
  if (!(cfg.l2_weight >= 0.0)) problems.push_back("l2 must be >= 0");
  if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0)) problems.push_back("dropout must be in [0, 1)");
  if (cfg.train.max_epochs < 1) problems.push_back("epochs must be >= 1");
  if (cfg.train.batch_size < 1) problems.push_back("batch must be >= 1");
  if (!(cfg.train.step_size > 0.0)) problems.push_back("step must be > 0");
  if (cfg.train.patience < 1) problems.push_back("patience must be >= 1");
  if (!(cfg.train.stop_train_mae >= 0.0)) problems.push_back("stop_train_mae must be >= 0");
  if (!(cfg.svm.box > 0.0)) problems.push_back("svm box must be > 0");
  if (!(cfg.svm.kernel_scale > 0.0)) problems.push_back("svm kernel_scale must be > 0");
  if (!(cfg.svm.tolerance > 0.0)) problems.push_back("svm tolerance must be > 0");
  if (!(cfg.cost.clock_hz > 0.0)) problems.push_back("cost clock_hz must be > 0");
  if (!(cfg.cost.battery_mah > 0.0)) problems.push_back("cost battery_mah must be > 0");
  if (!(cfg.cost.ma_per_mflop >= 0.0)) problems.push_back("cost ma_per_mflop must be >= 0");
  if (!(cfg.cost.cycles_per_flop >= 0.0)) problems.push_back("cost cycles_per_flop must be >= 0");
  if (cfg.jobs < 1) problems.push_back("jobs must be >= 1");
  if (cfg.out.empty()) problems.push_back("out must not be empty");
  if (!cfg.vertical_axis.empty() && cfg.vertical_axis != "x" && cfg.vertical_axis != "y" && cfg.vertical_axis != "z" &&
      cfg.vertical_axis != "X" && cfg.vertical_axis != "Y" && cfg.vertical_axis != "Z") {
    problems.push_back("vertical_axis must be x, y or z");
  }
  if (cfg.dataset == "synthetic") {
    if (cfg.synth.subjects < 2) problems.push_back("synth.subjects must be >= 2");
    if (cfg.synth.trials_per_subject < 2) problems.push_back("synth.trials_per_subject must be >= 2");
    if (!(cfg.synth.rate_hz > 0.0)) problems.push_back("synth.rate_hz must be > 0");
    if (!(cfg.synth.duration_s >= 4.0)) problems.push_back("synth.duration_s must be >= 4");
  } else if (cfg.dataset.empty()) {
    problems.push_back("dataset must be \"synthetic\" or a manifest path");
  }
}

void raise_if_any(const std::vector<std::string>& problems) {
  if (problems.empty()) return;
  std::string msg = std::to_string(problems.size()) + " configuration problem(s): ";
  for (std::size_t i = 0; i < problems.size(); ++i) msg += (i ? "; " : "") + problems[i];
  throw Error(Errc::Config, msg);
}

}  // namespace asefd::cli
