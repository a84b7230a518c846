#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "asefd/ase.hpp"
#include "asefd/classify.hpp"
#include "asefd/cost.hpp"
#include "asefd/ingest.hpp"

namespace asefd::cli {

enum class AseMode { Off, On, Both };

// Everything a command may need. Defaults are the documented ones; a JSON
// config file and then command-line flags override them.
struct RunConfig {
  std::string dataset = "synthetic";  // "synthetic" or a manifest path
  SynthDatasetSpec synth{6, 20, 200.0, 10.0, 1};
  std::vector<int> alphas{0, 1, 2, 3, 4, 5, 6, 7};
  std::vector<std::string> classifiers{"svm", "knn"};
  std::string ase = "both";
  double l2_weight = 0.0;
  double dropout = 0.0;
  TrainSpec train;
  SvmParams svm;
  CostModel cost;
  int jobs = 1;
  std::uint64_t seed = 0;
  std::filesystem::path out = "out";
  std::string vertical_axis;  // empty: dataset default

  AseMode ase_mode() const;
  std::vector<ClassifierKind> classifier_kinds() const;
  nlohmann::json to_json() const;
};

/// Applies a config document on top of cfg. Accepts either a bare config or a
/// run.json provenance record (its "config" member). Bad keys and types are
/// appended to problems rather than thrown.
void apply_json(RunConfig& cfg, const nlohmann::json& doc, std::vector<std::string>& problems);
void load_config_file(RunConfig& cfg, const std::filesystem::path& path, std::vector<std::string>& problems);

/// "0..7", "0,3,7" or "5".
std::vector<int> parse_alpha_list(const std::string& text);
std::vector<std::string> split_list(const std::string& text);

/// Every violation of the shared fields, appended to problems.
void validate(const RunConfig& cfg, std::vector<std::string>& problems);

/// Throws Errc::Config listing all problems if there are any.
void raise_if_any(const std::vector<std::string>& problems);

}  // namespace asefd::cli
