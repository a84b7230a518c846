#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace asefd {

// Tri-axial acceleration in g.
struct Sample {
  double ax = 0.0;
  double ay = 0.0;
  double az = 0.0;

  double norm() const { return std::sqrt(ax * ax + ay * ay + az * az); }
  bool operator==(const Sample&) const = default;
};

// Sanity bound on any single component, in g.
inline constexpr double kMaxComponentG = 32.0;

enum class Label { Fall, Adl };
enum class Axis { X, Y, Z };
enum class DatasetKind { SisFall, FallAllD, Synthetic };

std::string to_string(Label label);
std::string to_string(Axis axis);
std::string to_string(DatasetKind kind);
Label parse_label(const std::string& text);
Axis parse_axis(const std::string& text);
DatasetKind parse_dataset_kind(const std::string& text);

struct Trial {
  std::string subject_id;
  std::string activity_code;
  Label label = Label::Adl;
  double rate_hz = 0.0;
  std::vector<Sample> samples;

  bool operator==(const Trial&) const = default;
};

struct DatasetManifest {
  DatasetKind dataset = DatasetKind::Synthetic;
  std::vector<Trial> trials;
  Axis vertical_axis = Axis::Z;
  double window_backward_s = 1.44;
  double window_forward_s = 2.0;
};

// Default vertical axis and impact-window sizes for each dataset.
struct DatasetDefaults {
  Axis vertical_axis;
  double window_backward_s;
  double window_forward_s;
  double rate_hz;
};
DatasetDefaults dataset_defaults(DatasetKind kind);

/// Maps activity codes to labels. Rules are checked in order; the first whose
/// prefix matches wins. Exact entries take precedence over prefixes.
struct LabelRules {
  struct Rule {
    std::string prefix;
    Label label;
  };
  std::vector<Rule> exact;
  std::vector<Rule> prefixes{{"F", Label::Fall}, {"A", Label::Adl}, {"D", Label::Adl}};

  Label classify(const std::string& activity_code) const;
};

// Column selection for trial CSV files. A column given as a plain
// non-negative integer is a 0-based index; anything else is a header name.
struct CsvSchema {
  std::string t = "t";  // empty = no time column
  std::string ax = "ax";
  std::string ay = "ay";
  std::string az = "az";
  char delimiter = ',';
  bool has_header = true;
};

// Raw ADC counts to g: value * (2 * range_g / 2^resolution_bits).
struct AdcSpec {
  double range_g = 16.0;
  int resolution_bits = 13;

  double scale() const;
};

struct TrialMeta {
  std::string subject_id;
  std::optional<std::string> activity_code;  // default: derived from the filename
  double rate_hz = 200.0;
};

/// Activity code embedded in a dataset filename: the stem up to the first '_'
/// (e.g. "F05_SA01_R02.txt" -> "F05").
std::string activity_code_from_filename(const std::filesystem::path& path);

Trial load_trial_csv(const std::filesystem::path& path, const CsvSchema& schema,
                     const std::optional<AdcSpec>& adc, const TrialMeta& meta,
                     const LabelRules& rules = {});

enum class SynthKind { FallLike, AdlWalk, AdlStill };
std::string to_string(SynthKind kind);

// Per-subject variation applied by the generator.
struct SubjectStyle {
  double gain = 1.0;        // scales dynamic components
  double gait_hz = 1.6;     // walking cadence
  double tilt_rad = 0.0;    // sensor mounting tilt about X
  double noise_g = 0.03;    // uniform noise half-width
};

/// Deterministic synthetic trial. FallLike: upright baseline, free-fall dip,
/// a single impact spike >= 3 g placed in the middle fifth, damped vibration,
/// then rest lying on the X axis. AdlWalk: periodic gait. AdlStill: 1 g plus
/// bounded noise.
Trial synth_trial(SynthKind kind, std::uint64_t seed, double rate_hz, double duration_s,
                  const SubjectStyle& style = {});

struct SynthDatasetSpec {
  int subjects = 6;
  int trials_per_subject = 20;
  double rate_hz = 200.0;
  double duration_s = 10.0;
  std::uint64_t seed = 1;
};

/// Synthetic cohort: half of each subject's trials are falls, the rest split
/// between walking and standing still.
DatasetManifest synth_manifest(const SynthDatasetSpec& spec);

struct LosoFold {
  std::string test_subject;
  std::vector<std::size_t> train_trials;  // indices into manifest.trials
  std::vector<std::size_t> test_trials;
};

/// One fold per distinct subject, ordered by subject id.
std::vector<LosoFold> partition_loso(const DatasetManifest& manifest);

std::vector<std::string> distinct_subjects(const std::vector<Trial>& trials);

/// Manifest document: dataset-level settings plus {path, subject_id,
/// activity_code} per trial. Relative paths resolve against the manifest's
/// directory.
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Writes trials as CSV files under dir plus manifest.json; returns its path.
std::filesystem::path write_dataset(const DatasetManifest& manifest,
                                    const std::filesystem::path& dir);

}  // namespace asefd
