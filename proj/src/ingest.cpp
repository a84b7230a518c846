#include "asefd/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "asefd/error.hpp"
#include "asefd/rng.hpp"

namespace asefd {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Label label) { return label == Label::Fall ? "FALL" : "ADL"; }

std::string to_string(Axis axis) {
  switch (axis) {
    case Axis::X: return "X";
    case Axis::Y: return "Y";
    case Axis::Z: return "Z";
  }
  return "?";
}

std::string to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::SisFall: return "sisfall";
    case DatasetKind::FallAllD: return "fallalld";
    case DatasetKind::Synthetic: return "synthetic";
  }
  return "?";
}

std::string to_string(SynthKind kind) {
  switch (kind) {
    case SynthKind::FallLike: return "FALL_LIKE";
    case SynthKind::AdlWalk: return "ADL_WALK";
    case SynthKind::AdlStill: return "ADL_STILL";
  }
  return "?";
}

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

}  // namespace

Label parse_label(const std::string& text) {
  const auto s = lower(text);
  if (s == "fall") return Label::Fall;
  if (s == "adl") return Label::Adl;
  throw Error(Errc::InvalidArgument, "unknown label '" + text + "'");
}

Axis parse_axis(const std::string& text) {
  const auto s = lower(text);
  if (s == "x") return Axis::X;
  if (s == "y") return Axis::Y;
  if (s == "z") return Axis::Z;
  throw Error(Errc::InvalidArgument, "unknown axis '" + text + "'");
}

DatasetKind parse_dataset_kind(const std::string& text) {
  const auto s = lower(text);
  if (s == "sisfall") return DatasetKind::SisFall;
  if (s == "fallalld" || s == "fallaid") return DatasetKind::FallAllD;
  if (s == "synthetic") return DatasetKind::Synthetic;
  throw Error(Errc::InvalidArgument, "unknown dataset '" + text + "'");
}

DatasetDefaults dataset_defaults(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::SisFall: return {Axis::Z, 1.44, 2.0, 200.0};
    case DatasetKind::FallAllD: return {Axis::Y, 1.23, 2.0, 238.0};
    case DatasetKind::Synthetic: return {Axis::Z, 1.44, 2.0, 200.0};
  }
  return {Axis::Z, 1.44, 2.0, 200.0};
}

Label LabelRules::classify(const std::string& activity_code) const {
  for (const auto& rule : exact) {
    if (rule.prefix == activity_code) return rule.label;
  }
  for (const auto& rule : prefixes) {
    if (activity_code.starts_with(rule.prefix)) return rule.label;
  }
  throw Error(Errc::UnknownActivityCode, "no label rule matches activity code '" + activity_code + "'");
}

double AdcSpec::scale() const {
  if (resolution_bits < 8 || resolution_bits > 16) {
    throw Error(Errc::InvalidArgument, "ADC resolution must be within [8, 16] bits, got " +
                                           std::to_string(resolution_bits));
  }
  if (!(range_g > 0.0)) throw Error(Errc::InvalidArgument, "ADC range must be positive");
  return 2.0 * range_g / std::ldexp(1.0, resolution_bits);
}

std::string activity_code_from_filename(const fs::path& path) {
  const auto stem = path.stem().string();
  return stem.substr(0, stem.find('_'));
}

namespace {

std::vector<std::string_view> split(std::string_view line, char delimiter) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(delimiter, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == ';'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return value;
}

std::optional<std::size_t> as_index(const std::string& column) {
  if (column.empty() || !std::all_of(column.begin(), column.end(), ::isdigit)) return std::nullopt;
  return static_cast<std::size_t>(std::stoul(column));
}

std::size_t resolve_column(const std::string& column, const std::vector<std::string_view>& header,
                           const fs::path& path) {
  if (auto idx = as_index(column)) return *idx;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (trim(header[i]) == column) return i;
  }
  throw Error(Errc::MalformedRow, path.string() + ": header lacks column '" + column + "'");
}

}  // namespace

Trial load_trial_csv(const fs::path& path, const CsvSchema& schema, const std::optional<AdcSpec>& adc,
                     const TrialMeta& meta, const LabelRules& rules) {
  if (!fs::exists(path)) throw Error(Errc::MissingFile, "no such file: " + path.string());
  std::ifstream in(path);
  if (!in) throw Error(Errc::MissingFile, "cannot open: " + path.string());
  if (!(meta.rate_hz > 0.0)) throw Error(Errc::InvalidArgument, "rate must be positive");

  const double scale = adc ? adc->scale() : 1.0;

  Trial trial;
  trial.subject_id = meta.subject_id;
  trial.activity_code = meta.activity_code.value_or(activity_code_from_filename(path));
  trial.label = rules.classify(trial.activity_code);
  trial.rate_hz = meta.rate_hz;

  std::string line;
  std::size_t cols[3] = {0, 1, 2};
  bool header_seen = !schema.has_header;
  if (!schema.has_header) {
    const std::string* names[3] = {&schema.ax, &schema.ay, &schema.az};
    for (int k = 0; k < 3; ++k) {
      auto idx = as_index(*names[k]);
      if (!idx) throw Error(Errc::InvalidArgument, "headerless schema needs column indices");
      cols[k] = *idx;
    }
  }

  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split(line, schema.delimiter);
    if (!header_seen) {
      cols[0] = resolve_column(schema.ax, fields, path);
      cols[1] = resolve_column(schema.ay, fields, path);
      cols[2] = resolve_column(schema.az, fields, path);
      header_seen = true;
      continue;
    }
    double v[3];
    for (int k = 0; k < 3; ++k) {
      if (cols[k] >= fields.size()) {
        throw Error(Errc::MalformedRow, path.string() + ":" + std::to_string(line_no) + ": missing column");
      }
      auto parsed = parse_double(fields[cols[k]]);
      if (!parsed || !std::isfinite(*parsed)) {
        throw Error(Errc::MalformedRow, path.string() + ":" + std::to_string(line_no) +
                                            ": non-numeric value '" + std::string(fields[cols[k]]) + "'");
      }
      v[k] = *parsed * scale;
      if (std::abs(v[k]) > kMaxComponentG) {
        throw Error(Errc::MalformedRow, path.string() + ":" + std::to_string(line_no) +
                                            ": acceleration exceeds sanity bound");
      }
    }
    trial.samples.push_back({v[0], v[1], v[2]});
  }
  if (trial.samples.empty()) throw Error(Errc::EmptyFile, "no samples in " + path.string());
  return trial;
}

// ---------------------------------------------------------------------------
// Synthetic data

namespace {

struct Vec3 {
  double x, y, z;
  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double norm() const { return std::sqrt(x * x + y * y + z * z); }
  Vec3 unit() const { return *this * (1.0 / norm()); }
};

Vec3 upright(const SubjectStyle& style) { return {0.0, std::sin(style.tilt_rad), std::cos(style.tilt_rad)}; }

}  // namespace

Trial synth_trial(SynthKind kind, std::uint64_t seed, double rate_hz, double duration_s,
                  const SubjectStyle& style) {
  if (!(rate_hz > 0.0)) throw Error(Errc::InvalidArgument, "rate must be positive");
  if (!(duration_s >= 4.0)) throw Error(Errc::InvalidArgument, "duration must be at least 4 s");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto noise = [&] { return style.noise_g * (2.0 * unit(rng) - 1.0); };

  const auto n = static_cast<std::size_t>(std::llround(duration_s * rate_hz));
  const double two_pi = 2.0 * std::numbers::pi;
  const Vec3 up = upright(style);

  Trial trial;
  trial.subject_id = "synthetic";
  trial.rate_hz = rate_hz;
  trial.samples.resize(n);

  switch (kind) {
    case SynthKind::AdlStill: {
      trial.activity_code = "D02";
      trial.label = Label::Adl;
      for (auto& s : trial.samples) s = {up.x + noise(), up.y + noise(), up.z + noise()};
      break;
    }
    case SynthKind::AdlWalk: {
      trial.activity_code = "D01";
      trial.label = Label::Adl;
      const double f = style.gait_hz * (0.9 + 0.2 * unit(rng));
      const double p1 = two_pi * unit(rng), p2 = two_pi * unit(rng), p3 = two_pi * unit(rng);
      const double amp = 0.35 * style.gain;
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / rate_hz;
        const Vec3 v = up * (1.0 + amp * std::sin(two_pi * f * t + p1)) +
                       Vec3{0.15 * style.gain * std::sin(two_pi * 0.5 * f * t + p2),
                            0.10 * style.gain * std::sin(two_pi * f * t + p3), 0.0};
        trial.samples[i] = {v.x + noise(), v.y + noise(), v.z + noise()};
      }
      break;
    }
    case SynthKind::FallLike: {
      trial.activity_code = "F01";
      trial.label = Label::Fall;
      const double t_impact = duration_s * (0.4 + 0.2 * unit(rng));
      const auto impact = std::min<std::size_t>(n - 2, std::max<std::size_t>(
          1, static_cast<std::size_t>(std::llround(t_impact * rate_hz))));
      const double ti = static_cast<double>(impact) / rate_hz;
      const double phi = 0.3 * (2.0 * unit(rng) - 1.0);
      const Vec3 lying = Vec3{std::cos(phi), 0.1 * (2.0 * unit(rng) - 1.0), std::sin(phi)}.unit();
      const double free_fall_s = 0.4 + 0.2 * unit(rng);
      const double vib_hz = 5.0 + 3.0 * unit(rng);
      const double peak = (3.5 + 1.5 * unit(rng)) * std::max(1.0, style.gain);
      const double spike_w = std::max(0.03, 1.5 / rate_hz);
      const Vec3 spike_dir = (up + lying + Vec3{0.3 * unit(rng), 0.3 * unit(rng), 0.0}).unit();

      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / rate_hz;
        Vec3 v{0, 0, 0};
        if (t < ti - free_fall_s) {
          v = up * (1.0 + 0.05 * style.gain * std::sin(two_pi * 0.8 * t));
        } else if (t < ti) {
          const double u = (t - (ti - free_fall_s)) / free_fall_s;  // 0 -> 1
          const Vec3 dir = (up * (1.0 - u) + lying * u).unit();
          v = dir * (1.0 - 0.8 * u);
        } else {
          const double since = t - ti;
          v = lying;
          if (since > spike_w) {
            const double decay = std::exp(-(since - spike_w) / 0.15);
            const double osc = 0.8 * style.gain * decay * std::sin(two_pi * vib_hz * since);
            v = v + Vec3{osc, 0.5 * osc, 0.7 * osc};
          }
        }
        const double tri = std::max(0.0, 1.0 - std::abs(t - ti) / spike_w);
        v = v + spike_dir * (peak * tri);
        trial.samples[i] = {v.x + noise(), v.y + noise(), v.z + noise()};
      }

      // The impact sample is the unique global maximum of the norm.
      double other_max = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (i != impact) other_max = std::max(other_max, trial.samples[i].norm());
      }
      const double target = std::max(peak, other_max + 0.5);
      auto& s = trial.samples[impact];
      const double k = target / s.norm();
      s = {s.ax * k, s.ay * k, s.az * k};
      break;
    }
  }
  return trial;
}

DatasetManifest synth_manifest(const SynthDatasetSpec& spec) {
  if (spec.subjects < 1 || spec.trials_per_subject < 1) {
    throw Error(Errc::InvalidArgument, "synthetic cohort needs at least one subject and one trial");
  }
  DatasetManifest manifest;
  manifest.dataset = DatasetKind::Synthetic;
  const auto defaults = dataset_defaults(DatasetKind::Synthetic);
  manifest.vertical_axis = defaults.vertical_axis;
  manifest.window_backward_s = defaults.window_backward_s;
  manifest.window_forward_s = defaults.window_forward_s;

  for (int s = 0; s < spec.subjects; ++s) {
    std::mt19937_64 subject_rng(mix_seed(spec.seed, static_cast<std::uint64_t>(s)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    SubjectStyle style;
    style.gain = 0.85 + 0.3 * unit(subject_rng);
    style.gait_hz = 1.2 + 0.8 * unit(subject_rng);
    style.tilt_rad = 0.3 * unit(subject_rng) - 0.15;
    style.noise_g = 0.02 + 0.02 * unit(subject_rng);

    char id[16];
    std::snprintf(id, sizeof id, "S%02d", s + 1);
    const int falls = spec.trials_per_subject / 2;
    for (int k = 0; k < spec.trials_per_subject; ++k) {
      SynthKind kind = SynthKind::FallLike;
      if (k >= falls) kind = ((k - falls) % 2 == 0) ? SynthKind::AdlWalk : SynthKind::AdlStill;
      const auto seed = mix_seed(spec.seed, static_cast<std::uint64_t>(s) * 100003u + static_cast<std::uint64_t>(k) + 1u);
      Trial trial = synth_trial(kind, seed, spec.rate_hz, spec.duration_s, style);
      trial.subject_id = id;
      manifest.trials.push_back(std::move(trial));
    }
  }
  return manifest;
}

std::vector<std::string> distinct_subjects(const std::vector<Trial>& trials) {
  std::set<std::string> ids;
  for (const auto& t : trials) ids.insert(t.subject_id);
  return {ids.begin(), ids.end()};
}

std::vector<LosoFold> partition_loso(const DatasetManifest& manifest) {
  const auto subjects = distinct_subjects(manifest.trials);
  if (subjects.size() < 2) {
    throw Error(Errc::SingleSubject, "leave-one-subject-out needs at least two subjects");
  }
  std::vector<LosoFold> folds;
  folds.reserve(subjects.size());
  for (const auto& subject : subjects) {
    LosoFold fold;
    fold.test_subject = subject;
    for (std::size_t i = 0; i < manifest.trials.size(); ++i) {
      (manifest.trials[i].subject_id == subject ? fold.test_trials : fold.train_trials).push_back(i);
    }
    folds.push_back(std::move(fold));
  }
  return folds;
}

// ---------------------------------------------------------------------------
// Manifest documents

DatasetManifest load_manifest(const fs::path& path) {
  if (!fs::exists(path)) throw Error(Errc::MissingFile, "no such manifest: " + path.string());
  std::ifstream in(path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::BadFormat, path.string() + ": " + e.what());
  }

  try {
    DatasetManifest manifest;
    manifest.dataset = parse_dataset_kind(doc.value("dataset", std::string("synthetic")));
    const auto defaults = dataset_defaults(manifest.dataset);
    manifest.vertical_axis = parse_axis(doc.value("vertical_axis", to_string(defaults.vertical_axis)));
    manifest.window_backward_s = doc.value("window_backward_s", defaults.window_backward_s);
    manifest.window_forward_s = doc.value("window_forward_s", defaults.window_forward_s);
    if (!(manifest.window_backward_s > 0.0) || !(manifest.window_forward_s > 0.0)) {
      throw Error(Errc::InvalidArgument, "window sizes must be positive");
    }
    const double rate = doc.value("rate_hz", defaults.rate_hz);

    CsvSchema schema;
    if (doc.contains("schema")) {
      const auto& s = doc["schema"];
      schema.t = s.value("t", schema.t);
      schema.ax = s.value("ax", schema.ax);
      schema.ay = s.value("ay", schema.ay);
      schema.az = s.value("az", schema.az);
      const auto delim = s.value("delimiter", std::string(1, schema.delimiter));
      if (delim.size() != 1) throw Error(Errc::InvalidArgument, "delimiter must be one character");
      schema.delimiter = delim[0];
      schema.has_header = s.value("has_header", schema.has_header);
    }
    std::optional<AdcSpec> adc;
    if (doc.contains("adc") && !doc["adc"].is_null()) {
      adc = AdcSpec{doc["adc"].value("range_g", 16.0), doc["adc"].value("resolution_bits", 13)};
      (void)adc->scale();
    }
    LabelRules rules;
    if (doc.contains("label_rules")) {
      const auto& lr = doc["label_rules"];
      if (lr.contains("prefixes")) {
        rules.prefixes.clear();
        for (const auto& [prefix, label] : lr["prefixes"].items()) {
          rules.prefixes.push_back({prefix, parse_label(label.get<std::string>())});
        }
      }
      if (lr.contains("exact")) {
        for (const auto& [code, label] : lr["exact"].items()) {
          rules.exact.push_back({code, parse_label(label.get<std::string>())});
        }
      }
    }
    std::set<std::string> excluded;
    if (doc.contains("exclude_subjects")) {
      for (const auto& s : doc["exclude_subjects"]) excluded.insert(s.get<std::string>());
    }

    const auto base = path.parent_path();
    for (const auto& entry : doc.at("trials")) {
      TrialMeta meta;
      meta.subject_id = entry.at("subject_id").get<std::string>();
      if (excluded.count(meta.subject_id)) continue;
      if (entry.contains("activity_code")) meta.activity_code = entry["activity_code"].get<std::string>();
      meta.rate_hz = entry.value("rate_hz", rate);
      fs::path trial_path = entry.at("path").get<std::string>();
      if (trial_path.is_relative()) trial_path = base / trial_path;
      manifest.trials.push_back(load_trial_csv(trial_path, schema, adc, meta, rules));
    }
    return manifest;
  } catch (const json::exception& e) {
    throw Error(Errc::BadFormat, path.string() + ": " + e.what());
  }
}

fs::path write_dataset(const DatasetManifest& manifest, const fs::path& dir) {
  fs::create_directories(dir / "trials");
  json doc;
  doc["dataset"] = to_string(manifest.dataset);
  doc["vertical_axis"] = to_string(manifest.vertical_axis);
  doc["window_backward_s"] = manifest.window_backward_s;
  doc["window_forward_s"] = manifest.window_forward_s;
  doc["schema"] = {{"t", "t"}, {"ax", "ax"}, {"ay", "ay"}, {"az", "az"}, {"delimiter", ","}, {"has_header", true}};
  doc["trials"] = json::array();

  std::map<std::string, int> counters;
  for (const auto& trial : manifest.trials) {
    const int k = ++counters[trial.subject_id + "_" + trial.activity_code];
    char name[96];
    std::snprintf(name, sizeof name, "%s_%s_R%02d.csv", trial.activity_code.c_str(),
                  trial.subject_id.c_str(), k);
    std::ofstream out(dir / "trials" / name);
    out << "t,ax,ay,az\n";
    out.precision(17);
    for (std::size_t i = 0; i < trial.samples.size(); ++i) {
      const auto& s = trial.samples[i];
      out << static_cast<double>(i) / trial.rate_hz << ',' << s.ax << ',' << s.ay << ',' << s.az << '\n';
    }
    doc["trials"].push_back({{"path", std::string("trials/") + name},
                             {"subject_id", trial.subject_id},
                             {"activity_code", trial.activity_code},
                             {"rate_hz", trial.rate_hz}});
  }
  const auto manifest_path = dir / "manifest.json";
  std::ofstream(manifest_path) << doc.dump(2) << '\n';
  return manifest_path;
}

}  // namespace asefd
