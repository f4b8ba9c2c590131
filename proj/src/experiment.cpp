#include "storm/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "storm/checkpoint.hpp"

#ifndef STORM_CODE_VERSION
#define STORM_CODE_VERSION "unknown"
#endif

namespace storm {

namespace fs = std::filesystem;
using nlohmann::json;

std::string code_version() { return STORM_CODE_VERSION; }

// ---------------------------------------------------------------------------
// key=value machinery

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

class KvMap {
 public:
  void set(const std::string& k, const std::string& v) { kv_[k] = v; }

  void merge_line(const std::string& raw, const std::string& where) {
    std::string line = raw;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) return;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(where + ": expected key = value, got '" + line + "'");
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }

  std::optional<std::string> take(const std::string& k) {
    auto it = kv_.find(k);
    if (it == kv_.end()) return std::nullopt;
    std::string v = it->second;
    kv_.erase(it);
    return v;
  }

  std::string take_or(const std::string& k, const std::string& dflt) {
    auto v = take(k);
    return v ? *v : dflt;
  }

  double take_real(const std::string& k, double dflt) {
    auto v = take(k);
    if (!v) return dflt;
    try {
      std::size_t pos = 0;
      const double r = std::stod(*v, &pos);
      if (pos != v->size()) throw std::invalid_argument("");
      return r;
    } catch (...) {
      throw std::invalid_argument("config key '" + k + "': expected a number, got '" + *v + "'");
    }
  }

  int take_int(const std::string& k, int dflt) {
    auto v = take(k);
    if (!v) return dflt;
    try {
      std::size_t pos = 0;
      const int r = std::stoi(*v, &pos);
      if (pos != v->size()) throw std::invalid_argument("");
      return r;
    } catch (...) {
      throw std::invalid_argument("config key '" + k + "': expected an integer, got '" + *v + "'");
    }
  }

  bool take_bool(const std::string& k, bool dflt) {
    auto v = take(k);
    if (!v) return dflt;
    if (*v == "true" || *v == "1" || *v == "on") return true;
    if (*v == "false" || *v == "0" || *v == "off") return false;
    throw std::invalid_argument("config key '" + k + "': expected a boolean, got '" + *v + "'");
  }

  void expect_empty() const {
    if (kv_.empty()) return;
    std::string msg = "unknown key";
    msg += kv_.size() > 1 ? "s:" : ":";
    for (const auto& [k, v] : kv_) msg += " " + k;
    throw std::invalid_argument(msg);
  }

 private:
  std::map<std::string, std::string> kv_;
};

char parse_delimiter(const std::string& s) {
  if (s == "tab" || s == "\\t") return '\t';
  if (s.size() == 1) return s[0];
  throw std::invalid_argument("dataset.delimiter: expected a single character or 'tab'");
}

std::string delimiter_to_string(char c) { return c == '\t' ? "tab" : std::string(1, c); }

// ---------------------------------------------------------------------------
// presets

std::map<std::string, std::string> synth_preset(double noise) {
  std::map<std::string, std::string> kv = {
      {"dataset.kind", "synthetic"},
      {"synthetic.classes", "2"},
      {"synthetic.dim", "20"},
      {"synthetic.train", "1000"},
      {"synthetic.val", "300"},
      {"synthetic.test", "500"},
      {"synthetic.separation", "2.0"},
      {"mode", "storm"},
      {"compare_baseline", "true"},
      {"seed_count", "5"},
      {"trainer.batch_size", "32"},
      {"trainer.max_epochs", "10"},
      {"trainer.patience", "10"},
      {"trainer.head_hidden", "64"},
      {"trainer.theta_lr", "0.02"},
      {"trainer.omega_lr", "0.001"},
      {"trainer.inner_lr", "0.1"},
      {"trainer.dropout", "0.1"},
      {"eval.metric", "accuracy"},
  };
  kv["noise.rate"] = fmt_double(noise);
  return kv;
}

std::map<std::string, std::string> sms_preset(double noise) {
  std::map<std::string, std::string> kv = {
      {"dataset.kind", "delimited"},
      {"dataset.path", "data/sms/SMSSpamCollection"},
      {"dataset.delimiter", "tab"},
      {"dataset.has_header", "false"},
      {"dataset.label_column", "0"},
      {"dataset.text_column", "1"},
      {"split.train", "0.8"},
      {"split.val", "0.1"},
      {"split.test", "0.1"},
      {"mode", "storm"},
      {"compare_baseline", "true"},
      {"seed_count", "10"},
      {"trainer.batch_size", "32"},
      {"trainer.max_epochs", "10"},
      {"trainer.patience", "3"},
      {"trainer.theta_lr", "0.02"},
      {"trainer.omega_lr", "0.01"},
      {"trainer.inner_lr", "0.5"},
      {"trainer.dropout", "0.1"},
      {"eval.metric", "f1"},
      {"eval.positive_label", "spam"},
  };
  kv["noise.rate"] = fmt_double(noise);
  return kv;
}

std::map<std::string, std::string> youtube_preset(double noise) {
  std::map<std::string, std::string> kv = {
      {"dataset.kind", "delimited"},
      {"dataset.path", "data/youtube"},
      {"dataset.delimiter", ","},
      {"dataset.has_header", "true"},
      {"dataset.label_column", "CLASS"},
      {"dataset.text_column", "CONTENT"},
      {"split.train", "0.8"},
      {"split.val", "0.1"},
      {"split.test", "0.1"},
      {"mode", "storm"},
      {"compare_baseline", "true"},
      {"seed_count", "10"},
      {"trainer.batch_size", "32"},
      {"trainer.max_epochs", "10"},
      {"trainer.patience", "3"},
      {"trainer.theta_lr", "0.02"},
      {"trainer.omega_lr", "0.01"},
      {"trainer.inner_lr", "0.5"},
      {"trainer.dropout", "0.1"},
      {"eval.metric", "accuracy"},
  };
  kv["noise.rate"] = fmt_double(noise);
  return kv;
}

// Table-2 ablation rows as overlays on a base preset.
void apply_ablation(std::map<std::string, std::string>& kv, const std::string& suffix) {
  if (suffix == "binary") {
    kv["trainer.binary_mode"] = "true";
  } else if (suffix == "2inner") {
    kv["trainer.inner_loops"] = "2";
  } else if (suffix == "10passes") {
    kv["trainer.forward_passes"] = "10";
  } else if (suffix == "noclasssep") {
    kv["trainer.class_separation"] = "false";
  } else if (suffix == "lossonly") {
    kv["trainer.loss_only_features"] = "true";
  } else if (suffix == "nometa") {
    // Rescaler trained by direct first-order descent, no meta structure.
    kv["trainer.use_meta_learning"] = "false";
  } else if (suffix == "nometarescale") {
    // Plain (unrescaled) meta loss: second-order route only.
    kv["trainer.use_outer_grad"] = "false";
    kv["trainer.rescale_meta_loss"] = "false";
  } else if (suffix == "cleanval") {
    kv["trainer.clean_validation_source"] = "true";
    kv["trainer.use_outer_grad"] = "false";
    kv["trainer.rescale_meta_loss"] = "false";
  } else if (suffix == "agra") {
    kv["mode"] = "agra";
  } else {
    throw std::invalid_argument("unknown ablation suffix: " + suffix);
  }
}

std::optional<std::map<std::string, std::string>> preset_kv(const std::string& name) {
  const std::vector<std::string> ablations = {"binary",   "2inner",        "10passes",
                                              "noclasssep", "lossonly",    "nometa",
                                              "nometarescale", "cleanval", "agra"};
  auto match = [&](const std::string& base,
                   auto maker) -> std::optional<std::map<std::string, std::string>> {
    for (int noise : {0, 10, 20, 30, 40}) {
      const std::string stem = base + "-" + std::to_string(noise);
      if (name == stem) return maker(noise / 100.0);
      for (const auto& ab : ablations) {
        if (name == stem + "-" + ab) {
          auto kv = maker(noise / 100.0);
          apply_ablation(kv, ab);
          return kv;
        }
      }
    }
    return std::nullopt;
  };
  if (auto kv = match("synth", synth_preset)) return kv;
  if (auto kv = match("sms", sms_preset)) return kv;
  if (auto kv = match("youtube", youtube_preset)) return kv;
  return std::nullopt;
}

}  // namespace

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  const std::vector<std::string> ablations = {"binary",   "2inner",        "10passes",
                                              "noclasssep", "lossonly",    "nometa",
                                              "nometarescale", "cleanval", "agra"};
  for (const std::string& base : {"synth", "sms", "youtube"}) {
    for (int noise : {0, 10, 20, 30, 40}) {
      names.push_back(base + "-" + std::to_string(noise));
      if (noise == 30)
        for (const auto& ab : ablations) names.push_back(base + "-30-" + ab);
    }
  }
  return names;
}

void ExperimentSpec::validate() const {
  if (seeds.empty()) throw std::invalid_argument("seeds must be nonempty");
  std::set<std::uint64_t> uniq(seeds.begin(), seeds.end());
  if (uniq.size() != seeds.size()) throw std::invalid_argument("seeds must be distinct");
  if (noise_rate < 0.0 || noise_rate > 0.5)
    throw std::invalid_argument("noise.rate must be in [0, 0.5]");
  if (dataset.kind != DatasetKind::Synthetic && dataset.path.empty())
    throw std::invalid_argument("dataset.path is required for file datasets");
  if (output_dir.empty()) throw std::invalid_argument("output_dir must not be empty");
  trainer.validate();
}

ExperimentSpec parse_config(const std::string& config_path,
                            const std::vector<std::string>& overrides,
                            const std::string& preset_flag) {
  KvMap kv;

  // Collect file + flag keys first so a preset named either way wins the
  // lookup but its contents stay overridable.
  std::vector<std::pair<std::string, std::string>> sources;  // where -> line
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw std::invalid_argument("cannot open config file: " + config_path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      sources.emplace_back(config_path + ":" + std::to_string(line_no), line);
    }
  }
  for (const auto& ov : overrides) sources.emplace_back("--set " + ov, ov);

  std::string preset_name = preset_flag;
  {
    KvMap probe;
    for (const auto& [where, line] : sources) probe.merge_line(line, where);
    if (auto p = probe.take("preset")) preset_name = *p;
  }
  if (!preset_name.empty()) {
    auto base = preset_kv(preset_name);
    if (!base) throw std::invalid_argument("unknown preset: " + preset_name);
    for (const auto& [k, v] : *base) kv.set(k, v);
  }
  for (const auto& [where, line] : sources) kv.merge_line(line, where);
  (void)kv.take("preset");

  ExperimentSpec spec;
  spec.preset = preset_name;

  const std::string kind = kv.take_or("dataset.kind", "synthetic");
  if (kind == "synthetic")
    spec.dataset.kind = DatasetKind::Synthetic;
  else if (kind == "delimited")
    spec.dataset.kind = DatasetKind::Delimited;
  else if (kind == "line-json")
    spec.dataset.kind = DatasetKind::LineJson;
  else
    throw std::invalid_argument("dataset.kind: unknown value '" + kind + "'");

  spec.dataset.path = kv.take_or("dataset.path", "");
  spec.dataset.schema.format = spec.dataset.kind == DatasetKind::LineJson
                                   ? FileFormat::LineJson
                                   : FileFormat::DelimitedText;
  spec.dataset.schema.delimiter = parse_delimiter(kv.take_or("dataset.delimiter", "tab"));
  spec.dataset.schema.has_header = kv.take_bool("dataset.has_header", false);
  spec.dataset.schema.label_column = kv.take_or("dataset.label_column", "0");
  spec.dataset.schema.text_column = kv.take_or("dataset.text_column", "1");
  spec.dataset.schema.label_field = kv.take_or("dataset.label_field", "label");
  spec.dataset.schema.text_field = kv.take_or("dataset.text_field", "text");
  spec.dataset.schema.features_field = kv.take_or("dataset.features_field", "");
  spec.dataset.schema.features_file = kv.take_or("dataset.features_file", "");
  spec.dataset.max_features = kv.take_int("dataset.max_features", 0);

  spec.dataset.synth.num_classes = kv.take_int("synthetic.classes", 2);
  spec.dataset.synth.dim = kv.take_int("synthetic.dim", 20);
  spec.dataset.synth.train = kv.take_int("synthetic.train", 1000);
  spec.dataset.synth.val = kv.take_int("synthetic.val", 300);
  spec.dataset.synth.test = kv.take_int("synthetic.test", 500);
  spec.dataset.synth.separation = kv.take_real("synthetic.separation", 3.0);
  if (auto w = kv.take("synthetic.class_weights")) {
    std::istringstream is(*w);
    std::string tok;
    while (std::getline(is, tok, ',')) spec.dataset.synth.class_weights.push_back(std::stod(tok));
  }

  const std::string scheme = kv.take_or("split.scheme", "fractions");
  if (scheme == "fractions")
    spec.split.scheme = SplitScheme::Fractions;
  else if (scheme == "cv2")
    spec.split.scheme = SplitScheme::Cv2;
  else
    throw std::invalid_argument("split.scheme: unknown value '" + scheme + "'");
  spec.split.train = kv.take_real("split.train", 0.8);
  spec.split.val = kv.take_real("split.val", 0.1);
  spec.split.test = kv.take_real("split.test", 0.1);
  spec.split.cv_val_frac = kv.take_real("split.cv_val_frac", 0.1);

  spec.noise_rate = kv.take_real("noise.rate", 0.0);

  TrainerConfig& t = spec.trainer;
  t.mode = mode_from_string(kv.take_or("mode", "storm"));
  spec.compare_baseline = kv.take_bool("compare_baseline", false);
  t.batch_size = kv.take_int("trainer.batch_size", 32);
  t.max_epochs = kv.take_int("trainer.max_epochs", 10);
  t.patience = kv.take_int("trainer.patience", 3);
  t.inner_loop_count = kv.take_int("trainer.inner_loops", 1);
  t.forward_passes = kv.take_int("trainer.forward_passes", 3);
  t.memory_size = kv.take_int("trainer.memory_size", 0);
  t.inner_lr = kv.take_real("trainer.inner_lr", 0.1);
  t.theta_optimizer = optimizer_kind_from_string(kv.take_or("trainer.theta_optimizer", "adam"));
  t.theta_lr = kv.take_real("trainer.theta_lr", 1e-3);
  t.omega_optimizer = optimizer_kind_from_string(kv.take_or("trainer.omega_optimizer", "adam"));
  t.omega_lr = kv.take_real("trainer.omega_lr", 1e-3);
  const std::string sched = kv.take_or("trainer.lr_schedule", "constant");
  if (sched == "constant")
    t.lr_schedule = LrSchedule::Constant;
  else if (sched == "linear-warmup")
    t.lr_schedule = LrSchedule::LinearWarmup;
  else
    throw std::invalid_argument("trainer.lr_schedule: unknown value '" + sched + "'");
  t.warmup_frac = kv.take_real("trainer.warmup_frac", 0.1);
  t.dropout_rate = kv.take_real("trainer.dropout", 0.1);
  t.use_meta_learning = kv.take_bool("trainer.use_meta_learning", true);
  t.freeze_omega = kv.take_bool("trainer.freeze_omega", false);
  t.use_meta_grad = kv.take_bool("trainer.use_meta_grad", true);
  t.use_outer_grad = kv.take_bool("trainer.use_outer_grad", true);
  t.rescale_meta_loss = kv.take_bool("trainer.rescale_meta_loss", true);
  t.clean_validation_source = kv.take_bool("trainer.clean_validation_source", false);
  t.binary_mode = kv.take_bool("trainer.binary_mode", false);
  t.binary_threshold = kv.take_real("trainer.binary_threshold", 0.5);
  t.class_separation = kv.take_bool("trainer.class_separation", true);
  t.loss_only_features = kv.take_bool("trainer.loss_only_features", false);
  t.group_stats_batch_only = kv.take_bool("trainer.group_stats_batch_only", false);
  t.weight_scale = kv.take_real("trainer.weight_scale", 1.0);
  t.agra_keep_nonpositive = kv.take_bool("trainer.agra_keep_nonpositive", false);
  const std::string enc = kv.take_or("trainer.encoder", "fixed");
  if (enc == "fixed")
    t.encoder = EncoderKind::FixedFeatures;
  else if (enc == "linear")
    t.encoder = EncoderKind::LinearEncoder;
  else
    throw std::invalid_argument("trainer.encoder: unknown value '" + enc + "'");
  t.encoder_width = kv.take_int("trainer.encoder_width", 64);
  t.head_hidden = kv.take_int("trainer.head_hidden", 0);
  t.rescaler_hidden = kv.take_int("trainer.rescaler_hidden", 32);
  t.headline = headline_from_string(kv.take_or("eval.metric", "accuracy"));
  spec.positive_label = kv.take_or("eval.positive_label", "");

  if (auto seeds_str = kv.take("seeds")) {
    spec.seeds.clear();
    std::istringstream is(*seeds_str);
    std::string tok;
    while (std::getline(is, tok, ',')) spec.seeds.push_back(std::stoull(trim(tok)));
    (void)kv.take_int("seed_count", 0);
    (void)kv.take_int("seed_base", 0);
  } else {
    const int count = kv.take_int("seed_count", 1);
    const int base = kv.take_int("seed_base", 1);
    spec.seeds.clear();
    for (int i = 0; i < count; ++i) spec.seeds.push_back(static_cast<std::uint64_t>(base + i));
  }
  spec.output_dir = kv.take_or("output_dir", "out");

  kv.expect_empty();
  spec.validate();
  return spec;
}

std::string serialize_spec(const ExperimentSpec& spec) {
  std::ostringstream out;
  auto put = [&](const std::string& k, const std::string& v) { out << k << " = " << v << "\n"; };
  auto put_bool = [&](const std::string& k, bool v) { put(k, v ? "true" : "false"); };
  auto put_real = [&](const std::string& k, double v) { put(k, fmt_double(v)); };
  auto put_int = [&](const std::string& k, int v) { put(k, std::to_string(v)); };

  switch (spec.dataset.kind) {
    case DatasetKind::Synthetic: put("dataset.kind", "synthetic"); break;
    case DatasetKind::Delimited: put("dataset.kind", "delimited"); break;
    case DatasetKind::LineJson: put("dataset.kind", "line-json"); break;
  }
  if (!spec.dataset.path.empty()) put("dataset.path", spec.dataset.path);
  put("dataset.delimiter", delimiter_to_string(spec.dataset.schema.delimiter));
  put_bool("dataset.has_header", spec.dataset.schema.has_header);
  put("dataset.label_column", spec.dataset.schema.label_column);
  put("dataset.text_column", spec.dataset.schema.text_column);
  put("dataset.label_field", spec.dataset.schema.label_field);
  put("dataset.text_field", spec.dataset.schema.text_field);
  if (!spec.dataset.schema.features_field.empty())
    put("dataset.features_field", spec.dataset.schema.features_field);
  if (!spec.dataset.schema.features_file.empty())
    put("dataset.features_file", spec.dataset.schema.features_file);
  put_int("dataset.max_features", spec.dataset.max_features);

  put_int("synthetic.classes", spec.dataset.synth.num_classes);
  put_int("synthetic.dim", spec.dataset.synth.dim);
  put_int("synthetic.train", spec.dataset.synth.train);
  put_int("synthetic.val", spec.dataset.synth.val);
  put_int("synthetic.test", spec.dataset.synth.test);
  put_real("synthetic.separation", spec.dataset.synth.separation);
  if (!spec.dataset.synth.class_weights.empty()) {
    std::string w;
    for (double x : spec.dataset.synth.class_weights) {
      if (!w.empty()) w += ",";
      w += fmt_double(x);
    }
    put("synthetic.class_weights", w);
  }

  put("split.scheme", spec.split.scheme == SplitScheme::Fractions ? "fractions" : "cv2");
  put_real("split.train", spec.split.train);
  put_real("split.val", spec.split.val);
  put_real("split.test", spec.split.test);
  put_real("split.cv_val_frac", spec.split.cv_val_frac);

  put_real("noise.rate", spec.noise_rate);

  const TrainerConfig& t = spec.trainer;
  put("mode", to_string(t.mode));
  put_bool("compare_baseline", spec.compare_baseline);
  put_int("trainer.batch_size", t.batch_size);
  put_int("trainer.max_epochs", t.max_epochs);
  put_int("trainer.patience", t.patience);
  put_int("trainer.inner_loops", t.inner_loop_count);
  put_int("trainer.forward_passes", t.forward_passes);
  put_int("trainer.memory_size", t.memory_size);
  put_real("trainer.inner_lr", t.inner_lr);
  put("trainer.theta_optimizer", to_string(t.theta_optimizer));
  put_real("trainer.theta_lr", t.theta_lr);
  put("trainer.omega_optimizer", to_string(t.omega_optimizer));
  put_real("trainer.omega_lr", t.omega_lr);
  put("trainer.lr_schedule",
      t.lr_schedule == LrSchedule::Constant ? "constant" : "linear-warmup");
  put_real("trainer.warmup_frac", t.warmup_frac);
  put_real("trainer.dropout", t.dropout_rate);
  put_bool("trainer.use_meta_learning", t.use_meta_learning);
  put_bool("trainer.freeze_omega", t.freeze_omega);
  put_bool("trainer.use_meta_grad", t.use_meta_grad);
  put_bool("trainer.use_outer_grad", t.use_outer_grad);
  put_bool("trainer.rescale_meta_loss", t.rescale_meta_loss);
  put_bool("trainer.clean_validation_source", t.clean_validation_source);
  put_bool("trainer.binary_mode", t.binary_mode);
  put_real("trainer.binary_threshold", t.binary_threshold);
  put_bool("trainer.class_separation", t.class_separation);
  put_bool("trainer.loss_only_features", t.loss_only_features);
  put_bool("trainer.group_stats_batch_only", t.group_stats_batch_only);
  put_real("trainer.weight_scale", t.weight_scale);
  put_bool("trainer.agra_keep_nonpositive", t.agra_keep_nonpositive);
  put("trainer.encoder", t.encoder == EncoderKind::FixedFeatures ? "fixed" : "linear");
  put_int("trainer.encoder_width", t.encoder_width);
  put_int("trainer.head_hidden", t.head_hidden);
  put_int("trainer.rescaler_hidden", t.rescaler_hidden);
  put("eval.metric", to_string(t.headline));
  if (!spec.positive_label.empty()) put("eval.positive_label", spec.positive_label);

  std::string seeds;
  for (std::uint64_t s : spec.seeds) {
    if (!seeds.empty()) seeds += ",";
    seeds += std::to_string(s);
  }
  put("seeds", seeds);
  put("output_dir", spec.output_dir);
  return out.str();
}

// ---------------------------------------------------------------------------
// analysis

namespace {

std::vector<bool> correctness(const std::vector<int>& pred, const std::vector<int>& labels) {
  std::vector<bool> out(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) out[i] = pred[i] == labels[i];
  return out;
}

}  // namespace

RunAnalysis analyze_run(const RunData& run) {
  RunAnalysis out;
  for (std::size_t e = 0; e < run.weights_by_epoch.size(); ++e) {
    EpochAnalysis ea;
    ea.epoch = static_cast<int>(e) + 1;
    auto roc = metrics::rescaler_roc(run.weights_by_epoch[e], run.noise_mask);
    if (roc) {
      ea.rescaler_auc = roc->auc;
      if (e + 1 == run.weights_by_epoch.size()) out.final_roc_points = roc->points;
    }
    if (e < run.confidence_by_epoch.size()) {
      ea.ece_clean = metrics::calibration(run.confidence_by_epoch[e],
                                          correctness(run.predicted_by_epoch[e], run.labels_clean))
                         .ece;
      ea.ece_noisy = metrics::calibration(run.confidence_by_epoch[e],
                                          correctness(run.predicted_by_epoch[e], run.labels_noisy))
                         .ece;
    }
    double sum_c = 0, sum_n = 0;
    std::size_t n_c = 0, n_n = 0;
    for (std::size_t i = 0; i < run.noise_mask.size(); ++i) {
      if (run.noise_mask[i]) {
        sum_n += run.weights_by_epoch[e][i];
        ++n_n;
      } else {
        sum_c += run.weights_by_epoch[e][i];
        ++n_c;
      }
    }
    ea.mean_weight_clean = n_c ? sum_c / static_cast<double>(n_c) : 0.0;
    ea.mean_weight_noisy = n_n ? sum_n / static_cast<double>(n_n) : 0.0;
    ea.weight_gap = ea.mean_weight_clean - ea.mean_weight_noisy;
    out.epochs.push_back(ea);
  }
  out.weight_tables = metrics::weight_analyses(run.weights_by_epoch, run.ids, run.noise_mask);
  return out;
}

// ---------------------------------------------------------------------------
// run pipeline

namespace {

struct SeedPipeline {
  Dataset dataset;
  Splits splits;  // active fold
  std::vector<Splits> folds;
};

SeedPipeline build_pipeline(const ExperimentSpec& spec, std::uint64_t seed) {
  SeedPipeline p;
  if (spec.dataset.kind == DatasetKind::Synthetic) {
    RngStream rng = RngStream::fork(seed, "synth");
    SyntheticData s = make_gaussian_blobs(spec.dataset.synth, rng);
    p.dataset = std::move(s.dataset);
    p.splits = std::move(s.splits);
    p.folds = {p.splits};
  } else {
    p.dataset = load_dataset(spec.dataset.path, spec.dataset.schema);
    RngStream split_rng = RngStream::fork(seed, "splits");
    if (spec.split.scheme == SplitScheme::Fractions) {
      p.splits =
          make_splits(p.dataset.size(), spec.split.train, spec.split.val, spec.split.test,
                      split_rng);
      p.folds = {p.splits};
    } else {
      p.folds = make_cv2_splits(p.dataset.size(), spec.split.cv_val_frac, split_rng);
      p.splits = p.folds[0];
    }
  }
  return p;
}

// TF-IDF (when the dataset is text) and noise injection are per fold: the
// vocabulary is fit on the fold's training split only.
void prepare_fold(const ExperimentSpec& spec, SeedPipeline& p, const Splits& fold,
                  std::uint64_t seed) {
  const bool needs_vectorization =
      spec.dataset.kind != DatasetKind::Synthetic && spec.dataset.schema.features_field.empty() &&
      spec.dataset.schema.features_file.empty();
  if (needs_vectorization) tfidf_vectorize(p.dataset, fold.train, spec.dataset.max_features);
  // Reset labels before (re)injecting noise so folds stay independent.
  for (auto& rec : p.dataset.samples) rec.noisy_label = rec.clean_label;
  p.dataset.noise_mask = std::vector<bool>(p.dataset.samples.size(), false);
  if (spec.noise_rate > 0.0) {
    RngStream noise_rng = RngStream::fork(seed, "noise");
    inject_uniform_noise(p.dataset, fold.train, spec.noise_rate, noise_rng);
  }
}

RunData collect_run_data(const Dataset& dataset, const std::vector<int>& train_indices,
                         const TrainResult& result) {
  RunData run;
  run.best_epoch = result.best_epoch;
  run.ids.reserve(train_indices.size());
  for (int i : train_indices) {
    const auto& rec = dataset.samples[static_cast<std::size_t>(i)];
    run.ids.push_back(rec.id);
    run.labels_clean.push_back(rec.clean_label);
    run.labels_noisy.push_back(rec.noisy_label);
    run.noise_mask.push_back(dataset.noise_mask ? (*dataset.noise_mask)[static_cast<std::size_t>(i)]
                                                : false);
  }
  std::map<int, std::size_t> slot_of_id;
  for (std::size_t i = 0; i < run.ids.size(); ++i) slot_of_id[run.ids[i]] = i;

  for (const auto& epoch : result.epochs) {
    std::vector<double> w(run.ids.size(), 1.0);
    for (std::size_t k = 0; k < epoch.sample_ids.size(); ++k)
      w[slot_of_id.at(epoch.sample_ids[k])] = epoch.weights[k];
    run.weights_by_epoch.push_back(std::move(w));
    run.val_metric_by_epoch.push_back(epoch.val_metric);
    // The calibration snapshot is recorded in train-view order == ids order.
    run.confidence_by_epoch.push_back(epoch.confidence);
    run.predicted_by_epoch.push_back(epoch.predicted);
  }
  return run;
}

json run_metrics_json(const RunOutcome& run) {
  json j;
  j["seed"] = run.seed;
  j["mode"] = to_string(run.mode);
  j["failed"] = run.failed;
  if (run.failed) {
    j["error"] = run.error;
    return j;
  }
  j["best_epoch"] = run.best_epoch;
  j["test"]["accuracy"] = run.test.accuracy;
  j["test"]["f1"] = run.test.f1;
  j["test"]["mcc"] = run.test.matthews;
  j["test"]["headline"] = run.test_headline;
  json per_epoch = json::object();
  for (const auto& ea : run.analysis.epochs) {
    per_epoch["ece_clean"].push_back(ea.ece_clean);
    per_epoch["ece_noisy"].push_back(ea.ece_noisy);
    per_epoch["weight_gap"].push_back(ea.weight_gap);
    per_epoch["mean_weight_clean"].push_back(ea.mean_weight_clean);
    per_epoch["mean_weight_noisy"].push_back(ea.mean_weight_noisy);
    if (ea.rescaler_auc)
      per_epoch["rescaler_auc"].push_back(*ea.rescaler_auc);
  }
  for (std::size_t e = 0; e < run.data.val_metric_by_epoch.size(); ++e)
    per_epoch["val_metric"].push_back(run.data.val_metric_by_epoch[e]);
  j["per_epoch"] = per_epoch;
  if (!run.analysis.epochs.empty()) {
    const auto& first = run.analysis.epochs.front();
    const auto& last = run.analysis.epochs.back();
    j["epoch1"]["ece_clean"] = first.ece_clean;
    j["epoch1"]["ece_noisy"] = first.ece_noisy;
    j["epoch1"]["weight_gap"] = first.weight_gap;
    if (first.rescaler_auc) j["epoch1"]["rescaler_auc"] = *first.rescaler_auc;
    j["final"]["ece_clean"] = last.ece_clean;
    j["final"]["ece_noisy"] = last.ece_noisy;
    j["final"]["weight_gap"] = last.weight_gap;
    if (last.rescaler_auc) j["final"]["rescaler_auc"] = *last.rescaler_auc;
  }
  return j;
}

void write_run_log(const std::string& path, const ExperimentSpec& spec, const RunOutcome& run,
                   const std::string& provenance) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write run log: " + path);
  {
    json meta;
    meta["t"] = "meta";
    meta["code_version"] = code_version();
    meta["seed"] = run.seed;
    meta["mode"] = to_string(run.mode);
    meta["preset"] = spec.preset;
    meta["provenance"] = provenance;
    meta["ids"] = run.data.ids;
    meta["labels_clean"] = run.data.labels_clean;
    meta["labels_noisy"] = run.data.labels_noisy;
    json mask = json::array();
    for (bool b : run.data.noise_mask) mask.push_back(b ? 1 : 0);
    meta["noise_mask"] = mask;
    out << meta.dump() << "\n";
  }
  for (std::size_t e = 0; e < run.data.weights_by_epoch.size(); ++e) {
    json epoch;
    epoch["t"] = "epoch";
    epoch["epoch"] = e + 1;
    epoch["val_metric"] = run.data.val_metric_by_epoch[e];
    out << epoch.dump() << "\n";
    json weights;
    weights["t"] = "weights";
    weights["epoch"] = e + 1;
    weights["w"] = run.data.weights_by_epoch[e];
    out << weights.dump() << "\n";
    json calib;
    calib["t"] = "calib";
    calib["epoch"] = e + 1;
    calib["conf"] = run.data.confidence_by_epoch[e];
    calib["pred"] = run.data.predicted_by_epoch[e];
    out << calib.dump() << "\n";
  }
  {
    json fin;
    fin["t"] = "final";
    fin["best_epoch"] = run.best_epoch;
    fin["test_accuracy"] = run.test.accuracy;
    fin["test_f1"] = run.test.f1;
    fin["test_mcc"] = run.test.matthews;
    fin["test_headline"] = run.test_headline;
    out << fin.dump() << "\n";
  }
}

struct Aggregate {
  double mean{0.0};
  double stddev{0.0};  // population
  std::vector<double> values;
};

Aggregate aggregate_values(const std::vector<double>& values) {
  Aggregate a;
  a.values = values;
  if (values.empty()) return a;
  for (double v : values) a.mean += v;
  a.mean /= static_cast<double>(values.size());
  double q = 0.0;
  for (double v : values) q += (v - a.mean) * (v - a.mean);
  a.stddev = std::sqrt(q / static_cast<double>(values.size()));
  return a;
}

json aggregate_json(const Aggregate& a) {
  json j;
  j["mean"] = a.mean;
  j["std"] = a.stddev;
  j["values"] = a.values;
  return j;
}

int write_aggregate(const std::string& output_dir, const std::vector<json>& run_metrics,
                    const std::string& preset) {
  std::map<std::string, std::map<std::string, std::vector<double>>> by_mode;
  std::map<std::string, std::map<std::uint64_t, double>> headline_by_mode_seed;
  std::vector<json> errors;
  std::set<std::uint64_t> seeds;
  for (const auto& m : run_metrics) {
    const std::string mode = m.at("mode");
    const std::uint64_t seed = m.at("seed");
    seeds.insert(seed);
    if (m.value("failed", false)) {
      errors.push_back(m);
      continue;
    }
    auto& slot = by_mode[mode];
    slot["test_headline"].push_back(m.at("test").at("headline"));
    slot["test_accuracy"].push_back(m.at("test").at("accuracy"));
    slot["test_f1"].push_back(m.at("test").at("f1"));
    slot["test_mcc"].push_back(m.at("test").at("mcc"));
    headline_by_mode_seed[mode][seed] = m.at("test").at("headline");
  }

  json agg;
  agg["code_version"] = code_version();
  agg["preset"] = preset;
  agg["seeds"] = std::vector<std::uint64_t>(seeds.begin(), seeds.end());
  for (const auto& [mode, table] : by_mode)
    for (const auto& [metric, values] : table)
      agg["modes"][mode][metric] = aggregate_json(aggregate_values(values));

  // Paired per-seed gap when two modes are present.
  if (headline_by_mode_seed.size() == 2) {
    auto it = headline_by_mode_seed.begin();
    const auto& [mode_a, a] = *it;
    const auto& [mode_b, b] = *std::next(it);
    std::vector<double> gaps;
    for (const auto& [seed, va] : a) {
      auto bt = b.find(seed);
      if (bt != b.end()) gaps.push_back(va - bt->second);
    }
    agg["paired"]["first"] = mode_a;
    agg["paired"]["second"] = mode_b;
    agg["paired"]["headline_gap_first_minus_second"] = aggregate_json(aggregate_values(gaps));
  }
  if (!errors.empty()) agg["errors"] = errors;

  {
    std::ofstream out(fs::path(output_dir) / "aggregate.json");
    out << agg.dump(2) << "\n";
  }
  {
    std::ofstream out(fs::path(output_dir) / "aggregate.txt");
    out << "runs: " << run_metrics.size() << ", failed: " << errors.size() << "\n";
    for (const auto& [mode, table] : by_mode) {
      out << mode << ":\n";
      for (const auto& [metric, values] : table) {
        Aggregate a = aggregate_values(values);
        out << "  " << metric << ": " << fmt_double(a.mean) << " +- " << fmt_double(a.stddev)
            << " (n=" << values.size() << ")\n";
      }
    }
  }
  return errors.empty() ? 0 : 1;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  ExperimentResult result;
  fs::create_directories(spec.output_dir);
  {
    std::ofstream echo(fs::path(spec.output_dir) / "spec.resolved.cfg");
    echo << serialize_spec(spec);
  }

  std::vector<Mode> modes{spec.trainer.mode};
  if (spec.compare_baseline && spec.trainer.mode != Mode::None) modes.push_back(Mode::None);

  std::vector<json> all_metrics;
  for (std::uint64_t seed : spec.seeds) {
    for (Mode mode : modes) {
      RunOutcome outcome;
      outcome.seed = seed;
      outcome.mode = mode;
      const fs::path run_dir =
          fs::path(spec.output_dir) / "runs" / ("seed" + std::to_string(seed)) / to_string(mode);
      fs::create_directories(run_dir);
      try {
        SeedPipeline p = build_pipeline(spec, seed);
        const std::string provenance = p.dataset.provenance;
        metrics::ClassificationMetrics fold_sum;
        double headline_sum = 0.0;
        const int n_folds = static_cast<int>(p.folds.size());
        for (int fold = 0; fold < n_folds; ++fold) {
          prepare_fold(spec, p, p.folds[static_cast<std::size_t>(fold)], seed);
          const Splits& split = p.folds[static_cast<std::size_t>(fold)];

          TrainerConfig cfg = spec.trainer;
          cfg.mode = mode;
          cfg.seed = seed;
          if (!spec.positive_label.empty())
            cfg.positive_class = p.dataset.class_index(spec.positive_label);

          TrainView train_view = make_train_view(p.dataset, split.train);
          TrainView val_view = make_train_view(p.dataset, split.val);
          TrainView test_view = make_train_view(p.dataset, split.test);

          MetaTrainer trainer(train_view, val_view, cfg);
          TrainResult tr = trainer.train();
          if (tr.diverged) throw std::runtime_error("diverged: " + tr.divergence_info);

          trainer.model().restore_values(tr.best_theta);
          metrics::ClassificationMetrics test = trainer.evaluate(test_view);
          fold_sum.accuracy += test.accuracy;
          fold_sum.f1 += test.f1;
          fold_sum.matthews += test.matthews;
          headline_sum += trainer.headline_value(test);

          if (fold == 0) {
            outcome.data = collect_run_data(p.dataset, split.train, tr);
            outcome.analysis = analyze_run(outcome.data);
            outcome.best_epoch = tr.best_epoch;
            const fs::path fold_dir = n_folds > 1 ? run_dir / "fold0" : run_dir;
            fs::create_directories(fold_dir);
            save_checkpoint((fold_dir / "model.ckpt").string(), trainer.model().params());
            if (trainer.rescaler())
              save_checkpoint((fold_dir / "rescaler.ckpt").string(),
                              trainer.rescaler()->params());
          } else {
            const fs::path fold_dir = run_dir / ("fold" + std::to_string(fold));
            fs::create_directories(fold_dir);
            save_checkpoint((fold_dir / "model.ckpt").string(), trainer.model().params());
          }
        }
        outcome.test.accuracy = fold_sum.accuracy / n_folds;
        outcome.test.f1 = fold_sum.f1 / n_folds;
        outcome.test.matthews = fold_sum.matthews / n_folds;
        outcome.test_headline = headline_sum / n_folds;

        write_run_log((run_dir / "run_log.jsonl").string(), spec, outcome, provenance);
      } catch (const std::exception& e) {
        outcome.failed = true;
        outcome.error = e.what();
        result.exit_code = 1;
      }
      json m = run_metrics_json(outcome);
      {
        std::ofstream out(run_dir / "metrics.json");
        out << m.dump(2) << "\n";
      }
      all_metrics.push_back(std::move(m));
      result.runs.push_back(std::move(outcome));
    }
  }

  const int agg_rc = write_aggregate(spec.output_dir, all_metrics, spec.preset);
  result.exit_code = std::max(result.exit_code, agg_rc);
  return result;
}

int aggregate_directory(const std::string& output_dir) {
  std::vector<json> all_metrics;
  const fs::path runs = fs::path(output_dir) / "runs";
  if (!fs::is_directory(runs))
    throw std::invalid_argument("no runs directory under " + output_dir);
  std::vector<fs::path> files;
  for (const auto& seed_dir : fs::directory_iterator(runs))
    for (const auto& mode_dir : fs::directory_iterator(seed_dir))
      if (fs::exists(mode_dir.path() / "metrics.json"))
        files.push_back(mode_dir.path() / "metrics.json");
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    std::ifstream in(f);
    json j;
    in >> j;
    all_metrics.push_back(std::move(j));
  }
  std::string preset;
  {
    std::ifstream spec_in(fs::path(output_dir) / "spec.resolved.cfg");
    std::string line;
    while (std::getline(spec_in, line)) {
      if (line.rfind("preset", 0) == 0) {
        const auto eq = line.find('=');
        if (eq != std::string::npos) preset = trim(line.substr(eq + 1));
      }
    }
  }
  return write_aggregate(output_dir, all_metrics, preset);
}

int analyze_run_directory(const std::string& run_dir, const std::string& out_dir) {
  std::ifstream in(fs::path(run_dir) / "run_log.jsonl");
  if (!in) throw std::invalid_argument("no run_log.jsonl under " + run_dir);
  RunData run;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    const std::string t = j.at("t");
    if (t == "meta") {
      run.ids = j.at("ids").get<std::vector<int>>();
      run.labels_clean = j.at("labels_clean").get<std::vector<int>>();
      run.labels_noisy = j.at("labels_noisy").get<std::vector<int>>();
      for (int b : j.at("noise_mask").get<std::vector<int>>()) run.noise_mask.push_back(b != 0);
    } else if (t == "weights") {
      run.weights_by_epoch.push_back(j.at("w").get<std::vector<double>>());
    } else if (t == "calib") {
      run.confidence_by_epoch.push_back(j.at("conf").get<std::vector<double>>());
      run.predicted_by_epoch.push_back(j.at("pred").get<std::vector<int>>());
    } else if (t == "epoch") {
      run.val_metric_by_epoch.push_back(j.at("val_metric").get<double>());
    } else if (t == "final") {
      run.best_epoch = j.at("best_epoch").get<int>();
    }
  }
  RunAnalysis a = analyze_run(run);
  fs::create_directories(out_dir);

  {
    std::ofstream out(fs::path(out_dir) / "roc.csv");
    out << "epoch,auc,fpr,tpr\n";
    for (const auto& ea : a.epochs) {
      if (!ea.rescaler_auc) continue;
      auto roc = metrics::rescaler_roc(run.weights_by_epoch[static_cast<std::size_t>(ea.epoch - 1)],
                                       run.noise_mask);
      for (const auto& [fpr, tpr] : roc->points)
        out << ea.epoch << ',' << fmt_double(*ea.rescaler_auc) << ',' << fmt_double(fpr) << ','
            << fmt_double(tpr) << "\n";
    }
  }
  {
    std::ofstream out(fs::path(out_dir) / "weights_by_epoch.csv");
    out << "epoch,mean_weight_clean,mean_weight_noisy,mean_weight_all\n";
    for (const auto& row : a.weight_tables.progression)
      out << row.epoch << ',' << fmt_double(row.mean_clean) << ',' << fmt_double(row.mean_noisy)
          << ',' << fmt_double(row.mean_all) << "\n";
  }
  {
    std::ofstream out(fs::path(out_dir) / "filter_timing.csv");
    out << "sample_id,noisy,earliest_epoch,latest_epoch\n";
    for (const auto& row : a.weight_tables.timing)
      out << row.sample_id << ',' << (row.noisy ? 1 : 0) << ',' << row.earliest_epoch << ','
          << row.latest_epoch << "\n";
  }
  {
    std::ofstream out(fs::path(out_dir) / "reliability.csv");
    out << "label_set,bin_lo,bin_hi,count,mean_confidence,mean_accuracy\n";
    if (!run.confidence_by_epoch.empty()) {
      const auto& conf = run.confidence_by_epoch.back();
      const auto& pred = run.predicted_by_epoch.back();
      for (const char* which : {"clean", "noisy"}) {
        const auto& labels = std::string(which) == "clean" ? run.labels_clean : run.labels_noisy;
        auto cal = metrics::calibration(conf, correctness(pred, labels));
        for (const auto& bin : cal.bins)
          out << which << ',' << fmt_double(bin.lo) << ',' << fmt_double(bin.hi) << ','
              << bin.count << ',' << fmt_double(bin.mean_confidence) << ','
              << fmt_double(bin.mean_accuracy) << "\n";
      }
    }
  }
  return 0;
}

}  // namespace storm
