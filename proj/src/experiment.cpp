#include "rfslam/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "rfslam/common.hpp"

namespace rfslam::experiment {

using geometry::Point;

FeatureSource parse_source(const std::string& s) {
  if (s == "genie") return FeatureSource::kGenie;
  if (s == "music") return FeatureSource::kMusic;
  throw ConfigError("unknown feature source '" + s + "' (expected genie|music)");
}

const char* source_name(FeatureSource s) { return s == FeatureSource::kGenie ? "genie" : "music"; }

InputKind parse_input(const std::string& s) {
  if (s == "va") return InputKind::kVaOrdered;
  if (s == "va-matched") return InputKind::kVaMatched;
  if (s == "sorted") return InputKind::kSorted;
  if (s == "csi") return InputKind::kCsi;
  if (s == "set") return InputKind::kSet;
  throw ConfigError("unknown input kind '" + s + "' (expected va|va-matched|sorted|csi|set)");
}

const char* input_name(InputKind k) {
  switch (k) {
    case InputKind::kVaOrdered: return "va";
    case InputKind::kVaMatched: return "va-matched";
    case InputKind::kSorted: return "sorted";
    case InputKind::kCsi: return "csi";
    case InputKind::kSet: return "set";
  }
  return "?";
}

void ExperimentConfig::validate() const {
  if (scene != "2d-room" && scene != "3d-box") throw ConfigError("scene must be 2d-room or 3d-box");
  if (n_samples < 2) throw ConfigError("n_samples must be >= 2");
  if (max_bounce < 1) throw ConfigError("max_bounce must be >= 1");
  if (max_virtual_anchors < 0) throw ConfigError("max_virtual_anchors must be >= 0");
  if (n_labeled < 1) throw ConfigError("n_labeled must be >= 1");
  if (!(rho_min >= 0.0 && rho_min <= 1.0)) throw ConfigError("rho_min must lie in [0, 1]");
  ofdm.validate();
  train.validate();
  if (input == InputKind::kVaOrdered && source != FeatureSource::kGenie) {
    throw ConfigError("input 'va' needs genie features (extracted delays carry no anchor identity)");
  }
  if (input == InputKind::kCsi && encoder.kind != encoders::EncoderKind::kConv) {
    throw ConfigError("input 'csi' needs the conv encoder");
  }
  if (encoder.kind == encoders::EncoderKind::kConv && input != InputKind::kCsi) {
    throw ConfigError("the conv encoder needs input 'csi'");
  }
  if ((input == InputKind::kSet) != (encoder.kind == encoders::EncoderKind::kDeepSet)) {
    throw ConfigError("input 'set' and the deepset encoder go together");
  }
}

namespace {

// Settings that make the MLP start from an affine map of its inputs; see
// TrainConfig::affine_warmup_epochs.
void mlp_defaults(ExperimentConfig& c) {
  c.encoder.kind = encoders::EncoderKind::kMlp;
  c.encoder.output_scale = 20.0;
  c.encoder.linear_skip = true;
  c.train.epochs = 300;
  c.train.affine_warmup_epochs = 150;
  c.train.beta = 0.1;
  c.train.n_restarts = 3;
}

ExperimentConfig base_2d() {
  ExperimentConfig c;
  c.name = "2d-room";
  c.scene = "2d-room";
  c.n_samples = 4000;
  c.ofdm.carrier_hz = 2.0e9;
  c.ofdm.bandwidth_hz = 400.0e6;
  c.ofdm.n_subcarriers = 128;
  mlp_defaults(c);
  return c;
}

ExperimentConfig base_3d() {
  ExperimentConfig c;
  c.name = "3d-box";
  c.scene = "3d-box";
  c.n_samples = 13000;
  c.ofdm.carrier_hz = 3.5e9;
  c.ofdm.bandwidth_hz = 100.0e6;
  c.ofdm.n_subcarriers = 128;
  mlp_defaults(c);
  return c;
}

}  // namespace

ExperimentConfig preset(const std::string& name) {
  if (name == "2d-room") return base_2d();
  if (name == "3d-box") return base_3d();
  if (name == "table4-mlp-2d") {
    auto c = base_2d();
    c.name = name;
    c.n_samples = 2000;
    return c;
  }
  if (name == "table3-music-tdoa-2d" || name == "table3-music-tdoa-2d-10db") {
    auto c = base_2d();
    c.name = name;
    c.source = FeatureSource::kMusic;
    c.modality = Modality::kTDoA;
    c.input = InputKind::kSorted;
    if (name.ends_with("10db")) c.ofdm.snr_db = 10.0;
    return c;
  }
  if (name == "table3-genie-tdoa-3d") {
    auto c = base_3d();
    c.name = name;
    c.modality = Modality::kTDoA;
    return c;
  }
  if (name == "genie-tof-3d-6va") {
    auto c = base_3d();
    c.name = name;
    c.n_samples = 4000;
    return c;
  }
  throw ConfigError("unknown preset '" + name + "'");
}

std::vector<std::string> preset_names() {
  return {"2d-room", "3d-box", "table4-mlp-2d", "table3-music-tdoa-2d", "table3-music-tdoa-2d-10db",
          "table3-genie-tdoa-3d", "genie-tof-3d-6va"};
}

json to_json(const ExperimentConfig& c) {
  const auto& t = c.train;
  json train = {{"epochs", t.epochs},
                {"batch_size", t.batch_size},
                {"lr", t.lr},
                {"va_lr", t.va_lr},
                {"loss", matchloss::set_loss_kind_name(t.loss)},
                {"beta", t.beta},
                {"n_va", t.n_va},
                {"va_cap", t.va_cap},
                {"va_init_scale", t.va_init_scale},
                {"n_restarts", t.n_restarts},
                {"break_symmetry", t.break_symmetry},
                {"affine_warmup_epochs", t.affine_warmup_epochs},
                {"lr_final_fraction", t.lr_final_fraction}};
  json ofdm = {{"carrier_hz", c.ofdm.carrier_hz},
               {"bandwidth_hz", c.ofdm.bandwidth_hz},
               {"n_subcarriers", c.ofdm.n_subcarriers},
               {"snapshots", c.ofdm.snapshots}};
  ofdm["snr_db"] = c.ofdm.snr_db ? json(*c.ofdm.snr_db) : json(nullptr);
  const auto& e = c.encoder;
  json enc = {{"kind", encoders::encoder_kind_name(e.kind)},
              {"mlp_hidden", e.mlp_hidden},
              {"conv_channels", e.conv_channels},
              {"conv_kernel", e.conv_kernel},
              {"conv_fc", e.conv_fc},
              {"deepset_width", e.deepset_width},
              {"output_scale", e.output_scale},
              {"linear_skip", e.linear_skip}};
  return {{"name", c.name},
          {"scene", c.scene},
          {"wall_gamma", c.wall_gamma},
          {"n_samples", c.n_samples},
          {"margin", c.margin},
          {"test_fraction", c.test_fraction},
          {"max_bounce", c.max_bounce},
          {"max_virtual_anchors", c.max_virtual_anchors},
          {"ofdm", ofdm},
          {"source", source_name(c.source)},
          {"modality", modality_name(c.modality)},
          {"input", input_name(c.input)},
          {"encoder", enc},
          {"train", train},
          {"subarray_len", c.subarray_len},
          {"min_prominence_db", c.min_prominence_db},
          {"max_order", c.max_order},
          {"n_labeled", c.n_labeled},
          {"rho_min", c.rho_min},
          {"seed", c.seed}};
}

ExperimentConfig from_json(const json& j) {
  ExperimentConfig c;
  try {
    // A "preset" key seeds the defaults; explicit fields then override.
    if (j.contains("preset")) c = preset(j.at("preset").get<std::string>());
    c.name = j.value("name", c.name);
    c.scene = j.value("scene", c.scene);
    c.wall_gamma = j.value("wall_gamma", c.wall_gamma);
    c.n_samples = j.value("n_samples", c.n_samples);
    c.margin = j.value("margin", c.margin);
    c.test_fraction = j.value("test_fraction", c.test_fraction);
    c.max_bounce = j.value("max_bounce", c.max_bounce);
    c.max_virtual_anchors = j.value("max_virtual_anchors", c.max_virtual_anchors);
    if (j.contains("ofdm")) {
      const json& o = j["ofdm"];
      c.ofdm.carrier_hz = o.value("carrier_hz", c.ofdm.carrier_hz);
      c.ofdm.bandwidth_hz = o.value("bandwidth_hz", c.ofdm.bandwidth_hz);
      c.ofdm.n_subcarriers = o.value("n_subcarriers", c.ofdm.n_subcarriers);
      c.ofdm.snapshots = o.value("snapshots", c.ofdm.snapshots);
      if (o.contains("snr_db")) {
        c.ofdm.snr_db = o["snr_db"].is_null() ? std::nullopt : std::optional<double>(o["snr_db"].get<double>());
      }
    }
    if (j.contains("source")) c.source = parse_source(j["source"].get<std::string>());
    if (j.contains("modality")) c.modality = parse_modality(j["modality"].get<std::string>());
    if (j.contains("input")) c.input = parse_input(j["input"].get<std::string>());
    if (j.contains("encoder")) {
      const json& e = j["encoder"];
      if (e.contains("kind")) c.encoder.kind = encoders::parse_encoder_kind(e["kind"].get<std::string>());
      c.encoder.mlp_hidden = e.value("mlp_hidden", c.encoder.mlp_hidden);
      c.encoder.conv_channels = e.value("conv_channels", c.encoder.conv_channels);
      c.encoder.conv_kernel = e.value("conv_kernel", c.encoder.conv_kernel);
      c.encoder.conv_fc = e.value("conv_fc", c.encoder.conv_fc);
      c.encoder.deepset_width = e.value("deepset_width", c.encoder.deepset_width);
      c.encoder.output_scale = e.value("output_scale", c.encoder.output_scale);
      c.encoder.linear_skip = e.value("linear_skip", c.encoder.linear_skip);
    }
    if (j.contains("train")) {
      const json& t = j["train"];
      auto& tc = c.train;
      tc.epochs = t.value("epochs", tc.epochs);
      tc.batch_size = t.value("batch_size", tc.batch_size);
      tc.lr = t.value("lr", tc.lr);
      tc.va_lr = t.value("va_lr", tc.va_lr);
      if (t.contains("loss")) tc.loss = matchloss::parse_set_loss_kind(t["loss"].get<std::string>());
      tc.beta = t.value("beta", tc.beta);
      tc.n_va = t.value("n_va", tc.n_va);
      tc.va_cap = t.value("va_cap", tc.va_cap);
      tc.va_init_scale = t.value("va_init_scale", tc.va_init_scale);
      tc.n_restarts = t.value("n_restarts", tc.n_restarts);
      tc.break_symmetry = t.value("break_symmetry", tc.break_symmetry);
      tc.affine_warmup_epochs = t.value("affine_warmup_epochs", tc.affine_warmup_epochs);
      tc.lr_final_fraction = t.value("lr_final_fraction", tc.lr_final_fraction);
    }
    c.subarray_len = j.value("subarray_len", c.subarray_len);
    c.min_prominence_db = j.value("min_prominence_db", c.min_prominence_db);
    c.max_order = j.value("max_order", c.max_order);
    c.n_labeled = j.value("n_labeled", c.n_labeled);
    c.rho_min = j.value("rho_min", c.rho_min);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.train.seed = c.seed;
  c.train.modality = c.modality;
  c.validate();
  return c;
}

void apply_override(json& cfg, const std::string& key, const std::string& value) {
  static const std::map<std::string, std::string> aliases = {
      {"samples", "n_samples"},        {"epochs", "train.epochs"},
      {"restarts", "train.n_restarts"}, {"lr", "train.lr"},
      {"va-lr", "train.va_lr"},         {"loss", "train.loss"},
      {"beta", "train.beta"},           {"n-va", "train.n_va"},
      {"batch", "train.batch_size"},    {"warmup", "train.affine_warmup_epochs"},
      {"lr-final", "train.lr_final_fraction"},
      {"snr-db", "ofdm.snr_db"},        {"snr_db", "ofdm.snr_db"},
      {"bandwidth", "ofdm.bandwidth_hz"}, {"bandwidth-hz", "ofdm.bandwidth_hz"},
      {"encoder", "encoder.kind"},      {"labeled", "n_labeled"},
      {"max-bounce", "max_bounce"},     {"max-vas", "max_virtual_anchors"}};
  std::string path = key;
  if (auto it = aliases.find(key); it != aliases.end()) path = it->second;
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::exception&) {
    parsed = value;
  }
  json* node = &cfg;
  std::size_t lo = 0;
  while (true) {
    const std::size_t dot = path.find('.', lo);
    const std::string part = path.substr(lo, dot == std::string::npos ? std::string::npos : dot - lo);
    if (part.empty()) throw ConfigError("bad override key '" + key + "'");
    if (dot == std::string::npos) {
      (*node)[part] = parsed;
      return;
    }
    if (!node->contains(part) || !(*node)[part].is_object()) (*node)[part] = json::object();
    node = &(*node)[part];
    lo = dot + 1;
  }
}

geometry::Scene make_scene(const ExperimentConfig& cfg) {
  geometry::Scene s;
  if (cfg.scene == "2d-room") {
    s = geometry::Scene::rectangle({0.0, 0.0}, {5.0, 5.0}, {0.1, 0.1});
  } else if (cfg.scene == "3d-box") {
    // 10 x 10 x 4 m, shifted 0.1 m off the anchor so that the anchor lies
    // strictly inside instead of on the ceiling and a corner wall.
    s = geometry::Scene::box({-10.1, -5.0, 0.1}, {-0.1, 5.0, 4.1}, {-10.0, 0.0, 4.0});
  } else {
    throw ConfigError("unknown scene '" + cfg.scene + "'");
  }
  if (!cfg.wall_gamma.empty()) {
    if (cfg.wall_gamma.size() != s.walls.size()) {
      throw ConfigError("wall_gamma needs one value per wall (" + std::to_string(s.walls.size()) + ")");
    }
    for (std::size_t i = 0; i < s.walls.size(); ++i) s.walls[i].gamma = cfg.wall_gamma[i];
  }
  s.validate();
  return s;
}

datagen::DatasetConfig dataset_config(const ExperimentConfig& cfg) {
  datagen::DatasetConfig d;
  d.n_samples = cfg.n_samples;
  d.margin = cfg.margin;
  d.seed = derive_seed(cfg.seed, 10);
  d.test_fraction = cfg.test_fraction;
  d.trace.max_bounce = cfg.max_bounce;
  d.trace.max_virtual_anchors = cfg.max_virtual_anchors;
  return d;
}

superres::SuperresConfig superres_config(const ExperimentConfig& cfg, const geometry::Scene& scene) {
  superres::SuperresConfig s;
  s.subarray_len = cfg.subarray_len;
  s.grid = superres::default_grid(scene.diagonal(), cfg.max_bounce, cfg.ofdm.bandwidth_hz);
  s.max_order = cfg.max_order;
  s.min_prominence_db = cfg.min_prominence_db;
  return s;
}

std::vector<channel::CsiSample> synthesize_csi(const datagen::Dataset& ds, const ExperimentConfig& cfg) {
  std::vector<channel::CsiSample> out;
  out.reserve(ds.samples.size());
  const std::uint64_t base = derive_seed(cfg.seed, 11);
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    out.push_back(channel::synthesize(ds.samples[i].paths, cfg.ofdm, derive_seed(base, i)));
  }
  return out;
}

std::vector<superres::FeatureSet> genie_features(const datagen::Dataset& ds, Modality modality) {
  const auto map = datagen::distinct_va_map(ds.scene, ds.config.trace);
  std::vector<superres::FeatureSet> out;
  out.reserve(ds.samples.size());
  for (const auto& s : ds.samples) {
    superres::FeatureSet f;
    f.modality = modality;
    std::vector<int> seen;
    for (const auto& p : s.paths) {
      const int id = p.va_index == 0 ? -1 : map[static_cast<std::size_t>(p.va_index)];
      if (p.va_index != 0 && std::find(seen.begin(), seen.end(), id) != seen.end()) continue;
      if (p.va_index != 0) seen.push_back(id);
      f.values.push_back(p.tof);
    }
    std::sort(f.values.begin(), f.values.end());
    if (modality == Modality::kTDoA) {
      const double los = f.values.front();
      for (double& v : f.values) v -= los;
      f.values.front() = 0.0;
    }
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<superres::FeatureSet> music_features(const std::vector<channel::CsiSample>& csi,
                                                 const ExperimentConfig& cfg, const geometry::Scene& scene) {
  const auto sr = superres_config(cfg, scene);
  std::vector<superres::FeatureSet> out;
  out.reserve(csi.size());
  for (const auto& c : csi) out.push_back(superres::extract_features(c, cfg.ofdm, sr, cfg.modality));
  return out;
}

namespace {

// Placeholder for a slot without a delay (anchor not visible, or no
// extracted delay matched it); replaced by impute_missing.
double missing_delay(const geometry::Scene& scene, int max_bounce) {
  return 2.0 * scene.diagonal() * (max_bounce + 1) / kSpeedOfLight;
}

std::vector<encoders::Input> va_ordered(const datagen::Dataset& ds, Modality modality, int max_bounce) {
  const auto map = datagen::distinct_va_map(ds.scene, ds.config.trace);
  const int n_va = static_cast<int>(datagen::true_virtual_anchors(ds.scene, ds.config.trace).size());
  const double missing = missing_delay(ds.scene, max_bounce);
  std::vector<encoders::Input> out;
  out.reserve(ds.samples.size());
  for (const auto& s : ds.samples) {
    encoders::Input x(static_cast<std::size_t>(n_va) + 1, missing);
    const double los = s.paths.front().tof;
    for (const auto& p : s.paths) {
      const int slot = p.va_index == 0 ? 0 : map[static_cast<std::size_t>(p.va_index)] + 1;
      if (slot < 0) continue;
      x[static_cast<std::size_t>(slot)] = p.tof;
    }
    if (modality == Modality::kTDoA) {
      for (std::size_t k = 1; k < x.size(); ++k) {
        if (x[k] != missing) x[k] -= los;
      }
      x[0] = 0.0;
    }
    out.push_back(std::move(x));
  }
  return out;
}

// Minimum-total-|difference| assignment of extracted values to the visible
// true slots; slots left without a value read as missing.
encoders::Input match_to_slots(const std::vector<double>& extracted, const encoders::Input& truth, double missing) {
  std::vector<std::size_t> visible;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    if (truth[k] != missing) visible.push_back(k);
  }
  encoders::Input x(truth.size(), missing);
  if (extracted.empty() || visible.empty()) return x;
  const bool rows_are_extracted = extracted.size() <= visible.size();
  const int rows = static_cast<int>(rows_are_extracted ? extracted.size() : visible.size());
  const int cols = static_cast<int>(rows_are_extracted ? visible.size() : extracted.size());
  auto cost = matchloss::CostMatrix::zeros(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const std::size_t e = static_cast<std::size_t>(rows_are_extracted ? r : c);
      const std::size_t v = static_cast<std::size_t>(rows_are_extracted ? c : r);
      cost(r, c) = std::abs(extracted[e] - truth[visible[v]]) * kSpeedOfLight;
    }
  }
  for (const auto& [r, c] : matchloss::hungarian(cost).pairs) {
    const std::size_t e = static_cast<std::size_t>(rows_are_extracted ? r : c);
    const std::size_t v = static_cast<std::size_t>(rows_are_extracted ? c : r);
    x[visible[v]] = extracted[e];
  }
  return x;
}

// Each missing slot takes the mean of that slot over the samples that have it,
// which keeps the encoder input inside the range seen in training.
void impute_missing(std::vector<encoders::Input>& rows, double missing) {
  if (rows.empty()) return;
  const std::size_t w = rows.front().size();
  for (std::size_t k = 0; k < w; ++k) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : rows) {
      if (r[k] != missing) {
        sum += r[k];
        ++n;
      }
    }
    const double fill = n > 0 ? sum / static_cast<double>(n) : 0.0;
    for (auto& r : rows) {
      if (r[k] == missing) r[k] = fill;
    }
  }
}

}  // namespace

std::vector<encoders::Input> build_inputs(const ExperimentConfig& cfg, const datagen::Dataset& ds,
                                          const std::vector<superres::FeatureSet>& features,
                                          const std::vector<channel::CsiSample>& csi) {
  std::vector<encoders::Input> out;
  out.reserve(ds.samples.size());
  switch (cfg.input) {
    case InputKind::kVaOrdered:
      out = va_ordered(ds, cfg.modality, cfg.max_bounce);
      impute_missing(out, missing_delay(ds.scene, cfg.max_bounce));
      break;
    case InputKind::kVaMatched: {
      if (features.size() != ds.samples.size()) throw ConfigError("va-matched input: feature count mismatch");
      const auto slots = va_ordered(ds, cfg.modality, cfg.max_bounce);
      const double missing = missing_delay(ds.scene, cfg.max_bounce);
      for (std::size_t i = 0; i < slots.size(); ++i) out.push_back(match_to_slots(features[i].values, slots[i], missing));
      impute_missing(out, missing);
      break;
    }
    case InputKind::kSorted: {
      std::size_t width = 0;
      for (const auto& f : features) width = std::max(width, f.size());
      for (const auto& f : features) {
        encoders::Input x(f.values);
        if (x.empty()) x.push_back(0.0);
        x.resize(width, x.back());
        out.push_back(std::move(x));
      }
      break;
    }
    case InputKind::kCsi: {
      if (csi.size() != ds.samples.size()) throw ConfigError("csi input: CSI was not synthesized");
      for (const auto& c : csi) {
        const auto snap = c.snapshot(0);
        encoders::Input x(2 * snap.size());
        for (std::size_t k = 0; k < snap.size(); ++k) {
          x[k] = snap[k].real();
          x[snap.size() + k] = snap[k].imag();
        }
        out.push_back(std::move(x));
      }
      break;
    }
    case InputKind::kSet:
      for (const auto& f : features) out.push_back(f.values);
      break;
  }
  return out;
}

encoders::EncoderConfig resolved_encoder(const ExperimentConfig& cfg, const std::vector<encoders::Input>& inputs) {
  encoders::EncoderConfig e = cfg.encoder;
  e.out_dim = cfg.scene == "3d-box" ? 3 : 2;
  e.input_dim = inputs.empty() ? 0 : static_cast<int>(inputs.front().size());
  return e;
}

Prepared prepare(const ExperimentConfig& cfg) {
  cfg.validate();
  Prepared p;
  p.dataset = datagen::generate_dataset(make_scene(cfg), dataset_config(cfg));
  const bool need_csi = cfg.source == FeatureSource::kMusic || cfg.input == InputKind::kCsi;
  if (need_csi) p.csi = synthesize_csi(p.dataset, cfg);
  p.features = cfg.source == FeatureSource::kGenie ? genie_features(p.dataset, cfg.modality)
                                                   : music_features(p.csi, cfg, p.dataset.scene);
  p.inputs = build_inputs(cfg, p.dataset, p.features, p.csi);
  return p;
}

Evaluation evaluate(slam::SlamModel& model, const Prepared& data, const ExperimentConfig& cfg) {
  const auto& ds = data.dataset;
  const auto train_idx = ds.train_indices();
  const auto test_idx = ds.test_indices();
  if (test_idx.empty()) throw ConfigError("evaluate: empty test split");
  const std::size_t n_lab = std::min<std::size_t>(static_cast<std::size_t>(cfg.n_labeled), train_idx.size());
  const int dim = ds.scene.dim;
  if (n_lab < static_cast<std::size_t>(dim) + 1) throw ConfigError("evaluate: too few labeled samples");

  Evaluation ev;
  std::vector<const encoders::Input*> lab_in;
  std::vector<Point> lab_truth;
  for (std::size_t k = 0; k < n_lab; ++k) {
    lab_in.push_back(&data.inputs[train_idx[k]]);
    lab_truth.push_back(ds.samples[train_idx[k]].user);
  }
  const auto lab_pred = model.predict(lab_in);
  ev.alignment = eval::fit_isometry(lab_pred, lab_truth, true);

  std::vector<const encoders::Input*> test_in;
  for (std::size_t i : test_idx) {
    test_in.push_back(&data.inputs[i]);
    ev.test_truth.push_back(ds.samples[i].user);
    ev.test_ids.push_back(static_cast<int>(i));
  }
  ev.test_predictions = model.predict(test_in);
  ev.positions = eval::position_errors(ev.test_predictions, ev.test_truth, ev.alignment.isometry);
  ev.cloud_residual = eval::fit_isometry(ev.test_predictions, ev.test_truth, true).rms_residual;

  ev.prune = slam::prune_vas(model, data.features, data.inputs, train_idx, cfg.rho_min, cfg.train.beta);
  const auto vas = model.va_points();
  for (int r : ev.prune.retained) {
    if (r > 0) ev.retained_vas.push_back(vas[static_cast<std::size_t>(r - 1)]);
  }
  const auto truth = datagen::true_virtual_anchors(ds.scene, ds.config.trace);
  if (!ev.retained_vas.empty()) ev.vas = eval::va_errors(ev.retained_vas, truth, ev.alignment.isometry);
  return ev;
}

json metrics_json(const Evaluation& ev) {
  auto or_null = [](const std::vector<double>& e, double v) { return e.empty() ? json(nullptr) : json(v); };
  return {{"mean", ev.positions.mean},
          {"median", ev.positions.median},
          {"q90", ev.positions.q90},
          {"va_median", or_null(ev.vas.stats.errors, ev.vas.stats.median)},
          {"va_q90", or_null(ev.vas.stats.errors, ev.vas.stats.q90)},
          {"unmatched_true_vas", ev.vas.unmatched_true},
          {"retained_vas", ev.retained_vas.size()},
          {"alignment_rms_m", ev.alignment.rms_residual},
          {"alignment_reflection", ev.alignment.used_reflection},
          {"cloud_residual_m", ev.cloud_residual},
          {"n_test", ev.positions.errors.size()}};
}

Outcome run(const ExperimentConfig& cfg, const Prepared& data) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  Outcome out;
  slam::TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  tc.modality = cfg.modality;
  const auto train_idx = data.dataset.train_indices();
  out.training = slam::train(data.features, data.inputs, train_idx, resolved_encoder(cfg, data.inputs), tc);
  out.evaluation = evaluate(*out.training.model, data, cfg);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

std::vector<ExperimentConfig> ablation_grid(const std::string& kind, const ExperimentConfig& base) {
  std::vector<ExperimentConfig> grid;
  if (kind == "setloss") {
    for (auto k : {matchloss::SetLossKind::kHungarian, matchloss::SetLossKind::kChamfer,
                   matchloss::SetLossKind::kHausdorff, matchloss::SetLossKind::kGreedy}) {
      auto c = base;
      c.train.loss = k;
      // One training run per loss: restarts would hide convergence differences.
      c.train.n_restarts = 1;
      c.name = std::string("setloss-") + matchloss::set_loss_kind_name(k);
      grid.push_back(c);
    }
  } else if (kind == "vacount") {
    // Single bounce gives the 6 wall images; double bounce adds the
    // second-order images, truncated in image order for the middle setting.
    for (int n : {6, 15, 24}) {
      auto c = base;
      c.max_bounce = n == 6 ? 1 : 2;
      c.max_virtual_anchors = n == 24 ? 0 : n;
      c.train.va_cap = std::max(c.train.va_cap, 2 * (n + 1));
      c.name = "vacount-" + std::to_string(n);
      grid.push_back(c);
    }
  } else if (kind == "bandwidth") {
    for (double mhz : {100.0, 300.0, 400.0}) {
      auto c = base;
      c.ofdm.bandwidth_hz = mhz * 1e6;
      c.name = "bandwidth-" + std::to_string(static_cast<int>(mhz)) + "mhz";
      grid.push_back(c);
    }
  } else if (kind == "snr") {
    for (std::optional<double> snr : {std::optional<double>{}, std::optional<double>{20.0}, std::optional<double>{10.0}}) {
      auto c = base;
      c.ofdm.snr_db = snr;
      c.name = snr ? "snr-" + std::to_string(static_cast<int>(*snr)) + "db" : std::string("snr-clean");
      grid.push_back(c);
    }
  } else {
    throw ConfigError("unknown ablation '" + kind + "' (expected setloss|vacount|bandwidth|snr)");
  }
  return grid;
}

std::vector<AblationRow> run_ablation(const std::string& kind, const ExperimentConfig& base) {
  std::vector<AblationRow> rows;
  for (const auto& c : ablation_grid(kind, base)) {
    const auto out = run(c);
    const auto& ev = out.evaluation;
    AblationRow row;
    row.label = c.name;
    row.config = c;
    row.median = ev.positions.median;
    row.q90 = ev.positions.q90;
    row.va_median = ev.vas.stats.median;
    row.va_q90 = ev.vas.stats.q90;
    row.cloud_residual = ev.cloud_residual;
    row.final_loss = out.training.final_loss;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os.precision(10);
  os << "label,median_m,q90_m,va_median_m,va_q90_m,cloud_residual_m,final_loss\n";
  for (const auto& r : rows) {
    os << r.label << ',' << r.median << ',' << r.q90 << ',' << r.va_median << ',' << r.va_q90 << ','
       << r.cloud_residual << ',' << r.final_loss << '\n';
  }
  return os.str();
}

}  // namespace rfslam::experiment
