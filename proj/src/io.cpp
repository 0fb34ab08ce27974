#include "rfslam/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "rfslam/common.hpp"

namespace rfslam::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace {

std::ofstream open_out(const fs::path& path, bool binary = false) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw ConfigError("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw ConfigError("cannot read " + path.string());
  return in;
}

json parse_line(const std::string& line, const fs::path& path, std::size_t lineno) {
  try {
    return json::parse(line);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
  }
}

void write_f64(std::ostream& out, std::span<const double> v) {
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_f64(std::istream& in, std::span<double> v, const fs::path& path) {
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (in.gcount() != static_cast<std::streamsize>(v.size() * sizeof(double))) {
    throw ConfigError(path.string() + ": truncated binary payload");
  }
}

}  // namespace

json point_to_json(const geometry::Point& p) { return json(std::vector<double>(p.coords().begin(), p.coords().end())); }

geometry::Point point_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 2 && v.size() != 3) throw ConfigError("point must have 2 or 3 coordinates");
  geometry::Point p = geometry::Point::zeros(static_cast<int>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) p[static_cast<int>(i)] = v[i];
  return p;
}

json scene_to_json(const geometry::Scene& scene) {
  json walls = json::array();
  for (const auto& w : scene.walls) {
    walls.push_back({{"origin", point_to_json(w.origin)},
                     {"normal", point_to_json(w.normal)},
                     {"extents", w.extents},
                     {"gamma", w.gamma}});
  }
  return {{"dim", scene.dim}, {"anchor", point_to_json(scene.anchor)}, {"walls", walls}};
}

geometry::Scene scene_from_json(const json& j) {
  geometry::Scene s;
  try {
    s.dim = j.at("dim").get<int>();
    s.anchor = point_from_json(j.at("anchor"));
    for (const auto& w : j.at("walls")) {
      geometry::Wall wall;
      wall.origin = point_from_json(w.at("origin"));
      wall.normal = point_from_json(w.at("normal"));
      wall.extents = w.at("extents").get<std::vector<double>>();
      wall.gamma = w.value("gamma", 0.7);
      s.walls.push_back(std::move(wall));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scene: ") + e.what());
  }
  s.validate();
  return s;
}

json ofdm_to_json(const channel::OfdmConfig& cfg) {
  json j = {{"carrier_hz", cfg.carrier_hz},
            {"bandwidth_hz", cfg.bandwidth_hz},
            {"n_subcarriers", cfg.n_subcarriers},
            {"snapshots", cfg.snapshots}};
  j["snr_db"] = cfg.snr_db ? json(*cfg.snr_db) : json(nullptr);
  return j;
}

channel::OfdmConfig ofdm_from_json(const json& j) {
  channel::OfdmConfig c;
  c.carrier_hz = j.value("carrier_hz", c.carrier_hz);
  c.bandwidth_hz = j.value("bandwidth_hz", c.bandwidth_hz);
  c.n_subcarriers = j.value("n_subcarriers", c.n_subcarriers);
  c.snapshots = j.value("snapshots", c.snapshots);
  if (j.contains("snr_db") && !j["snr_db"].is_null()) c.snr_db = j["snr_db"].get<double>();
  c.validate();
  return c;
}

json encoder_config_to_json(const encoders::EncoderConfig& c) {
  return {{"kind", encoders::encoder_kind_name(c.kind)},
          {"input_dim", c.input_dim},
          {"out_dim", c.out_dim},
          {"mlp_hidden", c.mlp_hidden},
          {"conv_channels", c.conv_channels},
          {"conv_kernel", c.conv_kernel},
          {"conv_fc", c.conv_fc},
          {"deepset_width", c.deepset_width},
          {"output_scale", c.output_scale},
          {"linear_skip", c.linear_skip}};
}

encoders::EncoderConfig encoder_config_from_json(const json& j) {
  encoders::EncoderConfig c;
  c.kind = encoders::parse_encoder_kind(j.value("kind", std::string("mlp")));
  c.input_dim = j.value("input_dim", c.input_dim);
  c.out_dim = j.value("out_dim", c.out_dim);
  c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
  c.conv_channels = j.value("conv_channels", c.conv_channels);
  c.conv_kernel = j.value("conv_kernel", c.conv_kernel);
  c.conv_fc = j.value("conv_fc", c.conv_fc);
  c.deepset_width = j.value("deepset_width", c.deepset_width);
  c.output_scale = j.value("output_scale", c.output_scale);
  c.linear_skip = j.value("linear_skip", c.linear_skip);
  return c;
}

json read_json(const fs::path& path) {
  auto in = open_in(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

void write_dataset(const datagen::Dataset& ds, const fs::path& path) {
  auto out = open_out(path);
  const auto& c = ds.config;
  json cfg = {{"n_samples", c.n_samples},
              {"margin", c.margin},
              {"seed", c.seed},
              {"test_fraction", c.test_fraction},
              {"max_bounce", c.trace.max_bounce},
              {"d_min", c.trace.d_min},
              {"max_virtual_anchors", c.trace.max_virtual_anchors}};
  cfg["height_range"] = c.height_range ? json(*c.height_range) : json(nullptr);
  out << json{{"format", "rfslam-dataset"}, {"scene", scene_to_json(ds.scene)}, {"config", cfg}}.dump() << '\n';
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    json paths = json::array();
    for (const auto& p : s.paths) {
      paths.push_back({{"tof_s", p.tof},
                       {"gain_re", p.gain.real()},
                       {"gain_im", p.gain.imag()},
                       {"bounces", p.bounces},
                       {"va", p.va_index}});
    }
    out << json{{"id", i}, {"user", point_to_json(s.user)}, {"paths", paths},
                {"split", ds.is_test[i] ? "test" : "train"}}.dump()
        << '\n';
  }
}

datagen::Dataset read_dataset(const fs::path& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path.string() + ": empty dataset file");
  const json head = parse_line(line, path, 1);
  if (head.value("format", std::string()) != "rfslam-dataset") {
    throw ConfigError(path.string() + ": missing dataset header");
  }
  datagen::Dataset ds;
  ds.scene = scene_from_json(head.at("scene"));
  const json& c = head.at("config");
  ds.config.n_samples = c.value("n_samples", 0);
  ds.config.margin = c.value("margin", 0.25);
  ds.config.seed = c.value("seed", std::uint64_t{1});
  ds.config.test_fraction = c.value("test_fraction", 0.1);
  ds.config.trace.max_bounce = c.value("max_bounce", 1);
  ds.config.trace.d_min = c.value("d_min", 0.1);
  ds.config.trace.max_virtual_anchors = c.value("max_virtual_anchors", 0);
  if (c.contains("height_range") && !c["height_range"].is_null()) {
    ds.config.height_range = c["height_range"].get<std::array<double, 2>>();
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const json j = parse_line(line, path, lineno);
    datagen::Sample s;
    s.user = point_from_json(j.at("user"));
    for (const auto& p : j.at("paths")) {
      datagen::PathRecord r;
      r.tof = p.at("tof_s").get<double>();
      r.gain = {p.at("gain_re").get<double>(), p.at("gain_im").get<double>()};
      r.bounces = p.at("bounces").get<int>();
      r.va_index = p.at("va").get<int>();
      s.paths.push_back(r);
    }
    ds.samples.push_back(std::move(s));
    ds.is_test.push_back(j.at("split").get<std::string>() == "test");
  }
  return ds;
}

void write_csi(const std::vector<channel::CsiSample>& csi, const channel::OfdmConfig& cfg,
               const fs::path& path) {
  auto out = open_out(path, true);
  const int snaps = csi.empty() ? cfg.snapshots : csi.front().snapshots;
  const int nsc = csi.empty() ? cfg.n_subcarriers : csi.front().n_subcarriers;
  const json head = {{"format", "rfslam-csi"}, {"ofdm", ofdm_to_json(cfg)}, {"n_samples", csi.size()},
                     {"snapshots", snaps}, {"n_subcarriers", nsc}, {"dtype", "f64le-interleaved"}};
  out << head.dump() << '\n';
  std::vector<double> buf;
  for (const auto& s : csi) {
    if (s.snapshots != snaps || s.n_subcarriers != nsc) throw ConfigError("write_csi: ragged CSI samples");
    buf.resize(2 * s.h.size());
    for (std::size_t k = 0; k < s.h.size(); ++k) {
      buf[2 * k] = s.h[k].real();
      buf[2 * k + 1] = s.h[k].imag();
    }
    write_f64(out, buf);
  }
}

std::vector<channel::CsiSample> read_csi(const fs::path& path, channel::OfdmConfig* cfg) {
  auto in = open_in(path, true);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path.string() + ": empty CSI file");
  const json head = parse_line(line, path, 1);
  if (head.value("format", std::string()) != "rfslam-csi") throw ConfigError(path.string() + ": missing CSI header");
  if (cfg) *cfg = ofdm_from_json(head.at("ofdm"));
  const auto n = head.at("n_samples").get<std::size_t>();
  const int snaps = head.at("snapshots").get<int>();
  const int nsc = head.at("n_subcarriers").get<int>();
  std::vector<channel::CsiSample> out(n);
  std::vector<double> buf(2 * static_cast<std::size_t>(snaps) * static_cast<std::size_t>(nsc));
  for (auto& s : out) {
    read_f64(in, buf, path);
    s.snapshots = snaps;
    s.n_subcarriers = nsc;
    s.h.resize(buf.size() / 2);
    for (std::size_t k = 0; k < s.h.size(); ++k) s.h[k] = {buf[2 * k], buf[2 * k + 1]};
  }
  return out;
}

void write_features(const std::vector<superres::FeatureSet>& features, const fs::path& path) {
  auto out = open_out(path);
  for (std::size_t i = 0; i < features.size(); ++i) {
    out << json{{"sample_id", i}, {"modality", modality_name(features[i].modality)},
                {"values_s", features[i].values}}.dump()
        << '\n';
  }
}

std::vector<superres::FeatureSet> read_features(const fs::path& path) {
  auto in = open_in(path);
  std::vector<superres::FeatureSet> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const json j = parse_line(line, path, lineno);
    if (j.at("sample_id").get<std::size_t>() != out.size()) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": sample ids must be consecutive");
    }
    superres::FeatureSet f;
    f.modality = parse_modality(j.at("modality").get<std::string>());
    f.values = j.at("values_s").get<std::vector<double>>();
    out.push_back(std::move(f));
  }
  return out;
}

void save_checkpoint(slam::SlamModel& model, std::uint64_t seed, const fs::path& dir) {
  json tensors = json::array();
  std::size_t offset = 0;
  auto refs = model.tensors();
  for (const auto& r : refs) {
    tensors.push_back({{"name", r.name}, {"shape", r.value->shape}, {"offset", offset}});
    offset += r.value->numel();
  }
  std::vector<int> frozen(model.frozen.begin(), model.frozen.end());
  const json manifest = {{"format", "rfslam-checkpoint"},
                         {"dim", model.dim()},
                         {"n_va", model.n_va()},
                         {"modality", modality_name(model.modality())},
                         {"seed", seed},
                         {"encoder", encoder_config_to_json(model.encoder().config())},
                         {"frozen", frozen},
                         {"frozen_value", model.frozen_value},
                         {"tensors", tensors},
                         {"blob", "model.bin"},
                         {"n_values", offset}};
  write_json(dir / "model.json", manifest);
  auto out = open_out(dir / "model.bin", true);
  for (const auto& r : refs) write_f64(out, r.value->data);
}

std::unique_ptr<slam::SlamModel> load_checkpoint(const fs::path& dir) {
  const json m = read_json(dir / "model.json");
  if (m.value("format", std::string()) != "rfslam-checkpoint") {
    throw ConfigError((dir / "model.json").string() + ": not a checkpoint manifest");
  }
  const auto ecfg = encoder_config_from_json(m.at("encoder"));
  auto model = std::make_unique<slam::SlamModel>(m.at("dim").get<int>(), m.at("n_va").get<int>(),
                                                 parse_modality(m.at("modality").get<std::string>()),
                                                 encoders::make_encoder(ecfg, m.value("seed", std::uint64_t{0})));
  const auto frozen = m.at("frozen").get<std::vector<int>>();
  const auto frozen_value = m.at("frozen_value").get<std::vector<double>>();
  if (frozen.size() != model->frozen.size() || frozen_value.size() != model->frozen_value.size()) {
    throw ConfigError("checkpoint: frozen mask has the wrong size");
  }
  for (std::size_t i = 0; i < frozen.size(); ++i) {
    model->frozen[i] = static_cast<char>(frozen[i] != 0);
    model->frozen_value[i] = frozen_value[i];
  }
  auto refs = model->tensors();
  const json& listed = m.at("tensors");
  if (listed.size() != refs.size()) throw ConfigError("checkpoint: tensor count does not match architecture");
  auto in = open_in(dir / m.value("blob", std::string("model.bin")), true);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto& t = listed[i];
    if (t.at("name").get<std::string>() != refs[i].name || t.at("shape").get<std::vector<int>>() != refs[i].value->shape) {
      throw ConfigError("checkpoint: tensor '" + t.at("name").get<std::string>() + "' does not match architecture");
    }
    read_f64(in, refs[i].value->data, dir / "model.bin");
  }
  return model;
}

void write_loss_history(const std::vector<slam::TrainRun>& runs, const fs::path& path) {
  auto out = open_out(path);
  out << "epoch";
  std::size_t rows = 0;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    out << ",restart" << r;
    rows = std::max(rows, runs[r].epoch_loss.size());
  }
  out << '\n';
  out.precision(17);
  for (std::size_t e = 0; e < rows; ++e) {
    out << e;
    for (const auto& run : runs) {
      out << ',';
      if (e < run.epoch_loss.size()) out << run.epoch_loss[e];
    }
    out << '\n';
  }
}

}  // namespace rfslam::io
