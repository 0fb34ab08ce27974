#pragma once
// On-disk formats: scene and dataset JSON(L), CSI blobs, feature files,
// model checkpoints and run-directory artifacts. All binary payloads are
// little-endian float64.

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "rfslam/channel.hpp"
#include "rfslam/datagen.hpp"
#include "rfslam/encoders.hpp"
#include "rfslam/slam.hpp"
#include "rfslam/superres.hpp"

namespace rfslam::io {

namespace fs = std::filesystem;
using nlohmann::json;

json point_to_json(const geometry::Point& p);
geometry::Point point_from_json(const json& j);

json scene_to_json(const geometry::Scene& scene);
geometry::Scene scene_from_json(const json& j);

json ofdm_to_json(const channel::OfdmConfig& cfg);
channel::OfdmConfig ofdm_from_json(const json& j);

json encoder_config_to_json(const encoders::EncoderConfig& cfg);
encoders::EncoderConfig encoder_config_from_json(const json& j);

json read_json(const fs::path& path);
// Pretty-printed with a trailing newline; parent directories are created.
void write_json(const fs::path& path, const json& j);

// dataset.jsonl: a header line {"format":"rfslam-dataset", scene, config}
// followed by one line per sample.
void write_dataset(const datagen::Dataset& ds, const fs::path& path);
datagen::Dataset read_dataset(const fs::path& path);

// csi.bin: one JSON header line, then per sample snapshots x subcarriers
// complex values as interleaved (re, im) float64.
void write_csi(const std::vector<channel::CsiSample>& csi, const channel::OfdmConfig& cfg,
               const fs::path& path);
std::vector<channel::CsiSample> read_csi(const fs::path& path, channel::OfdmConfig* cfg = nullptr);

// features.jsonl: {"sample_id", "modality", "values_s"} per line.
void write_features(const std::vector<superres::FeatureSet>& features, const fs::path& path);
std::vector<superres::FeatureSet> read_features(const fs::path& path);

// model.json (architecture, tensor names, shapes, offsets, seed) plus
// model.bin holding every tensor back to back.
void save_checkpoint(slam::SlamModel& model, std::uint64_t seed, const fs::path& dir);
std::unique_ptr<slam::SlamModel> load_checkpoint(const fs::path& dir);

// One row per epoch, one column per restart.
void write_loss_history(const std::vector<slam::TrainRun>& runs, const fs::path& path);

}  // namespace rfslam::io
