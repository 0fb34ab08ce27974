#pragma once
// End-to-end experiment pipeline shared by the CLI and the acceptance suite:
// scene presets, dataset and CSI synthesis, feature extraction, encoder
// inputs, training and evaluation.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rfslam/channel.hpp"
#include "rfslam/datagen.hpp"
#include "rfslam/encoders.hpp"
#include "rfslam/eval.hpp"
#include "rfslam/slam.hpp"
#include "rfslam/superres.hpp"

namespace rfslam::experiment {

using nlohmann::json;

enum class FeatureSource { kGenie, kMusic };

// How a sample is presented to the encoder:
//   va     - genie delays indexed by true virtual anchor (fixed width)
//   va-matched - extracted delays placed in the slot of the true path they
//            match (the simulator's path identities order the vector; the
//            values are the extracted ones)
//   sorted - feature values in ascending order, padded to a fixed width
//   csi    - first CSI snapshot, real block then imaginary block
//   set    - the raw variable-size feature set
enum class InputKind { kVaOrdered, kVaMatched, kSorted, kCsi, kSet };

FeatureSource parse_source(const std::string& s);
const char* source_name(FeatureSource s);
InputKind parse_input(const std::string& s);
const char* input_name(InputKind k);

struct ExperimentConfig {
  std::string name = "custom";
  std::string scene = "2d-room";  // 2d-room | 3d-box
  std::vector<double> wall_gamma;  // per wall; empty keeps the scene default
  int n_samples = 4000;
  double margin = 0.25;
  double test_fraction = 0.1;
  int max_bounce = 1;
  int max_virtual_anchors = 0;
  channel::OfdmConfig ofdm;
  FeatureSource source = FeatureSource::kGenie;
  Modality modality = Modality::kToF;
  InputKind input = InputKind::kVaOrdered;
  encoders::EncoderConfig encoder;  // input_dim and out_dim are filled in
  slam::TrainConfig train;
  int subarray_len = 64;
  double min_prominence_db = 1.0;
  int max_order = 12;
  int n_labeled = 32;
  double rho_min = 0.01;
  std::uint64_t seed = 1;

  void validate() const;
};

// Names: 2d-room, 3d-box, table4-mlp-2d, table3-music-tdoa-2d,
// table3-music-tdoa-2d-10db, table3-genie-tdoa-3d, genie-tof-3d-6va.
ExperimentConfig preset(const std::string& name);
std::vector<std::string> preset_names();

json to_json(const ExperimentConfig& cfg);
ExperimentConfig from_json(const json& j);

// Sets a dotted key ("train.epochs", "ofdm.bandwidth_hz") or a top-level
// alias ("epochs", "samples", "restarts", "snr_db", ...). `value` is parsed
// as JSON when possible, otherwise taken as a string.
void apply_override(json& cfg, const std::string& key, const std::string& value);

geometry::Scene make_scene(const ExperimentConfig& cfg);
datagen::DatasetConfig dataset_config(const ExperimentConfig& cfg);
superres::SuperresConfig superres_config(const ExperimentConfig& cfg, const geometry::Scene& scene);

std::vector<channel::CsiSample> synthesize_csi(const datagen::Dataset& ds, const ExperimentConfig& cfg);

// True delays, one per distinct visible virtual anchor, ascending.
std::vector<superres::FeatureSet> genie_features(const datagen::Dataset& ds, Modality modality);
std::vector<superres::FeatureSet> music_features(const std::vector<channel::CsiSample>& csi,
                                                 const ExperimentConfig& cfg, const geometry::Scene& scene);

std::vector<encoders::Input> build_inputs(const ExperimentConfig& cfg, const datagen::Dataset& ds,
                                          const std::vector<superres::FeatureSet>& features,
                                          const std::vector<channel::CsiSample>& csi);

// Encoder config with input_dim/out_dim resolved from the inputs.
encoders::EncoderConfig resolved_encoder(const ExperimentConfig& cfg, const std::vector<encoders::Input>& inputs);

struct Prepared {
  datagen::Dataset dataset;
  std::vector<channel::CsiSample> csi;  // empty unless needed
  std::vector<superres::FeatureSet> features;
  std::vector<encoders::Input> inputs;
};

Prepared prepare(const ExperimentConfig& cfg);

struct Evaluation {
  eval::AlignmentFit alignment;  // from the labeled subset
  eval::ErrorStats positions;    // test split
  eval::VaErrorReport vas;
  slam::PruneResult prune;
  std::vector<geometry::Point> retained_vas;  // model frame, anchor excluded
  std::vector<geometry::Point> test_predictions;  // model frame
  std::vector<geometry::Point> test_truth;
  std::vector<int> test_ids;
  // RMS residual of the best isometry over the whole test cloud.
  double cloud_residual = 0.0;
};

Evaluation evaluate(slam::SlamModel& model, const Prepared& data, const ExperimentConfig& cfg);

json metrics_json(const Evaluation& ev);

struct Outcome {
  slam::TrainResult training;
  Evaluation evaluation;
  double seconds = 0.0;
};

Outcome run(const ExperimentConfig& cfg, const Prepared& data);
inline Outcome run(const ExperimentConfig& cfg) { return run(cfg, prepare(cfg)); }

struct AblationRow {
  std::string label;
  ExperimentConfig config;
  double median = 0.0, q90 = 0.0, va_median = 0.0, va_q90 = 0.0;
  double cloud_residual = 0.0, final_loss = 0.0;
};

// kind: setloss | vacount | bandwidth | snr.
std::vector<ExperimentConfig> ablation_grid(const std::string& kind, const ExperimentConfig& base);
std::vector<AblationRow> run_ablation(const std::string& kind, const ExperimentConfig& base);
std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace rfslam::experiment
