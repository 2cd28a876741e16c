#pragma once

#include <optional>
#include <stdexcept>
#include <string>

#include "covbeam/beamformer.hpp"
#include "covbeam/dataset.hpp"
#include "covbeam/enhancer.hpp"
#include "covbeam/estimator.hpp"

namespace covbeam {

// CLI exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// CLI exit code 3.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class EnhancerKind { kOracle, kEchoicIrm, kAnechoicIrm, kLstm };
enum class EstimatorKind { kNone, kFixed, kBuffer, kRank1, kCholesky, kArbitrary };

const char* to_string(EnhancerKind k);
const char* to_string(EstimatorKind k);
const char* to_string(SteeringMode m);

struct EnhancerConfig {
  EnhancerKind kind = EnhancerKind::kOracle;
  int lstm_hidden = 512;
  int lstm_layers = 3;
  IrmForm irm_form = IrmForm::kMagnitude;

  std::string label() const;
};

struct EstimatorConfig {
  EstimatorKind kind = EstimatorKind::kArbitrary;
  int hidden = 128;
  int layers = 2;
  bool f_info = true;
  int f_channels = 64;
  int buffer_frames = 15;
  double rank1_init_eps = 1e-3;

  bool learned() const {
    return kind == EstimatorKind::kRank1 || kind == EstimatorKind::kCholesky ||
           kind == EstimatorKind::kArbitrary;
  }
  CovVariant variant() const;
  std::string label() const;
};

struct PipelineConfig {
  StftConfig stft{512, 256};
  int mics = 6;
  EnhancerConfig enhancer;
  EstimatorConfig estimator;
  SteeringMode steering = SteeringMode::kAuto;
  std::string manifest;
  std::string weights;
  std::string dtype = "float32";  // float32 | float64
  uint64_t seed = 0;

  // kAuto resolves to first-column steering for learned estimators and the
  // principal component for conventional ones.
  SteeringMode resolved_steering() const;
  LearnedEstimatorArch estimator_arch() const;
  LstmMaskArch enhancer_arch() const;
};

struct TrainConfig {
  double lr = 3e-4;
  int batch_size = 8;
  int max_epochs = 50;
  int patience = 5;
  double clip_norm = 5.0;
  bool joint_enhancer = false;
  uint64_t seed = 1;
};

// Strict JSON loaders: unknown keys and out-of-range values raise
// ConfigError. Paths are taken as written (relative to the working
// directory).
PipelineConfig load_pipeline_config(const std::string& path);
PipelineConfig parse_pipeline_config(const std::string& json_text);
TrainConfig load_train_config(const std::string& path);
TrainConfig parse_train_config(const std::string& json_text);
SceneGenConfig load_scene_config(const std::string& path);
SceneGenConfig parse_scene_config(const std::string& json_text,
                                  std::array<double, 3>* split_fractions = nullptr);

// FNV-1a over the canonical serialized form; lands in results tables so runs
// can be audited against their configuration.
uint64_t config_hash(const PipelineConfig& cfg);
std::string pipeline_config_to_json(const PipelineConfig& cfg);

void validate(const PipelineConfig& cfg);
void validate(const TrainConfig& cfg);

}  // namespace covbeam
