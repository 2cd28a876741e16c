#pragma once

#include "covbeam/dataset.hpp"
#include "covbeam/pipeline.hpp"

namespace covbeam {

struct DatasetView {
  std::string base_dir;
  std::vector<SceneRecord> records;
};

// Scenes of one split; base_dir is the manifest's directory.
DatasetView manifest_split(const std::string& manifest_path, const std::string& split);

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;  // mean negative SI-SDR
  double val_si_sdr = 0.0;
};

struct TrainResult {
  int best_epoch = 0;
  double best_val_si_sdr = 0.0;
  std::vector<EpochStats> history;
  std::string weights_path;
  std::string optimizer_path;
  std::string log_path;
};

// End-to-end training: per-scene loss graphs, gradient accumulation over the
// batch, global-norm clipping, Adam. Validation SI-SDR drives early stopping
// (patience epochs without improvement); the best-epoch checkpoint is what
// remains on disk. Trainables: learned estimator parameters always;
// "enh." parameters only when joint_enhancer is set or the pipeline is
// enhancer-only (estimator "none"). resume_prefix reloads weights and
// optimizer moments bit-exactly.
TrainResult train(const DatasetView& train_set, const DatasetView& val_set,
                  const TrainConfig& tcfg, const PipelineConfig& pcfg,
                  const std::string& out_prefix, const std::string& resume_prefix = "");

struct EvalRow {
  std::string label;
  std::string enhancer;
  std::string estimator;
  double mean_si_sdr = 0.0;
  double mean_unprocessed = 0.0;
  int scenes = 0;
  uint64_t config_hash = 0;
  std::string error;  // row skipped when non-empty
  std::vector<std::pair<std::string, double>> per_scene;
};

// One row per pipeline configuration plus a leading unprocessed-reference-mic
// row. Rows whose weights are missing carry an error note; the rest of the
// table still comes back. Weight files are hash-checked before and after.
std::vector<EvalRow> evaluate(const DatasetView& test_set,
                              const std::vector<PipelineConfig>& rows);

void write_eval_csv(const std::string& path, const std::vector<EvalRow>& rows);
void write_eval_json(const std::string& path, const std::vector<EvalRow>& rows);

// Test-time adaptation table for a trained model: STFT window/hop changes,
// an enhancer swap, and a dead microphone (one channel replaced by white
// noise at that channel's RMS), all without touching the weights.
std::vector<EvalRow> adapt_experiments(const DatasetView& test_set, const PipelineConfig& base);

// Replaces channel `mic` of the mixture with white noise at the channel's
// RMS. Ground-truth stems stay intact.
SceneBundle kill_microphone(const SceneBundle& scene, int mic, uint64_t seed);

struct BenchReport {
  double audio_seconds = 0.0;
  double wall_seconds = 0.0;
  double rtf = 0.0;
  double estimator_mflop_per_frame = 0.0;  // one estimator module
  double pipeline_mflop_per_frame = 0.0;   // both sides + enhancer + beamformer
  std::size_t parameter_count = 0;
};

// Wall-clock inference timing on a synthetic scene plus the analytic
// per-frame multiply-accumulate counts.
BenchReport benchmark_pipeline(const PipelineConfig& cfg, double seconds = 5.0, int repeats = 3);

}  // namespace covbeam
