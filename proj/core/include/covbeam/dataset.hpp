#pragma once

#include <array>
#include <string>

#include "covbeam/scene.hpp"
#include "covbeam/wav.hpp"

namespace covbeam {

struct SceneGenConfig {
  int sample_rate_hz = 16000;
  double duration_s = 5.0;
  int mics = 6;
  double array_diameter_m = 0.07;
  bool dynamic = false;
  int rotations = 250;  // RIR snapshots per dynamic scene; static scenes use 1
  std::array<double, 2> room_dim_range{4.0, 8.0};
  std::array<double, 2> t60_range{0.25, 0.75};
  std::array<double, 2> snr_range{-5.0, 5.0};
  std::array<int, 2> noise_sources{1, 3};
  PoseMarkovModel markov;
  int max_order = 12;
  int crossfade = 256;
  // common gain applied to all stems so the mixture lands at this RMS at the
  // reference mic; 0 disables
  double target_rms = 0.1;
  // directories of source WAV files; empty means synthesize sources
  std::string speech_dir;
  std::string noise_dir;
};

// Synthetic sources for self-contained runs: a harmonic, syllable-gated
// voice-like signal and shaped noise.
Waveform synth_speech(std::size_t length, int sample_rate_hz, Rng& rng);
Waveform synth_noise(std::size_t length, int sample_rate_hz, Rng& rng);

struct SceneRecord {
  std::string id;
  std::string split;
  std::string mixture, speech_echoic, speech_anechoic, noise, trajectory;  // relative paths
  RoomSpec room;
  double snr_db = 0.0;
  uint64_t seed = 0;
};

struct Manifest {
  int sample_rate_hz = 16000;
  std::vector<SceneRecord> scenes;

  std::vector<const SceneRecord*> split(const std::string& name) const;
};

void write_manifest(const std::string& path, const Manifest& manifest);
Manifest read_manifest(const std::string& path);

// Renders one scene from already-chosen source signals. Deterministic in
// (config, seed). Fills `record.room` and returns the bundle.
SceneBundle render_scene(const SceneGenConfig& cfg, const Waveform& speech_src,
                         const std::vector<Waveform>& noise_srcs, uint64_t seed,
                         RoomSpec* room_out = nullptr);

// Generates n_scenes scenes under out_dir (one subdirectory each), splits
// them train/val/test by the given fractions, and writes manifest.json.
// Source files (or synthesis seeds) are disjoint across splits. Scene
// rendering parallelizes across scenes; output is independent of the worker
// count.
Manifest generate_dataset(const SceneGenConfig& cfg, int n_scenes,
                          const std::array<double, 3>& split_fractions, uint64_t seed,
                          const std::string& out_dir);

SceneBundle load_scene(const SceneRecord& record, const std::string& base_dir);

}  // namespace covbeam
