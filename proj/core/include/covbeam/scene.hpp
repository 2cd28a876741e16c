#pragma once

#include <array>
#include <optional>
#include <vector>

#include "covbeam/rng.hpp"
#include "covbeam/signal.hpp"

namespace covbeam {

inline constexpr double kSpeedOfSound = 343.0;  // m/s

struct RoomSpec {
  std::array<double, 3> dims_m{6.0, 5.0, 3.0};
  double t60_s = 0.5;
  std::vector<std::array<double, 3>> source_positions_m;
  std::array<double, 3> array_center_m{3.0, 2.5, 1.5};
};

// Throws unless every source and the array center lie strictly inside the
// room and t60 is positive.
void validate(const RoomSpec& room);

struct ArrayGeometry {
  std::vector<std::array<double, 3>> mic_offsets_m;

  int mic_count() const { return static_cast<int>(mic_offsets_m.size()); }
  // Planar circular array; mics evenly spaced starting on the +x axis.
  static ArrayGeometry circular(int mics = 6, double diameter_m = 0.07);
};

// Yaw snapshots at the midpoints of equal time segments spanning the scene.
struct PoseTrajectory {
  std::vector<double> yaw_rad;

  int snapshots() const { return static_cast<int>(yaw_rad.size()); }
  bool is_static() const;
  double yaw_range() const;
};

// Three-state pose model: Still, TurnLeft, TurnRight. A turn speed is drawn
// uniformly from [speed_lo, speed_hi] each time a turning state is entered.
struct PoseMarkovModel {
  std::array<std::array<double, 3>, 3> transition{{{0.95, 0.025, 0.025},
                                                   {0.05, 0.95, 0.0},
                                                   {0.05, 0.0, 0.95}}};
  double speed_lo_rad_s = 0.5;
  double speed_hi_rad_s = 2.5;
  double step_s = 0.02;
  int initial_state = 0;  // Still

  static PoseMarkovModel identity_still();
};

void validate(const PoseMarkovModel& model);

PoseTrajectory sample_trajectory(const PoseMarkovModel& model, double duration_s, int snapshots,
                                 uint64_t seed);

enum class AbsorptionModel { kSabine, kEyring };

struct SimOptions {
  int sample_rate_hz = 16000;
  int max_order = 12;
  int sinc_half_width = 40;
  AbsorptionModel absorption = AbsorptionModel::kSabine;
  // overrides the t60-derived wall reflection handling when set
  std::optional<double> absorption_override;
  std::optional<int> order_override;
};

// Wall absorption for the requested decay time. Sabine slightly
// over-absorbs, which in shoebox rooms offsets the slow-decaying axial tail;
// measured -60 dB crossings stay within ~15% of nominal over the supported
// t60 range. Eyring is available for comparison and runs long.
double wall_absorption(const RoomSpec& room, AbsorptionModel model);

// Reflection order used when no override is given: ceil(t60 * c / min_dim)
// capped at opts.max_order.
int reflection_order(const RoomSpec& room, const SimOptions& opts);

// Shoebox image-source impulse responses for all mics of the array at one
// yaw. Fractional delays enter through a Hann-windowed sinc; tap count is
// sized from the farthest image. Throws if a source is outside the room.
std::vector<std::vector<double>> simulate_rir(const RoomSpec& room, const ArrayGeometry& geom,
                                              double yaw_rad, int source_idx,
                                              const SimOptions& opts = {});

// Image set decomposition: positions and bounce-count gains are fixed per
// (room, source); only mic positions change with pose. Rendering per yaw
// reuses the set.
struct ImageSourceSet {
  std::vector<std::array<double, 3>> positions;
  std::vector<double> gains;  // beta^bounces
  double max_distance_m = 0.0;
};

ImageSourceSet build_image_set(const RoomSpec& room, int source_idx, const SimOptions& opts);
std::vector<double> render_rir(const ImageSourceSet& images, const std::array<double, 3>& mic_pos,
                               int taps, const SimOptions& opts);
int rir_taps(const ImageSourceSet& images, double mic_radius_m, const SimOptions& opts);

std::array<double, 3> mic_position(const RoomSpec& room, const ArrayGeometry& geom, int mic,
                                   double yaw_rad);

// Schroeder backward-integrated energy decay, dB relative to total energy.
std::vector<double> energy_decay_curve_db(std::span<const double> rir);
// First time the decay curve falls below `threshold_db` (negative), seconds.
double decay_crossing_time_s(std::span<const double> rir, int sample_rate_hz,
                             double threshold_db = -60.0);

// Piecewise convolution with one RIR set per segment, linearly crossfaded
// over `crossfade` samples at segment boundaries (clamped to the segment
// length). Output length is input length + taps - 1.
Waveform time_varying_convolve(const Waveform& source,
                               const std::vector<std::vector<std::vector<double>>>& rirs,
                               int crossfade = 256);

struct SceneBundle {
  Waveform mixture;          // [M]
  Waveform speech_echoic;    // [M]
  Waveform speech_anechoic;  // [1], aligned to the reference mic
  Waveform noise;            // [M], scaled sum of all noise sources
  PoseTrajectory trajectory;
  double snr_db = 0.0;
};

// Scales the summed noise so speech/noise energies at the reference mic
// (channel 0) realize snr_db, then forms mixture = speech + noise sample for
// sample. snr_db = +infinity mutes the noise. Throws when either side is
// silent (the ratio would be undefined).
SceneBundle mix_scene(const Waveform& speech_echoic, const std::vector<Waveform>& noises,
                      double snr_db, int reference_mic = 0);

}  // namespace covbeam
