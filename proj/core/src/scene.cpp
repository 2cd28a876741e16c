#include "covbeam/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace covbeam {

namespace {

bool strictly_inside(const std::array<double, 3>& p, const std::array<double, 3>& dims) {
  for (int i = 0; i < 3; ++i)
    if (!(p[i] > 0.0 && p[i] < dims[i])) return false;
  return true;
}

double distance(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

}  // namespace

void validate(const RoomSpec& room) {
  for (double d : room.dims_m)
    if (!(d > 0.0)) throw std::invalid_argument("room dimensions must be positive");
  if (!(room.t60_s > 0.0)) throw std::invalid_argument("t60 must be positive");
  if (!strictly_inside(room.array_center_m, room.dims_m))
    throw std::invalid_argument("array center outside room");
  if (room.source_positions_m.empty()) throw std::invalid_argument("room has no sources");
  for (const auto& s : room.source_positions_m)
    if (!strictly_inside(s, room.dims_m)) throw std::invalid_argument("source outside room");
}

ArrayGeometry ArrayGeometry::circular(int mics, double diameter_m) {
  ArrayGeometry g;
  double r = diameter_m / 2.0;
  for (int m = 0; m < mics; ++m) {
    double a = 2.0 * std::numbers::pi * m / mics;
    g.mic_offsets_m.push_back({r * std::cos(a), r * std::sin(a), 0.0});
  }
  return g;
}

bool PoseTrajectory::is_static() const {
  for (double y : yaw_rad)
    if (y != yaw_rad[0]) return false;
  return true;
}

double PoseTrajectory::yaw_range() const {
  if (yaw_rad.empty()) return 0.0;
  auto [lo, hi] = std::minmax_element(yaw_rad.begin(), yaw_rad.end());
  return *hi - *lo;
}

PoseMarkovModel PoseMarkovModel::identity_still() {
  PoseMarkovModel m;
  m.transition = {{{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}}};
  m.initial_state = 0;
  return m;
}

void validate(const PoseMarkovModel& model) {
  for (const auto& row : model.transition) {
    double sum = 0.0;
    for (double p : row) {
      if (p < 0.0) throw std::invalid_argument("negative transition probability");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("transition rows must sum to 1");
  }
  if (model.speed_lo_rad_s < 0.0 || model.speed_hi_rad_s < model.speed_lo_rad_s)
    throw std::invalid_argument("bad angular speed range");
  if (model.step_s <= 0.0) throw std::invalid_argument("step_s must be positive");
  if (model.initial_state < 0 || model.initial_state > 2)
    throw std::invalid_argument("initial_state out of range");
}

PoseTrajectory sample_trajectory(const PoseMarkovModel& model, double duration_s, int snapshots,
                                 uint64_t seed) {
  validate(model);
  if (snapshots < 1) throw std::invalid_argument("need at least one snapshot");
  Rng rng(seed);

  int steps = std::max(1, static_cast<int>(std::ceil(duration_s / model.step_s)));
  std::vector<double> yaw_at(steps + 1, 0.0);
  int state = model.initial_state;
  double speed = rng.uniform(model.speed_lo_rad_s, model.speed_hi_rad_s);
  double yaw = 0.0;
  for (int k = 0; k < steps; ++k) {
    double dir = state == 1 ? 1.0 : (state == 2 ? -1.0 : 0.0);
    yaw += dir * speed * model.step_s;
    yaw_at[k + 1] = yaw;
    double u = rng.uniform();
    int next = 2;
    double acc = 0.0;
    for (int s = 0; s < 3; ++s) {
      acc += model.transition[state][s];
      if (u < acc) {
        next = s;
        break;
      }
    }
    if (next != state && next != 0) speed = rng.uniform(model.speed_lo_rad_s, model.speed_hi_rad_s);
    state = next;
  }

  PoseTrajectory traj;
  traj.yaw_rad.resize(snapshots);
  for (int r = 0; r < snapshots; ++r) {
    double t = (r + 0.5) * duration_s / snapshots;
    double pos = std::min(t / model.step_s, static_cast<double>(steps));
    int k = static_cast<int>(pos);
    double frac = pos - k;
    double lo = yaw_at[k];
    double hi = yaw_at[std::min(k + 1, steps)];
    traj.yaw_rad[r] = lo + frac * (hi - lo);
  }
  return traj;
}

double wall_absorption(const RoomSpec& room, AbsorptionModel model) {
  double volume = room.dims_m[0] * room.dims_m[1] * room.dims_m[2];
  double surface = 2.0 * (room.dims_m[0] * room.dims_m[1] + room.dims_m[0] * room.dims_m[2] +
                          room.dims_m[1] * room.dims_m[2]);
  double sabine = 24.0 * std::log(10.0) / kSpeedOfSound * volume / (surface * room.t60_s);
  if (model == AbsorptionModel::kSabine) return std::min(sabine, 1.0);
  return 1.0 - std::exp(-sabine);
}

int reflection_order(const RoomSpec& room, const SimOptions& opts) {
  if (opts.order_override) return *opts.order_override;
  double min_dim = *std::min_element(room.dims_m.begin(), room.dims_m.end());
  int order = static_cast<int>(std::ceil(room.t60_s * kSpeedOfSound / min_dim));
  return std::min(order, opts.max_order);
}

std::array<double, 3> mic_position(const RoomSpec& room, const ArrayGeometry& geom, int mic,
                                   double yaw_rad) {
  const auto& o = geom.mic_offsets_m[mic];
  double c = std::cos(yaw_rad), s = std::sin(yaw_rad);
  return {room.array_center_m[0] + c * o[0] - s * o[1],
          room.array_center_m[1] + s * o[0] + c * o[1],
          room.array_center_m[2] + o[2]};
}

ImageSourceSet build_image_set(const RoomSpec& room, int source_idx, const SimOptions& opts) {
  validate(room);
  if (source_idx < 0 || source_idx >= static_cast<int>(room.source_positions_m.size()))
    throw std::invalid_argument("source index out of range");
  const auto& src = room.source_positions_m[source_idx];
  double absorption = opts.absorption_override ? *opts.absorption_override
                                               : wall_absorption(room, opts.absorption);
  double beta = std::sqrt(std::max(0.0, 1.0 - absorption));
  int order = reflection_order(room, opts);

  // Per axis, mirrored positions are 2kL + x (2|k| bounces) and 2kL - x
  // (|2k - 1| bounces); total bounce count is capped by the order.
  struct AxisImage {
    double pos;
    int bounces;
  };
  std::array<std::vector<AxisImage>, 3> axes;
  for (int axis = 0; axis < 3; ++axis) {
    double len = room.dims_m[axis], x = src[axis];
    int kmax = order / 2 + 1;
    for (int k = -kmax; k <= kmax; ++k) {
      int even_bounces = 2 * std::abs(k);
      if (even_bounces <= order) axes[axis].push_back({2.0 * k * len + x, even_bounces});
      int odd_bounces = std::abs(2 * k - 1);
      if (odd_bounces <= order) axes[axis].push_back({2.0 * k * len - x, odd_bounces});
    }
  }

  ImageSourceSet set;
  const auto& center = room.array_center_m;
  for (const auto& ix : axes[0]) {
    for (const auto& iy : axes[1]) {
      if (ix.bounces + iy.bounces > order) continue;
      for (const auto& iz : axes[2]) {
        int bounces = ix.bounces + iy.bounces + iz.bounces;
        if (bounces > order) continue;
        std::array<double, 3> pos{ix.pos, iy.pos, iz.pos};
        set.positions.push_back(pos);
        set.gains.push_back(std::pow(beta, bounces));
        set.max_distance_m = std::max(set.max_distance_m, distance(pos, center));
      }
    }
  }
  return set;
}

int rir_taps(const ImageSourceSet& images, double mic_radius_m, const SimOptions& opts) {
  double max_delay = (images.max_distance_m + mic_radius_m) / kSpeedOfSound;
  return static_cast<int>(std::ceil(max_delay * opts.sample_rate_hz)) + 2 * opts.sinc_half_width + 2;
}

std::vector<double> render_rir(const ImageSourceSet& images, const std::array<double, 3>& mic_pos,
                               int taps, const SimOptions& opts) {
  std::vector<double> h(taps, 0.0);
  const int half = opts.sinc_half_width;
  const double fs = opts.sample_rate_hz;
  const double four_pi = 4.0 * std::numbers::pi;
  for (std::size_t i = 0; i < images.positions.size(); ++i) {
    double d = distance(images.positions[i], mic_pos);
    if (d < 1e-6) d = 1e-6;
    double amp = images.gains[i] / (four_pi * d);
    double tau = d / kSpeedOfSound * fs;
    int lo = std::max(0, static_cast<int>(std::ceil(tau)) - half);
    int hi = std::min(taps - 1, static_cast<int>(std::floor(tau)) + half);
    for (int n = lo; n <= hi; ++n) {
      double t = std::numbers::pi * (n - tau);
      double window = 0.5 * (1.0 + std::cos(t / half));
      double sinc = std::abs(t) < 1e-12 ? 1.0 : std::sin(t) / t;
      h[n] += amp * window * sinc;
    }
  }
  return h;
}

std::vector<std::vector<double>> simulate_rir(const RoomSpec& room, const ArrayGeometry& geom,
                                              double yaw_rad, int source_idx,
                                              const SimOptions& opts) {
  ImageSourceSet images = build_image_set(room, source_idx, opts);
  double radius = 0.0;
  for (const auto& o : geom.mic_offsets_m)
    radius = std::max(radius, std::sqrt(o[0] * o[0] + o[1] * o[1] + o[2] * o[2]));
  int taps = rir_taps(images, radius, opts);
  std::vector<std::vector<double>> out(geom.mic_count());
  for (int m = 0; m < geom.mic_count(); ++m)
    out[m] = render_rir(images, mic_position(room, geom, m, yaw_rad), taps, opts);
  return out;
}

std::vector<double> energy_decay_curve_db(std::span<const double> rir) {
  std::vector<double> edc(rir.size());
  double acc = 0.0;
  for (std::size_t i = rir.size(); i-- > 0;) {
    acc += rir[i] * rir[i];
    edc[i] = acc;
  }
  double total = acc > 0.0 ? acc : 1e-300;
  for (auto& v : edc) v = 10.0 * std::log10(std::max(v / total, 1e-300));
  return edc;
}

double decay_crossing_time_s(std::span<const double> rir, int sample_rate_hz, double threshold_db) {
  auto edc = energy_decay_curve_db(rir);
  for (std::size_t i = 0; i < edc.size(); ++i)
    if (edc[i] <= threshold_db) return static_cast<double>(i) / sample_rate_hz;
  return static_cast<double>(edc.size()) / sample_rate_hz;
}

Waveform time_varying_convolve(const Waveform& source,
                               const std::vector<std::vector<std::vector<double>>>& rirs,
                               int crossfade) {
  if (source.channels() != 1) throw std::invalid_argument("source must be single channel");
  if (rirs.empty()) throw std::invalid_argument("need at least one RIR snapshot");
  const int snapshots = static_cast<int>(rirs.size());
  const int mics = static_cast<int>(rirs[0].size());
  const std::size_t taps = rirs[0][0].size();
  for (const auto& snap : rirs) {
    if (static_cast<int>(snap.size()) != mics) throw std::invalid_argument("ragged RIR snapshot");
    for (const auto& h : snap)
      if (h.size() != taps) throw std::invalid_argument("RIR tap counts differ across snapshots");
  }
  const std::size_t n = source.length();
  if (n < static_cast<std::size_t>(snapshots))
    throw std::invalid_argument("source shorter than one sample per segment");

  const auto& x = source.samples[0];
  std::size_t seg_len = n / snapshots;
  std::size_t fade = std::min(static_cast<std::size_t>(std::max(crossfade, 0)), seg_len);

  Waveform out = Waveform::zeros(mics, n + taps - 1, source.sample_rate_hz);
  for (int r = 0; r < snapshots; ++r) {
    std::size_t begin = r * seg_len;
    std::size_t end = (r == snapshots - 1) ? n : (r + 1) * seg_len;
    // ramps extend fade/2 on both sides of each interior boundary
    std::size_t lo = (r == 0) ? 0 : begin - fade / 2;
    std::size_t hi = (r == snapshots - 1) ? n : std::min(n, end + (fade - fade / 2));
    std::vector<double> seg(hi - lo, 0.0);
    for (std::size_t i = lo; i < hi; ++i) {
      double w = 1.0;
      if (r > 0 && i < begin + (fade - fade / 2)) {
        // rising ramp centered on `begin`
        double pos = static_cast<double>(i) - (static_cast<double>(begin) - fade / 2.0);
        w *= std::clamp(pos / fade, 0.0, 1.0);
      }
      if (r < snapshots - 1 && i + fade / 2 >= end) {
        double pos = (static_cast<double>(end) + (fade - fade / 2.0)) - static_cast<double>(i);
        w *= std::clamp(pos / fade, 0.0, 1.0);
      }
      seg[i - lo] = w * x[i];
    }
    for (int m = 0; m < mics; ++m) {
      std::vector<double> conv = fft::convolve(seg, rirs[r][m]);
      for (std::size_t i = 0; i < conv.size(); ++i) {
        std::size_t pos = lo + i;
        if (pos < out.length()) out.samples[m][pos] += conv[i];
      }
    }
  }
  return out;
}

SceneBundle mix_scene(const Waveform& speech_echoic, const std::vector<Waveform>& noises,
                      double snr_db, int reference_mic) {
  validate(speech_echoic);
  if (noises.empty()) throw std::invalid_argument("mix_scene: no noise sources");
  const int mics = speech_echoic.channels();
  const std::size_t n = speech_echoic.length();

  Waveform noise_sum = Waveform::zeros(mics, n, speech_echoic.sample_rate_hz);
  for (const auto& nz : noises) {
    if (nz.channels() != mics) throw std::invalid_argument("mix_scene: channel count mismatch");
    for (int m = 0; m < mics; ++m)
      for (std::size_t i = 0; i < std::min(n, nz.length()); ++i)
        noise_sum.samples[m][i] += nz.samples[m][i];
  }

  double speech_energy = 0.0, noise_energy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    speech_energy += speech_echoic.samples[reference_mic][i] * speech_echoic.samples[reference_mic][i];
    noise_energy += noise_sum.samples[reference_mic][i] * noise_sum.samples[reference_mic][i];
  }
  if (speech_energy <= 0.0) throw std::invalid_argument("mix_scene: silent speech, SNR undefined");
  if (noise_energy <= 0.0) throw std::invalid_argument("mix_scene: silent noise, SNR undefined");

  double gain = std::isinf(snr_db) && snr_db > 0
                    ? 0.0
                    : std::sqrt(speech_energy / (noise_energy * std::pow(10.0, snr_db / 10.0)));

  SceneBundle scene;
  scene.snr_db = snr_db;
  scene.speech_echoic = speech_echoic;
  scene.noise = std::move(noise_sum);
  for (auto& ch : scene.noise.samples)
    for (auto& v : ch) v *= gain;
  scene.mixture = Waveform::zeros(mics, n, speech_echoic.sample_rate_hz);
  for (int m = 0; m < mics; ++m)
    for (std::size_t i = 0; i < n; ++i)
      scene.mixture.samples[m][i] = scene.speech_echoic.samples[m][i] + scene.noise.samples[m][i];
  return scene;
}

}  // namespace covbeam
