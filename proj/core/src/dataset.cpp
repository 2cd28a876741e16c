#include "covbeam/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "covbeam/parallel.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace covbeam {

Waveform synth_speech(std::size_t length, int sample_rate_hz, Rng& rng) {
  Waveform w = Waveform::zeros(1, length, sample_rate_hz);
  auto& x = w.samples[0];
  double f0 = rng.uniform(100.0, 220.0);
  double vibrato_hz = rng.uniform(3.0, 6.0);
  double syllable_hz = rng.uniform(2.0, 4.0);
  double syllable_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  int harmonics = 8;
  std::vector<double> amps(harmonics);
  for (int k = 0; k < harmonics; ++k) amps[k] = rng.uniform(0.4, 1.0) / (k + 1);
  double phase = 0.0;
  for (std::size_t n = 0; n < length; ++n) {
    double t = static_cast<double>(n) / sample_rate_hz;
    double inst_f0 = f0 * (1.0 + 0.03 * std::sin(2.0 * std::numbers::pi * vibrato_hz * t));
    phase += 2.0 * std::numbers::pi * inst_f0 / sample_rate_hz;
    double syll = std::sin(2.0 * std::numbers::pi * syllable_hz * t + syllable_phase);
    double env = syll > -0.3 ? 0.5 * (1.0 + std::tanh(4.0 * syll)) : 0.0;  // gated syllables
    double v = 0.0;
    for (int k = 0; k < harmonics; ++k) v += amps[k] * std::sin((k + 1) * phase);
    x[n] = env * (v + 0.02 * rng.normal());
  }
  double rms = 0.0;
  for (double v : x) rms += v * v;
  rms = std::sqrt(rms / length);
  if (rms > 0)
    for (auto& v : x) v *= 0.1 / rms;
  return w;
}

Waveform synth_noise(std::size_t length, int sample_rate_hz, Rng& rng) {
  Waveform w = Waveform::zeros(1, length, sample_rate_hz);
  auto& x = w.samples[0];
  double pole = rng.uniform(0.8, 0.98);
  double am_hz = rng.uniform(0.3, 2.0);
  double am_depth = rng.uniform(0.0, 0.5);
  double state = 0.0;
  for (std::size_t n = 0; n < length; ++n) {
    state = pole * state + (1.0 - pole) * rng.normal();
    double t = static_cast<double>(n) / sample_rate_hz;
    double am = 1.0 + am_depth * std::sin(2.0 * std::numbers::pi * am_hz * t);
    x[n] = am * state;
  }
  double rms = 0.0;
  for (double v : x) rms += v * v;
  rms = std::sqrt(rms / length);
  if (rms > 0)
    for (auto& v : x) v *= 0.1 / rms;
  return w;
}

namespace {

Waveform fit_length(const Waveform& src, std::size_t length) {
  Waveform out = Waveform::zeros(1, length, src.sample_rate_hz);
  if (src.length() == 0) return out;
  for (std::size_t n = 0; n < length; ++n) out.samples[0][n] = src.samples[0][n % src.length()];
  return out;
}

std::array<double, 3> sample_point_inside(Rng& rng, const std::array<double, 3>& dims,
                                          double margin) {
  return {rng.uniform(margin, dims[0] - margin), rng.uniform(margin, dims[1] - margin),
          rng.uniform(margin, dims[2] - margin)};
}

json room_to_json(const RoomSpec& room) {
  json j;
  j["dims_m"] = room.dims_m;
  j["t60_s"] = room.t60_s;
  j["array_center_m"] = room.array_center_m;
  j["sources_m"] = json::array();
  for (const auto& s : room.source_positions_m) j["sources_m"].push_back(s);
  return j;
}

RoomSpec room_from_json(const json& j) {
  RoomSpec room;
  room.dims_m = j.at("dims_m").get<std::array<double, 3>>();
  room.t60_s = j.at("t60_s").get<double>();
  room.array_center_m = j.at("array_center_m").get<std::array<double, 3>>();
  room.source_positions_m.clear();
  for (const auto& s : j.at("sources_m")) room.source_positions_m.push_back(s.get<std::array<double, 3>>());
  return room;
}

}  // namespace

SceneBundle render_scene(const SceneGenConfig& cfg, const Waveform& speech_src,
                         const std::vector<Waveform>& noise_srcs, uint64_t seed,
                         RoomSpec* room_out) {
  Rng rng = Rng(seed).fork(0xA11CE);
  const std::size_t n = static_cast<std::size_t>(cfg.duration_s * cfg.sample_rate_hz);

  RoomSpec room;
  for (int i = 0; i < 3; ++i)
    room.dims_m[i] = rng.uniform(cfg.room_dim_range[0], cfg.room_dim_range[1]);
  room.t60_s = rng.uniform(cfg.t60_range[0], cfg.t60_range[1]);
  double wall_margin = 0.8;
  room.array_center_m = sample_point_inside(rng, room.dims_m, wall_margin);
  int n_sources = 1 + static_cast<int>(noise_srcs.size());
  for (int s = 0; s < n_sources; ++s) {
    std::array<double, 3> pos{};
    for (int attempt = 0; attempt < 64; ++attempt) {
      pos = sample_point_inside(rng, room.dims_m, 0.5);
      double dx = pos[0] - room.array_center_m[0];
      double dy = pos[1] - room.array_center_m[1];
      double dz = pos[2] - room.array_center_m[2];
      if (std::sqrt(dx * dx + dy * dy + dz * dz) > 0.5) break;
    }
    room.source_positions_m.push_back(pos);
  }
  if (room_out) *room_out = room;

  ArrayGeometry geom = ArrayGeometry::circular(cfg.mics, cfg.array_diameter_m);
  SimOptions sim;
  sim.sample_rate_hz = cfg.sample_rate_hz;
  sim.max_order = cfg.max_order;

  double initial_yaw = rng.uniform(0.0, 2.0 * std::numbers::pi);
  PoseTrajectory traj;
  if (cfg.dynamic) {
    traj = sample_trajectory(cfg.markov, cfg.duration_s, cfg.rotations, rng.fork(1).seed());
    for (auto& y : traj.yaw_rad) y += initial_yaw;
  } else {
    traj.yaw_rad = {initial_yaw};
  }

  auto render_source = [&](const Waveform& src, int source_idx) {
    ImageSourceSet images = build_image_set(room, source_idx, sim);
    int taps = rir_taps(images, cfg.array_diameter_m / 2.0, sim);
    std::vector<std::vector<std::vector<double>>> rirs(traj.snapshots());
    for (int r = 0; r < traj.snapshots(); ++r) {
      rirs[r].resize(cfg.mics);
      for (int m = 0; m < cfg.mics; ++m)
        rirs[r][m] = render_rir(images, mic_position(room, geom, m, traj.yaw_rad[r]), taps, sim);
    }
    Waveform rendered = time_varying_convolve(src, rirs, cfg.crossfade);
    for (auto& ch : rendered.samples) ch.resize(n);
    return rendered;
  };

  Waveform speech = fit_length(speech_src, n);
  Waveform speech_echoic = render_source(speech, 0);
  std::vector<Waveform> noises_echoic;
  for (std::size_t i = 0; i < noise_srcs.size(); ++i)
    noises_echoic.push_back(render_source(fit_length(noise_srcs[i], n), 1 + static_cast<int>(i)));

  double snr = rng.uniform(cfg.snr_range[0], cfg.snr_range[1]);
  SceneBundle scene = mix_scene(speech_echoic, noises_echoic, snr);
  scene.trajectory = traj;

  // anechoic reference: direct-path delay and spreading to mic 0 at the
  // initial pose
  auto mic0 = mic_position(room, geom, 0, traj.yaw_rad[0]);
  double dx = mic0[0] - room.source_positions_m[0][0];
  double dy = mic0[1] - room.source_positions_m[0][1];
  double dz = mic0[2] - room.source_positions_m[0][2];
  double dist = std::sqrt(dx * dx + dy * dy + dz * dz);
  int delay = static_cast<int>(std::round(dist / kSpeedOfSound * cfg.sample_rate_hz));
  double gain = 1.0 / (4.0 * std::numbers::pi * dist);
  scene.speech_anechoic = Waveform::zeros(1, n, cfg.sample_rate_hz);
  for (std::size_t i = delay; i < n; ++i)
    scene.speech_anechoic.samples[0][i] = gain * speech.samples[0][i - delay];

  if (cfg.target_rms > 0.0) {
    double rms = 0.0;
    for (double v : scene.mixture.samples[0]) rms += v * v;
    rms = std::sqrt(rms / n);
    if (rms > 0.0) {
      double g = cfg.target_rms / rms;
      for (auto* w : {&scene.speech_echoic, &scene.noise, &scene.speech_anechoic})
        for (auto& ch : w->samples)
          for (auto& v : ch) v *= g;
      // rebuild the mixture as the exact sum of the scaled stems
      for (int m = 0; m < scene.mixture.channels(); ++m)
        for (std::size_t i = 0; i < n; ++i)
          scene.mixture.samples[m][i] =
              scene.speech_echoic.samples[m][i] + scene.noise.samples[m][i];
    }
  }
  return scene;
}

std::vector<const SceneRecord*> Manifest::split(const std::string& name) const {
  std::vector<const SceneRecord*> out;
  for (const auto& s : scenes)
    if (s.split == name) out.push_back(&s);
  return out;
}

void write_manifest(const std::string& path, const Manifest& manifest) {
  json j;
  j["version"] = 1;
  j["sample_rate_hz"] = manifest.sample_rate_hz;
  j["scenes"] = json::array();
  for (const auto& s : manifest.scenes) {
    json e;
    e["id"] = s.id;
    e["split"] = s.split;
    e["mixture"] = s.mixture;
    e["speech_echoic"] = s.speech_echoic;
    e["speech_anechoic"] = s.speech_anechoic;
    e["noise"] = s.noise;
    e["trajectory"] = s.trajectory;
    e["room"] = room_to_json(s.room);
    e["snr_db"] = s.snr_db;
    e["seed"] = s.seed;
    j["scenes"].push_back(std::move(e));
  }
  std::ofstream of(path, std::ios::trunc);
  if (!of) throw std::runtime_error("cannot write manifest: " + path);
  of << j.dump(2) << "\n";
}

Manifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest: " + path);
  json j = json::parse(in);
  Manifest manifest;
  manifest.sample_rate_hz = j.at("sample_rate_hz").get<int>();
  for (const auto& e : j.at("scenes")) {
    SceneRecord s;
    s.id = e.at("id").get<std::string>();
    s.split = e.at("split").get<std::string>();
    s.mixture = e.at("mixture").get<std::string>();
    s.speech_echoic = e.at("speech_echoic").get<std::string>();
    s.speech_anechoic = e.at("speech_anechoic").get<std::string>();
    s.noise = e.at("noise").get<std::string>();
    s.trajectory = e.at("trajectory").get<std::string>();
    s.room = room_from_json(e.at("room"));
    s.snr_db = e.at("snr_db").get<double>();
    s.seed = e.at("seed").get<uint64_t>();
    manifest.scenes.push_back(std::move(s));
  }
  return manifest;
}

namespace {

std::vector<std::string> list_wavs(const std::string& dir) {
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".wav")
      files.push_back(entry.path().string());
  std::sort(files.begin(), files.end());
  return files;
}

// contiguous partition by fraction; remainders go to the earlier splits
std::array<std::pair<std::size_t, std::size_t>, 3> partition_ranges(
    std::size_t n, const std::array<double, 3>& fractions) {
  std::array<std::size_t, 3> counts{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    counts[i] = static_cast<std::size_t>(std::floor(fractions[i] * n));
    assigned += counts[i];
  }
  for (int i = 0; assigned < n; i = (i + 1) % 3, ++assigned) counts[i] += 1;
  std::array<std::pair<std::size_t, std::size_t>, 3> ranges;
  std::size_t off = 0;
  for (int i = 0; i < 3; ++i) {
    ranges[i] = {off, off + counts[i]};
    off += counts[i];
  }
  return ranges;
}

}  // namespace

Manifest generate_dataset(const SceneGenConfig& cfg, int n_scenes,
                          const std::array<double, 3>& split_fractions, uint64_t seed,
                          const std::string& out_dir) {
  double fsum = split_fractions[0] + split_fractions[1] + split_fractions[2];
  if (std::abs(fsum - 1.0) > 1e-9) throw std::invalid_argument("split fractions must sum to 1");
  fs::create_directories(out_dir);

  const std::array<std::string, 3> split_names{"train", "val", "test"};
  auto scene_ranges = partition_ranges(static_cast<std::size_t>(n_scenes), split_fractions);

  // source pools per split, disjoint by construction
  bool from_files = !cfg.speech_dir.empty();
  std::vector<std::string> speech_files, noise_files;
  std::array<std::pair<std::size_t, std::size_t>, 3> speech_ranges{}, noise_ranges{};
  if (from_files) {
    speech_files = list_wavs(cfg.speech_dir);
    noise_files = list_wavs(cfg.noise_dir);
    if (speech_files.empty() || noise_files.empty())
      throw std::runtime_error("insufficient source audio in speech/noise directories");
    for (int i = 0; i < 3; ++i) {
      bool needed = scene_ranges[i].second > scene_ranges[i].first;
      if (needed && (std::floor(split_fractions[i] * speech_files.size()) < 1.0 ||
                     std::floor(split_fractions[i] * noise_files.size()) < 1.0)) {
        if (speech_files.size() < 3 || noise_files.size() < 3)
          throw std::runtime_error("insufficient source audio to keep splits disjoint");
      }
    }
    speech_ranges = partition_ranges(speech_files.size(), split_fractions);
    noise_ranges = partition_ranges(noise_files.size(), split_fractions);
  }

  Manifest manifest;
  manifest.sample_rate_hz = cfg.sample_rate_hz;
  manifest.scenes.resize(n_scenes);

  Rng root(seed);
  const std::size_t src_len = static_cast<std::size_t>(cfg.duration_s * cfg.sample_rate_hz);

  parallel_for(static_cast<std::size_t>(n_scenes), [&](std::size_t idx) {
    int split_idx = 0;
    for (int i = 0; i < 3; ++i)
      if (idx >= scene_ranges[i].first && idx < scene_ranges[i].second) split_idx = i;
    Rng scene_rng = root.fork(idx + 1);

    int n_noise = scene_rng.uniform_int(cfg.noise_sources[0], cfg.noise_sources[1]);
    Waveform speech_src;
    std::vector<Waveform> noise_srcs;
    if (from_files) {
      auto [slo, shi] = speech_ranges[split_idx];
      auto [nlo, nhi] = noise_ranges[split_idx];
      if (shi <= slo || nhi <= nlo)
        throw std::runtime_error("split '" + split_names[split_idx] + "' has no source files");
      speech_src = read_wav(speech_files[slo + scene_rng.next_u64() % (shi - slo)]);
      for (int k = 0; k < n_noise; ++k)
        noise_srcs.push_back(read_wav(noise_files[nlo + scene_rng.next_u64() % (nhi - nlo)]));
    } else {
      Rng synth = scene_rng.fork(7);
      speech_src = synth_speech(src_len, cfg.sample_rate_hz, synth);
      for (int k = 0; k < n_noise; ++k) noise_srcs.push_back(synth_noise(src_len, cfg.sample_rate_hz, synth));
    }

    SceneRecord& rec = manifest.scenes[idx];
    char id[32];
    std::snprintf(id, sizeof(id), "scene_%06zu", idx);
    rec.id = id;
    rec.split = split_names[split_idx];
    rec.seed = scene_rng.seed();
    rec.snr_db = 0.0;

    SceneBundle scene = render_scene(cfg, speech_src, noise_srcs, rec.seed, &rec.room);
    rec.snr_db = scene.snr_db;

    fs::path dir = fs::path(out_dir) / rec.id;
    fs::create_directories(dir);
    rec.mixture = rec.id + "/mixture.wav";
    rec.speech_echoic = rec.id + "/speech_echoic.wav";
    rec.speech_anechoic = rec.id + "/speech_anechoic.wav";
    rec.noise = rec.id + "/noise.wav";
    rec.trajectory = rec.id + "/trajectory.json";
    write_wav((fs::path(out_dir) / rec.mixture).string(), scene.mixture);
    write_wav((fs::path(out_dir) / rec.speech_echoic).string(), scene.speech_echoic);
    write_wav((fs::path(out_dir) / rec.speech_anechoic).string(), scene.speech_anechoic);
    write_wav((fs::path(out_dir) / rec.noise).string(), scene.noise);
    json traj;
    traj["yaw_rad"] = scene.trajectory.yaw_rad;
    std::ofstream tf((fs::path(out_dir) / rec.trajectory).string(), std::ios::trunc);
    tf << traj.dump() << "\n";
  });

  write_manifest((fs::path(out_dir) / "manifest.json").string(), manifest);
  return manifest;
}

SceneBundle load_scene(const SceneRecord& record, const std::string& base_dir) {
  SceneBundle scene;
  scene.speech_echoic = read_wav((fs::path(base_dir) / record.speech_echoic).string());
  scene.speech_anechoic = read_wav((fs::path(base_dir) / record.speech_anechoic).string());
  scene.noise = read_wav((fs::path(base_dir) / record.noise).string());
  // mixture.wav is the float32 listening copy; the bundle mixture is rebuilt
  // from the stems so mixture == speech_echoic + noise holds sample for
  // sample after the round trip
  scene.mixture = scene.speech_echoic;
  for (int m = 0; m < scene.mixture.channels(); ++m)
    for (std::size_t i = 0; i < scene.mixture.length(); ++i)
      scene.mixture.samples[m][i] += scene.noise.samples[m][i];
  scene.snr_db = record.snr_db;
  std::ifstream tf((fs::path(base_dir) / record.trajectory).string());
  if (!tf) throw std::runtime_error("cannot open trajectory: " + record.trajectory);
  json traj = json::parse(tf);
  scene.trajectory.yaw_rad = traj.at("yaw_rad").get<std::vector<double>>();
  return scene;
}

}  // namespace covbeam
