#include "covbeam/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "json.hpp"

using nlohmann::json;

namespace covbeam {

const char* to_string(EnhancerKind k) {
  switch (k) {
    case EnhancerKind::kOracle: return "oracle";
    case EnhancerKind::kEchoicIrm: return "echoic_irm";
    case EnhancerKind::kAnechoicIrm: return "anechoic_irm";
    case EnhancerKind::kLstm: return "lstm";
  }
  return "?";
}

const char* to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::kNone: return "none";
    case EstimatorKind::kFixed: return "fixed";
    case EstimatorKind::kBuffer: return "buffer";
    case EstimatorKind::kRank1: return "rank1";
    case EstimatorKind::kCholesky: return "cholesky";
    case EstimatorKind::kArbitrary: return "arbitrary";
  }
  return "?";
}

const char* to_string(SteeringMode m) {
  switch (m) {
    case SteeringMode::kAuto: return "auto";
    case SteeringMode::kFirstColumn: return "first_column";
    case SteeringMode::kPrincipal: return "principal";
  }
  return "?";
}

std::string EnhancerConfig::label() const {
  if (kind == EnhancerKind::kLstm) return "lstm" + std::to_string(lstm_hidden);
  return to_string(kind);
}

CovVariant EstimatorConfig::variant() const {
  switch (kind) {
    case EstimatorKind::kRank1: return CovVariant::kRank1;
    case EstimatorKind::kCholesky: return CovVariant::kCholesky;
    case EstimatorKind::kArbitrary: return CovVariant::kArbitrary;
    default: throw std::logic_error("variant() on a conventional estimator");
  }
}

std::string EstimatorConfig::label() const {
  std::string base = to_string(kind);
  if (kind == EstimatorKind::kBuffer) base += "(" + std::to_string(buffer_frames) + ")";
  if (learned()) {
    base += "(d" + std::to_string(hidden) + ")";
    if (f_info) base += "+finfo";
  }
  return base;
}

SteeringMode PipelineConfig::resolved_steering() const {
  if (steering != SteeringMode::kAuto) return steering;
  return estimator.learned() ? SteeringMode::kFirstColumn : SteeringMode::kPrincipal;
}

LearnedEstimatorArch PipelineConfig::estimator_arch() const {
  LearnedEstimatorArch arch;
  arch.mics = mics;
  arch.hidden = estimator.hidden;
  arch.layers = estimator.layers;
  arch.variant = estimator.variant();
  arch.f_info = estimator.f_info;
  arch.f_channels = estimator.f_channels;
  arch.rank1_init_eps = estimator.rank1_init_eps;
  return arch;
}

LstmMaskArch PipelineConfig::enhancer_arch() const {
  return {stft.freqs(), enhancer.lstm_hidden, enhancer.lstm_layers};
}

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
}

double snr_or_inf(const json& v) {
  if (v.is_string()) {
    if (v.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
    throw ConfigError("snr value must be a number or \"inf\"");
  }
  return v.get<double>();
}

EnhancerConfig parse_enhancer(const json& j) {
  check_keys(j, {"name", "hidden", "layers", "irm_form"}, "enhancer");
  EnhancerConfig cfg;
  std::string name = j.value("name", "oracle");
  if (name == "oracle") {
    cfg.kind = EnhancerKind::kOracle;
  } else if (name == "echoic_irm") {
    cfg.kind = EnhancerKind::kEchoicIrm;
  } else if (name == "anechoic_irm") {
    cfg.kind = EnhancerKind::kAnechoicIrm;
  } else if (name == "lstm256") {
    cfg.kind = EnhancerKind::kLstm;
    cfg.lstm_hidden = 256;
  } else if (name == "lstm512") {
    cfg.kind = EnhancerKind::kLstm;
    cfg.lstm_hidden = 512;
  } else if (name == "lstm") {
    cfg.kind = EnhancerKind::kLstm;
  } else {
    throw ConfigError("unknown enhancer name: " + name);
  }
  cfg.lstm_hidden = j.value("hidden", cfg.lstm_hidden);
  cfg.lstm_layers = j.value("layers", cfg.lstm_layers);
  std::string form = j.value("irm_form", "magnitude");
  if (form == "magnitude")
    cfg.irm_form = IrmForm::kMagnitude;
  else if (form == "power")
    cfg.irm_form = IrmForm::kPower;
  else
    throw ConfigError("irm_form must be magnitude or power");
  return cfg;
}

EstimatorConfig parse_estimator(const json& j) {
  check_keys(j, {"name", "hidden", "layers", "f_info", "f_channels", "buffer_frames",
                 "rank1_init_eps"},
             "estimator");
  EstimatorConfig cfg;
  std::string name = j.value("name", "arbitrary");
  if (name == "none") cfg.kind = EstimatorKind::kNone;
  else if (name == "fixed") cfg.kind = EstimatorKind::kFixed;
  else if (name == "buffer") cfg.kind = EstimatorKind::kBuffer;
  else if (name == "rank1") cfg.kind = EstimatorKind::kRank1;
  else if (name == "cholesky") cfg.kind = EstimatorKind::kCholesky;
  else if (name == "arbitrary") cfg.kind = EstimatorKind::kArbitrary;
  else throw ConfigError("unknown estimator name: " + name);
  cfg.hidden = j.value("hidden", cfg.hidden);
  cfg.layers = j.value("layers", cfg.layers);
  cfg.f_info = j.value("f_info", cfg.f_info);
  cfg.f_channels = j.value("f_channels", cfg.f_channels);
  cfg.buffer_frames = j.value("buffer_frames", cfg.buffer_frames);
  cfg.rank1_init_eps = j.value("rank1_init_eps", cfg.rank1_init_eps);
  return cfg;
}

PipelineConfig parse_pipeline(const json& j) {
  check_keys(j,
             {"stft", "mics", "enhancer", "estimator", "steering", "manifest", "weights", "dtype",
              "seed"},
             "pipeline");
  PipelineConfig cfg;
  if (j.contains("stft")) {
    check_keys(j["stft"], {"window_len", "hop"}, "stft");
    cfg.stft.window_len = j["stft"].value("window_len", 512);
    cfg.stft.hop = j["stft"].value("hop", 256);
  }
  cfg.mics = j.value("mics", 6);
  if (j.contains("enhancer")) cfg.enhancer = parse_enhancer(j["enhancer"]);
  if (j.contains("estimator")) cfg.estimator = parse_estimator(j["estimator"]);
  if (j.contains("steering")) {
    std::string s = j["steering"].get<std::string>();
    if (s == "auto") cfg.steering = SteeringMode::kAuto;
    else if (s == "first_column") cfg.steering = SteeringMode::kFirstColumn;
    else if (s == "principal") cfg.steering = SteeringMode::kPrincipal;
    else throw ConfigError("unknown steering mode: " + s);
  }
  cfg.manifest = j.value("manifest", "");
  cfg.weights = j.value("weights", "");
  cfg.dtype = j.value("dtype", "float32");
  cfg.seed = j.value("seed", 0ULL);
  validate(cfg);
  return cfg;
}

}  // namespace

void validate(const PipelineConfig& cfg) {
  try {
    validate(cfg.stft);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("stft: ") + e.what());
  }
  if (cfg.mics < 1) throw ConfigError("mics must be >= 1");
  if (cfg.dtype != "float32" && cfg.dtype != "float64")
    throw ConfigError("dtype must be float32 or float64");
  if (cfg.estimator.kind == EstimatorKind::kBuffer && cfg.estimator.buffer_frames < 1)
    throw ConfigError("buffer_frames must be >= 1");
  if (cfg.estimator.learned()) {
    if (cfg.estimator.hidden < 1 || cfg.estimator.layers < 1)
      throw ConfigError("estimator hidden/layers must be positive");
    if (cfg.estimator.f_info && cfg.estimator.f_channels < 1)
      throw ConfigError("f_channels must be positive");
    if (cfg.estimator.rank1_init_eps <= 0) throw ConfigError("rank1_init_eps must be positive");
  }
  if (cfg.enhancer.kind == EnhancerKind::kLstm &&
      (cfg.enhancer.lstm_hidden < 1 || cfg.enhancer.lstm_layers < 1))
    throw ConfigError("enhancer hidden/layers must be positive");
}

void validate(const TrainConfig& cfg) {
  if (cfg.lr < 0) throw ConfigError("lr must be >= 0");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (cfg.max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (cfg.patience < 1 || cfg.patience > cfg.max_epochs)
    throw ConfigError("patience must be in [1, max_epochs]");
  if (!(cfg.clip_norm > 0)) throw ConfigError("clip_norm must be positive (inf disables)");
}

PipelineConfig load_pipeline_config(const std::string& path) {
  return parse_pipeline(load_json(path));
}
PipelineConfig parse_pipeline_config(const std::string& json_text) {
  return parse_pipeline(parse_json(json_text));
}

namespace {

TrainConfig parse_train(const json& j) {
  check_keys(j, {"lr", "batch_size", "max_epochs", "patience", "clip_norm", "joint_enhancer",
                 "seed"},
             "train");
  TrainConfig cfg;
  cfg.lr = j.value("lr", cfg.lr);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.max_epochs = j.value("max_epochs", cfg.max_epochs);
  cfg.patience = j.value("patience", cfg.patience);
  if (j.contains("clip_norm")) {
    if (j["clip_norm"].is_string() && j["clip_norm"].get<std::string>() == "inf")
      cfg.clip_norm = std::numeric_limits<double>::infinity();
    else
      cfg.clip_norm = j["clip_norm"].get<double>();
  }
  cfg.joint_enhancer = j.value("joint_enhancer", false);
  cfg.seed = j.value("seed", 1ULL);
  validate(cfg);
  return cfg;
}

SceneGenConfig parse_scene(const json& j, std::array<double, 3>* split_fractions) {
  check_keys(j,
             {"sample_rate_hz", "duration_s", "mics", "array_diameter_m", "dynamic", "rotations",
              "room_dim_range", "t60_range", "snr_range", "noise_sources", "markov", "max_order",
              "crossfade", "target_rms", "speech_dir", "noise_dir", "splits"},
             "scene");
  SceneGenConfig cfg;
  cfg.sample_rate_hz = j.value("sample_rate_hz", cfg.sample_rate_hz);
  cfg.duration_s = j.value("duration_s", cfg.duration_s);
  cfg.mics = j.value("mics", cfg.mics);
  cfg.array_diameter_m = j.value("array_diameter_m", cfg.array_diameter_m);
  cfg.dynamic = j.value("dynamic", cfg.dynamic);
  cfg.rotations = j.value("rotations", cfg.rotations);
  if (j.contains("room_dim_range")) cfg.room_dim_range = j["room_dim_range"].get<std::array<double, 2>>();
  if (j.contains("t60_range")) cfg.t60_range = j["t60_range"].get<std::array<double, 2>>();
  if (j.contains("snr_range")) {
    cfg.snr_range[0] = snr_or_inf(j["snr_range"][0]);
    cfg.snr_range[1] = snr_or_inf(j["snr_range"][1]);
  }
  if (j.contains("noise_sources")) cfg.noise_sources = j["noise_sources"].get<std::array<int, 2>>();
  if (j.contains("markov")) {
    check_keys(j["markov"], {"p_stay", "speed_range", "step_s"}, "markov");
    double p_stay = j["markov"].value("p_stay", 0.95);
    if (p_stay < 0.0 || p_stay > 1.0) throw ConfigError("markov p_stay must be in [0, 1]");
    double p_move = (1.0 - p_stay) / 2.0;
    cfg.markov.transition = {{{p_stay, p_move, p_move},
                              {1.0 - p_stay, p_stay, 0.0},
                              {1.0 - p_stay, 0.0, p_stay}}};
    if (j["markov"].contains("speed_range")) {
      auto r = j["markov"]["speed_range"].get<std::array<double, 2>>();
      cfg.markov.speed_lo_rad_s = r[0];
      cfg.markov.speed_hi_rad_s = r[1];
    }
    cfg.markov.step_s = j["markov"].value("step_s", 0.02);
  }
  cfg.max_order = j.value("max_order", cfg.max_order);
  cfg.crossfade = j.value("crossfade", cfg.crossfade);
  cfg.target_rms = j.value("target_rms", cfg.target_rms);
  cfg.speech_dir = j.value("speech_dir", "");
  cfg.noise_dir = j.value("noise_dir", "");
  if (split_fractions) {
    *split_fractions = {0.8, 0.1, 0.1};
    if (j.contains("splits")) {
      check_keys(j["splits"], {"train", "val", "test"}, "splits");
      (*split_fractions)[0] = j["splits"].value("train", 0.8);
      (*split_fractions)[1] = j["splits"].value("val", 0.1);
      (*split_fractions)[2] = j["splits"].value("test", 0.1);
    }
  }
  if (cfg.duration_s <= 0 || cfg.mics < 1 || cfg.rotations < 1)
    throw ConfigError("scene config: duration_s, mics, rotations must be positive");
  if (cfg.noise_sources[0] < 1 || cfg.noise_sources[1] < cfg.noise_sources[0])
    throw ConfigError("scene config: bad noise_sources range");
  try {
    validate(cfg.markov);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("markov: ") + e.what());
  }
  return cfg;
}

}  // namespace

TrainConfig load_train_config(const std::string& path) { return parse_train(load_json(path)); }
TrainConfig parse_train_config(const std::string& json_text) {
  return parse_train(parse_json(json_text));
}
SceneGenConfig load_scene_config(const std::string& path) {
  return parse_scene(load_json(path), nullptr);
}
SceneGenConfig parse_scene_config(const std::string& json_text,
                                  std::array<double, 3>* split_fractions) {
  return parse_scene(parse_json(json_text), split_fractions);
}

std::string pipeline_config_to_json(const PipelineConfig& cfg) {
  json j;
  j["stft"] = {{"window_len", cfg.stft.window_len}, {"hop", cfg.stft.hop}};
  j["mics"] = cfg.mics;
  j["enhancer"] = {{"name", to_string(cfg.enhancer.kind)},
                   {"hidden", cfg.enhancer.lstm_hidden},
                   {"layers", cfg.enhancer.lstm_layers},
                   {"irm_form", cfg.enhancer.irm_form == IrmForm::kMagnitude ? "magnitude" : "power"}};
  j["estimator"] = {{"name", to_string(cfg.estimator.kind)},
                    {"hidden", cfg.estimator.hidden},
                    {"layers", cfg.estimator.layers},
                    {"f_info", cfg.estimator.f_info},
                    {"f_channels", cfg.estimator.f_channels},
                    {"buffer_frames", cfg.estimator.buffer_frames},
                    {"rank1_init_eps", cfg.estimator.rank1_init_eps}};
  j["steering"] = to_string(cfg.steering);
  j["manifest"] = cfg.manifest;
  j["weights"] = cfg.weights;
  j["dtype"] = cfg.dtype;
  j["seed"] = cfg.seed;
  return j.dump();
}

uint64_t config_hash(const PipelineConfig& cfg) {
  std::string s = pipeline_config_to_json(cfg);
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace covbeam
