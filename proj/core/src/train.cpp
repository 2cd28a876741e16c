#include "covbeam/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "covbeam/flops.hpp"
#include "covbeam/parallel.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace covbeam {

DatasetView manifest_split(const std::string& manifest_path, const std::string& split) {
  Manifest manifest = read_manifest(manifest_path);
  DatasetView view;
  view.base_dir = fs::path(manifest_path).parent_path().string();
  for (const auto& rec : manifest.scenes)
    if (rec.split == split) view.records.push_back(rec);
  return view;
}

namespace {

template <typename T>
double validate_model(const DatasetView& val_set, const PipelineConfig& cfg,
                      const PipelineModel<T>& model) {
  if (val_set.records.empty()) return 0.0;
  std::vector<double> scores(val_set.records.size(), 0.0);
  parallel_for(val_set.records.size(), [&](std::size_t i) {
    SceneBundle scene = load_scene(val_set.records[i], val_set.base_dir);
    scores[i] = run_scene(scene, cfg, model).si_sdr_db;
  });
  return std::accumulate(scores.begin(), scores.end(), 0.0) / scores.size();
}

void write_arch_sidecar(const std::string& path, const PipelineConfig& cfg) {
  json j;
  j["format"] = "covbeam-weights";
  j["dtype"] = cfg.dtype;
  j["mics"] = cfg.mics;
  j["estimator"] = {{"name", to_string(cfg.estimator.kind)},
                    {"hidden", cfg.estimator.hidden},
                    {"layers", cfg.estimator.layers},
                    {"f_info", cfg.estimator.f_info},
                    {"f_channels", cfg.estimator.f_channels}};
  j["enhancer"] = {{"name", to_string(cfg.enhancer.kind)},
                   {"hidden", cfg.enhancer.lstm_hidden},
                   {"layers", cfg.enhancer.lstm_layers}};
  j["stft"] = {{"window_len", cfg.stft.window_len}, {"hop", cfg.stft.hop}};
  std::ofstream of(path, std::ios::trunc);
  of << j.dump(2) << "\n";
}

template <typename T>
TrainResult train_impl(const DatasetView& train_set, const DatasetView& val_set,
                       const TrainConfig& tcfg, const PipelineConfig& pcfg,
                       const std::string& out_prefix, const std::string& resume_prefix) {
  if (train_set.records.empty()) throw ConfigError("training split is empty");
  bool enhancer_only = pcfg.estimator.kind == EstimatorKind::kNone;
  if (!pcfg.estimator.learned() && !enhancer_only)
    throw ConfigError("estimator '" + std::string(to_string(pcfg.estimator.kind)) +
                      "' has nothing to train");

  PipelineModel<T> model = build_model<T>(pcfg);
  bool train_enhancer = model.has_enhancer && (tcfg.joint_enhancer || enhancer_only);
  if (enhancer_only && !model.has_enhancer)
    throw ConfigError("enhancer-only training needs the lstm enhancer");

  // freeze what is not being trained
  for (const auto& name : model.params.names()) {
    bool is_enh = name.rfind("enh.", 0) == 0;
    model.params.at(name).set_requires_grad(is_enh ? train_enhancer : true);
  }

  ad::AdamState<T> adam = ad::AdamState<T>::init(model.params);
  if (!resume_prefix.empty()) {
    load_params(resume_prefix + ".cbw", model.params);
    load_adam_state(resume_prefix + ".adam", adam, model.params);
  }
  ad::AdamConfig adam_cfg;
  adam_cfg.lr = tcfg.lr;
  adam_cfg.clip_norm = tcfg.clip_norm;

  TrainResult result;
  result.weights_path = out_prefix + ".cbw";
  result.optimizer_path = out_prefix + ".adam";
  result.log_path = out_prefix + ".log.jsonl";
  fs::create_directories(fs::path(out_prefix).parent_path().empty()
                             ? "."
                             : fs::path(out_prefix).parent_path().string());
  std::ofstream log(result.log_path, std::ios::trunc);
  write_arch_sidecar(out_prefix + ".json", pcfg);

  Rng shuffle_rng(tcfg.seed);
  double best = -1e30;
  int best_epoch = 0;

  for (int epoch = 1; epoch <= tcfg.max_epochs; ++epoch) {
    std::vector<std::size_t> order(train_set.records.size());
    std::iota(order.begin(), order.end(), 0);
    Rng epoch_rng = shuffle_rng.fork(epoch);
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[epoch_rng.next_u64() % i]);

    double epoch_loss = 0.0;
    std::size_t step = 0;
    for (std::size_t start = 0; start < order.size(); start += tcfg.batch_size) {
      std::size_t end = std::min(order.size(), start + tcfg.batch_size);
      model.params.zero_grads();
      double batch_loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        SceneBundle scene = load_scene(train_set.records[order[i]], train_set.base_dir);
        ad::Tensor<T> loss = scene_loss_graph(scene, pcfg, model, train_enhancer);
        ad::Tensor<T> scaled = ad::scale(loss, static_cast<T>(1.0 / (end - start)));
        if (!std::isfinite(static_cast<double>(loss.value())))
          throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + " step " +
                             std::to_string(step) + " scene " +
                             train_set.records[order[i]].id);
        ad::backward(scaled);
        batch_loss += static_cast<double>(loss.value()) / (end - start);
      }
      try {
        ad::adam_step(model.params, adam, adam_cfg);
      } catch (const std::runtime_error& e) {
        throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                           " step " + std::to_string(step));
      }
      epoch_loss += batch_loss * (end - start);
      step += 1;
    }
    epoch_loss /= order.size();

    double val = validate_model(val_set, pcfg, model);
    result.history.push_back({epoch, epoch_loss, val});
    json line;
    line["epoch"] = epoch;
    line["train_loss"] = epoch_loss;
    line["val_si_sdr"] = val;
    log << line.dump() << "\n" << std::flush;

    if (val > best) {
      best = val;
      best_epoch = epoch;
      save_params(result.weights_path, model.params);
      save_adam_state(result.optimizer_path, adam, model.params);
    }
    if (epoch - best_epoch >= tcfg.patience) break;
  }

  result.best_epoch = best_epoch;
  result.best_val_si_sdr = best;
  return result;
}

}  // namespace

TrainResult train(const DatasetView& train_set, const DatasetView& val_set,
                  const TrainConfig& tcfg, const PipelineConfig& pcfg,
                  const std::string& out_prefix, const std::string& resume_prefix) {
  if (pcfg.dtype == "float64")
    return train_impl<double>(train_set, val_set, tcfg, pcfg, out_prefix, resume_prefix);
  return train_impl<float>(train_set, val_set, tcfg, pcfg, out_prefix, resume_prefix);
}

namespace {

EvalRow run_row(const DatasetView& test_set, const PipelineConfig& cfg) {
  EvalRow row;
  row.enhancer = cfg.enhancer.label();
  row.estimator = cfg.estimator.label();
  row.label = row.enhancer + "+" + row.estimator;
  row.config_hash = config_hash(cfg);
  uint64_t hash_before = cfg.weights.empty() ? 0 : file_hash(cfg.weights);
  try {
    Pipeline pipeline(cfg);
    std::vector<double> scores(test_set.records.size(), 0.0);
    std::vector<double> unproc(test_set.records.size(), 0.0);
    std::vector<std::string> ids(test_set.records.size());
    parallel_for(test_set.records.size(), [&](std::size_t i) {
      SceneBundle scene = load_scene(test_set.records[i], test_set.base_dir);
      PipelineResult r = pipeline.run(scene);
      scores[i] = r.si_sdr_db;
      unproc[i] = r.unprocessed_si_sdr_db;
      ids[i] = test_set.records[i].id;
    });
    row.scenes = static_cast<int>(scores.size());
    if (row.scenes > 0) {
      row.mean_si_sdr = std::accumulate(scores.begin(), scores.end(), 0.0) / row.scenes;
      row.mean_unprocessed = std::accumulate(unproc.begin(), unproc.end(), 0.0) / row.scenes;
      for (std::size_t i = 0; i < scores.size(); ++i) row.per_scene.push_back({ids[i], scores[i]});
    }
  } catch (const std::exception& e) {
    row.error = e.what();
  }
  if (!cfg.weights.empty() && file_hash(cfg.weights) != hash_before)
    throw NumericError("weights file changed during evaluation: " + cfg.weights);
  return row;
}

}  // namespace

std::vector<EvalRow> evaluate(const DatasetView& test_set,
                              const std::vector<PipelineConfig>& rows) {
  std::vector<EvalRow> out;
  if (test_set.records.empty()) return out;  // header-only tables downstream

  EvalRow unprocessed;
  unprocessed.label = "unprocessed";
  unprocessed.enhancer = "none";
  unprocessed.estimator = "none";
  unprocessed.scenes = static_cast<int>(test_set.records.size());
  if (!test_set.records.empty()) {
    std::vector<double> scores(test_set.records.size(), 0.0);
    std::vector<std::string> ids(test_set.records.size());
    parallel_for(test_set.records.size(), [&](std::size_t i) {
      SceneBundle scene = load_scene(test_set.records[i], test_set.base_dir);
      std::size_t n = std::min(scene.mixture.length(), scene.speech_anechoic.length());
      scores[i] = si_sdr_db(std::span(scene.mixture.samples[0]).subspan(0, n),
                            std::span(scene.speech_anechoic.samples[0]).subspan(0, n));
      ids[i] = test_set.records[i].id;
    });
    unprocessed.mean_si_sdr =
        std::accumulate(scores.begin(), scores.end(), 0.0) / scores.size();
    unprocessed.mean_unprocessed = unprocessed.mean_si_sdr;
    for (std::size_t i = 0; i < scores.size(); ++i)
      unprocessed.per_scene.push_back({ids[i], scores[i]});
  }
  out.push_back(std::move(unprocessed));

  for (const auto& cfg : rows) out.push_back(run_row(test_set, cfg));
  return out;
}

void write_eval_csv(const std::string& path, const std::vector<EvalRow>& rows) {
  std::ofstream of(path, std::ios::trunc);
  if (!of) throw std::runtime_error("cannot write csv: " + path);
  of << "label,enhancer,estimator,scenes,mean_si_sdr_db,config_hash,error\n";
  for (const auto& r : rows) {
    of << r.label << "," << r.enhancer << "," << r.estimator << "," << r.scenes << ",";
    if (r.error.empty())
      of << r.mean_si_sdr;
    of << "," << std::hex << r.config_hash << std::dec << ",\"" << r.error << "\"\n";
  }
}

void write_eval_json(const std::string& path, const std::vector<EvalRow>& rows) {
  json j = json::array();
  for (const auto& r : rows) {
    json e;
    e["label"] = r.label;
    e["enhancer"] = r.enhancer;
    e["estimator"] = r.estimator;
    e["scenes"] = r.scenes;
    e["mean_si_sdr_db"] = r.mean_si_sdr;
    e["mean_unprocessed_si_sdr_db"] = r.mean_unprocessed;
    char hash[32];
    std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(r.config_hash));
    e["config_hash"] = hash;
    e["error"] = r.error;
    json per = json::array();
    for (const auto& [id, score] : r.per_scene) per.push_back({{"scene_id", id}, {"si_sdr_db", score}});
    e["per_scene"] = per;
    j.push_back(std::move(e));
  }
  std::ofstream of(path, std::ios::trunc);
  if (!of) throw std::runtime_error("cannot write json: " + path);
  of << j.dump(2) << "\n";
}

SceneBundle kill_microphone(const SceneBundle& scene, int mic, uint64_t seed) {
  SceneBundle out = scene;
  auto& ch = out.mixture.samples.at(mic);
  double rms = 0.0;
  for (double v : ch) rms += v * v;
  rms = std::sqrt(rms / std::max<std::size_t>(1, ch.size()));
  Rng rng(seed);
  for (auto& v : ch) v = rms * rng.normal();
  return out;
}

std::vector<EvalRow> adapt_experiments(const DatasetView& test_set, const PipelineConfig& base) {
  if (!base.estimator.learned())
    throw ConfigError("adapt experiments need a trained learned estimator");
  if (base.weights.empty()) throw ConfigError("adapt experiments need a weights file");
  uint64_t hash_before = file_hash(base.weights);

  struct Variant {
    std::string name;
    PipelineConfig cfg;
    bool dead_mic = false;
  };
  std::vector<Variant> variants;
  variants.push_back({"no_modification", base, false});
  {
    PipelineConfig c = base;
    c.stft.window_len *= 2;
    variants.push_back({"double_window", c, false});
  }
  {
    PipelineConfig c = base;
    c.stft.hop /= 2;
    variants.push_back({"halve_hop", c, false});
  }
  {
    PipelineConfig c = base;
    c.stft.window_len *= 2;
    c.stft.hop *= 2;
    variants.push_back({"double_window_and_hop", c, false});
  }
  {
    PipelineConfig c = base;
    c.stft.window_len /= 2;
    c.stft.hop /= 2;
    variants.push_back({"halve_window_and_hop", c, false});
  }
  {
    PipelineConfig c = base;
    c.enhancer.kind = EnhancerKind::kAnechoicIrm;
    variants.push_back({"enhancer_swap_anechoic_irm", c, false});
  }
  variants.push_back({"dead_microphone", base, true});

  std::vector<EvalRow> rows;
  for (const auto& variant : variants) {
    EvalRow row;
    row.label = variant.name;
    row.enhancer = variant.cfg.enhancer.label();
    row.estimator = variant.cfg.estimator.label();
    row.config_hash = config_hash(variant.cfg);
    try {
      Pipeline pipeline(variant.cfg);
      std::vector<double> scores(test_set.records.size(), 0.0);
      parallel_for(test_set.records.size(), [&](std::size_t i) {
        SceneBundle scene = load_scene(test_set.records[i], test_set.base_dir);
        if (variant.dead_mic) {
          Rng pick(variant.cfg.seed ^ (0xDEAD0000ULL + i));
          int mic = pick.uniform_int(0, scene.mixture.channels() - 1);
          scene = kill_microphone(scene, mic, pick.next_u64());
        }
        scores[i] = pipeline.run(scene).si_sdr_db;
      });
      row.scenes = static_cast<int>(scores.size());
      if (row.scenes > 0)
        row.mean_si_sdr = std::accumulate(scores.begin(), scores.end(), 0.0) / row.scenes;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }

  if (file_hash(base.weights) != hash_before)
    throw NumericError("weights file changed during adaptation experiments");
  return rows;
}

BenchReport benchmark_pipeline(const PipelineConfig& cfg, double seconds, int repeats) {
  const int fs = 16000;
  const std::size_t n = static_cast<std::size_t>(seconds * fs);
  Rng rng(42);
  SceneBundle scene;
  scene.mixture = Waveform::zeros(cfg.mics, n, fs);
  scene.speech_echoic = Waveform::zeros(cfg.mics, n, fs);
  scene.speech_anechoic = Waveform::zeros(1, n, fs);
  for (int m = 0; m < cfg.mics; ++m)
    for (std::size_t i = 0; i < n; ++i) {
      scene.speech_echoic.samples[m][i] = 0.05 * rng.normal();
      scene.mixture.samples[m][i] = scene.speech_echoic.samples[m][i] + 0.05 * rng.normal();
    }
  for (std::size_t i = 0; i < n; ++i) scene.speech_anechoic.samples[0][i] = 0.05 * rng.normal();
  scene.noise = scene.mixture;  // unused by the oracle split path below

  Pipeline pipeline(cfg);
  pipeline.run(scene);  // warmup
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    auto t0 = std::chrono::steady_clock::now();
    pipeline.run(scene);
    auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
  }

  BenchReport report;
  report.audio_seconds = seconds;
  report.wall_seconds = best;
  report.rtf = best / seconds;
  if (cfg.estimator.learned()) {
    report.estimator_mflop_per_frame =
        estimator_macs_per_frame(cfg.estimator_arch(), cfg.stft.freqs()) / 1e6;
    report.pipeline_mflop_per_frame = 2.0 * report.estimator_mflop_per_frame;
  }
  if (cfg.enhancer.kind == EnhancerKind::kLstm)
    report.pipeline_mflop_per_frame += lstm_mask_macs_per_frame(cfg.enhancer_arch()) / 1e6;
  report.pipeline_mflop_per_frame += beamformer_macs_per_frame(cfg.mics, cfg.stft.freqs()) / 1e6;
  if (cfg.estimator.learned() || cfg.enhancer.kind == EnhancerKind::kLstm) {
    PipelineConfig probe = cfg;
    probe.weights.clear();
    if (probe.dtype == "float64")
      report.parameter_count = build_model<double>(probe).params.element_count();
    else
      report.parameter_count = build_model<float>(probe).params.element_count();
  }
  return report;
}

}  // namespace covbeam
