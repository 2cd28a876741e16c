#pragma once

#include <memory>

#include "covbeam/config.hpp"
#include "covbeam/metrics.hpp"
#include "covbeam/stft_graph.hpp"
#include "covbeam/weights_io.hpp"

namespace covbeam {

struct PipelineDiagnostics {
  BeamformerDiagnostics beamformer;
  uint64_t config_hash = 0;
};

struct PipelineResult {
  Waveform enhanced;  // single channel, trimmed to the scene length
  double si_sdr_db = 0.0;
  double unprocessed_si_sdr_db = 0.0;
  PipelineDiagnostics diagnostics;
};

// Learned components of a pipeline. Parameter names are prefixed
// "est.speech.", "est.noise.", and "enh."; all live in one store so weight
// files carry the whole model.
template <typename T>
struct PipelineModel {
  ad::ParamStore<T> params;
  bool has_estimator = false;
  bool has_enhancer = false;
  LearnedEstimatorArch est_arch;
  LstmMaskArch enh_arch;
};

template <typename T>
PipelineModel<T> build_model(const PipelineConfig& cfg) {
  PipelineModel<T> model;
  Rng rng(cfg.seed ^ 0xC0FFEEULL);
  if (cfg.estimator.learned()) {
    model.est_arch = cfg.estimator_arch();
    Rng speech_rng = rng.fork(1), noise_rng = rng.fork(2);
    init_estimator_params(model.est_arch, "est.speech.", model.params, speech_rng);
    init_estimator_params(model.est_arch, "est.noise.", model.params, noise_rng);
    model.has_estimator = true;
  }
  if (cfg.enhancer.kind == EnhancerKind::kLstm) {
    model.enh_arch = cfg.enhancer_arch();
    Rng enh_rng = rng.fork(3);
    init_lstm_mask_params(model.enh_arch, "enh.", model.params, enh_rng);
    model.has_enhancer = true;
  }
  if (!cfg.weights.empty()) load_params(cfg.weights, model.params);
  return model;
}

Spectrogram channel_slice(const Spectrogram& spec, int channel);

// Spectral speech/noise estimates for a scene. Ground-truth-based enhancers
// (oracle, IRM variants) need the scene stems; the LSTM enhancer runs on the
// mixture alone.
template <typename T>
EnhancerOutput run_enhancer(const SceneBundle& scene, const Spectrogram& mix_spec,
                            const PipelineConfig& cfg, const PipelineModel<T>& model) {
  switch (cfg.enhancer.kind) {
    case EnhancerKind::kOracle: {
      if (scene.speech_echoic.channels() == 0)
        throw ConfigError("oracle enhancer needs ground-truth echoic speech");
      return oracle_split(mix_spec, stft(scene.speech_echoic, cfg.stft));
    }
    case EnhancerKind::kEchoicIrm: {
      if (scene.speech_echoic.channels() == 0)
        throw ConfigError("echoic_irm enhancer needs ground-truth echoic speech");
      Waveform ref0;
      ref0.sample_rate_hz = scene.speech_echoic.sample_rate_hz;
      ref0.samples = {scene.speech_echoic.samples[0]};
      Mask mask = irm(stft(ref0, cfg.stft), channel_slice(mix_spec, 0), cfg.enhancer.irm_form);
      return apply_mask(mask, mix_spec);
    }
    case EnhancerKind::kAnechoicIrm: {
      if (scene.speech_anechoic.channels() == 0)
        throw ConfigError("anechoic_irm enhancer needs the anechoic reference");
      Mask mask = irm(stft(scene.speech_anechoic, cfg.stft), channel_slice(mix_spec, 0),
                      cfg.enhancer.irm_form);
      return apply_mask(mask, mix_spec);
    }
    case EnhancerKind::kLstm: {
      if (!model.has_enhancer) throw ConfigError("lstm enhancer selected but no weights present");
      Mask mask = lstm_mask(channel_slice(mix_spec, 0), model.enh_arch, model.params);
      return apply_mask(mask, mix_spec);
    }
  }
  throw std::logic_error("unreachable");
}

// Whole-scene inference with the resolved steering and covariance stream.
template <typename T>
PipelineResult run_scene(const SceneBundle& scene, const PipelineConfig& cfg,
                         const PipelineModel<T>& model);

// Builds the end-to-end differentiable loss for one scene: enhancer (either
// fixed estimates as constants or the mask network when train_enhancer),
// dual covariance estimators, first-column steering, MVDR, synthesis, and
// negative SI-SDR against the anechoic reference.
template <typename T>
ad::Tensor<T> scene_loss_graph(const SceneBundle& scene, const PipelineConfig& cfg,
                               PipelineModel<T>& model, bool train_enhancer);

// Non-template facade resolving cfg.dtype; reusable across scenes and safe
// to call concurrently.
class Pipeline {
 public:
  explicit Pipeline(const PipelineConfig& cfg);
  PipelineResult run(const SceneBundle& scene) const;
  const PipelineConfig& config() const { return cfg_; }

 private:
  PipelineConfig cfg_;
  std::shared_ptr<PipelineModel<float>> model32_;
  std::shared_ptr<PipelineModel<double>> model64_;
};

PipelineResult run_pipeline(const SceneBundle& scene, const PipelineConfig& cfg);

}  // namespace covbeam
