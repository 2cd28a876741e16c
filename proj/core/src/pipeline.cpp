#include "covbeam/pipeline.hpp"

#include <cmath>

namespace covbeam {

Spectrogram channel_slice(const Spectrogram& spec, int channel) {
  Spectrogram out = Spectrogram::zeros(1, spec.frames, spec.config);
  for (int t = 0; t < spec.frames; ++t)
    for (int f = 0; f < spec.freqs; ++f) out.at(0, t, f) = spec.at(channel, t, f);
  return out;
}

namespace {

// Modified spectra synthesized through the edge regions divide by the tiny
// single-frame window tails. Padding the analysis by one window on each side
// keeps every scene sample inside fully overlapped synthesis.
Waveform pad_edges(const Waveform& w, int pad) {
  Waveform out = Waveform::zeros(w.channels(), w.length() + 2 * static_cast<std::size_t>(pad),
                                 w.sample_rate_hz);
  for (int m = 0; m < w.channels(); ++m)
    for (std::size_t i = 0; i < w.length(); ++i) out.samples[m][pad + i] = w.samples[m][i];
  return out;
}

Waveform drop_padding(const Waveform& w, int pad, std::size_t len) {
  Waveform out = Waveform::zeros(w.channels(), len, w.sample_rate_hz);
  for (int m = 0; m < w.channels(); ++m)
    for (std::size_t i = 0; i < len && pad + i < w.length(); ++i)
      out.samples[m][i] = w.samples[m][pad + i];
  return out;
}

SceneBundle pad_scene(const SceneBundle& scene, int pad) {
  SceneBundle out;
  out.mixture = pad_edges(scene.mixture, pad);
  if (scene.speech_echoic.channels() > 0) out.speech_echoic = pad_edges(scene.speech_echoic, pad);
  if (scene.speech_anechoic.channels() > 0)
    out.speech_anechoic = pad_edges(scene.speech_anechoic, pad);
  if (scene.noise.channels() > 0) out.noise = pad_edges(scene.noise, pad);
  out.trajectory = scene.trajectory;
  out.snr_db = scene.snr_db;
  return out;
}

double scene_si_sdr(const Waveform& estimate, const Waveform& reference) {
  std::size_t n = std::min(estimate.length(), reference.length());
  return si_sdr_db(std::span(estimate.samples[0]).subspan(0, n),
                   std::span(reference.samples[0]).subspan(0, n));
}

template <typename T>
ad::CTensor<T> const_frame(const Spectrogram& spec, int t) {
  ad::CTensor<T> out = ad::CTensor<T>::zeros(spec.freqs, spec.channels);
  for (int f = 0; f < spec.freqs; ++f)
    for (int m = 0; m < spec.channels; ++m) {
      out.re.values()[static_cast<std::size_t>(f) * spec.channels + m] =
          static_cast<T>(spec.at(m, t, f).real());
      out.im.values()[static_cast<std::size_t>(f) * spec.channels + m] =
          static_cast<T>(spec.at(m, t, f).imag());
    }
  return out;
}

// First-column steering, stabilized MVDR, and the beamformed bin, all within
// the graph; frames arrive as [F, M] pairs. The output bin is rescaled by
// the steering vector's first component, matching the reference-mic
// convention of beamform_frame.
template <typename T>
ad::CTensor<T> mvdr_graph(const ad::CTensor<T>& phi_ss, const ad::CTensor<T>& phi_nn_inv,
                          const ad::CTensor<T>& mix_frame, int mics) {
  using namespace ad;
  std::vector<int> col0(mics);
  for (int i = 0; i < mics; ++i) col0[i] = i * mics;
  CTensor<T> col{gather_cols(phi_ss.re, col0), gather_cols(phi_ss.im, col0)};
  Tensor<T> norm = sqrt_(add_scalar(rowsum(c_abs_sq(col)), T(1e-24)));
  CTensor<T> v{div_colvec(col.re, norm), div_colvec(col.im, norm)};

  CTensor<T> num = c_matvec(phi_nn_inv, v);
  CTensor<T> den = c_inner(v, num);
  Tensor<T> den_mag = sqrt_(add_scalar(c_abs_sq(den), T(1e-30)));
  CTensor<T> den_stab{add(den.re, scale(add_scalar(den_mag, T(1)), T(1e-8))), den.im};
  CTensor<T> w = c_div_rowscalar(num, den_stab);
  CTensor<T> y = c_inner(w, mix_frame);  // w^H x per frequency
  CTensor<T> v0{gather_cols(v.re, {0}), gather_cols(v.im, {0})};
  return c_mul(y, v0);
}

}  // namespace

template <typename T>
PipelineResult run_scene(const SceneBundle& scene, const PipelineConfig& cfg,
                         const PipelineModel<T>& model) {
  validate(cfg);
  if (scene.mixture.channels() != cfg.mics)
    throw ConfigError("scene channel count does not match configured mics");

  const int pad = cfg.stft.window_len;
  const std::size_t scene_len = scene.mixture.length();
  SceneBundle padded = pad_scene(scene, pad);
  Spectrogram mix_spec = stft(padded.mixture, cfg.stft);
  PipelineResult result;
  result.diagnostics.config_hash = config_hash(cfg);

  if (cfg.estimator.kind == EstimatorKind::kNone) {
    EnhancerOutput est = run_enhancer(padded, mix_spec, cfg, model);
    result.enhanced = drop_padding(istft(channel_slice(est.speech_est, 0)), pad, scene_len);
  } else {
    EnhancerOutput est = run_enhancer(padded, mix_spec, cfg, model);
    SteeringMode steering = cfg.resolved_steering();
    std::vector<std::vector<cplx>> weights(mix_spec.frames);

    if (cfg.estimator.kind == EstimatorKind::kFixed) {
      CovarianceState cov = fixed_estimate(est);
      std::vector<cplx> w = beamform_frame(cov, steering, &result.diagnostics.beamformer);
      for (auto& frame_w : weights) frame_w = w;
    } else if (cfg.estimator.kind == EstimatorKind::kBuffer) {
      BufferedCovariance stream(cfg.estimator.buffer_frames, cfg.mics, mix_spec.freqs);
      for (int t = 0; t < mix_spec.frames; ++t) {
        const CovarianceState& cov =
            stream.step(gather_frame(est.speech_est, t), gather_frame(est.noise_est, t));
        weights[t] = beamform_frame(cov, steering, &result.diagnostics.beamformer);
      }
    } else {
      if (!model.has_estimator) throw ConfigError("learned estimator selected but no model built");
      LearnedCovariance<T> stream(model.est_arch, &model.params, mix_spec.freqs);
      CovarianceState cov = CovarianceState::zeros(cfg.mics, mix_spec.freqs);
      for (int t = 0; t < mix_spec.frames; ++t) {
        stream.step(gather_frame(est.speech_est, t), gather_frame(est.noise_est, t), cov);
        weights[t] = beamform_frame(cov, steering, &result.diagnostics.beamformer);
      }
    }
    result.enhanced = drop_padding(istft(apply_beamformer(weights, mix_spec)), pad, scene_len);
  }

  if (scene.speech_anechoic.channels() > 0) {
    result.si_sdr_db = scene_si_sdr(result.enhanced, scene.speech_anechoic);
    Waveform ref_mic;
    ref_mic.sample_rate_hz = scene.mixture.sample_rate_hz;
    ref_mic.samples = {scene.mixture.samples[0]};
    result.unprocessed_si_sdr_db = scene_si_sdr(ref_mic, scene.speech_anechoic);
  } else {
    result.si_sdr_db = std::nan("");
    result.unprocessed_si_sdr_db = std::nan("");
  }
  return result;
}

template <typename T>
ad::Tensor<T> scene_loss_graph(const SceneBundle& scene, const PipelineConfig& cfg,
                               PipelineModel<T>& model, bool train_enhancer) {
  using namespace ad;
  validate(cfg);
  if (!cfg.estimator.learned() && !(train_enhancer && model.has_enhancer))
    throw ConfigError("training requires a learned estimator or enhancer");

  const int pad = cfg.stft.window_len;
  const std::size_t scene_len = scene.mixture.length();
  SceneBundle padded = pad_scene(scene, pad);
  Spectrogram mix_spec = stft(padded.mixture, cfg.stft);
  const int frames = mix_spec.frames;
  const int freqs = mix_spec.freqs;
  const int mics = cfg.mics;

  std::vector<CTensor<T>> mix_frames;
  mix_frames.reserve(frames);
  for (int t = 0; t < frames; ++t) mix_frames.push_back(const_frame<T>(mix_spec, t));

  // enhancer estimates: constants unless the mask network itself trains
  std::vector<CTensor<T>> speech_frames(frames), noise_frames(frames);
  LstmMaskState<T> mask_state;
  Spectrogram mix0;
  if (train_enhancer) {
    mask_state = LstmMaskState<T>::zeros(model.enh_arch);
    mix0 = channel_slice(mix_spec, 0);
  } else {
    EnhancerOutput est = run_enhancer(padded, mix_spec, cfg, model);
    for (int t = 0; t < frames; ++t) {
      speech_frames[t] = const_frame<T>(est.speech_est, t);
      noise_frames[t] = const_frame<T>(est.noise_est, t);
    }
  }

  EstimatorSideState<T> speech_state, noise_state;
  bool learned_estimator = cfg.estimator.learned();
  if (learned_estimator) {
    speech_state = EstimatorSideState<T>::zeros(model.est_arch, freqs);
    noise_state = EstimatorSideState<T>::zeros(model.est_arch, freqs);
  }
  // conventional estimators inside a training graph only make sense for
  // enhancer-only training (estimator "none": loss on the masked ref mic)
  std::vector<CTensor<T>> out_frames;
  out_frames.reserve(frames);

  for (int t = 0; t < frames; ++t) {
    if (train_enhancer) {
      Tensor<T> feat = Tensor<T>::make(1, freqs);
      for (int f = 0; f < freqs; ++f)
        feat.values()[f] = static_cast<T>(std::log1p(std::abs(mix0.at(0, t, f))));
      Tensor<T> mask = lstm_mask_step(model.enh_arch, model.params, "enh.", feat, mask_state);
      Tensor<T> mask_col = transpose(mask);
      speech_frames[t] = CTensor<T>{mul_colvec(mix_frames[t].re, mask_col),
                                    mul_colvec(mix_frames[t].im, mask_col)};
      noise_frames[t] = c_sub(mix_frames[t], speech_frames[t]);
    }
    if (cfg.estimator.kind == EstimatorKind::kNone) {
      // single-channel path: masked reference mic
      std::vector<int> ref_col{0};
      out_frames.push_back(CTensor<T>{gather_cols(speech_frames[t].re, ref_col),
                                      gather_cols(speech_frames[t].im, ref_col)});
      continue;
    }
    CTensor<T> phi_ss = estimator_side_step(model.est_arch, model.params, "est.speech.",
                                            speech_frames[t], speech_state);
    CTensor<T> phi_nn_inv = estimator_side_step(model.est_arch, model.params, "est.noise.",
                                                noise_frames[t], noise_state);
    out_frames.push_back(mvdr_graph(phi_ss, phi_nn_inv, mix_frames[t], mics));
  }

  Tensor<T> wave = istft_graph(out_frames, cfg.stft);
  std::size_t n = std::min<std::size_t>(
      {static_cast<std::size_t>(wave.cols()) - pad, scene_len, scene.speech_anechoic.length()});
  Tensor<T> est_wave = slice_cols(wave, pad, static_cast<int>(n));
  Tensor<T> reference = Tensor<T>::make(1, static_cast<int>(n));
  for (std::size_t i = 0; i < n; ++i)
    reference.values()[i] = static_cast<T>(scene.speech_anechoic.samples[0][i]);
  return neg_si_sdr_loss(est_wave, reference);
}

template PipelineResult run_scene<float>(const SceneBundle&, const PipelineConfig&,
                                         const PipelineModel<float>&);
template PipelineResult run_scene<double>(const SceneBundle&, const PipelineConfig&,
                                          const PipelineModel<double>&);
template ad::Tensor<float> scene_loss_graph<float>(const SceneBundle&, const PipelineConfig&,
                                                   PipelineModel<float>&, bool);
template ad::Tensor<double> scene_loss_graph<double>(const SceneBundle&, const PipelineConfig&,
                                                     PipelineModel<double>&, bool);

Pipeline::Pipeline(const PipelineConfig& cfg) : cfg_(cfg) {
  validate(cfg_);
  if (cfg_.dtype == "float64")
    model64_ = std::make_shared<PipelineModel<double>>(build_model<double>(cfg_));
  else
    model32_ = std::make_shared<PipelineModel<float>>(build_model<float>(cfg_));
}

PipelineResult Pipeline::run(const SceneBundle& scene) const {
  if (model64_) return run_scene<double>(scene, cfg_, *model64_);
  return run_scene<float>(scene, cfg_, *model32_);
}

PipelineResult run_pipeline(const SceneBundle& scene, const PipelineConfig& cfg) {
  return Pipeline(cfg).run(scene);
}

}  // namespace covbeam
