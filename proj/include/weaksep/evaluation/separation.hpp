#pragma once

#include <string>
#include <vector>

#include "weaksep/dataset/manifest.hpp"
#include "weaksep/dsp/stft.hpp"
#include "weaksep/dsp/wiener.hpp"
#include "weaksep/evaluation/bss.hpp"
#include "weaksep/evaluation/summary.hpp"
#include "weaksep/sepmodel/class_autoencoder.hpp"
#include "weaksep/sepmodel/model_bundle.hpp"

namespace weaksep::evaluation {

/// Decoder estimates (eval mode, z = mu) of the requested classes for one mixture magnitude.
template <class T>
std::vector<dsp::Spectrogram> estimate_magnitudes(sepmodel::ModelBundle<T>& model, const dsp::Spectrogram& mixture,
                                                  const std::vector<int>& labels) {
  if (labels.empty()) throw std::invalid_argument("separate: no target labels");
  std::vector<dsp::Spectrogram> out;
  for (int label : labels) {
    out.push_back(sepmodel::estimate_source(model.at(model.index_of(label)), mixture, nn::Mode::eval).first);
  }
  return out;
}

/// Wiener-filtered time-domain estimates, one per label, reusing the mixture phase.
template <class T>
std::vector<dsp::Waveform> separate(sepmodel::ModelBundle<T>& model, const dsp::Waveform& mixture,
                                    const std::vector<int>& labels) {
  const auto spec = dsp::stft(mixture);
  return dsp::wiener_reconstruct(estimate_magnitudes(model, spec.magnitude(), labels), spec, mixture.sample_rate);
}

/// Wiener reconstruction driven by the true source magnitudes.
inline std::vector<dsp::Waveform> oracle_separate(const dsp::ComplexSpectrogram& mixture,
                                                  const std::vector<dsp::Spectrogram>& true_magnitudes,
                                                  double sample_rate = dsp::kModelSampleRate) {
  return dsp::wiener_reconstruct(true_magnitudes, mixture, sample_rate);
}

/// Scores each estimate against the references over the estimate's length
/// (the inverse STFT covers (T-1)*hop + window samples).
inline std::vector<Metrics> score(const std::vector<dsp::Waveform>& estimates, const std::vector<dsp::Waveform>& references) {
  if (estimates.size() != references.size()) throw ShapeError("score: one estimate per reference expected");
  std::vector<dsp::Waveform> refs;
  for (const auto& r : references) refs.push_back(dsp::fit_length(r, estimates.at(0).size()));
  std::vector<Metrics> out;
  for (std::size_t t = 0; t < estimates.size(); ++t) out.push_back(evaluate(estimates[t], refs, t));
  return out;
}

inline void append_records(std::vector<EvalRecord>& out, const std::string& run_id, const std::string& method,
                           const dataset::MixtureExample& ex, const std::vector<Metrics>& m) {
  for (std::size_t c = 0; c < m.size(); ++c) {
    out.push_back({run_id, ex.id, ex.combination[c], method, ex.gain_db, m[c].sdr, m[c].sir, m[c].sar});
  }
}

/// Separates every test mixture of the manifest with the model and scores each target.
template <class T>
std::vector<EvalRecord> evaluate_model(sepmodel::ModelBundle<T>& model, const dataset::Manifest& manifest,
                                       const std::string& method, const std::string& run_id) {
  std::vector<EvalRecord> out;
  for (const auto& r : manifest.partition(dataset::Partition::test)) {
    const auto ex = dataset::load_example(manifest, r, true);
    append_records(out, run_id, method, ex, score(separate(model, ex.mixture, ex.combination), ex.sources));
  }
  return out;
}

/// Oracle Wiener masks from the true component magnitudes.
inline std::vector<EvalRecord> evaluate_oracle(const dataset::Manifest& manifest, const std::string& run_id) {
  std::vector<EvalRecord> out;
  for (const auto& r : manifest.partition(dataset::Partition::test)) {
    const auto ex = dataset::load_example(manifest, r, true);
    std::vector<dsp::Spectrogram> mags;
    for (const auto& s : ex.sources) mags.push_back(dsp::stft(s).magnitude());
    append_records(out, run_id, "oracle", ex, score(oracle_separate(dsp::stft(ex.mixture), mags), ex.sources));
  }
  return out;
}

}  // namespace weaksep::evaluation
