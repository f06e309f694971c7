#include "pltts/dsp/vocoder.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace pltts::dsp {

namespace {

double bin_weight(std::size_t k, std::size_t bins, std::size_t n_fft) {
  if (k == 0) return 1.0;
  if (n_fft % 2 == 0 && k == bins - 1) return 1.0;
  return 2.0;
}

}  // namespace

double spectral_convergence(const Matrix& target, const Matrix& estimate) {
  if (target.rows != estimate.rows || target.cols != estimate.cols)
    throw std::invalid_argument("spectral_convergence: shape mismatch");
  const std::size_t n_fft = 2 * (target.cols - 1);
  double num = 0.0, den = 0.0;
  for (std::size_t t = 0; t < target.rows; ++t)
    for (std::size_t k = 0; k < target.cols; ++k) {
      const double w = bin_weight(k, target.cols, n_fft);
      const double d = target(t, k) - estimate(t, k);
      num += w * d * d;
      den += w * target(t, k) * target(t, k);
    }
  return den > 0.0 ? std::sqrt(num / den) : 0.0;
}

GriffinLimResult griffin_lim(const Matrix& magnitude, const MelConfig& cfg, const GriffinLimConfig& gl) {
  if (gl.n_iter < 1) throw std::invalid_argument("griffin_lim: n_iter must be at least 1, got " + std::to_string(gl.n_iter));
  const std::size_t bins = cfg.frame.n_fft / 2 + 1;
  if (magnitude.cols != bins)
    throw std::invalid_argument("griffin_lim: expected " + std::to_string(bins) + " bins, got " +
                                std::to_string(magnitude.cols));
  if (magnitude.rows == 0) throw std::invalid_argument("griffin_lim: empty magnitude");
  for (double v : magnitude.values)
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("griffin_lim: magnitude must be finite and >= 0");

  Spectrogram spec;
  spec.frames = magnitude.rows;
  spec.bins = bins;
  spec.values.resize(magnitude.values.size());
  std::mt19937_64 rng(gl.seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  for (std::size_t i = 0; i < spec.values.size(); ++i) spec.values[i] = std::polar(magnitude.values[i], phase(rng));

  GriffinLimResult result;
  result.wave.sample_rate = cfg.sample_rate;
  result.convergence.reserve(static_cast<std::size_t>(gl.n_iter) + 1);
  std::vector<double> x = istft(spec, cfg.frame);
  Spectrogram rebuilt = stft(x, cfg.frame);
  result.convergence.push_back(spectral_convergence(magnitude, rebuilt.magnitude()));
  for (int it = 0; it < gl.n_iter; ++it) {
    for (std::size_t i = 0; i < spec.values.size(); ++i) {
      const Complex z = rebuilt.values[i];
      const double a = std::abs(z);
      spec.values[i] = a > 0.0 ? magnitude.values[i] * (z / a) : Complex(magnitude.values[i], 0.0);
    }
    x = istft(spec, cfg.frame);
    rebuilt = stft(x, cfg.frame);
    result.convergence.push_back(spectral_convergence(magnitude, rebuilt.magnitude()));
  }
  result.wave.samples = std::move(x);
  return result;
}

Matrix mel_to_linear(const Matrix& log_mel, const MelConfig& cfg) {
  const Matrix& fb = mel_filterbank(cfg);
  if (log_mel.cols != fb.rows)
    throw std::invalid_argument("mel_to_linear: expected " + std::to_string(fb.rows) + " channels, got " +
                                std::to_string(log_mel.cols));
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const RowMat> m(fb.values.data(), static_cast<Eigen::Index>(fb.rows),
                                   static_cast<Eigen::Index>(fb.cols));
  Eigen::MatrixXd gram = m * m.transpose();
  const double ridge = 1e-6 * gram.trace() / static_cast<double>(gram.rows());
  gram.diagonal().array() += ridge;
  // pinv = Mᵀ (M Mᵀ + λI)⁻¹, applied row by row as linear = pinv · mel.
  const Eigen::MatrixXd pinv = m.transpose() * gram.llt().solve(Eigen::MatrixXd::Identity(gram.rows(), gram.cols()));

  Matrix out(log_mel.rows, fb.cols);
  Eigen::VectorXd energies(static_cast<Eigen::Index>(fb.rows));
  for (std::size_t t = 0; t < log_mel.rows; ++t) {
    for (std::size_t c = 0; c < fb.rows; ++c)
      energies[static_cast<Eigen::Index>(c)] = std::max(std::exp(log_mel(t, c)) - cfg.eps, 0.0);
    const Eigen::VectorXd lin = pinv * energies;
    for (std::size_t k = 0; k < fb.cols; ++k) out(t, k) = std::max(lin[static_cast<Eigen::Index>(k)], 0.0);
  }
  return out;
}

GriffinLimResult griffin_lim(const MelSpectrogram& mel, const MelConfig& cfg, const GriffinLimConfig& gl) {
  if (mel.normalization) throw std::invalid_argument("griffin_lim: denormalize the mel spectrogram first");
  return griffin_lim(mel_to_linear(mel.frames, cfg), cfg, gl);
}

}  // namespace pltts::dsp
