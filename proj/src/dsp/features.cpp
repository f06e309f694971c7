#include "pltts/dsp/features.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <mutex>
#include <sstream>
#include <stdexcept>

namespace pltts::dsp {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

namespace {

Matrix build_filterbank(const MelConfig& cfg) {
  if (cfg.n_mels == 0) throw std::invalid_argument("mel_filterbank: n_mels must be positive");
  if (!(cfg.f_max > cfg.f_min) || cfg.f_min < 0.0 || cfg.f_max > cfg.sample_rate / 2.0)
    throw std::invalid_argument("mel_filterbank: band edges must satisfy 0 <= f_min < f_max <= sr/2");
  const std::size_t bins = cfg.frame.n_fft / 2 + 1;
  const double lo = hz_to_mel(cfg.f_min), hi = hz_to_mel(cfg.f_max);
  std::vector<double> edges(cfg.n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(cfg.n_mels + 1));
  Matrix fb(cfg.n_mels, bins);
  const double bin_hz = static_cast<double>(cfg.sample_rate) / static_cast<double>(cfg.frame.n_fft);
  for (std::size_t m = 0; m < cfg.n_mels; ++m) {
    const double left = edges[m], centre = edges[m + 1], right = edges[m + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = bin_hz * static_cast<double>(k);
      double w = 0.0;
      if (f > left && f <= centre)
        w = (f - left) / (centre - left);
      else if (f > centre && f < right)
        w = (right - f) / (right - centre);
      fb(m, k) = w;
    }
  }
  return fb;
}

}  // namespace

const Matrix& mel_filterbank(const MelConfig& cfg) {
  static std::mutex mutex;
  static std::vector<std::pair<MelConfig, std::unique_ptr<Matrix>>> cache;
  std::lock_guard lock(mutex);
  for (const auto& [key, fb] : cache)
    if (key == cfg) return *fb;
  cache.emplace_back(cfg, std::make_unique<Matrix>(build_filterbank(cfg)));
  return *cache.back().second;
}

MelSpectrogram mel_spectrogram(const Waveform& wave, const MelConfig& cfg) {
  if (wave.sample_rate != cfg.sample_rate)
    throw std::invalid_argument("mel_spectrogram: sample rate " + std::to_string(wave.sample_rate) +
                                " does not match configured " + std::to_string(cfg.sample_rate));
  const Spectrogram spec = stft(wave.samples, cfg.frame);
  const Matrix& fb = mel_filterbank(cfg);
  MelSpectrogram mel;
  mel.frames = Matrix(spec.frames, cfg.n_mels);
  std::vector<double> mag(spec.bins);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    for (std::size_t k = 0; k < spec.bins; ++k) mag[k] = std::abs(spec(t, k));
    for (std::size_t m = 0; m < cfg.n_mels; ++m) {
      const auto row = fb.row(m);
      double acc = 0.0;
      for (std::size_t k = 0; k < spec.bins; ++k) acc += row[k] * mag[k];
      mel.frames(t, m) = std::log(acc + cfg.eps);
    }
  }
  return mel;
}

Matrix delta_operator(std::size_t frames) {
  Matrix d(frames, frames);
  if (frames == 0) return d;
  const auto last = static_cast<std::ptrdiff_t>(frames) - 1;
  for (std::ptrdiff_t t = 0; t <= last; ++t) {
    for (std::ptrdiff_t n = 1; n <= 2; ++n) {
      const auto ahead = std::min(t + n, last);
      const auto behind = std::max(t - n, std::ptrdiff_t{0});
      d(t, ahead) += static_cast<double>(n) / 10.0;
      d(t, behind) -= static_cast<double>(n) / 10.0;
    }
  }
  return d;
}

namespace {

Matrix regression_delta(const Matrix& x) {
  Matrix out(x.rows, x.cols);
  if (x.rows == 0) return out;
  const auto last = static_cast<std::ptrdiff_t>(x.rows) - 1;
  for (std::ptrdiff_t t = 0; t <= last; ++t) {
    for (std::size_t c = 0; c < x.cols; ++c) {
      double acc = 0.0;
      for (std::ptrdiff_t n = 1; n <= 2; ++n)
        acc += static_cast<double>(n) * (x(std::min(t + n, last), c) - x(std::max(t - n, std::ptrdiff_t{0}), c));
      out(t, c) = acc / 10.0;
    }
  }
  return out;
}

void check_channels(const Matrix& frames, const NormStats& stats, const char* who) {
  if (stats.mean.size() != frames.cols || stats.std.size() != frames.cols)
    throw std::invalid_argument(std::string(who) + ": stats have " + std::to_string(stats.mean.size()) +
                                " channels, features have " + std::to_string(frames.cols));
}

}  // namespace

DeltaStack deltas(const Matrix& features) {
  DeltaStack s;
  s.statics = features;
  s.delta = regression_delta(features);
  s.delta2 = regression_delta(s.delta);
  return s;
}

NormStats compute_norm_stats(const std::vector<Matrix>& corpus) {
  if (corpus.empty()) throw std::invalid_argument("compute_norm_stats: empty corpus");
  const std::size_t channels = corpus.front().cols;
  std::vector<double> sum(channels, 0.0);
  std::size_t count = 0;
  for (const auto& m : corpus) {
    if (m.cols != channels) throw std::invalid_argument("compute_norm_stats: inconsistent channel counts");
    for (std::size_t t = 0; t < m.rows; ++t)
      for (std::size_t c = 0; c < channels; ++c) sum[c] += m(t, c);
    count += m.rows;
  }
  if (count == 0) throw std::invalid_argument("compute_norm_stats: corpus has no frames");
  NormStats stats;
  stats.mean.resize(channels);
  for (std::size_t c = 0; c < channels; ++c) stats.mean[c] = sum[c] / static_cast<double>(count);
  std::vector<double> sq(channels, 0.0);
  for (const auto& m : corpus)
    for (std::size_t t = 0; t < m.rows; ++t)
      for (std::size_t c = 0; c < channels; ++c) {
        const double d = m(t, c) - stats.mean[c];
        sq[c] += d * d;
      }
  stats.std.resize(channels);
  for (std::size_t c = 0; c < channels; ++c) stats.std[c] = std::sqrt(sq[c] / static_cast<double>(count));
  return stats;
}

Matrix normalize(const Matrix& frames, const NormStats& stats) {
  check_channels(frames, stats, "normalize");
  Matrix out(frames.rows, frames.cols);
  for (std::size_t t = 0; t < frames.rows; ++t)
    for (std::size_t c = 0; c < frames.cols; ++c)
      out(t, c) = (frames(t, c) - stats.mean[c]) / std::max(stats.std[c], NormStats::kStdFloor);
  return out;
}

Matrix denormalize(const Matrix& frames, const NormStats& stats) {
  check_channels(frames, stats, "denormalize");
  Matrix out(frames.rows, frames.cols);
  for (std::size_t t = 0; t < frames.rows; ++t)
    for (std::size_t c = 0; c < frames.cols; ++c)
      out(t, c) = frames(t, c) * std::max(stats.std[c], NormStats::kStdFloor) + stats.mean[c];
  return out;
}

MelSpectrogram normalize(const MelSpectrogram& mel, const NormStats& stats) {
  if (mel.normalization) throw std::invalid_argument("normalize: spectrogram is already normalized");
  return {normalize(mel.frames, stats), stats};
}

MelSpectrogram denormalize(const MelSpectrogram& mel, const NormStats& stats) {
  return {denormalize(mel.frames, stats), std::nullopt};
}

std::string NormStats::to_json() const {
  nlohmann::json j;
  j["mel_mean"] = mean;
  j["mel_std"] = std;
  return j.dump(2);
}

NormStats NormStats::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  NormStats s;
  s.mean = j.at("mel_mean").get<std::vector<double>>();
  s.std = j.at("mel_std").get<std::vector<double>>();
  if (s.mean.size() != s.std.size()) throw std::invalid_argument("norm stats: mean/std length mismatch");
  return s;
}

void NormStats::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("norm stats: cannot write '" + path.string() + "'");
  out << to_json() << '\n';
}

NormStats NormStats::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("norm stats: cannot read '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

}  // namespace pltts::dsp
