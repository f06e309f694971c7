#include "pltts/pipeline/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace pltts::pipeline {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double resonance(double f, double centre, double bandwidth) {
  const double x = (f - centre) / bandwidth;
  return 1.0 / (1.0 + x * x);
}

void render_voiced(const Syllable& s, std::size_t n, int sr, double& phase, double* out) {
  const double nyquist_guard = 0.45 * sr;
  std::vector<double> amps;
  for (std::size_t i = 0; i < n; ++i) {
    const double frac = n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0;
    const double f0 = s.f0_start + (s.f0_end - s.f0_start) * frac;
    phase += kTwoPi * f0 / sr;
    if (phase > kTwoPi) phase -= kTwoPi;
    const std::size_t harmonics = static_cast<std::size_t>(nyquist_guard / f0);
    amps.resize(harmonics);
    double power = 0.0;
    for (std::size_t k = 1; k <= harmonics; ++k) {
      const double f = f0 * static_cast<double>(k);
      const double a = resonance(f, s.formant1, 90.0) + 0.7 * resonance(f, s.formant2, 140.0) + 0.04 / static_cast<double>(k);
      amps[k - 1] = a;
      power += 0.5 * a * a;
    }
    // sin(kφ) by the Chebyshev recurrence.
    const double c2 = 2.0 * std::cos(phase);
    double prev = 0.0, cur = std::sin(phase), acc = 0.0;
    for (std::size_t k = 1; k <= harmonics; ++k) {
      acc += amps[k - 1] * cur;
      const double next = c2 * cur - prev;
      prev = cur;
      cur = next;
    }
    out[i] = 0.5 * s.energy * acc / std::sqrt(power);
  }
}

void render_noise(const Syllable& s, std::size_t n, int sr, std::mt19937_64& rng, double* out) {
  std::normal_distribution<double> g(0.0, 1.0);
  const double r = std::exp(-std::numbers::pi * 600.0 / sr);
  const double c = 2.0 * r * std::cos(kTwoPi * s.formant2 / sr);
  double y1 = 0.0, y2 = 0.0, power = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double y = g(rng) + c * y1 - r * r * y2;
    y2 = y1;
    y1 = y;
    out[i] = y;
    power += y * y;
  }
  const double rms = std::sqrt(power / std::max<std::size_t>(n, 1));
  if (rms > 0.0)
    for (std::size_t i = 0; i < n; ++i) out[i] *= 0.5 * s.energy / rms;
}

}  // namespace

dsp::Waveform render_syllables(const std::vector<Syllable>& syllables, std::mt19937_64& rng, int sample_rate,
                               double lead_silence) {
  const auto samples = [sample_rate](double seconds) {
    return static_cast<std::size_t>(std::llround(std::max(seconds, 0.0) * sample_rate));
  };
  std::size_t total = samples(lead_silence) + samples(0.05);
  for (const auto& s : syllables) total += samples(s.duration) + samples(s.gap);
  dsp::Waveform wave;
  wave.sample_rate = sample_rate;
  wave.samples.assign(total, 0.0);

  std::size_t pos = samples(lead_silence);
  double phase = 0.0;
  const std::size_t ramp = samples(0.015);
  for (const auto& s : syllables) {
    const std::size_t n = samples(s.duration);
    double* out = wave.samples.data() + pos;
    if (s.noisy)
      render_noise(s, n, sample_rate, rng, out);
    else
      render_voiced(s, n, sample_rate, phase, out);
    const std::size_t r = std::min(ramp, n / 2);
    for (std::size_t i = 0; i < r; ++i) {
      const double w = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(i) / static_cast<double>(r));
      out[i] *= w;
      out[n - 1 - i] *= w;
    }
    pos += n + samples(s.gap);
  }
  std::normal_distribution<double> floor(0.0, 3e-4);
  for (auto& v : wave.samples) v = std::clamp(v + floor(rng), -1.0, 1.0);
  return wave;
}

const std::array<SerArchetype, 4>& ser_archetypes() {
  static const std::array<SerArchetype, 4> table = {{
      {"happy", 250.0, 35.0, 0.40, 4.5},
      {"angry", 195.0, -10.0, 0.50, 5.5},
      {"sad", 105.0, -20.0, 0.12, 2.2},
      {"neutral", 150.0, -5.0, 0.25, 3.5},
  }};
  return table;
}

namespace {

const std::array<std::pair<double, double>, 6> kVowelFormants = {
    {{730, 1090}, {270, 2290}, {530, 1840}, {570, 840}, {300, 870}, {660, 1720}}};

}  // namespace

dsp::Waveform synth_ser_utterance(int label, std::mt19937_64& rng) {
  if (label < 0 || label >= 4) throw std::invalid_argument("synth_ser_utterance: label out of range");
  const SerArchetype& a = ser_archetypes()[static_cast<std::size_t>(label)];
  const double length = uniform(rng, 1.2, 2.4);
  const double f0 = a.f0_mean + uniform(rng, -8.0, 8.0);
  const double energy = a.energy * uniform(rng, 0.85, 1.15);
  std::vector<Syllable> plan;
  double t = 0.0;
  while (t < length) {
    Syllable s;
    const double period = 1.0 / a.syllable_rate * uniform(rng, 0.85, 1.15);
    s.duration = 0.7 * period;
    s.gap = 0.3 * period;
    const double centre = f0 + uniform(rng, -5.0, 5.0);
    s.f0_start = centre - a.f0_slope / 2;
    s.f0_end = centre + a.f0_slope / 2;
    s.energy = energy * uniform(rng, 0.9, 1.1);
    const auto& fm = kVowelFormants[std::uniform_int_distribution<std::size_t>(0, kVowelFormants.size() - 1)(rng)];
    s.formant1 = fm.first;
    s.formant2 = fm.second;
    plan.push_back(s);
    t += period;
  }
  return render_syllables(plan, rng);
}

namespace {

struct CharSound {
  double f1, f2, duration;
  bool noisy;
};

CharSound char_sound(char c) {
  switch (c) {
    case 'a': return {730, 1090, 0.10, false};
    case 'e': return {530, 1840, 0.10, false};
    case 'i': return {270, 2290, 0.10, false};
    case 'o': return {570, 840, 0.10, false};
    case 'u': return {300, 870, 0.10, false};
    case 'y': return {350, 2000, 0.08, false};
    case 's': return {0, 5500, 0.08, true};
    case 'z': return {0, 4500, 0.08, true};
    case 'f': return {0, 3500, 0.07, true};
    case 'h': return {0, 1800, 0.06, true};
    case 'x': return {0, 6000, 0.08, true};
    case 'c': return {0, 3000, 0.06, true};
    default: break;
  }
  if (c >= 'a' && c <= 'z') {
    const int k = c - 'a';
    return {220.0 + 37.0 * (k % 7), 900.0 + 130.0 * (k % 11), 0.06, false};
  }
  return {0, 0, 0, false};
}

}  // namespace

std::vector<Syllable> plan_text(const std::string& text, std::mt19937_64& rng) {
  const double base = 125.0 + uniform(rng, -5.0, 5.0);
  std::size_t letters = 0;
  for (char c : text) letters += (c >= 'a' && c <= 'z');
  std::vector<Syllable> plan;
  std::size_t seen = 0;
  for (char c : text) {
    if (c >= 'a' && c <= 'z') {
      const CharSound cs = char_sound(c);
      const double pos = letters > 1 ? static_cast<double>(seen) / static_cast<double>(letters - 1) : 0.0;
      const double f0 = base * (1.0 - 0.2 * pos);
      Syllable s;
      s.duration = cs.duration;
      s.gap = 0.0;
      s.f0_start = f0;
      s.f0_end = base * (1.0 - 0.2 * std::min(1.0, pos + 1.0 / std::max<std::size_t>(letters, 1)));
      s.energy = cs.noisy ? 0.15 : 0.3;
      s.formant1 = cs.f1;
      s.formant2 = cs.f2;
      s.noisy = cs.noisy;
      plan.push_back(s);
      ++seen;
      continue;
    }
    if (plan.empty()) continue;
    switch (c) {
      case ' ': plan.back().gap += 0.06; break;
      case ',': plan.back().gap += 0.12; break;
      case '.':
      case '!': plan.back().gap += 0.15; break;
      case '?': {
        plan.back().gap += 0.15;
        const std::size_t tail = std::min<std::size_t>(3, plan.size());
        for (std::size_t i = 0; i < tail; ++i) {
          auto& s = plan[plan.size() - tail + i];
          s.f0_start += 20.0 * static_cast<double>(i);
          s.f0_end += 20.0 * static_cast<double>(i + 1);
        }
        break;
      }
      default: plan.back().gap += 0.03; break;
    }
  }
  return plan;
}

dsp::Waveform synth_tts_utterance(const std::string& normalized_text, std::mt19937_64& rng) {
  return render_syllables(plan_text(normalized_text, rng), rng);
}

std::string random_sentence(std::mt19937_64& rng, std::size_t min_words, std::size_t max_words) {
  static const std::array<const char*, 24> lexicon = {
      "the", "a",    "sun",  "is",   "red",  "we",   "see",  "it",   "now",  "blue", "sky",  "on",
      "hat", "old",  "man",  "fox",  "runs", "far",  "yes",  "low",  "moon", "big",  "day",  "sea"};
  const std::size_t words = std::uniform_int_distribution<std::size_t>(min_words, max_words)(rng);
  std::string out;
  for (std::size_t i = 0; i < words; ++i) {
    if (i) out += ' ';
    out += lexicon[std::uniform_int_distribution<std::size_t>(0, lexicon.size() - 1)(rng)];
  }
  out += std::uniform_int_distribution<int>(0, 3)(rng) == 0 ? '?' : '.';
  return out;
}

dsp::Waveform synth_styled_utterance(std::size_t group, std::mt19937_64& rng) {
  if (group >= kStyleGroups.size()) throw std::invalid_argument("synth_styled_utterance: group out of range");
  struct Recipe {
    int min_syl, max_syl;
    double dur, gap, f0_from, f0_to, energy, final_rise;
  };
  static const std::array<Recipe, 6> recipes = {{
      {3, 4, 0.16, 0.06, 140, 140, 0.30, 70},     // short question
      {10, 12, 0.16, 0.06, 150, 120, 0.30, 70},   // long question
      {1, 2, 0.26, 0.08, 175, 115, 0.45, 0},      // short answer
      {4, 5, 0.16, 0.06, 145, 100, 0.30, 0},      // short statement
      {11, 13, 0.16, 0.06, 145, 95, 0.30, 0},     // long statement
      {6, 8, 0.11, 0.16, 130, 130, 0.35, 0},      // digit string
  }};
  const Recipe& r = recipes[group];
  const int count = std::uniform_int_distribution<int>(r.min_syl, r.max_syl)(rng);
  const double shift = uniform(rng, -6.0, 6.0);
  std::vector<Syllable> plan;
  for (int i = 0; i < count; ++i) {
    const double a = count > 1 ? static_cast<double>(i) / (count - 1) : 0.0;
    const double b = count > 1 ? static_cast<double>(i + 1) / (count - 1) : 1.0;
    Syllable s;
    s.duration = r.dur * uniform(rng, 0.9, 1.1);
    s.gap = r.gap * uniform(rng, 0.9, 1.1);
    s.f0_start = r.f0_from + (r.f0_to - r.f0_from) * a + shift;
    s.f0_end = r.f0_from + (r.f0_to - r.f0_from) * std::min(b, 1.0) + shift;
    if (r.final_rise > 0 && i >= count - 2) {
      s.f0_start += r.final_rise * (i - (count - 2)) / 2.0;
      s.f0_end += r.final_rise * (i - (count - 2) + 1) / 2.0;
    }
    s.energy = r.energy * uniform(rng, 0.9, 1.1);
    const auto& fm = kVowelFormants[std::uniform_int_distribution<std::size_t>(0, kVowelFormants.size() - 1)(rng)];
    s.formant1 = fm.first;
    s.formant2 = fm.second;
    plan.push_back(s);
  }
  return render_syllables(plan, rng);
}

}  // namespace pltts::pipeline
