#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "pltts/dsp/audio.hpp"

namespace pltts::pipeline {

/// One voiced stretch of a synthetic utterance.
struct Syllable {
  double duration = 0.15;  // seconds
  double gap = 0.05;       // silence after, seconds
  double f0_start = 120.0;
  double f0_end = 120.0;
  double energy = 0.3;
  double formant1 = 500.0;
  double formant2 = 1500.0;
  bool noisy = false;  // band-limited noise instead of a harmonic carrier
};

/// Renders syllables as harmonic carriers shaped by two resonances, with
/// short raised-cosine ramps and a faint noise floor.
dsp::Waveform render_syllables(const std::vector<Syllable>& syllables, std::mt19937_64& rng,
                               int sample_rate = 16000, double lead_silence = 0.05);

// --- SER corpus: four prosody archetypes ---------------------------------

struct SerArchetype {
  const char* label;
  double f0_mean;
  double f0_slope;      // Hz across each syllable
  double energy;
  double syllable_rate;  // syllables per second
};

/// happy, angry, sad, neutral; mean F0 gaps are at least 40 Hz.
const std::array<SerArchetype, 4>& ser_archetypes();

dsp::Waveform synth_ser_utterance(int label, std::mt19937_64& rng);

// --- TTS corpus: per-character spectral patterns ---------------------------

/// Syllable plan of normalized text; one entry per character.
std::vector<Syllable> plan_text(const std::string& normalized_text, std::mt19937_64& rng);
dsp::Waveform synth_tts_utterance(const std::string& normalized_text, std::mt19937_64& rng);
std::string random_sentence(std::mt19937_64& rng, std::size_t min_words = 2, std::size_t max_words = 4);

// --- styled6: six style groups -------------------------------------------

inline constexpr std::array<const char*, 6> kStyleGroups = {
    "short_question", "long_question", "short_answer", "short_statement", "long_statement", "digit_string"};

dsp::Waveform synth_styled_utterance(std::size_t group, std::mt19937_64& rng);

}  // namespace pltts::pipeline
