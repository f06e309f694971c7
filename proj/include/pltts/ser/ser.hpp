#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pltts/dsp/features.hpp"
#include "pltts/numerics/checkpoint.hpp"
#include "pltts/numerics/layers.hpp"

namespace pltts::ser {

inline constexpr std::array<const char*, 4> kEmotionLabels = {"happy", "angry", "sad", "neutral"};

/// Index of an emotion label; throws for anything outside the four classes.
int label_index(const std::string& label);

struct SerConfig {
  std::size_t segment_frames = 240;  // 3 s at a 12.5 ms shift
  std::size_t max_segments = 8;
  std::size_t n_mels = 40;
  std::vector<std::size_t> conv_maps = {128, 256};
  std::size_t kernel_time = 5;
  std::size_t kernel_freq = 3;
  std::size_t projection = 200;   // D
  std::size_t style_steps = 150;  // S
  std::size_t blstm_hidden = 128;
  std::size_t fc_units = 64;
  std::size_t classes = 4;

  static SerConfig paper();
  static SerConfig desk();

  /// Time slices one segment contributes after pooling.
  std::size_t slices_per_segment() const { return (segment_frames + 1) / 2; }
  std::size_t pooled_freq() const { return (n_mels + 1) / 2; }

  void validate() const;
  std::string to_json() const;
  static SerConfig from_json(const std::string& text);
};

enum class StyleLevel { Low, Middle, High, All };

/// Accepts L|M|H|LMH (and low|middle|high, case-insensitive).
StyleLevel parse_style_level(const std::string& text);
std::string style_level_name(StyleLevel level);

struct SerModel {
  SerConfig config;
  std::vector<Conv2d> convs;
  Linear projection;  // K·W' → D
  LstmLayer blstm_forward, blstm_backward;
  Linear middle;      // 2H → D
  Linear attention;   // D → D, scored through tanh then `attention_vector`
  Tensor attention_vector;  // D × 1
  Linear fc;
  BatchNorm fc_norm;
  Linear output;
  /// Statistics used to normalize raw log-mel input before the delta stack.
  dsp::NormStats feature_stats;

  static SerModel create(const SerConfig& config, std::uint64_t seed);

  TensorList params() const;
  TensorList buffers();
  void set_frozen(bool frozen) const;

  /// Config, weights, buffers and feature stats into / out of a container
  /// that may hold other models too.
  void write_into(Checkpoint& ck);
  static SerModel read_from(const Checkpoint& ck);

  void save(const std::filesystem::path& path, const std::map<std::string, std::string>& meta = {});
  static SerModel load(const std::filesystem::path& path);
};

/// Ψ at the three tap points; each is (B·S) × D, example-major.
struct SerOutput {
  Tensor logits;  // B × classes
  Tensor low, middle, high;
  Tensor attention_weights;  // B × S
  std::size_t batch = 0;
};

/// Static, Δ and ΔΔ channels of a T × F feature matrix as a 3 × T × F
/// tensor. Differentiable in the input.
Tensor delta_stack(const Tensor& features);

/// Splits a 3 × T × F stack into non-overlapping windows of
/// `segment_frames`, zero-padding the last one and dropping segments beyond
/// `max_segments`. Returns N × 3 × segment_frames × F.
Tensor segment_utterance(const Tensor& stack, const SerConfig& config);

/// Runs B examples, each an N_i × 3 × segment_frames × F segment stack.
/// Batch norm uses batch statistics (and updates running ones) only when
/// `training` is set.
SerOutput ser_forward(SerModel& model, const std::vector<Tensor>& examples, bool training);

/// Raw log-mel (T × F) to the N × 3 × segment_frames × F model input:
/// normalize with the model's stats, delta stack, segment.
Tensor utterance_segments(const SerModel& model, const Tensor& raw_log_mel);

/// Raw log-mel (T × F, possibly carrying autodiff history) to Ψ for one
/// utterance in inference mode: normalize with the model's stats, delta
/// stack, segment, forward. Each Ψ is S × D.
struct StyleTensors {
  Tensor low, middle, high;
  Tensor logits;

  const Tensor& at(StyleLevel level) const;
};
StyleTensors style_features(SerModel& model, const Tensor& raw_log_mel);

struct StyleFeatures {
  StyleLevel level = StyleLevel::Low;
  Matrix matrix;  // S × D
  std::string source_id;
};

/// Deterministic Ψ extraction without autodiff. Returns one entry, or
/// three (L, M, H) for StyleLevel::All. A normalized spectrogram is first
/// mapped back to raw log-mel with its own stats.
std::vector<StyleFeatures> extract_style(SerModel& model, const dsp::MelSpectrogram& mel, StyleLevel level,
                                         const std::string& source_id = {});

}  // namespace pltts::ser
