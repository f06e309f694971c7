#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pltts/numerics/layers.hpp"
#include "pltts/numerics/matrix.hpp"
#include "pltts/ser/ser.hpp"

namespace pltts::tts {

enum class Mode { Baseline, PL, ST };

Mode parse_mode(const std::string& text);
std::string mode_name(Mode mode);

struct TtsConfig {
  std::size_t embedding = 256;
  std::size_t encoder_conv_channels = 512;
  std::size_t encoder_conv_layers = 3;
  std::size_t encoder_kernel = 5;
  std::size_t encoder_lstm = 256;  // per direction
  double encoder_dropout = 0.5;
  std::size_t attention_dim = 128;
  std::size_t location_filters = 32;
  std::size_t location_kernel = 31;
  std::size_t prenet = 256;
  double prenet_dropout = 0.5;
  bool prenet_dropout_at_inference = false;
  std::size_t decoder_lstm = 1024;
  std::size_t postnet_channels = 512;
  std::size_t postnet_layers = 5;
  std::size_t postnet_kernel = 5;
  std::size_t n_mels = 40;
  std::size_t reduction = 1;
  std::size_t max_decoder_steps = 1000;
  double stop_threshold = 0.5;
  Mode mode = Mode::Baseline;
  ser::StyleLevel style_level = ser::StyleLevel::Low;
  std::size_t style_projection = 64;  // ST conditioning width
  std::size_t style_input = 200;      // SER projection width D

  static TtsConfig paper();
  static TtsConfig desk();

  std::size_t encoder_dim() const { return 2 * encoder_lstm; }
  /// Width of the states the attention reads (grows by the ST projection).
  std::size_t memory_dim() const { return encoder_dim() + (mode == Mode::ST ? style_projection : 0); }

  void validate() const;
  std::string to_json() const;
  static TtsConfig from_json(const std::string& text);
};

struct TtsModel {
  TtsConfig config;
  Tensor embedding;  // V × E
  std::vector<Conv2d> encoder_convs;
  std::vector<BatchNorm> encoder_norms;
  LstmLayer encoder_forward, encoder_backward;
  // Location-sensitive attention.
  Tensor attention_query;   // decoder_lstm × A
  Tensor attention_memory;  // memory_dim × A
  Conv2d location_conv;     // 1 → F over the cumulative weights
  Tensor attention_location;  // F × A
  Tensor attention_vector;    // A × 1
  // Decoder.
  Linear prenet1, prenet2;
  LstmLayer attention_rnn, decoder_rnn;
  Linear mel_projection, stop_projection;
  std::vector<Conv2d> postnet_convs;
  std::vector<BatchNorm> postnet_norms;
  // ST conditioning.
  std::optional<Linear> style_projection;

  static TtsModel create(const TtsConfig& config, std::uint64_t seed);

  TensorList params() const;
  TensorList buffers();
};

/// Options shared by encoder and decoder passes.
struct RunOptions {
  bool training = false;
  std::uint64_t dropout_seed = 0;
};

/// Embedding → conv/BN/ReLU stack → BLSTM. Returns L × encoder_dim.
Tensor encode_text(TtsModel& model, const std::vector<std::size_t>& ids, const RunOptions& options = {});

struct AttentionResult {
  Tensor context;  // 1 × memory_dim
  Tensor weights;  // 1 × L
};

/// Location-sensitive additive attention for one decoder step.
/// `processed_memory` is memory · attention_memory (L × A), computed once
/// per utterance.
AttentionResult attention_step(const TtsModel& model, const Tensor& query, const Tensor& memory,
                               const Tensor& processed_memory, const Tensor& cumulative_weights);

/// Appends the projected, row-averaged Ψ to every encoder state.
Tensor condition_style(const TtsModel& model, const Tensor& encoder_states, const Tensor& psi);

struct DecoderOutput {
  Tensor pre_mel;      // T × n_mels, before the post-net
  Tensor residual;     // post-net stack output
  Tensor post_mel;     // pre_mel + residual
  Tensor stop_logits;  // T × 1
  Tensor attention;    // T × L
};

/// Teacher forcing over a T × n_mels target; the t = 0 input is a zero
/// frame.
DecoderOutput decode_teacher_forced(TtsModel& model, const Tensor& memory, const Tensor& target,
                                    const RunOptions& options = {});

enum class HaltReason { StopToken, MaxSteps };

struct SynthesisResult {
  Matrix pre_mel;
  Matrix post_mel;
  std::vector<double> stop_probs;
  Matrix attention;
  HaltReason halt = HaltReason::MaxSteps;
};

/// Autoregressive decoding from the model's own projected frames. Halts
/// when sigmoid(stop) exceeds the threshold or after `max_steps` (0 uses the
/// config value).
SynthesisResult infer(TtsModel& model, const Tensor& memory, std::size_t max_steps = 0,
                      std::uint64_t dropout_seed = 0);

/// Text to memory, applying ST conditioning when the model is in ST mode.
/// `style_psi` must be given in ST mode.
Tensor build_memory(TtsModel& model, const std::vector<std::size_t>& ids, const Tensor* style_psi,
                    const RunOptions& options = {});

}  // namespace pltts::tts
