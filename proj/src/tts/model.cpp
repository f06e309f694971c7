#include "pltts/tts/model.hpp"

#include <json.hpp>

#include <cctype>
#include <cmath>
#include <random>
#include <stdexcept>

#include "pltts/numerics/rng.hpp"
#include "pltts/tts/text.hpp"

namespace pltts::tts {

Mode parse_mode(const std::string& text) {
  std::string t;
  for (char c : text) t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (t == "baseline") return Mode::Baseline;
  if (t == "pl") return Mode::PL;
  if (t == "st") return Mode::ST;
  throw std::invalid_argument("invalid mode '" + text + "' (expected baseline, pl or st)");
}

std::string mode_name(Mode mode) {
  switch (mode) {
    case Mode::Baseline: return "baseline";
    case Mode::PL: return "pl";
    case Mode::ST: return "st";
  }
  return "?";
}

TtsConfig TtsConfig::paper() { return TtsConfig{}; }

TtsConfig TtsConfig::desk() {
  TtsConfig c;
  c.embedding = 32;
  c.encoder_conv_channels = 32;
  c.encoder_lstm = 16;
  c.encoder_dropout = 0.0;
  c.attention_dim = 32;
  c.location_filters = 8;
  c.location_kernel = 15;
  c.prenet = 32;
  c.decoder_lstm = 64;
  c.postnet_channels = 32;
  c.max_decoder_steps = 200;
  c.style_projection = 16;
  c.style_input = 16;
  return c;
}

void TtsConfig::validate() const {
  if (reduction != 1) throw std::invalid_argument("tts config: only one frame per decoder step is supported");
  if (embedding == 0 || encoder_conv_channels == 0 || encoder_lstm == 0 || attention_dim == 0 ||
      location_filters == 0 || prenet == 0 || decoder_lstm == 0 || postnet_channels == 0 || n_mels == 0 ||
      postnet_layers < 2 || max_decoder_steps == 0)
    throw std::invalid_argument("tts config: all widths must be positive and the post-net needs two layers");
  if (location_kernel % 2 == 0 || encoder_kernel % 2 == 0 || postnet_kernel % 2 == 0)
    throw std::invalid_argument("tts config: kernel widths must be odd");
  if (mode == Mode::ST && (style_projection == 0 || style_input == 0)) throw std::invalid_argument("tts config: ST needs a style projection");
  if (style_level == ser::StyleLevel::All && mode == Mode::ST)
    throw std::invalid_argument("tts config: ST conditions on a single style level");
}

std::string TtsConfig::to_json() const {
  nlohmann::json j;
  j["embedding"] = embedding;
  j["encoder_conv_channels"] = encoder_conv_channels;
  j["encoder_conv_layers"] = encoder_conv_layers;
  j["encoder_kernel"] = encoder_kernel;
  j["encoder_lstm"] = encoder_lstm;
  j["encoder_dropout"] = encoder_dropout;
  j["attention_dim"] = attention_dim;
  j["location_filters"] = location_filters;
  j["location_kernel"] = location_kernel;
  j["prenet"] = prenet;
  j["prenet_dropout"] = prenet_dropout;
  j["prenet_dropout_at_inference"] = prenet_dropout_at_inference;
  j["decoder_lstm"] = decoder_lstm;
  j["postnet_channels"] = postnet_channels;
  j["postnet_layers"] = postnet_layers;
  j["postnet_kernel"] = postnet_kernel;
  j["n_mels"] = n_mels;
  j["reduction"] = reduction;
  j["max_decoder_steps"] = max_decoder_steps;
  j["stop_threshold"] = stop_threshold;
  j["mode"] = mode_name(mode);
  j["style_level"] = ser::style_level_name(style_level);
  j["style_projection"] = style_projection;
  j["style_input"] = style_input;
  return j.dump();
}

TtsConfig TtsConfig::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  TtsConfig c;
  c.embedding = j.value("embedding", c.embedding);
  c.encoder_conv_channels = j.value("encoder_conv_channels", c.encoder_conv_channels);
  c.encoder_conv_layers = j.value("encoder_conv_layers", c.encoder_conv_layers);
  c.encoder_kernel = j.value("encoder_kernel", c.encoder_kernel);
  c.encoder_lstm = j.value("encoder_lstm", c.encoder_lstm);
  c.encoder_dropout = j.value("encoder_dropout", c.encoder_dropout);
  c.attention_dim = j.value("attention_dim", c.attention_dim);
  c.location_filters = j.value("location_filters", c.location_filters);
  c.location_kernel = j.value("location_kernel", c.location_kernel);
  c.prenet = j.value("prenet", c.prenet);
  c.prenet_dropout = j.value("prenet_dropout", c.prenet_dropout);
  c.prenet_dropout_at_inference = j.value("prenet_dropout_at_inference", c.prenet_dropout_at_inference);
  c.decoder_lstm = j.value("decoder_lstm", c.decoder_lstm);
  c.postnet_channels = j.value("postnet_channels", c.postnet_channels);
  c.postnet_layers = j.value("postnet_layers", c.postnet_layers);
  c.postnet_kernel = j.value("postnet_kernel", c.postnet_kernel);
  c.n_mels = j.value("n_mels", c.n_mels);
  c.reduction = j.value("reduction", c.reduction);
  c.max_decoder_steps = j.value("max_decoder_steps", c.max_decoder_steps);
  c.stop_threshold = j.value("stop_threshold", c.stop_threshold);
  if (j.contains("mode")) c.mode = parse_mode(j.at("mode").get<std::string>());
  if (j.contains("style_level")) c.style_level = ser::parse_style_level(j.at("style_level").get<std::string>());
  c.style_projection = j.value("style_projection", c.style_projection);
  c.style_input = j.value("style_input", c.style_input);
  c.validate();
  return c;
}

TtsModel TtsModel::create(const TtsConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  TtsModel m;
  m.config = config;
  const std::size_t vocab = charset_size();
  m.embedding = glorot_uniform({vocab, config.embedding}, vocab, config.embedding, rng);
  std::size_t in = config.embedding;
  for (std::size_t i = 0; i < config.encoder_conv_layers; ++i) {
    m.encoder_convs.push_back(Conv2d::create(in, config.encoder_conv_channels, 1, config.encoder_kernel, rng));
    m.encoder_norms.push_back(BatchNorm::create(config.encoder_conv_channels));
    in = config.encoder_conv_channels;
  }
  m.encoder_forward = LstmLayer::create(in, config.encoder_lstm, rng);
  m.encoder_backward = LstmLayer::create(in, config.encoder_lstm, rng);

  const std::size_t a = config.attention_dim, dm = config.memory_dim(), h = config.decoder_lstm;
  m.attention_query = glorot_uniform({h, a}, h, a, rng);
  m.attention_memory = glorot_uniform({dm, a}, dm, a, rng);
  m.location_conv = Conv2d::create(1, config.location_filters, 1, config.location_kernel, rng);
  m.attention_location = glorot_uniform({config.location_filters, a}, config.location_filters, a, rng);
  m.attention_vector = glorot_uniform({a, 1}, a, 1, rng);

  m.prenet1 = Linear::create(config.n_mels, config.prenet, rng);
  m.prenet2 = Linear::create(config.prenet, config.prenet, rng);
  m.attention_rnn = LstmLayer::create(config.prenet + dm, h, rng);
  m.decoder_rnn = LstmLayer::create(h + dm, h, rng);
  m.mel_projection = Linear::create(h + dm, config.n_mels, rng);
  m.stop_projection = Linear::create(h + dm, 1, rng);
  // Start from "keep going" so untrained decoders do not halt at random.
  m.stop_projection.bias.mutable_data()[0] = -4.0;

  in = config.n_mels;
  for (std::size_t i = 0; i < config.postnet_layers; ++i) {
    const std::size_t out = i + 1 == config.postnet_layers ? config.n_mels : config.postnet_channels;
    m.postnet_convs.push_back(Conv2d::create(in, out, 1, config.postnet_kernel, rng));
    m.postnet_norms.push_back(BatchNorm::create(out));
    in = out;
  }
  if (config.mode == Mode::ST)
    m.style_projection = Linear::create(config.style_input, config.style_projection, rng);
  return m;
}

TensorList TtsModel::params() const {
  TensorList out;
  out.push_back({"tts.embedding", embedding});
  for (std::size_t i = 0; i < encoder_convs.size(); ++i) {
    encoder_convs[i].collect("tts.encoder.conv" + std::to_string(i), out);
    encoder_norms[i].collect("tts.encoder.norm" + std::to_string(i), out);
  }
  encoder_forward.collect("tts.encoder.lstm_fw", out);
  encoder_backward.collect("tts.encoder.lstm_bw", out);
  out.push_back({"tts.attention.query", attention_query});
  out.push_back({"tts.attention.memory", attention_memory});
  location_conv.collect("tts.attention.location_conv", out);
  out.push_back({"tts.attention.location", attention_location});
  out.push_back({"tts.attention.vector", attention_vector});
  prenet1.collect("tts.prenet1", out);
  prenet2.collect("tts.prenet2", out);
  attention_rnn.collect("tts.attention_rnn", out);
  decoder_rnn.collect("tts.decoder_rnn", out);
  mel_projection.collect("tts.mel_projection", out);
  stop_projection.collect("tts.stop_projection", out);
  for (std::size_t i = 0; i < postnet_convs.size(); ++i) {
    postnet_convs[i].collect("tts.postnet.conv" + std::to_string(i), out);
    postnet_norms[i].collect("tts.postnet.norm" + std::to_string(i), out);
  }
  if (style_projection) style_projection->collect("tts.style_projection", out);
  return out;
}

TensorList TtsModel::buffers() {
  TensorList out;
  for (std::size_t i = 0; i < encoder_norms.size(); ++i)
    encoder_norms[i].collect_buffers("tts.encoder.norm" + std::to_string(i), out);
  for (std::size_t i = 0; i < postnet_norms.size(); ++i)
    postnet_norms[i].collect_buffers("tts.postnet.norm" + std::to_string(i), out);
  return out;
}

Tensor encode_text(TtsModel& model, const std::vector<std::size_t>& ids, const RunOptions& options) {
  if (ids.empty()) throw std::invalid_argument("encode_text: empty id sequence");
  const std::size_t vocab = model.embedding.dim(0);
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] >= vocab) throw std::invalid_argument("encode_text: id " + std::to_string(ids[i]) + " at position " +
                                                     std::to_string(i) + " is outside the charset");
  std::mt19937_64 rng(derive_seed(options.dropout_seed, 0, 1));
  Tensor x = permute_rows(model.embedding, ids);
  for (std::size_t i = 0; i < model.encoder_convs.size(); ++i) {
    x = relu(model.encoder_norms[i](conv1d_sequence(x, model.encoder_convs[i]), options.training));
    x = dropout(x, model.config.encoder_dropout, rng, options.training);
  }
  return bilstm_sequence(x, model.encoder_forward, model.encoder_backward);
}

AttentionResult attention_step(const TtsModel& model, const Tensor& query, const Tensor& memory,
                               const Tensor& processed_memory, const Tensor& cumulative_weights) {
  const std::size_t l = memory.dim(0), a = model.config.attention_dim;
  if (cumulative_weights.numel() != l)
    throw ShapeError("attention_step: cumulative weights " + shape_str(cumulative_weights.shape()) +
                     " do not match " + std::to_string(l) + " encoder states");
  const Tensor q = reshape(matmul(query, model.attention_query), {a});
  const Tensor loc =
      matmul(conv1d_sequence(reshape(cumulative_weights, {l, 1}), model.location_conv), model.attention_location);
  const Tensor energies = matmul(tanh(add(add(processed_memory, loc), q)), model.attention_vector);
  AttentionResult r;
  r.weights = softmax(reshape(energies, {1, l}), 1);
  r.context = matmul(r.weights, memory);
  return r;
}

Tensor condition_style(const TtsModel& model, const Tensor& encoder_states, const Tensor& psi) {
  if (!model.style_projection) throw std::invalid_argument("condition_style: model has no style projection");
  const Tensor style = (*model.style_projection)(mean_rows(psi));
  const std::size_t l = encoder_states.dim(0);
  return concat({encoder_states, matmul(Tensor::full({l, 1}, 1.0), style)}, 1);
}

namespace {

Tensor prenet(const TtsModel& model, const Tensor& frame, std::mt19937_64& rng, bool active) {
  const double rate = model.config.prenet_dropout;
  Tensor x = dropout(relu(model.prenet1(frame)), rate, rng, active);
  return dropout(relu(model.prenet2(x)), rate, rng, active);
}

Tensor postnet(TtsModel& model, const Tensor& mel, bool training) {
  Tensor x = mel;
  const std::size_t n = model.postnet_convs.size();
  for (std::size_t i = 0; i < n; ++i) {
    x = model.postnet_norms[i](conv1d_sequence(x, model.postnet_convs[i]), training);
    if (i + 1 < n) x = tanh(x);
  }
  return x;
}

struct DecoderState {
  LstmState attention_rnn, decoder_rnn;
  Tensor cumulative, context;
};

struct StepOutput {
  Tensor frame, stop, weights;
};

StepOutput decoder_step(const TtsModel& model, const Tensor& prev_frame, const Tensor& memory,
                        const Tensor& processed, DecoderState& s, std::mt19937_64& rng, bool dropout_active) {
  const Tensor p = prenet(model, prev_frame, rng, dropout_active);
  s.attention_rnn = lstm_cell(concat({p, s.context}, 1), s.attention_rnn, model.attention_rnn);
  const AttentionResult att = attention_step(model, s.attention_rnn.h, memory, processed, s.cumulative);
  s.cumulative = add(s.cumulative, att.weights);
  s.context = att.context;
  s.decoder_rnn = lstm_cell(concat({s.attention_rnn.h, s.context}, 1), s.decoder_rnn, model.decoder_rnn);
  const Tensor hc = concat({s.decoder_rnn.h, s.context}, 1);
  return {model.mel_projection(hc), model.stop_projection(hc), att.weights};
}

DecoderState initial_state(const TtsModel& model, std::size_t length) {
  const std::size_t h = model.config.decoder_lstm;
  return {lstm_zero_state(1, h), lstm_zero_state(1, h), Tensor::zeros({1, length}),
          Tensor::zeros({1, model.config.memory_dim()})};
}

void check_memory(const TtsModel& model, const Tensor& memory, const char* who) {
  if (memory.rank() != 2 || memory.dim(1) != model.config.memory_dim() || memory.dim(0) == 0)
    throw ShapeError(std::string(who) + ": memory must be L × " + std::to_string(model.config.memory_dim()) +
                     ", got " + shape_str(memory.shape()));
}

}  // namespace

DecoderOutput decode_teacher_forced(TtsModel& model, const Tensor& memory, const Tensor& target,
                                    const RunOptions& options) {
  check_memory(model, memory, "decode_teacher_forced");
  if (target.rank() != 2 || target.dim(1) != model.config.n_mels || target.dim(0) == 0)
    throw ShapeError("decode_teacher_forced: target must be T × " + std::to_string(model.config.n_mels) + ", got " +
                     shape_str(target.shape()));
  const std::size_t steps = target.dim(0);
  std::mt19937_64 rng(derive_seed(options.dropout_seed, 0, 2));
  const bool drop = options.training || model.config.prenet_dropout_at_inference;
  const Tensor processed = matmul(memory, model.attention_memory);
  DecoderState state = initial_state(model, memory.dim(0));
  std::vector<Tensor> frames, stops, weights;
  Tensor prev = Tensor::zeros({1, model.config.n_mels});
  for (std::size_t t = 0; t < steps; ++t) {
    if (t > 0) prev = slice(target, 0, t - 1, 1);
    StepOutput o = decoder_step(model, prev, memory, processed, state, rng, drop);
    frames.push_back(o.frame);
    stops.push_back(o.stop);
    weights.push_back(o.weights);
  }
  DecoderOutput out;
  out.pre_mel = steps == 1 ? frames[0] : concat(frames, 0);
  out.stop_logits = steps == 1 ? stops[0] : concat(stops, 0);
  out.attention = steps == 1 ? weights[0] : concat(weights, 0);
  out.residual = postnet(model, out.pre_mel, options.training);
  out.post_mel = add(out.pre_mel, out.residual);
  return out;
}

SynthesisResult infer(TtsModel& model, const Tensor& memory, std::size_t max_steps, std::uint64_t dropout_seed) {
  check_memory(model, memory, "infer");
  NoGradGuard guard;
  if (max_steps == 0) max_steps = model.config.max_decoder_steps;
  std::mt19937_64 rng(derive_seed(dropout_seed, 0, 2));
  const bool drop = model.config.prenet_dropout_at_inference;
  const Tensor processed = matmul(memory, model.attention_memory);
  DecoderState state = initial_state(model, memory.dim(0));
  std::vector<Tensor> frames, weights;
  SynthesisResult r;
  Tensor prev = Tensor::zeros({1, model.config.n_mels});
  for (std::size_t t = 0; t < max_steps; ++t) {
    StepOutput o = decoder_step(model, prev, memory, processed, state, rng, drop);
    frames.push_back(o.frame);
    weights.push_back(o.weights);
    const double p = 1.0 / (1.0 + std::exp(-o.stop.item()));
    r.stop_probs.push_back(p);
    prev = o.frame;
    if (p > model.config.stop_threshold) {
      r.halt = HaltReason::StopToken;
      break;
    }
  }
  const Tensor pre = frames.size() == 1 ? frames[0] : concat(frames, 0);
  const Tensor post = add(pre, postnet(model, pre, false));
  r.pre_mel = Matrix::from_tensor(pre);
  r.post_mel = Matrix::from_tensor(post);
  r.attention = Matrix::from_tensor(weights.size() == 1 ? weights[0] : concat(weights, 0));
  return r;
}

Tensor build_memory(TtsModel& model, const std::vector<std::size_t>& ids, const Tensor* style_psi,
                    const RunOptions& options) {
  Tensor states = encode_text(model, ids, options);
  if (model.config.mode != Mode::ST) return states;
  if (!style_psi) throw std::invalid_argument("ST synthesis needs a reference utterance for the style features");
  return condition_style(model, states, *style_psi);
}

}  // namespace pltts::tts
