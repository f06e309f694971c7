#include "pltts/ser/ser.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <random>
#include <stdexcept>

#include "pltts/numerics/checkpoint.hpp"

namespace pltts::ser {

int label_index(const std::string& label) {
  for (std::size_t i = 0; i < kEmotionLabels.size(); ++i)
    if (label == kEmotionLabels[i]) return static_cast<int>(i);
  throw std::invalid_argument("ser: label '" + label + "' is not one of happy, angry, sad, neutral");
}

SerConfig SerConfig::paper() { return SerConfig{}; }

SerConfig SerConfig::desk() {
  SerConfig c;
  c.segment_frames = 80;
  c.conv_maps = {8, 16};
  c.projection = 16;
  c.style_steps = 40;
  c.blstm_hidden = 16;
  c.fc_units = 16;
  return c;
}

void SerConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw std::invalid_argument(std::string("ser config: ") + name + " must be positive");
  };
  positive(segment_frames, "segment_frames");
  positive(max_segments, "max_segments");
  positive(n_mels, "n_mels");
  positive(projection, "projection");
  positive(style_steps, "style_steps");
  positive(blstm_hidden, "blstm_hidden");
  positive(fc_units, "fc_units");
  positive(classes, "classes");
  if (conv_maps.empty()) throw std::invalid_argument("ser config: at least one conv layer is required");
  for (auto k : conv_maps) positive(k, "conv_maps entry");
  if (kernel_time % 2 == 0 || kernel_freq % 2 == 0)
    throw std::invalid_argument("ser config: kernel extents must be odd");
}

std::string SerConfig::to_json() const {
  nlohmann::json j;
  j["segment_frames"] = segment_frames;
  j["max_segments"] = max_segments;
  j["n_mels"] = n_mels;
  j["conv_maps"] = conv_maps;
  j["kernel_time"] = kernel_time;
  j["kernel_freq"] = kernel_freq;
  j["projection"] = projection;
  j["style_steps"] = style_steps;
  j["blstm_hidden"] = blstm_hidden;
  j["fc_units"] = fc_units;
  j["classes"] = classes;
  return j.dump();
}

SerConfig SerConfig::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  SerConfig c;
  c.segment_frames = j.value("segment_frames", c.segment_frames);
  c.max_segments = j.value("max_segments", c.max_segments);
  c.n_mels = j.value("n_mels", c.n_mels);
  c.conv_maps = j.value("conv_maps", c.conv_maps);
  c.kernel_time = j.value("kernel_time", c.kernel_time);
  c.kernel_freq = j.value("kernel_freq", c.kernel_freq);
  c.projection = j.value("projection", c.projection);
  c.style_steps = j.value("style_steps", c.style_steps);
  c.blstm_hidden = j.value("blstm_hidden", c.blstm_hidden);
  c.fc_units = j.value("fc_units", c.fc_units);
  c.classes = j.value("classes", c.classes);
  c.validate();
  return c;
}

StyleLevel parse_style_level(const std::string& text) {
  std::string t;
  for (char ch : text) t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  if (t == "l" || t == "low") return StyleLevel::Low;
  if (t == "m" || t == "middle") return StyleLevel::Middle;
  if (t == "h" || t == "high") return StyleLevel::High;
  if (t == "lmh" || t == "all") return StyleLevel::All;
  throw std::invalid_argument("invalid style level '" + text + "' (expected L, M, H or LMH)");
}

std::string style_level_name(StyleLevel level) {
  switch (level) {
    case StyleLevel::Low: return "L";
    case StyleLevel::Middle: return "M";
    case StyleLevel::High: return "H";
    case StyleLevel::All: return "LMH";
  }
  return "?";
}

SerModel SerModel::create(const SerConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  SerModel m;
  m.config = config;
  std::size_t in = 3;
  for (auto k : config.conv_maps) {
    m.convs.push_back(Conv2d::create(in, k, config.kernel_time, config.kernel_freq, rng));
    in = k;
  }
  const std::size_t d = config.projection, h = config.blstm_hidden;
  m.projection = Linear::create(config.conv_maps.back() * config.pooled_freq(), d, rng);
  m.blstm_forward = LstmLayer::create(d, h, rng);
  m.blstm_backward = LstmLayer::create(d, h, rng);
  m.middle = Linear::create(2 * h, d, rng);
  m.attention = Linear::create(d, d, rng);
  m.attention_vector = glorot_uniform({d, 1}, d, 1, rng);
  m.fc = Linear::create(d, config.fc_units, rng);
  m.fc_norm = BatchNorm::create(config.fc_units);
  m.output = Linear::create(config.fc_units, config.classes, rng);
  m.feature_stats.mean.assign(config.n_mels, 0.0);
  m.feature_stats.std.assign(config.n_mels, 1.0);
  return m;
}

TensorList SerModel::params() const {
  TensorList out;
  for (std::size_t i = 0; i < convs.size(); ++i) convs[i].collect("ser.conv" + std::to_string(i), out);
  projection.collect("ser.projection", out);
  blstm_forward.collect("ser.blstm_fw", out);
  blstm_backward.collect("ser.blstm_bw", out);
  middle.collect("ser.middle", out);
  attention.collect("ser.attention", out);
  out.push_back({"ser.attention.vector", attention_vector});
  fc.collect("ser.fc", out);
  fc_norm.collect("ser.fc_norm", out);
  output.collect("ser.output", out);
  return out;
}

TensorList SerModel::buffers() {
  TensorList out;
  fc_norm.collect_buffers("ser.fc_norm", out);
  return out;
}

void SerModel::set_frozen(bool frozen) const { set_trainable(params(), !frozen); }

void SerModel::write_into(Checkpoint& ck) {
  ck.meta["ser_config"] = config.to_json();
  ck.add_all(params());
  ck.add_all(buffers());
  const std::size_t f = feature_stats.mean.size();
  ck.add("ser.stats.mel_mean", Tensor({f}, feature_stats.mean));
  ck.add("ser.stats.mel_std", Tensor({f}, feature_stats.std));
}

SerModel SerModel::read_from(const Checkpoint& ck) {
  SerModel m = create(SerConfig::from_json(ck.meta_value("ser_config")), 0);
  ck.restore_into(m.params());
  ck.restore_into(m.buffers());
  auto mean = ck.get("ser.stats.mel_mean").data();
  auto sd = ck.get("ser.stats.mel_std").data();
  m.feature_stats.mean.assign(mean.begin(), mean.end());
  m.feature_stats.std.assign(sd.begin(), sd.end());
  return m;
}

void SerModel::save(const std::filesystem::path& path, const std::map<std::string, std::string>& meta) {
  Checkpoint ck;
  ck.meta = meta;
  ck.meta["kind"] = "ser";
  write_into(ck);
  ck.save(path);
}

SerModel SerModel::load(const std::filesystem::path& path) {
  const Checkpoint ck = Checkpoint::load(path);
  if (!ck.meta.count("kind") || ck.meta.at("kind") != "ser")
    throw std::runtime_error("ser: '" + path.string() + "' is not an SER checkpoint");
  return read_from(ck);
}

Tensor delta_stack(const Tensor& features) {
  if (features.rank() != 2) throw ShapeError("delta_stack: expected T × F features, got " + shape_str(features.shape()));
  const std::size_t t = features.dim(0), f = features.dim(1);
  const Tensor d = dsp::delta_operator(t).to_tensor();
  const Tensor d1 = matmul(d, features);
  const Tensor d2 = matmul(d, d1);
  return concat({reshape(features, {1, t, f}), reshape(d1, {1, t, f}), reshape(d2, {1, t, f})}, 0);
}

Tensor segment_utterance(const Tensor& stack, const SerConfig& config) {
  if (stack.rank() != 3 || stack.dim(0) != 3)
    throw ShapeError("segment_utterance: expected a 3 × T × F stack, got " + shape_str(stack.shape()));
  const std::size_t t = stack.dim(1), f = stack.dim(2), len = config.segment_frames;
  if (t == 0) throw ShapeError("segment_utterance: empty utterance");
  const std::size_t count = std::min((t + len - 1) / len, config.max_segments);
  std::vector<Tensor> segments;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t start = i * len, take = std::min(len, t - start);
    Tensor seg = take == t && take == len ? stack : slice(stack, 1, start, take);
    if (take < len) seg = concat({seg, Tensor::zeros({3, len - take, f})}, 1);
    segments.push_back(reshape(seg, {1, 3, len, f}));
  }
  return segments.size() == 1 ? segments[0] : concat(segments, 0);
}

namespace {

Tensor fit_rows(const Tensor& rows, std::size_t target) {
  const std::size_t r = rows.dim(0);
  if (r == target) return rows;
  if (r > target) return slice(rows, 0, (r - target) / 2, target);
  return concat({rows, Tensor::zeros({target - r, rows.dim(1)})}, 0);
}

}  // namespace

SerOutput ser_forward(SerModel& model, const std::vector<Tensor>& examples, bool training) {
  const SerConfig& cfg = model.config;
  if (examples.empty()) throw ShapeError("ser_forward: no examples");
  std::vector<std::size_t> counts;
  for (const auto& e : examples) {
    if (e.rank() != 4 || e.dim(1) != 3 || e.dim(2) != cfg.segment_frames || e.dim(3) != cfg.n_mels)
      throw ShapeError("ser_forward: input stage expects N × 3 × " + std::to_string(cfg.segment_frames) + " × " +
                       std::to_string(cfg.n_mels) + " segments, got " + shape_str(e.shape()));
    counts.push_back(e.dim(0));
  }
  const std::size_t batch = examples.size(), s = cfg.style_steps;

  Tensor x = batch == 1 ? examples[0] : concat(examples, 0);
  for (std::size_t i = 0; i < model.convs.size(); ++i) {
    x = relu(model.convs[i](x));
    if (i == 0) x = maxpool2d(x);
  }
  const std::size_t slices = x.dim(2);
  const Tensor rows = model.projection(flatten_time_slices(x));

  std::vector<Tensor> lows;
  std::size_t offset = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t n = counts[b] * slices;
    lows.push_back(fit_rows(slice(rows, 0, offset, n), s));
    offset += n;
  }
  SerOutput out;
  out.batch = batch;
  out.low = batch == 1 ? lows[0] : concat(lows, 0);

  std::vector<std::size_t> to_time(batch * s), to_batch(batch * s);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < s; ++t) {
      to_time[t * batch + b] = b * s + t;
      to_batch[b * s + t] = t * batch + b;
    }
  const Tensor seq = batch == 1 ? out.low : permute_rows(out.low, to_time);
  const Tensor mid = model.middle(bilstm_sequence(seq, model.blstm_forward, model.blstm_backward, batch));
  out.middle = batch == 1 ? mid : permute_rows(mid, to_batch);

  const Tensor scores = matmul(tanh(model.attention(out.middle)), model.attention_vector);
  out.attention_weights = softmax(reshape(scores, {batch, s}), 1);
  out.high = mul_rows(out.middle, reshape(out.attention_weights, {batch * s}));

  std::vector<double> avg(batch * batch * s, 0.0);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < s; ++t) avg[b * batch * s + b * s + t] = 1.0 / static_cast<double>(s);
  const Tensor pooled = matmul(Tensor({batch, batch * s}, std::move(avg)), out.high);
  const Tensor hidden = relu(model.fc_norm(model.fc(pooled), training));
  out.logits = model.output(hidden);
  return out;
}

const Tensor& StyleTensors::at(StyleLevel level) const {
  switch (level) {
    case StyleLevel::Low: return low;
    case StyleLevel::Middle: return middle;
    case StyleLevel::High: return high;
    case StyleLevel::All: break;
  }
  throw std::invalid_argument("StyleTensors::at: pick a single level");
}

Tensor utterance_segments(const SerModel& model, const Tensor& raw_log_mel) {
  const SerConfig& cfg = model.config;
  if (raw_log_mel.rank() != 2 || raw_log_mel.dim(1) != cfg.n_mels)
    throw ShapeError("utterance_segments: expected T × " + std::to_string(cfg.n_mels) + " log-mel, got " +
                     shape_str(raw_log_mel.shape()));
  const auto& st = model.feature_stats;
  if (st.mean.size() != cfg.n_mels || st.std.size() != cfg.n_mels)
    throw ShapeError("utterance_segments: model normalization stats do not match " + std::to_string(cfg.n_mels) +
                     " channels");
  std::vector<double> inv(cfg.n_mels);
  for (std::size_t c = 0; c < cfg.n_mels; ++c) inv[c] = 1.0 / std::max(st.std[c], dsp::NormStats::kStdFloor);
  const Tensor normalized = mul(sub(raw_log_mel, Tensor({cfg.n_mels}, st.mean)), Tensor({cfg.n_mels}, inv));
  return segment_utterance(delta_stack(normalized), cfg);
}

StyleTensors style_features(SerModel& model, const Tensor& raw_log_mel) {
  const Tensor segments = utterance_segments(model, raw_log_mel);
  SerOutput o = ser_forward(model, {segments}, false);
  return {o.low, o.middle, o.high, o.logits};
}

std::vector<StyleFeatures> extract_style(SerModel& model, const dsp::MelSpectrogram& mel, StyleLevel level,
                                         const std::string& source_id) {
  NoGradGuard guard;
  const Matrix raw = mel.normalization ? dsp::denormalize(mel.frames, *mel.normalization) : mel.frames;
  const StyleTensors psi = style_features(model, raw.to_tensor());
  std::vector<StyleFeatures> out;
  auto emit = [&](StyleLevel l) { out.push_back({l, Matrix::from_tensor(psi.at(l)), source_id}); };
  if (level == StyleLevel::All) {
    emit(StyleLevel::Low);
    emit(StyleLevel::Middle);
    emit(StyleLevel::High);
  } else {
    emit(level);
  }
  return out;
}

}  // namespace pltts::ser
