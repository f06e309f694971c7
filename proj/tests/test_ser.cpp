#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <random>

#include "pltts/dsp/features.hpp"
#include "pltts/numerics/gradcheck.hpp"
#include "pltts/pipeline/synthetic.hpp"
#include "pltts/ser/ser.hpp"
#include "pltts/ser/train.hpp"

using namespace pltts;
using namespace pltts::ser;

namespace {

SerConfig micro_config() {
  SerConfig c;
  c.segment_frames = 6;
  c.max_segments = 3;
  c.n_mels = 4;
  c.conv_maps = {2, 3};
  c.projection = 3;
  c.style_steps = 4;
  c.blstm_hidden = 2;
  c.fc_units = 3;
  return c;
}

Tensor random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, bool grad = false, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  std::vector<double> v(r * c);
  for (auto& x : v) x = g(rng);
  return Tensor({r, c}, std::move(v), grad);
}

std::vector<SerExample> ser_examples(std::uint64_t seed, int per_class) {
  std::mt19937_64 rng(seed);
  std::vector<SerExample> out;
  for (int i = 0; i < per_class; ++i)
    for (int label = 0; label < 4; ++label) {
      const auto wave = pipeline::synth_ser_utterance(label, rng);
      out.push_back({"u" + std::to_string(out.size()), dsp::mel_spectrogram(wave).frames, label});
    }
  return out;
}

double psi_distance(const Matrix& a, const Matrix& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) s += (a.values[i] - b.values[i]) * (a.values[i] - b.values[i]);
  return std::sqrt(s);
}

}  // namespace

TEST(Segment, NineSecondsGivesThreeFullSegments) {
  const auto cfg = SerConfig::paper();
  const auto seg = segment_utterance(Tensor::full({3, 720, 40}, 1.0), cfg);
  EXPECT_EQ(seg.shape(), (Shape{3, 3, 240, 40}));
  for (double v : seg.data()) EXPECT_EQ(v, 1.0);
}

TEST(Segment, TwoSecondsIsPaddedWithTrailingZeros) {
  const auto cfg = SerConfig::paper();
  const auto seg = segment_utterance(Tensor::full({3, 160, 40}, 2.0), cfg);
  ASSERT_EQ(seg.shape(), (Shape{1, 3, 240, 40}));
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t t = 0; t < 240; ++t)
      for (std::size_t f = 0; f < 40; ++f)
        EXPECT_EQ(seg.data()[(c * 240 + t) * 40 + f], t < 160 ? 2.0 : 0.0);
}

TEST(Segment, ExactlyThreeSecondsHasNoPadding) {
  const auto seg = segment_utterance(Tensor::full({3, 240, 40}, 3.0), SerConfig::paper());
  ASSERT_EQ(seg.shape(), (Shape{1, 3, 240, 40}));
  for (double v : seg.data()) EXPECT_EQ(v, 3.0);
}

TEST(Segment, LongUtterancesKeepTheFirstSegments) {
  auto cfg = SerConfig::desk();
  std::vector<double> v(3 * 900 * 40);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t t = 0; t < 900; ++t)
      for (std::size_t f = 0; f < 40; ++f) v[(c * 900 + t) * 40 + f] = static_cast<double>(t);
  const auto seg = segment_utterance(Tensor({3, 900, 40}, v), cfg);
  ASSERT_EQ(seg.shape(), (Shape{8, 3, 80, 40}));
  EXPECT_EQ(seg.data()[seg.numel() - 1], 639.0);
}

TEST(Ser, AllLevelsShareShapeAndAttentionIsNormalised) {
  auto model = SerModel::create(SerConfig::desk(), 3);
  std::mt19937_64 rng(1);
  const auto psi = style_features(model, random_matrix(230, 40, rng));
  EXPECT_EQ(psi.low.shape(), (Shape{40, 16}));
  EXPECT_EQ(psi.middle.shape(), psi.low.shape());
  EXPECT_EQ(psi.high.shape(), psi.low.shape());

  auto segs = utterance_segments(model, random_matrix(100, 40, rng));
  auto segs2 = utterance_segments(model, random_matrix(300, 40, rng));
  const auto out = ser_forward(model, {segs, segs2}, false);
  ASSERT_EQ(out.attention_weights.shape(), (Shape{2, 40}));
  for (std::size_t b = 0; b < 2; ++b) {
    double s = 0.0;
    for (std::size_t t = 0; t < 40; ++t) s += out.attention_weights.at(b, t);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  const auto probs = softmax(out.logits, 1);
  for (std::size_t b = 0; b < 2; ++b) {
    double s = 0.0;
    for (std::size_t c = 0; c < 4; ++c) {
      EXPECT_TRUE(std::isfinite(out.logits.at(b, c)));
      s += probs.at(b, c);
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Ser, BatchedForwardMatchesSingleExamples) {
  auto model = SerModel::create(SerConfig::desk(), 4);
  std::mt19937_64 rng(2);
  auto a = utterance_segments(model, random_matrix(90, 40, rng));
  auto b = utterance_segments(model, random_matrix(170, 40, rng));
  const auto both = ser_forward(model, {a, b}, false);
  const auto only_b = ser_forward(model, {b}, false);
  for (std::size_t i = 0; i < only_b.high.numel(); ++i)
    EXPECT_NEAR(both.high.data()[40 * 16 + i], only_b.high.data()[i], 1e-12);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(both.logits.at(1, c), only_b.logits.at(0, c), 1e-12);
}

TEST(Ser, PaperProfileShapes) {
  auto model = SerModel::create(SerConfig::paper(), 5);
  NoGradGuard guard;
  std::mt19937_64 rng(3);
  const auto psi = style_features(model, random_matrix(200, 40, rng));
  EXPECT_EQ(psi.low.shape(), (Shape{150, 200}));
  EXPECT_EQ(psi.middle.shape(), (Shape{150, 200}));
  EXPECT_EQ(psi.high.shape(), (Shape{150, 200}));
  EXPECT_EQ(psi.logits.shape(), (Shape{1, 4}));
}

TEST(Ser, ZeroInputAndZeroBiasesGiveZeroLogits) {
  auto model = SerModel::create(SerConfig::desk(), 6);
  for (auto& p : model.params())
    if (p.name.ends_with(".bias") || p.name.ends_with(".beta")) {
      Tensor t = p.tensor;
      for (auto& v : t.mutable_data()) v = 0.0;
    }
  const auto out = ser_forward(model, {Tensor::zeros({2, 3, 80, 40})}, false);
  for (double v : out.logits.data()) EXPECT_EQ(v, 0.0);
}

TEST(Ser, ShapeErrorsNameTheStage) {
  auto model = SerModel::create(SerConfig::desk(), 7);
  try {
    ser_forward(model, {Tensor::zeros({1, 3, 79, 40})}, false);
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("input stage"), std::string::npos);
  }
  EXPECT_THROW(style_features(model, Tensor::zeros({50, 39})), ShapeError);
}

TEST(Ser, LabelsAndLevels) {
  EXPECT_EQ(label_index("sad"), 2);
  EXPECT_THROW(label_index("bored"), std::invalid_argument);
  EXPECT_EQ(parse_style_level("L"), StyleLevel::Low);
  EXPECT_EQ(parse_style_level("lmh"), StyleLevel::All);
  EXPECT_EQ(parse_style_level("High"), StyleLevel::High);
  EXPECT_THROW(parse_style_level("X"), std::invalid_argument);
}

TEST(Ser, ExtractStyleIsDeterministicAndCoversLevels) {
  auto model = SerModel::create(SerConfig::desk(), 8);
  std::mt19937_64 rng(4);
  dsp::MelSpectrogram mel{Matrix::from_tensor(random_matrix(150, 40, rng)), std::nullopt};
  const auto a = extract_style(model, mel, StyleLevel::All, "x");
  const auto b = extract_style(model, mel, StyleLevel::All, "x");
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(a[i].matrix, b[i].matrix);
  EXPECT_EQ(a[1].level, StyleLevel::Middle);
  const auto single = extract_style(model, mel, StyleLevel::High);
  ASSERT_EQ(single.size(), 1u);
  EXPECT_EQ(single[0].matrix, a[2].matrix);
}

TEST(Ser, NormalizedInputIsMappedBackToRaw) {
  auto model = SerModel::create(SerConfig::desk(), 9);
  std::mt19937_64 rng(5);
  const Matrix raw = Matrix::from_tensor(random_matrix(120, 40, rng, false, 2.0));
  const auto stats = dsp::compute_norm_stats({raw});
  const auto a = extract_style(model, {raw, std::nullopt}, StyleLevel::Low);
  const auto b = extract_style(model, dsp::normalize(dsp::MelSpectrogram{raw, std::nullopt}, stats), StyleLevel::Low);
  for (std::size_t i = 0; i < a[0].matrix.values.size(); ++i)
    EXPECT_NEAR(a[0].matrix.values[i], b[0].matrix.values[i], 1e-9);
}

TEST(Ser, InvariantToZeroFramesInsideTheFinalSegment) {
  auto model = SerModel::create(SerConfig::desk(), 10);
  std::mt19937_64 rng(6);
  NoGradGuard guard;
  const Tensor stack = delta_stack(random_matrix(130, 40, rng));
  const Tensor padded = concat({stack, Tensor::zeros({3, 25, 40})}, 1);
  const auto a = ser_forward(model, {segment_utterance(stack, model.config)}, false);
  const auto b = ser_forward(model, {segment_utterance(padded, model.config)}, false);
  EXPECT_TRUE(std::equal(a.low.data().begin(), a.low.data().end(), b.low.data().begin()));
  EXPECT_TRUE(std::equal(a.high.data().begin(), a.high.data().end(), b.high.data().begin()));
}

TEST(Ser, FrozenModelOnlyPassesGradientToInput) {
  auto model = SerModel::create(SerConfig::desk(), 11);
  model.set_frozen(true);
  std::mt19937_64 rng(7);
  Tensor mel = random_matrix(100, 40, rng, true);
  const Tensor target = random_matrix(40, 16, rng);
  tape::reset();
  backward(mse(style_features(model, mel).low, target));
  for (const auto& p : model.params()) {
    EXPECT_FALSE(p.tensor.requires_grad()) << p.name;
    if (p.tensor.has_grad())
      for (double g : p.tensor.grad()) EXPECT_EQ(g, 0.0) << p.name;
  }
  ASSERT_TRUE(mel.has_grad());
  double norm = 0.0;
  for (double g : mel.grad()) norm += g * g;
  EXPECT_GT(norm, 0.0);
}

TEST(Ser, CompositeGradientsMatchFiniteDifferences) {
  auto model = SerModel::create(micro_config(), 12);
  std::mt19937_64 rng(8);
  model.feature_stats.mean = {0.1, -0.2, 0.3, 0.0};
  model.feature_stats.std = {1.5, 0.7, 1.0, 2.0};
  Tensor mel = random_matrix(9, 4, rng, true);
  const Tensor target = random_matrix(4, 3, rng);
  auto f = [&] {
    const auto psi = style_features(model, mel);
    return add(add(mse(psi.low, target), mse(psi.middle, target)),
               add(mse(psi.high, target), sum(psi.logits)));
  };
  TensorList wrt = model.params();
  wrt.push_back({"mel", mel});
  const auto report = gradient_check(f, wrt);
  EXPECT_LT(report.max_rel_error, 1e-4) << report.worst_tensor << "[" << report.worst_index << "]";
}

TEST(Ser, TrainingModeGradientsMatchFiniteDifferences) {
  auto model = SerModel::create(micro_config(), 13);
  std::mt19937_64 rng(9);
  std::vector<Tensor> xs;
  for (int i = 0; i < 3; ++i) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> v(1 * 3 * 6 * 4);
    for (auto& x : v) x = g(rng);
    xs.push_back(Tensor({1, 3, 6, 4}, v));
  }
  auto f = [&] { return softmax_cross_entropy(ser_forward(model, xs, true).logits, {0, 2, 3}); };
  const auto report = gradient_check(f, model.params());
  EXPECT_LT(report.max_rel_error, 1e-4) << report.worst_tensor << "[" << report.worst_index << "]";
}

TEST(Ser, CheckpointRoundTrip) {
  auto model = SerModel::create(SerConfig::desk(), 14);
  model.feature_stats.mean.assign(40, 0.5);
  model.feature_stats.std.assign(40, 2.0);
  const auto path = std::filesystem::temp_directory_path() / "pltts_ser_roundtrip.ckpt";
  model.save(path, {{"note", "x"}});
  auto loaded = SerModel::load(path);
  std::mt19937_64 rng(10);
  dsp::MelSpectrogram mel{Matrix::from_tensor(random_matrix(100, 40, rng)), std::nullopt};
  EXPECT_EQ(extract_style(model, mel, StyleLevel::High)[0].matrix, extract_style(loaded, mel, StyleLevel::High)[0].matrix);
}

TEST(SerTraining, SingleClassCorpusIsFitExactly) {
  auto all = ser_examples(20, 3);
  std::vector<SerExample> sad;
  for (auto& e : all)
    if (e.label == 2) sad.push_back(e);
  auto model = SerModel::create(SerConfig::desk(), 15);
  SerTrainOptions opt;
  opt.steps = 150;
  opt.batch = 8;
  opt.learning_rate = 3e-3;
  const auto report = train_ser(model, sad, {}, opt);
  EXPECT_EQ(report.train_accuracy, 1.0);
  EXPECT_LT(report.final_loss, 0.05);
}

TEST(SerTraining, RejectsLabelsOutsideTheClassSet) {
  auto model = SerModel::create(SerConfig::desk(), 16);
  std::vector<SerExample> bad = {{"a", Matrix(90, 40), 7}};
  EXPECT_THROW(train_ser(model, bad, {}, {}), std::invalid_argument);
}

