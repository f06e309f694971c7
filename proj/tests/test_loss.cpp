#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pltts/loss/loss.hpp"
#include "pltts/numerics/gradcheck.hpp"

using namespace pltts;
using namespace pltts::loss;
using ser::StyleLevel;

namespace {

ser::SerConfig micro_ser() {
  ser::SerConfig c;
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

ser::SerModel micro_model(std::uint64_t seed) {
  auto m = ser::SerModel::create(micro_ser(), seed);
  m.feature_stats.mean = {-3.0, -2.5, -4.0, -3.5};
  m.feature_stats.std = {1.2, 0.8, 1.5, 1.0};
  return m;
}

dsp::NormStats tts_stats() {
  dsp::NormStats s;
  s.mean = {-2.8, -2.0, -4.4, -3.0};
  s.std = {1.1, 0.9, 1.3, 0.7};
  return s;
}

Tensor random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, bool grad = false) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(r * c);
  for (auto& x : v) x = g(rng);
  return Tensor({r, c}, std::move(v), grad);
}

Tensor perfect_stop(std::size_t t) {
  std::vector<double> v(t, -40.0);
  v.back() = 40.0;
  return Tensor({t, 1}, std::move(v));
}

bool same_bits(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

}  // namespace

TEST(FrameLoss, IdenticalOutputsGiveZero) {
  std::mt19937_64 rng(1);
  const auto y = random_matrix(12, 40, rng);
  const auto f = loss_frame(y, y, y, perfect_stop(12));
  EXPECT_EQ(f.mel_pre.item(), 0.0);
  EXPECT_EQ(f.mel_post.item(), 0.0);
  EXPECT_LT(f.total.item(), 1e-12);
}

TEST(FrameLoss, MeanOverFramesAndChannels) {
  const Tensor y({1, 2}, {0.0, 0.0});
  const Tensor g({1, 2}, {1.0, -1.0});
  EXPECT_DOUBLE_EQ(mel_mse(y, g).item(), 1.0);
  const Tensor y2({2, 2}, {0.0, 0.0, 0.0, 0.0});
  const Tensor g2({2, 2}, {1.0, -1.0, 1.0, -1.0});
  EXPECT_DOUBLE_EQ(mel_mse(y2, g2).item(), 1.0);
  const auto f = loss_frame(y, g, g, Tensor());
  EXPECT_DOUBLE_EQ(f.total.item(), 2.0);
  EXPECT_EQ(f.stop.item(), 0.0);
}

TEST(FrameLoss, ShapeMismatchIsReported) {
  std::mt19937_64 rng(2);
  try {
    loss_frame(random_matrix(5, 4, rng), random_matrix(6, 4, rng), random_matrix(6, 4, rng), Tensor());
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("5"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("6"), std::string::npos) << e.what();
  }
  EXPECT_THROW(loss_frame(random_matrix(5, 4, rng), random_matrix(5, 4, rng), random_matrix(5, 4, rng),
                          perfect_stop(4)),
               ShapeError);
}

TEST(FrameLoss, StopTargetMarksTheLastFrame) {
  const Tensor logits({3, 1}, {0.0, 0.0, 0.0});
  EXPECT_NEAR(stop_bce(logits).item(), std::log(2.0), 1e-15);
  const Tensor sure({3, 1}, {-40.0, -40.0, 40.0});
  EXPECT_LT(stop_bce(sure).item(), 1e-15);
  const Tensor wrong({3, 1}, {40.0, -40.0, -40.0});
  EXPECT_NEAR(stop_bce(wrong).item(), 80.0 / 3.0, 1e-9);
}

TEST(StyleAdapter, DeterministicAndShaped) {
  auto model = micro_model(3);
  std::mt19937_64 rng(3);
  const auto y = random_matrix(10, 4, rng);
  const auto a = style_adapter(y, tts_stats(), model);
  const auto b = style_adapter(y, tts_stats(), model);
  EXPECT_EQ(a.shape(), (Shape{2, 3, 6, 4}));
  EXPECT_TRUE(same_bits(a, b));
  EXPECT_THROW(style_adapter(random_matrix(10, 5, rng), tts_stats(), model), ShapeError);
}

TEST(StyleAdapter, MatchesExtractionOnNormalizedInput) {
  auto model = micro_model(4);
  std::mt19937_64 rng(4);
  const auto y = random_matrix(14, 4, rng);
  dsp::MelSpectrogram mel;
  mel.frames = Matrix::from_tensor(y);
  mel.normalization = tts_stats();
  for (auto level : {StyleLevel::Low, StyleLevel::Middle, StyleLevel::High}) {
    const auto extracted = ser::extract_style(model, mel, level);
    ASSERT_EQ(extracted.size(), 1u);
    const auto through = style_of(model, y, tts_stats()).at(level);
    EXPECT_TRUE(same_bits(extracted[0].matrix.to_tensor(), through)) << ser::style_level_name(level);
  }
}

TEST(StyleAdapter, GradientMatchesFiniteDifferences) {
  auto model = micro_model(5);
  std::mt19937_64 rng(5);
  Tensor y = random_matrix(9, 4, rng, true);
  const auto target = random_matrix(2 * 3 * 6 * 4, 1, rng);
  auto f = [&] { return sum(mul(reshape(style_adapter(y, tts_stats(), model), {144, 1}), target)); };
  const auto report = gradient_check(f, {{"y", y}});
  EXPECT_LT(report.max_rel_error, 1e-4);
}

TEST(StyleLoss, ZeroForIdenticalMels) {
  auto model = micro_model(6);
  std::mt19937_64 rng(6);
  const auto y = random_matrix(11, 4, rng);
  for (auto level : {StyleLevel::Low, StyleLevel::Middle, StyleLevel::High, StyleLevel::All})
    EXPECT_EQ(loss_style(y, y, &model, tts_stats(), level).item(), 0.0);
}

TEST(StyleLoss, AllLevelIsTheSumOfTheThree) {
  auto model = micro_model(7);
  std::mt19937_64 rng(7);
  const auto y = random_matrix(11, 4, rng);
  const auto g = random_matrix(11, 4, rng);
  const double l = loss_style(y, g, &model, tts_stats(), StyleLevel::Low).item();
  const double m = loss_style(y, g, &model, tts_stats(), StyleLevel::Middle).item();
  const double h = loss_style(y, g, &model, tts_stats(), StyleLevel::High).item();
  EXPECT_EQ(loss_style(y, g, &model, tts_stats(), StyleLevel::All).item(), (l + m) + h);
}

TEST(StyleLoss, GradientsReachTheMelButNotTheFrozenClassifier) {
  auto model = micro_model(8);
  model.set_frozen(true);
  std::mt19937_64 rng(8);
  const auto y = random_matrix(12, 4, rng);
  std::vector<double> v(y.data().begin(), y.data().end());
  for (std::size_t c = 0; c < 4; ++c) v[5 * 4 + c] += 0.5;
  Tensor g({12, 4}, std::move(v), true);
  const auto loss = loss_style(y, g, &model, tts_stats(), StyleLevel::All);
  EXPECT_GT(loss.item(), 0.0);
  backward(loss);
  ASSERT_TRUE(g.has_grad());
  double norm = 0.0;
  for (double d : g.grad()) norm += d * d;
  EXPECT_GT(norm, 0.0);
  for (const auto& p : model.params()) {
    if (!p.tensor.has_grad()) continue;
    for (double d : p.tensor.grad()) EXPECT_EQ(d, 0.0) << p.name;
  }
}

TEST(StyleLoss, MissingModelIsAnError) {
  std::mt19937_64 rng(9);
  const auto y = random_matrix(8, 4, rng);
  EXPECT_THROW(loss_style(y, y, nullptr, tts_stats(), StyleLevel::Low), std::invalid_argument);
}

TEST(TotalLoss, AdditiveForRandomInstances) {
  std::mt19937_64 rng(10);
  std::uniform_int_distribution<std::size_t> frames(6, 20);
  const StyleLevel levels[] = {StyleLevel::Low, StyleLevel::Middle, StyleLevel::High, StyleLevel::All};
  for (int i = 0; i < 50; ++i) {
    auto model = micro_model(100 + static_cast<std::uint64_t>(i));
    const std::size_t t = frames(rng);
    const auto y = random_matrix(t, 4, rng);
    const auto pre = random_matrix(t, 4, rng);
    const auto post = random_matrix(t, 4, rng);
    const auto stop = random_matrix(t, 1, rng);
    const auto level = levels[i % 4];
    const auto frame = loss_frame(y, pre, post, stop);
    const auto style = loss_style(y, post, &model, tts_stats(), level);
    const auto pl = loss_total(tts::Mode::PL, level, frame, style);
    EXPECT_EQ(pl.total - (pl.frame + pl.style), 0.0);
    EXPECT_EQ(pl.total, pl.frame + pl.style);
    const auto base = loss_total(tts::Mode::Baseline, level, frame, Tensor());
    EXPECT_EQ(base.style, 0.0);
    EXPECT_EQ(base.total, base.frame);
  }
}

TEST(TotalLoss, PerfectOutputGivesZero) {
  auto model = micro_model(11);
  std::mt19937_64 rng(11);
  const auto y = random_matrix(9, 4, rng);
  const auto frame = loss_frame(y, y, y, perfect_stop(9));
  const auto b = loss_total(tts::Mode::PL, StyleLevel::All, frame, loss_style(y, y, &model, tts_stats(), StyleLevel::All));
  EXPECT_LT(std::abs(b.total), 1e-12);
  EXPECT_THROW(loss_total(tts::Mode::PL, StyleLevel::All, frame, Tensor()), std::invalid_argument);
}

TEST(TotalLoss, ComposedGradientMatchesFiniteDifferences) {
  auto model = micro_model(12);
  model.set_frozen(true);
  std::mt19937_64 rng(12);
  const auto y = random_matrix(8, 4, rng);
  Tensor pre = random_matrix(8, 4, rng, true);
  Tensor residual = random_matrix(8, 4, rng, true);
  Tensor stop = random_matrix(8, 1, rng, true);
  auto f = [&] {
    const auto post = add(pre, residual);
    const auto frame = loss_frame(y, pre, post, stop);
    return loss_total(tts::Mode::PL, StyleLevel::All, frame, loss_style(y, post, &model, tts_stats(), StyleLevel::All))
        .total_tensor;
  };
  const auto report = gradient_check(f, {{"pre", pre}, {"residual", residual}, {"stop", stop}});
  EXPECT_LT(report.max_rel_error, 1e-4) << report.worst_tensor << "[" << report.worst_index << "]";
}
