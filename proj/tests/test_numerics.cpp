#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "pltts/numerics/adam.hpp"
#include "pltts/numerics/checkpoint.hpp"
#include "pltts/numerics/gradcheck.hpp"
#include "pltts/numerics/layers.hpp"
#include "pltts/numerics/ops.hpp"

using namespace pltts;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v), true);
}

// Weighted sum with fixed pseudo-random weights so every output coordinate
// contributes a distinct amount to the scalar.
Tensor probe(const Tensor& t) {
  std::vector<double> w(t.numel());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::sin(1.3 * static_cast<double>(i) + 0.7);
  return sum(mul(t, Tensor(t.shape(), w)));
}

}  // namespace

TEST(Ops, MatmulOfOnes) {
  auto a = Tensor::full({2, 3}, 1.0);
  auto b = Tensor::full({3, 2}, 1.0);
  auto c = matmul(a, b);
  ASSERT_EQ(c.shape(), (Shape{2, 2}));
  for (double v : c.data()) EXPECT_DOUBLE_EQ(v, 3.0);
}

TEST(Ops, SoftmaxOfZerosIsUniform) {
  auto y = softmax(Tensor::zeros({3}), 0);
  for (double v : y.data()) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
}

TEST(Ops, TanhDerivativeAtZero) {
  auto x = Tensor::scalar(0.0, true);
  tape::reset();
  backward(tanh(x));
  EXPECT_NEAR(x.grad()[0], 1.0, 1e-12);
  EXPECT_LT(finite_difference_check([&] { return tanh(x); }, x), 1e-6);
}

TEST(Ops, ShapeMismatchNamesShapesAndOp) {
  try {
    add(Tensor::zeros({2, 3}), Tensor::zeros({4}));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("add"), std::string::npos);
    EXPECT_NE(msg.find("[2,3]"), std::string::npos);
    EXPECT_NE(msg.find("[4]"), std::string::npos);
  }
  EXPECT_THROW(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
}

TEST(Ops, NonFiniteValuesNameTheOp) {
  try {
    log(Tensor::zeros({2}));
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("log"), std::string::npos);
  }
}

TEST(Ops, TrailingBroadcast) {
  auto a = Tensor({2, 2}, {1, 2, 3, 4});
  auto b = Tensor({2}, {10, 20});
  auto c = add(a, b);
  EXPECT_EQ(std::vector<double>(c.data().begin(), c.data().end()), (std::vector<double>{11, 22, 13, 24}));
}

TEST(Ops, SoftmaxRowsSumToOne) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    auto x = random_tensor({3, 5}, rng, -20.0, 20.0);
    for (std::size_t axis = 0; axis < 2; ++axis) {
      auto y = softmax(x, axis);
      const std::size_t outer = axis == 0 ? 5 : 3, n = axis == 0 ? 3 : 5;
      for (std::size_t o = 0; o < outer; ++o) {
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double v = axis == 0 ? y.at(k, o) : y.at(o, k);
          EXPECT_GE(v, 0.0);
          s += v;
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
      }
    }
  }
}

TEST(Ops, DropoutIsIdentityOutsideTraining) {
  std::mt19937_64 rng(1);
  auto x = Tensor::full({4}, 2.0);
  auto y = dropout(x, 0.5, rng, false);
  EXPECT_EQ(y.node(), x.node());
  auto z = dropout(Tensor::full({1000}, 1.0), 0.5, rng, true);
  double s = 0.0;
  for (double v : z.data()) {
    EXPECT_TRUE(v == 0.0 || v == 2.0);
    s += v;
  }
  EXPECT_NEAR(s / 1000.0, 1.0, 0.15);
}

TEST(Conv2d, ZeroInputGivesZeroOutput) {
  std::mt19937_64 rng(3);
  auto k = random_tensor({2, 1, 3, 3}, rng);
  auto y = conv2d(Tensor::zeros({1, 3, 3}), k, Tensor::zeros({2}), 1, 1, 1);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Conv2d, SingleTapKernelIsIdentity) {
  auto x = Tensor({1, 2, 2}, {1, 2, 3, 4});
  auto y = conv2d(x, Tensor({1, 1, 1, 1}, {1.0}), Tensor(), 1, 0, 0);
  EXPECT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(y.at(i), x.at(i));
}

TEST(Conv2d, OutputExtentFormula) {
  auto y = conv2d(Tensor::zeros({1, 7, 6}), Tensor::zeros({1, 1, 3, 2}), Tensor(), 2, 1, 0);
  EXPECT_EQ(y.shape(), (Shape{1, (7 + 2 - 3) / 2 + 1, (6 - 2) / 2 + 1}));
  EXPECT_THROW(conv2d(Tensor::zeros({1, 2, 2}), Tensor::zeros({1, 1, 3, 3}), Tensor(), 1, 0, 0), ShapeError);
}

TEST(Conv2d, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(11);
  auto x = random_tensor({1, 4, 4}, rng);
  auto k = random_tensor({1, 1, 2, 2}, rng);
  auto b = random_tensor({1}, rng);
  auto report = gradient_check([&] { return probe(conv2d(x, k, b, 1, 0, 0)); },
                               {{"x", x}, {"k", k}, {"b", b}});
  EXPECT_LT(report.max_rel_error, 1e-4) << report.worst_tensor;
  auto x4 = random_tensor({2, 2, 5, 4}, rng);
  auto k4 = random_tensor({3, 2, 3, 3}, rng);
  auto report4 = gradient_check([&] { return probe(conv2d(x4, k4, Tensor(), 2, 1, 1)); },
                                {{"x", x4}, {"k", k4}});
  EXPECT_LT(report4.max_rel_error, 1e-4) << report4.worst_tensor;
}

TEST(MaxPool, PicksWindowMaximum) {
  auto y = maxpool2d(Tensor({1, 2, 2}, {1, 2, 3, 4}));
  ASSERT_EQ(y.numel(), 1u);
  EXPECT_EQ(y.item(), 4.0);
}

TEST(MaxPool, TiesRouteGradientToFirstElement) {
  auto x = Tensor({2, 2}, {5, 5, 5, 5}, true);
  tape::reset();
  backward(sum(maxpool2d(x)));
  EXPECT_EQ(x.grad()[0], 1.0);
  EXPECT_EQ(x.grad()[1], 0.0);
  EXPECT_EQ(x.grad()[2], 0.0);
  EXPECT_EQ(x.grad()[3], 0.0);
}

TEST(MaxPool, MatchesBruteForceOnRandomInputs) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = random_tensor({4, 4}, rng);
    auto y = maxpool2d(x);
    for (std::size_t oy = 0; oy < 2; ++oy)
      for (std::size_t ox = 0; ox < 2; ++ox) {
        double best = -1e300;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) best = std::max(best, x.at(2 * oy + dy, 2 * ox + dx));
        EXPECT_EQ(y.at(oy, ox), best);
      }
  }
}

TEST(MaxPool, OddExtentsAreZeroPadded) {
  auto y = maxpool2d(Tensor({3, 3}, {-1, -2, -3, -4, -5, -6, -7, -8, -9}));
  ASSERT_EQ(y.shape(), (Shape{2, 2}));
  EXPECT_EQ(y.at(0, 0), -1.0);
  EXPECT_EQ(y.at(0, 1), 0.0);  // padding wins over negative values
  EXPECT_EQ(y.at(1, 1), 0.0);
}

TEST(Lstm, ZeroWeightsAndInputsGiveZeroStates) {
  LstmLayer layer;
  layer.hidden = 3;
  layer.w_input = Tensor::zeros({2, 12});
  layer.w_hidden = Tensor::zeros({3, 12});
  layer.bias = Tensor::zeros({12});
  auto h = lstm_sequence(Tensor::zeros({4, 2}), layer, Direction::Forward);
  for (double v : h.data()) EXPECT_EQ(v, 0.0);
}

TEST(Lstm, SingleStepEqualsOneCell) {
  std::mt19937_64 rng(2);
  auto layer = LstmLayer::create(2, 3, rng);
  auto x = random_tensor({1, 2}, rng);
  auto seq = lstm_sequence(x, layer, Direction::Forward);
  auto cell = lstm_cell(x, lstm_zero_state(1, 3), layer);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(seq.at(i), cell.h.at(i));
  auto back = lstm_sequence(x, layer, Direction::Backward);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(back.at(i), cell.h.at(i));
}

TEST(Lstm, BackpropThroughTimeMatchesFiniteDifferences) {
  std::mt19937_64 rng(13);
  auto fwd = LstmLayer::create(2, 2, rng);
  auto bwd = LstmLayer::create(2, 2, rng);
  auto x = random_tensor({3, 2}, rng);
  TensorList wrt{{"x", x}};
  fwd.collect("fwd", wrt);
  bwd.collect("bwd", wrt);
  auto report = gradient_check([&] { return probe(bilstm_sequence(x, fwd, bwd)); }, wrt);
  EXPECT_LT(report.max_rel_error, 1e-4) << report.worst_tensor;
  EXPECT_EQ(bilstm_sequence(x, fwd, bwd).shape(), (Shape{3, 4}));
}

TEST(Lstm, BatchedSequenceMatchesPerExampleRuns) {
  std::mt19937_64 rng(17);
  auto layer = LstmLayer::create(3, 4, rng);
  auto a = random_tensor({5, 3}, rng);
  auto b = random_tensor({5, 3}, rng);
  std::vector<std::size_t> interleave;
  for (std::size_t t = 0; t < 5; ++t) {
    interleave.push_back(t);
    interleave.push_back(5 + t);
  }
  auto batched = lstm_sequence(permute_rows(concat({a, b}, 0), interleave), layer, Direction::Backward, 2);
  auto ra = lstm_sequence(a, layer, Direction::Backward);
  auto rb = lstm_sequence(b, layer, Direction::Backward);
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_NEAR(batched.at(2 * t, j), ra.at(t, j), 1e-14);
      EXPECT_NEAR(batched.at(2 * t + 1, j), rb.at(t, j), 1e-14);
    }
}

TEST(Backward, SumGivesOnes) {
  auto x = Tensor::zeros({2, 3}, true);
  tape::reset();
  backward(sum(x));
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SquareAtThree) {
  auto x = Tensor::scalar(3.0, true);
  tape::reset();
  backward(mul(x, x));
  EXPECT_EQ(x.grad()[0], 6.0);
}

TEST(Backward, RepeatedCallsAccumulate) {
  auto x = Tensor::scalar(3.0, true);
  tape::reset();
  auto loss = mul(scale(x, 2.0), x);
  backward(loss);
  backward(loss);
  EXPECT_EQ(x.grad()[0], 24.0);
}

TEST(Backward, NonParticipatingTensorsUntouched) {
  auto x = Tensor::scalar(1.0, true);
  auto y = Tensor::scalar(2.0, true);
  tape::reset();
  auto unrelated = mul(y, y);
  backward(square(x));
  EXPECT_TRUE(x.has_grad());
  EXPECT_FALSE(y.has_grad());
  (void)unrelated;
}

TEST(Backward, RejectsNonScalarLoss) {
  auto x = Tensor::zeros({2}, true);
  EXPECT_THROW(backward(scale(x, 2.0)), ShapeError);
}

TEST(Backward, NoGradGuardStopsRecording) {
  auto x = Tensor::scalar(2.0, true);
  NoGradGuard guard;
  auto y = square(x);
  EXPECT_FALSE(y.requires_grad());
}

TEST(GradCheck, SquaredNorm) {
  std::mt19937_64 rng(4);
  auto x = random_tensor({6}, rng);
  EXPECT_LT(finite_difference_check([&] { return sum(square(x)); }, x), 1e-8);
}

TEST(GradCheck, SoftmaxCrossEntropy) {
  std::mt19937_64 rng(9);
  auto logits = random_tensor({1, 4}, rng, -2.0, 2.0);
  EXPECT_LT(finite_difference_check([&] { return softmax_cross_entropy(logits, {2}); }, logits), 1e-6);
}

TEST(GradCheck, DetectsNonDeterministicFunction) {
  auto x = Tensor::scalar(1.0, true);
  int calls = 0;
  EXPECT_THROW(finite_difference_check(
                   [&] {
                     ++calls;
                     return scale(x, static_cast<double>(calls));
                   },
                   x),
               std::runtime_error);
}

// Every differentiable op on random small inputs, f64, eps = 1e-5.
TEST(GradCheck, EveryOpWithinTolerance) {
  std::mt19937_64 rng(21);
  auto a = random_tensor({3, 4}, rng);
  auto b = random_tensor({3, 4}, rng);
  auto row = random_tensor({4}, rng);
  auto m = random_tensor({4, 2}, rng);
  auto pos = random_tensor({3, 4}, rng, 0.5, 2.0);
  auto w = random_tensor({3}, rng);
  auto gamma = random_tensor({4}, rng);
  auto beta = random_tensor({4}, rng);
  auto gates = random_tensor({2, 12}, rng);
  auto cprev = random_tensor({2, 3}, rng);
  auto targets = Tensor({3, 4}, std::vector<double>(12, 0.25));
  std::vector<double> rm{0.1, -0.2, 0.3, 0.0}, rv{1.5, 0.5, 2.0, 1.0};
  auto img = random_tensor({2, 5, 6}, rng);
  auto side = random_tensor({3, 2}, rng);

  struct Case {
    const char* name;
    std::function<Tensor()> f;
    TensorList wrt;
  };
  std::vector<Case> cases{
      {"add", [&] { return probe(add(a, b)); }, {{"a", a}, {"b", b}}},
      {"add_broadcast", [&] { return probe(add(a, row)); }, {{"a", a}, {"row", row}}},
      {"sub", [&] { return probe(sub(a, row)); }, {{"a", a}, {"row", row}}},
      {"mul", [&] { return probe(mul(a, b)); }, {{"a", a}, {"b", b}}},
      {"scale", [&] { return probe(scale(a, -1.7)); }, {{"a", a}}},
      {"matmul", [&] { return probe(matmul(a, m)); }, {{"a", a}, {"m", m}}},
      {"tanh", [&] { return probe(tanh(a)); }, {{"a", a}}},
      {"sigmoid", [&] { return probe(sigmoid(a)); }, {{"a", a}}},
      {"relu", [&] { return probe(relu(a)); }, {{"a", a}}},
      {"exp", [&] { return probe(exp(a)); }, {{"a", a}}},
      {"log", [&] { return probe(log(pos)); }, {{"pos", pos}}},
      {"square", [&] { return probe(square(a)); }, {{"a", a}}},
      {"mean", [&] { return mean(mul(a, b)); }, {{"a", a}, {"b", b}}},
      {"mean_rows", [&] { return probe(mean_rows(a)); }, {{"a", a}}},
      {"concat0", [&] { return probe(concat({a, b}, 0)); }, {{"a", a}, {"b", b}}},
      {"concat1", [&] { return probe(concat({a, side}, 1)); }, {{"a", a}, {"side", side}}},
      {"slice", [&] { return probe(slice(a, 1, 1, 2)); }, {{"a", a}}},
      {"reshape", [&] { return probe(reshape(a, {2, 6})); }, {{"a", a}}},
      {"transpose", [&] { return probe(transpose(a)); }, {{"a", a}}},
      {"permute_rows", [&] { return probe(permute_rows(a, {2, 0, 0, 1})); }, {{"a", a}}},
      {"mul_rows", [&] { return probe(mul_rows(a, w)); }, {{"a", a}, {"w", w}}},
      {"softmax0", [&] { return probe(softmax(a, 0)); }, {{"a", a}}},
      {"softmax1", [&] { return probe(softmax(a, 1)); }, {{"a", a}}},
      {"cross_entropy", [&] { return softmax_cross_entropy(a, {0, 3, 1}); }, {{"a", a}}},
      {"bce", [&] { return bce_with_logits(a, targets); }, {{"a", a}}},
      {"mse", [&] { return mse(a, b); }, {{"a", a}, {"b", b}}},
      {"maxpool", [&] { return probe(maxpool2d(img)); }, {{"img", img}}},
      {"flatten_time_slices", [&] { return probe(flatten_time_slices(reshape(img, {1, 2, 5, 6}))); },
       {{"img", img}}},
      {"batch_norm_train",
       [&] { return probe(batch_norm_train(a, gamma, beta, 1e-5, nullptr, nullptr)); },
       {{"a", a}, {"gamma", gamma}, {"beta", beta}}},
      {"batch_norm_inference", [&] { return probe(batch_norm_inference(a, gamma, beta, rm, rv, 1e-5)); },
       {{"a", a}, {"gamma", gamma}, {"beta", beta}}},
      {"lstm_cell_state", [&] { return probe(lstm_cell_state(gates, cprev)); }, {{"g", gates}, {"c", cprev}}},
      {"lstm_cell_output", [&] { return probe(lstm_cell_output(gates, cprev)); },
       {{"g", gates}, {"c", cprev}}},
  };
  for (auto& c : cases) {
    auto report = gradient_check(c.f, c.wrt);
    EXPECT_LT(report.max_rel_error, 1e-4) << c.name << " worst " << report.worst_tensor << "["
                                          << report.worst_index << "]";
  }
}

TEST(Adam, ZeroGradientIsIdentity) {
  auto p = Tensor({3}, {1.0, -2.0, 0.5}, true);
  Adam opt({{"p", p}}, AdamConfig{});
  for (int i = 0; i < 5; ++i) opt.step();
  EXPECT_EQ(p.at(0), 1.0);
  EXPECT_EQ(p.at(1), -2.0);
  EXPECT_EQ(p.at(2), 0.5);
  EXPECT_EQ(opt.step_count(), 5);
}

TEST(Adam, MatchesScalarReimplementation) {
  AdamConfig cfg;
  cfg.schedule = {1e-2, 1e-4, 3, 10};
  for (bool nesterov : {false, true}) {
    cfg.nesterov = nesterov;
    auto p = Tensor::scalar(0.8, true);
    Adam opt({{"p", p}}, cfg);
    double theta = 0.8, m = 0.0, v = 0.0;
    for (int t = 1; t <= 12; ++t) {
      tape::reset();
      p.zero_grad();
      backward(mul(p, p));  // grad 2θ
      opt.step();
      const double g = 2.0 * theta, b1 = 0.9, b2 = 0.999;
      m = b1 * m + (1 - b1) * g;
      v = b2 * v + (1 - b2) * g * g;
      const double mh = nesterov ? b1 * m / (1 - std::pow(b1, t + 1)) + (1 - b1) * g / (1 - std::pow(b1, t))
                                 : m / (1 - std::pow(b1, t));
      theta -= cfg.schedule.at(t) * mh / (std::sqrt(v / (1 - std::pow(b2, t))) + 1e-8);
      EXPECT_NEAR(p.item(), theta, 1e-15);
    }
  }
}

TEST(Adam, LearningRateSchedule) {
  LrSchedule s;  // 1e-3 → 1e-5 from 50k to 150k
  EXPECT_EQ(s.at(0), 1e-3);
  EXPECT_EQ(s.at(50000), 1e-3);
  EXPECT_NEAR(s.at(150000), 1e-5, 1e-18);
  EXPECT_EQ(s.at(400000), 1e-5);
  EXPECT_LT(s.at(100000), 1e-3);
  EXPECT_GT(s.at(100000), 1e-5);
  EXPECT_NEAR(s.at(100000), 1e-4, 1e-12);  // geometric midpoint
}

TEST(Adam, DecoupledWeightDecayShrinksParameters) {
  AdamConfig cfg;
  cfg.weight_decay = 0.1;
  auto p = Tensor::scalar(2.0, true);
  Adam opt({{"p", p}}, cfg);
  opt.step();
  EXPECT_NEAR(p.item(), 2.0 - 1e-3 * 0.1 * 2.0, 1e-15);
}

TEST(Checkpoint, RoundTripAndMagicCheck) {
  auto dir = std::filesystem::temp_directory_path() / "pltts_ck_test";
  std::filesystem::create_directories(dir);
  Checkpoint ck;
  ck.meta["kind"] = "test";
  ck.add("a", Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
  ck.add("b", Tensor::scalar(-0.25));
  ck.save(dir / "x.ckpt");
  auto back = Checkpoint::load(dir / "x.ckpt");
  EXPECT_EQ(back.meta_value("kind"), "test");
  EXPECT_EQ(back.get("a").shape(), (Shape{2, 3}));
  EXPECT_EQ(back.get("a").at(5), 6.0);
  EXPECT_EQ(back.get("b").item(), -0.25);

  std::ifstream in(dir / "x.ckpt", std::ios::binary);
  char magic[8];
  in.read(magic, 8);
  EXPECT_EQ(std::string(magic, 8), "PLTTSCKP");
  {
    std::ofstream bad(dir / "bad.ckpt", std::ios::binary);
    bad << "NOTACKPT";
  }
  EXPECT_THROW(Checkpoint::load(dir / "bad.ckpt"), std::runtime_error);
  std::filesystem::remove_all(dir);
}
