#include <cmath>
#include <filesystem>
#include <memory>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "support/layer_check.hpp"
#include "weaksep/nn/adam.hpp"
#include "weaksep/nn/checkpoint.hpp"
#include "weaksep/nn/reparameterize.hpp"
#include "weaksep/nn/sequential.hpp"

using namespace weaksep;
using namespace weaksep::nn;

using oracle::check_layer;
using oracle::random_tensor;

TEST(Layers, SoftplusValues) {
  EXPECT_NEAR(softplus(0.0), std::numbers::ln2, 1e-12);
  EXPECT_NEAR(softplus(0.0) , 0.693147, 1e-6);
  for (double x : {-1e4, -700.0, -50.0, 0.0, 50.0, 700.0, 1e4}) {
    const double y = softplus(x);
    EXPECT_TRUE(std::isfinite(y)) << x;
    EXPECT_GE(y, 0.0) << x;
  }
  EXPECT_GT(softplus(-50.0), 0.0);
  EXPECT_DOUBLE_EQ(softplus(1e4), 1e4);
  for (float x : {-1e4f, -80.0f, 80.0f, 1e4f}) EXPECT_TRUE(std::isfinite(softplus(x)));
  EXPECT_GT(softplus(-20.0f), 0.0f);
}

TEST(Layers, ReluValues) {
  ReLU<double> relu;
  const auto y = relu.forward(Tensor<double>({1, 2}, {-1.0, 2.0}), Mode::train);
  EXPECT_EQ(y[0], 0.0);
  EXPECT_EQ(y[1], 2.0);
}

TEST(Layers, SoftplusGradientAtZeroIsHalf) {
  Softplus<double> sp;
  sp.forward(Tensor<double>({2, 3}, 0.0), Mode::train);
  const auto g = sp.backward(Tensor<double>({2, 3}, 1.0));
  for (double v : g.values()) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(Layers, ConvShapeAlgebraOnTableSizes) {
  std::mt19937_64 rng(1);
  Conv2d<float> c1(1, 4, {1, 257}, {1, 1}, rng);
  Conv2d<float> c2(4, 4, {4, 1}, {2, 1}, rng);
  Conv2d<float> c3(4, 6, {4, 1}, {2, 1}, rng);
  auto x = c1.forward(Tensor<float>({2, 30, 257, 1}), Mode::train);
  EXPECT_EQ(x.shape(), (Shape{2, 30, 1, 4}));
  x = c2.forward(x, Mode::train);
  EXPECT_EQ(x.shape(), (Shape{2, 14, 1, 4}));
  x = c3.forward(x, Mode::train);
  EXPECT_EQ(x.shape(), (Shape{2, 6, 1, 6}));

  ConvTranspose2d<float> t3(6, 4, {4, 1}, {2, 1}, rng);
  ConvTranspose2d<float> t2(4, 4, {4, 1}, {2, 1}, rng);
  ConvTranspose2d<float> t1(4, 1, {1, 257}, {1, 1}, rng);
  x = t3.forward(x, Mode::train);
  EXPECT_EQ(x.shape(), (Shape{2, 14, 1, 4}));
  x = t2.forward(x, Mode::train);
  EXPECT_EQ(x.shape(), (Shape{2, 30, 1, 4}));
  x = t1.forward(x, Mode::train);
  EXPECT_EQ(x.shape(), (Shape{2, 30, 257, 1}));
}

TEST(Layers, ShapeMismatchReportsShapes) {
  std::mt19937_64 rng(2);
  Conv2d<float> conv(3, 2, {2, 2}, {1, 1}, rng);
  try {
    conv.forward(Tensor<float>({1, 4, 4, 2}), Mode::train);
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("[1,4,4,2]"), std::string::npos);
  }
  FullyConnected<float> fc(5, 3, rng);
  EXPECT_THROW(fc.forward(Tensor<float>({2, 4}), Mode::train), ShapeError);
  EXPECT_THROW(conv.forward(Tensor<float>({1, 1, 4, 3}), Mode::train), ShapeError);
}

TEST(Layers, BackwardBeforeForwardIsAnError) {
  std::mt19937_64 rng(3);
  FullyConnected<double> fc(2, 2, rng);
  EXPECT_THROW(fc.backward(Tensor<double>({1, 2})), std::logic_error);
  BatchNorm<double> bn(2);
  EXPECT_THROW(bn.backward(Tensor<double>({1, 2})), std::logic_error);
  Softplus<double> sp;
  EXPECT_THROW(sp.backward(Tensor<double>({1, 2})), std::logic_error);
}

TEST(GradientCheck, Conv) {
  std::mt19937_64 rng(10);
  Conv2d<double> layer(2, 3, {2, 3}, {2, 1}, rng);
  layer.set_name("conv");
  const auto r = check_layer(layer, random_tensor({2, 5, 4, 2}, rng), Mode::train, rng);
  EXPECT_TRUE(r.ok()) << r.first_failure;
}

TEST(GradientCheck, TransposedConv) {
  std::mt19937_64 rng(11);
  ConvTranspose2d<double> layer(3, 2, {3, 2}, {2, 1}, rng);
  layer.set_name("tconv");
  const auto r = check_layer(layer, random_tensor({2, 3, 2, 3}, rng), Mode::train, rng);
  EXPECT_TRUE(r.ok()) << r.first_failure;
}

TEST(GradientCheck, FullyConnected) {
  std::mt19937_64 rng(12);
  FullyConnected<double> layer(6, 4, rng);
  layer.set_name("fc");
  const auto r = check_layer(layer, random_tensor({3, 2, 3}, rng), Mode::train, rng);
  EXPECT_TRUE(r.ok()) << r.first_failure;
}

TEST(GradientCheck, GaussianLatent) {
  std::mt19937_64 rng(13);
  GaussianLatent<double> layer(5, 3, rng);
  layer.set_name("gauss");
  EXPECT_EQ(layer.latent(), 3u);
  const auto r = check_layer(layer, random_tensor({4, 5}, rng), Mode::train, rng);
  EXPECT_TRUE(r.ok()) << r.first_failure;
}

TEST(GradientCheck, BatchNormTrainAndEval) {
  std::mt19937_64 rng(14);
  BatchNorm<double> layer(3);
  layer.set_name("bn");
  for (auto* p : layer.parameters()) {
    for (auto& v : p->value.values()) v += std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
  }
  auto r = check_layer(layer, random_tensor({4, 2, 1, 3}, rng), Mode::train, rng);
  EXPECT_TRUE(r.ok()) << r.first_failure;
  r = check_layer(layer, random_tensor({4, 3}, rng), Mode::eval, rng);
  EXPECT_TRUE(r.ok()) << r.first_failure;
}

TEST(GradientCheck, ReluAwayFromKink) {
  std::mt19937_64 rng(15);
  ReLU<double> layer;
  auto x = random_tensor({3, 7}, rng);
  for (auto& v : x.values())
    if (std::abs(v) < 0.05) v = 0.3;
  const auto r = check_layer(layer, x, Mode::train, rng);
  EXPECT_TRUE(r.ok()) << r.first_failure;
}

TEST(GradientCheck, Softplus) {
  std::mt19937_64 rng(16);
  Softplus<double> layer;
  const auto r = check_layer(layer, random_tensor({3, 7}, rng, -4.0, 4.0), Mode::train, rng);
  EXPECT_TRUE(r.ok()) << r.first_failure;
}

TEST(GradientCheck, Reshape) {
  std::mt19937_64 rng(17);
  Reshape<double> layer({2, 1, 3});
  const auto r = check_layer(layer, random_tensor({2, 6}, rng), Mode::train, rng);
  EXPECT_TRUE(r.ok()) << r.first_failure;
}

TEST(GradientCheck, Reparameterize) {
  std::mt19937_64 rng(18);
  auto mu = random_tensor({2, 3}, rng);
  auto lv = random_tensor({2, 3}, rng);
  const auto noise = random_tensor({2, 3}, rng);
  const auto w = random_tensor({2, 3}, rng);
  auto loss = [&]() {
    const auto z = reparameterize(mu, lv, noise);
    double acc = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) acc += w[i] * z[i];
    return acc;
  };
  const auto g = reparameterize_backward(w, lv, noise);
  oracle::GradCheckResult r;
  oracle::check_entries(mu.values(), g.mu.values(), loss, "mu", r);
  oracle::check_entries(lv.values(), g.log_var.values(), loss, "log_var", r);
  EXPECT_TRUE(r.ok()) << r.first_failure;
}

TEST(Reparameterize, ScalarExamples) {
  const Tensor<double> mu({1, 1}, {1.0});
  EXPECT_DOUBLE_EQ(reparameterize(mu, Tensor<double>({1, 1}, {0.7}), Tensor<double>({1, 1}, {0.0}))[0], 1.0);
  EXPECT_DOUBLE_EQ(reparameterize(Tensor<double>({1, 1}, {0.0}), Tensor<double>({1, 1}, {0.0}),
                                  Tensor<double>({1, 1}, {std::numbers::e}))[0],
                   std::numbers::e);
  EXPECT_NEAR(reparameterize(mu, Tensor<double>({1, 1}, {2.0 * std::numbers::ln2}), Tensor<double>({1, 1}, {0.5}))[0],
              2.0, 1e-12);
  EXPECT_THROW(reparameterize(mu, Tensor<double>({1, 2}), Tensor<double>({1, 1})), ShapeError);
}

TEST(Backward, UnusedParameterGetsExactlyZeroGradient) {
  std::mt19937_64 rng(19);
  FullyConnected<double> used(3, 2, rng), unused(3, 2, rng);
  used.forward(random_tensor({2, 3}, rng), Mode::train);
  used.backward(Tensor<double>({2, 2}, 1.0));
  for (auto* p : unused.parameters())
    for (double g : p->grad.values()) EXPECT_EQ(g, 0.0);
}

TEST(BatchNorm, EvalModeIsPureFunctionOfRunningStats) {
  std::mt19937_64 rng(20);
  BatchNorm<float> bn(4);
  Tensor<float> x({8, 4});
  std::normal_distribution<float> d(2.0f, 3.0f);
  for (auto& v : x.values()) v = d(rng);
  bn.forward(x, Mode::train);
  bn.forward(x, Mode::train);
  const auto a = bn.forward(x, Mode::eval);
  const auto b = bn.forward(x, Mode::eval);
  EXPECT_EQ(a, b);
  // Running stats moved 10% toward the batch twice: mean 0.19 * batch mean.
  double batch_mean = 0.0;
  for (std::size_t r = 0; r < 8; ++r) batch_mean += x[r * 4];
  batch_mean /= 8.0;
  EXPECT_NEAR(bn.buffers()[0].tensor->values()[0], 0.19 * batch_mean, 1e-5);
}

TEST(Adam, FirstStepMatchesHandEvaluation) {
  Parameter<double> p("p", Tensor<double>({1}, {0.0}));
  p.grad[0] = 1.0;
  std::vector<Parameter<double>*> params{&p};
  AdamState<double> state(params);
  adam_update(params, state);
  EXPECT_NEAR(state.m[0][0], 0.1, 1e-15);
  EXPECT_NEAR(state.v[0][0], 0.001, 1e-15);
  EXPECT_NEAR(p.value[0], -0.001 / (1.0 + 1e-8), 1e-15);
  EXPECT_EQ(state.step, 1u);
}

TEST(Adam, ZeroGradientLeavesParameterUnchanged) {
  Parameter<float> p("p", Tensor<float>({3}, {0.5f, -1.0f, 2.0f}));
  std::vector<Parameter<float>*> params{&p};
  AdamState<float> state(params);
  for (int i = 0; i < 10; ++i) adam_update(params, state);
  EXPECT_EQ(p.value, Tensor<float>({3}, {0.5f, -1.0f, 2.0f}));
}

TEST(Adam, NonFiniteGradientDiverges) {
  Parameter<float> p("p", Tensor<float>({2}, {1.0f, 1.0f}));
  p.grad[1] = std::numeric_limits<float>::quiet_NaN();
  std::vector<Parameter<float>*> params{&p};
  AdamState<float> state(params);
  EXPECT_THROW(adam_update(params, state), DivergenceError);
  EXPECT_EQ(p.value[0], 1.0f);
  EXPECT_EQ(state.step, 0u);
}

TEST(Adam, IdenticalRunsAreBitIdentical) {
  auto run = [] {
    std::mt19937_64 rng(21);
    Sequential<float> net;
    net.add("fc1", std::make_unique<FullyConnected<float>>(4, 8, rng));
    net.add("bn1", std::make_unique<BatchNorm<float>>(8));
    net.add("relu1", std::make_unique<ReLU<float>>());
    net.add("fc2", std::make_unique<FullyConnected<float>>(8, 2, rng));
    auto params = net.parameters();
    AdamState<float> state(params);
    std::normal_distribution<float> d;
    for (int step = 0; step < 20; ++step) {
      Tensor<float> x({5, 4});
      for (auto& v : x.values()) v = d(rng);
      net.zero_grad();
      const auto y = net.forward(x, Mode::train);
      net.backward(y);  // d/dy of 0.5 * |y|^2
      adam_update(params, state);
    }
    std::vector<float> flat;
    for (auto* p : params) flat.insert(flat.end(), p->value.values().begin(), p->value.values().end());
    return flat;
  };
  EXPECT_EQ(run(), run());
}

TEST(Checkpoint, RoundTripAndVersionCheck) {
  const auto dir = std::filesystem::temp_directory_path() / "weaksep_test_ckpt";
  std::filesystem::create_directories(dir);
  Checkpoint ckpt;
  ckpt.header["architecture"] = {{"frames", 30}};
  ckpt.header["class_labels"] = {3, 7};
  append_tensor(ckpt, BlobSection::parameter, "a.weight", Tensor<float>({2, 2}, {1, 2, 3, 4}));
  append_tensor(ckpt, BlobSection::buffer, "a.running_mean", Tensor<double>({3}, {0.5, 0.25, -1}));
  write_checkpoint(dir / "m.ckpt", ckpt);
  const auto back = read_checkpoint(dir / "m.ckpt");
  EXPECT_EQ(back.header, ckpt.header);
  ASSERT_EQ(back.blobs.size(), 2u);
  EXPECT_EQ(blob_tensor<float>(*back.find(BlobSection::parameter, "a.weight")),
            Tensor<float>({2, 2}, {1, 2, 3, 4}));
  EXPECT_EQ(blob_tensor<double>(*back.find(BlobSection::buffer, "a.running_mean")),
            Tensor<double>({3}, {0.5, 0.25, -1}));
  EXPECT_EQ(back.find(BlobSection::parameter, "missing"), nullptr);

  {
    std::fstream f(dir / "m.ckpt", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    const std::uint32_t bad = 99;
    f.write(reinterpret_cast<const char*>(&bad), 4);
  }
  EXPECT_THROW(read_checkpoint(dir / "m.ckpt"), DataError);
  EXPECT_THROW(read_checkpoint(dir / "nope.ckpt"), DataError);
  std::filesystem::remove_all(dir);
}
