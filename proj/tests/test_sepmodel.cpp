#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "support/grad_check.hpp"
#include "weaksep/sepmodel/objective.hpp"

using namespace weaksep;
using namespace weaksep::sepmodel;
using nn::Tensor;

namespace {

template <class T>
Tensor<T> random_positive(nn::Shape shape, std::mt19937_64& rng, double lo = 0.1, double hi = 3.0) {
  Tensor<T> t(std::move(shape));
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& v : t.values()) v = static_cast<T>(d(rng));
  return t;
}

template <class T>
std::vector<Tensor<T>> normal_noise(std::size_t classes, std::size_t n, std::size_t latent, std::mt19937_64& rng) {
  std::normal_distribution<double> d;
  std::vector<Tensor<T>> out;
  for (std::size_t k = 0; k < classes; ++k) {
    Tensor<T> t({n, latent});
    for (auto& v : t.values()) v = static_cast<T>(d(rng));
    out.push_back(std::move(t));
  }
  return out;
}

// Four mixtures of two out of three classes; every class is active in at least two.
const std::vector<std::vector<int>> kLabels = {{1, 1, 0}, {1, 0, 1}, {0, 1, 1}, {1, 1, 0}};

double oracle_gkl(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] == 0.0 ? 0.0 : a[i] * std::log(a[i] / b[i])) - a[i] + b[i];
  return acc;
}

}  // namespace

TEST(Gkl, AnalyticExamples) {
  const std::vector<double> s{0.5, 2.0, 0.0, 7.0};
  EXPECT_EQ(gkl(std::span<const double>(s), std::span<const double>(s)), 0.0);
  const std::vector<double> two{2.0}, one{1.0}, zero{0.0}, three{3.0};
  EXPECT_NEAR(gkl(std::span<const double>(two), std::span<const double>(one)), 2.0 * std::numbers::ln2 - 1.0, 1e-15);
  EXPECT_NEAR(gkl(std::span<const double>(two), std::span<const double>(one)), 0.386294, 1e-6);
  EXPECT_EQ(gkl(std::span<const double>(zero), std::span<const double>(three)), 3.0);
}

TEST(Gkl, NonNegativeAndAsymmetric) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = random_positive<double>({16}, rng, 0.0, 5.0);
    const auto b = random_positive<double>({16}, rng, 0.0, 5.0);
    EXPECT_GE(gkl(a.values(), b.values()), 0.0);
  }
  const std::vector<double> a{1.0}, b{3.0};
  const double ab = gkl(std::span<const double>(a), std::span<const double>(b));
  const double ba = gkl(std::span<const double>(b), std::span<const double>(a));
  EXPECT_GT(std::abs(ab - ba), 0.1);  // 2 - ln 3 vs 3 ln 3 - 2
}

TEST(Gkl, RejectsNegativeEntries) {
  const std::vector<double> a{1.0, -0.5}, b{1.0, 1.0};
  EXPECT_THROW(gkl(std::span<const double>(a), std::span<const double>(b)), std::invalid_argument);
  EXPECT_THROW(gkl(std::span<const double>(b), std::span<const double>(a)), std::invalid_argument);
}

TEST(GaussianKl, AnalyticExamples) {
  EXPECT_EQ(gaussian_kl({0.0, 0.0}, {0.0, 0.0}), 0.0);
  EXPECT_NEAR(gaussian_kl({1.0}, {0.0}), 0.5, 1e-15);
  const double e = std::numbers::e;
  EXPECT_NEAR(gaussian_kl({0.0}, {2.0}), (e * e - 3.0) / 2.0, 1e-14);
  EXPECT_NEAR(gaussian_kl({0.0}, {2.0}), 2.19453, 1e-5);
}

TEST(GaussianKl, NonNegativeZeroOnlyAtPrior) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> d(0.0, 2.0);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> mu{d(rng), d(rng)}, lv{d(rng), d(rng)};
    EXPECT_GT(gaussian_kl(mu, lv), 0.0);
  }
}

TEST(MixEstimate, GatedSum) {
  dsp::Spectrogram a(2, 2, {1, 2, 3, 4}), b(2, 2, {10, 20, 30, 40}), c(2, 2, {5, 5, 5, 5});
  EXPECT_EQ(mix_estimate({a, b, c}, {0, 1, 0}), b);
  EXPECT_EQ(mix_estimate({a, b, c}, {1, 1, 0}), dsp::Spectrogram(2, 2, {11, 22, 33, 44}));
  EXPECT_THROW(mix_estimate({a, b}, {1, 1, 0}), ShapeError);
}

TEST(ClassAutoencoder, FullSizeShapes) {
  ClassAutoencoder<float> model(3, Variant::vae, Architecture{}, 7);
  Tensor<float> x({2, 30, 257, 1}, 0.5f);
  std::mt19937_64 rng(3);
  const auto noise = normal_noise<float>(1, 2, 128, rng);
  const auto out = model.forward(x, Mode::train, &noise[0]);
  EXPECT_EQ(out.estimate.shape(), (nn::Shape{2, 30, 257, 1}));
  EXPECT_EQ(out.latent.mu.shape(), (nn::Shape{2, 128}));
  const auto specs = model.encoder_specs();
  ASSERT_EQ(specs.front().kind, nn::LayerKind::conv);
  EXPECT_EQ(specs.front().filters, 128u);
  EXPECT_EQ(specs.front().filter, (nn::Window{1, 257}));
  EXPECT_EQ(specs[3].filters, 128u);
  EXPECT_EQ(specs[3].stride, (nn::Window{2, 1}));
  EXPECT_EQ(specs[6].filters, 256u);
  EXPECT_EQ(specs[9].filters, 512u);
  EXPECT_EQ(specs.back().kind, nn::LayerKind::gaussian_latent);
  EXPECT_EQ(specs.back().filters, 256u);
  EXPECT_EQ(model.decoder_specs().back().kind, nn::LayerKind::softplus);
}

TEST(ClassAutoencoder, RejectsWrongInputShape) {
  ClassAutoencoder<float> model(0, Variant::ae, Architecture::tiny(), 1);
  EXPECT_THROW(model.forward(Tensor<float>({1, 5, 4, 1}), Mode::eval), ShapeError);
  EXPECT_THROW(estimate_source(model, dsp::Spectrogram(4, 5), Mode::eval), ShapeError);
}

TEST(EstimateSource, NonNegativeForAnyParameters) {
  std::mt19937_64 rng(4);
  for (auto variant : {Variant::ae, Variant::vae}) {
    ClassAutoencoder<float> model(1, variant, Architecture::tiny(10, 6), 11);
    std::normal_distribution<float> wild(0.0f, 20.0f);
    for (auto* p : model.parameters())
      for (auto& v : p->value.values()) v = wild(rng);
    dsp::Spectrogram x(10, 6);
    for (auto& v : x.values()) v = std::abs(wild(rng));
    const auto [est, latent] = estimate_source(model, x, Mode::eval);
    for (float v : est.values()) {
      EXPECT_GE(v, 0.0f);
      EXPECT_TRUE(std::isfinite(v));
    }
  }
}

TEST(EstimateSource, EvalModeIsDeterministic) {
  ClassAutoencoder<float> model(1, Variant::vae, Architecture::tiny(10, 6), 12);
  dsp::Spectrogram x(10, 6);
  for (std::size_t i = 0; i < x.size(); ++i) x.values()[i] = static_cast<float>(i % 7);
  const auto a = estimate_source(model, x, Mode::eval).first;
  const auto b = estimate_source(model, x, Mode::eval).first;
  EXPECT_EQ(a, b);
}

TEST(EstimateSource, TrainWithZeroNoiseMatchesEvalWhenBatchNormFrozen) {
  ClassAutoencoder<double> model(1, Variant::vae, Architecture::tiny(10, 6), 13);
  model.set_batch_norm_frozen(true);
  dsp::Spectrogram x(10, 6);
  for (std::size_t i = 0; i < x.size(); ++i) x.values()[i] = static_cast<float>((i * 13) % 5);
  const auto train = estimate_source<double>(model, x, Mode::train, std::vector<double>(2, 0.0));
  const auto eval = estimate_source<double>(model, x, Mode::eval);
  EXPECT_EQ(train.first, eval.first);
  EXPECT_EQ(train.second.z, eval.second.mu);
}

TEST(SampleSource, PriorSamplesAreFiniteNonNegativeDeterministic) {
  ClassAutoencoder<float> vae(2, Variant::vae, Architecture::tiny(10, 6), 14);
  std::mt19937_64 rng(5);
  const auto noise = normal_noise<float>(1, 8, 2, rng)[0];
  const auto a = sample_source(vae, noise);
  const auto b = sample_source(vae, noise);
  ASSERT_EQ(a.size(), 8u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i], b[i]);
    for (float v : a[i].values()) {
      EXPECT_GE(v, 0.0f);
      EXPECT_TRUE(std::isfinite(v));
    }
  }
  const auto zero = sample_source(vae, Tensor<float>({1, 2}));
  for (float v : zero[0].values()) EXPECT_TRUE(std::isfinite(v) && v >= 0.0f);
  ClassAutoencoder<float> ae(2, Variant::ae, Architecture::tiny(10, 6), 14);
  EXPECT_THROW(sample_source(ae, noise), std::invalid_argument);
}

TEST(Loss, ZeroWhenDecoderReproducesMixtureAndBetaZero) {
  ModelBundle<double> model({0, 1, 2}, Variant::vae, Architecture::tiny(), 0.0, 21);
  // Zero every decoder weight of class 1 so that it emits softplus(bias) everywhere.
  for (auto* p : model.at(1).parameters()) {
    if (p->name.rfind("decoder.", 0) == 0 && p->name.find("bn") == std::string::npos) p->value.fill(0.0);
  }
  double bias = 0.3;
  for (auto* p : model.at(1).parameters())
    if (p->name == "decoder.tconv1.bias") p->value[0] = bias;
  Batch<double> batch{Tensor<double>({1, 4, 4, 1}, nn::softplus(bias)), {{0, 1, 0}}, {}};
  std::mt19937_64 rng(6);
  const auto noise = normal_noise<double>(3, 1, 2, rng);
  EXPECT_EQ(loss_class_supervised(model, batch, &noise).total, 0.0);
}

TEST(Loss, StandardNormalPosteriorGivesPureReconstruction) {
  ModelBundle<double> model({0, 1, 2}, Variant::vae, Architecture::tiny(), 10.0, 22);
  for (std::size_t k = 0; k < 3; ++k)
    for (auto* p : model.at(k).parameters())
      if (p->name.rfind("encoder.gauss", 0) == 0) p->value.fill(0.0);
  std::mt19937_64 rng(7);
  Batch<double> batch{random_positive<double>({4, 4, 4, 1}, rng), kLabels, {}};
  const auto noise = normal_noise<double>(3, 4, 2, rng);
  const auto terms = loss_class_supervised(model, batch, &noise);
  EXPECT_EQ(terms.kl, 0.0);
  EXPECT_EQ(terms.total, terms.reconstruction);
  EXPECT_GT(terms.reconstruction, 0.0);
}

TEST(Loss, ClassSupervisedMatchesIndependentRecomputation) {
  ModelBundle<double> model({0, 1, 2}, Variant::vae, Architecture::tiny(2, 2, 1), 10.0, 23);
  std::mt19937_64 rng(8);
  Batch<double> batch{random_positive<double>({4, 2, 2, 1}, rng), kLabels, {}};
  const auto noise = normal_noise<double>(3, 4, 2, rng);
  const auto result = compute_loss(model, batch, Supervision::class_label, Mode::train, &noise, false);

  double recon = 0.0, kl = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    std::vector<double> xhat(4, 0.0);
    for (std::size_t k = 0; k < 3; ++k) {
      const auto& rows = result.rows[k];
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r] != i) continue;
        for (std::size_t b = 0; b < 4; ++b) xhat[b] += kLabels[i][k] * result.forward[k].estimate[r * 4 + b];
        for (std::size_t u = 0; u < 2; ++u) {
          const double m = result.forward[k].latent.mu[r * 2 + u];
          const double s2 = std::exp(result.forward[k].latent.log_var[r * 2 + u]);
          kl += -0.5 * (1.0 + std::log(s2) - m * m - s2);
        }
      }
    }
    recon += oracle_gkl(std::span<const double>(batch.mixtures.data() + i * 4, 4), xhat);
  }
  EXPECT_NEAR(result.terms.total, (10.0 * kl + recon) / 4.0, 1e-12 * result.terms.total);
}

TEST(Loss, SignalSupervisedIsSumOfPerClassDivergences) {
  ModelBundle<double> model({0, 1, 2}, Variant::ae, Architecture::tiny(), 0.0, 24);
  std::mt19937_64 rng(9);
  Batch<double> batch{random_positive<double>({4, 4, 4, 1}, rng), kLabels, {}};
  for (int k = 0; k < 3; ++k) batch.sources.push_back(random_positive<double>({4, 4, 4, 1}, rng));
  const auto result = compute_loss(model, batch, Supervision::signal, Mode::train, nullptr, false);
  double expected = 0.0;
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t r = 0; r < result.rows[k].size(); ++r) {
      const std::size_t i = result.rows[k][r];
      expected += oracle_gkl(std::span<const double>(batch.sources[k].data() + i * 16, 16),
                             std::span<const double>(result.forward[k].estimate.data() + r * 16, 16));
    }
  EXPECT_NEAR(result.terms.total, expected / 4.0, 1e-12 * expected);

  // Single active class reduces to one divergence.
  Batch<double> single{nn::gather_rows(batch.mixtures, std::vector<std::size_t>{0}), {{0, 1, 0}}, {}};
  for (int k = 0; k < 3; ++k) single.sources.push_back(nn::gather_rows(batch.sources[k], std::vector<std::size_t>{0}));
  const auto one = compute_loss(model, single, Supervision::signal, Mode::eval, nullptr, false);
  EXPECT_NEAR(one.terms.total,
              oracle_gkl(std::span<const double>(single.sources[1].data(), 16),
                         std::span<const double>(one.forward[1].estimate.data(), 16)),
              1e-12);
}

TEST(Loss, ErrorPaths) {
  ModelBundle<float> model({0, 1, 2}, Variant::ae, Architecture::tiny(), 0.0, 25);
  Batch<float> none{Tensor<float>({1, 4, 4, 1}, 1.0f), {{0, 0, 0}}, {}};
  EXPECT_THROW(loss_class_supervised<float>(model, none, nullptr), std::invalid_argument);
  Batch<float> ok{Tensor<float>({1, 4, 4, 1}, 1.0f), {{1, 1, 0}}, {}};
  EXPECT_THROW(loss_signal_supervised<float>(model, ok, nullptr), std::invalid_argument);
  Batch<float> wrong{Tensor<float>({1, 4, 4, 1}, 1.0f), {{1, 1}}, {}};
  EXPECT_THROW(loss_class_supervised<float>(model, wrong, nullptr), ShapeError);
}

TEST(Loss, AffineAndNonDecreasingInBeta) {
  ModelBundle<double> model({0, 1, 2}, Variant::vae, Architecture::tiny(), 0.0, 26);
  std::mt19937_64 rng(10);
  Batch<double> batch{random_positive<double>({4, 4, 4, 1}, rng), kLabels, {}};
  std::vector<double> totals;
  for (double beta : {0.0, 1.0, 10.0}) {
    model.set_beta(beta);
    totals.push_back(loss_class_supervised<double>(model, batch, nullptr, Mode::eval).total);
  }
  EXPECT_LT(totals[0], totals[1]);
  EXPECT_LT(totals[1], totals[2]);
  EXPECT_NEAR(totals[2] - totals[1], 9.0 * (totals[1] - totals[0]), 1e-9 * totals[2]);
}

TEST(Loss, GatedOffClassGetsExactlyZeroGradient) {
  ModelBundle<double> model({0, 1, 2}, Variant::vae, Architecture::tiny(), 10.0, 27);
  std::mt19937_64 rng(11);
  Batch<double> batch{random_positive<double>({3, 4, 4, 1}, rng), {{1, 1, 0}, {1, 1, 0}, {1, 1, 0}}, {}};
  const auto noise = normal_noise<double>(3, 3, 2, rng);
  model.zero_grad();
  compute_loss(model, batch, Supervision::class_label, Mode::train, &noise, true);
  for (auto* p : model.at(2).parameters())
    for (double g : p->grad.values()) EXPECT_EQ(g, 0.0) << p->name;
  bool any = false;
  for (auto* p : model.at(0).parameters())
    for (double g : p->grad.values()) any = any || g != 0.0;
  EXPECT_TRUE(any);

  // The finite-difference view agrees: the loss does not depend on class 2.
  auto loss = [&] { return loss_class_supervised(model, batch, &noise).total; };
  oracle::GradCheckResult r;
  for (auto* p : model.at(2).parameters()) {
    const auto analytic = p->grad;
    oracle::check_entries(p->value.values(), analytic.values(), loss, p->name, r, 1e-5, 5);
  }
  EXPECT_TRUE(r.ok()) << r.first_failure;
}

class FullLossGradient : public ::testing::TestWithParam<std::tuple<Variant, Supervision>> {};

TEST_P(FullLossGradient, MatchesFiniteDifferences) {
  const auto [variant, supervision] = GetParam();
  ModelBundle<double> model({0, 1, 2}, variant, Architecture::tiny(4, 4), 10.0, 31);
  std::mt19937_64 rng(12);
  Batch<double> batch{random_positive<double>({4, 4, 4, 1}, rng), kLabels, {}};
  if (supervision == Supervision::signal)
    for (int k = 0; k < 3; ++k) batch.sources.push_back(random_positive<double>({4, 4, 4, 1}, rng));
  const auto noise = normal_noise<double>(3, 4, 2, rng);

  model.zero_grad();
  compute_loss(model, batch, supervision, Mode::train, &noise, true);
  auto loss = [&] { return compute_loss(model, batch, supervision, Mode::train, &noise, false).terms.total; };
  oracle::GradCheckResult r;
  for (auto* p : model.parameters()) {
    const auto analytic = p->grad;
    oracle::check_entries(p->value.values(), analytic.values(), loss, p->name, r);
  }
  EXPECT_GT(r.checked, 900u);
  EXPECT_TRUE(r.ok()) << r.failures << " of " << r.checked << " failed; first: " << r.first_failure;
}

INSTANTIATE_TEST_SUITE_P(AllVariants, FullLossGradient,
                         ::testing::Combine(::testing::Values(Variant::ae, Variant::vae),
                                            ::testing::Values(Supervision::signal, Supervision::class_label)),
                         [](const auto& info) {
                           return to_string(std::get<0>(info.param)) + "_" + to_string(std::get<1>(info.param));
                         });

TEST(ModelBundle, CheckpointRoundTripPreservesOutputs) {
  const auto dir = std::filesystem::temp_directory_path() / "weaksep_test_bundle";
  ModelBundle<float> model({3, 5, 7}, Variant::vae, Architecture::tiny(10, 6), 10.0, 40);
  std::mt19937_64 rng(13);
  Batch<float> batch{random_positive<float>({4, 10, 6, 1}, rng), kLabels, {}};
  const auto noise = normal_noise<float>(3, 4, 2, rng);
  compute_loss(model, batch, Supervision::class_label, Mode::train, &noise, false);  // moves running stats
  model.save(dir / "m.ckpt");
  auto loaded = ModelBundle<float>::load(dir / "m.ckpt");
  EXPECT_EQ(loaded.labels(), (std::vector<int>{3, 5, 7}));
  EXPECT_EQ(loaded.variant(), Variant::vae);
  EXPECT_EQ(loaded.beta(), 10.0);
  EXPECT_EQ(loaded.architecture(), Architecture::tiny(10, 6));
  EXPECT_EQ(loaded.state(), model.state());
  const auto a = compute_loss(model, batch, Supervision::class_label, Mode::eval, nullptr, false);
  const auto b = compute_loss(loaded, batch, Supervision::class_label, Mode::eval, nullptr, false);
  EXPECT_EQ(a.mixture_estimate, b.mixture_estimate);
  EXPECT_EQ(loaded.index_of(5), 1u);
  EXPECT_THROW(loaded.index_of(4), DataError);
  std::filesystem::remove_all(dir);
}
