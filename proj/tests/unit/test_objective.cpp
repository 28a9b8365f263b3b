#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "lwta/error.hpp"
#include "lwta/objective.hpp"
#include "lwta/ops.hpp"

namespace lwta {
namespace {

using testing::random_tensor;

Network small_net(std::uint64_t seed, std::size_t units = 2) {
  NetworkSpec spec;
  spec.input = {1, 1, 6};
  spec.classes = 4;
  spec.hidden = {DenseLwtaSpec{3, units, false}, DenseLwtaSpec{3, units, true}};
  Rng rng(seed);
  return init_weights(spec, rng, InitKind::fan_in_uniform, WeightPrecision::fp64);
}

// Independent closed form for one distribution.
double kl_oracle(const std::vector<double>& q) {
  double kl = 0.0;
  for (double p : q)
    if (p > 0) kl += p * std::log(p * static_cast<double>(q.size()));
  return kl;
}

TEST(Objective, CrossEntropyMatchesHandComputation) {
  const Tensor logits({2, 3}, {1.0, 2.0, 3.0, 0.0, 0.0, 0.0});
  const double lse0 = std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0));
  const double expected = ((lse0 - 1.0) + std::log(3.0)) / 2.0;
  EXPECT_NEAR(cross_entropy_loss(logits, {0, 2}).item(), expected, 1e-14);
  EXPECT_THROW(cross_entropy_loss(logits, {0, 3}), ContractError);
  EXPECT_THROW(cross_entropy_loss(logits, {0}), DimensionError);
}

TEST(Objective, CrossEntropyGradient) {
  Rng rng(1);
  const Tensor logits = random_tensor({5, 4}, rng, -2, 2);
  const std::vector<std::size_t> labels = {0, 3, 1, 1, 2};
  testing::expect_gradient_matches([&](const Tensor& t) { return cross_entropy_loss(t, labels); }, logits);
}

TEST(Objective, AnalyticKlEdgeCases) {
  for (std::size_t u : {2u, 3u, 4u, 8u}) {
    const Tensor uniform({1, u}, std::vector<double>(u, 1.0 / static_cast<double>(u)));
    EXPECT_NEAR(kl_analytic(uniform, Prior{u}).item(), 0.0, 1e-15);
    std::vector<double> onehot(u, 0.0);
    onehot[u - 1] = 1.0;
    EXPECT_EQ(kl_analytic(Tensor({1, u}, onehot), Prior{u}).item(), std::log(static_cast<double>(u)));
  }
}

TEST(Objective, AnalyticKlIsNonNegativeAndMatchesOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t u = 2 + trial % 7;
    const Tensor probs = softmax(random_tensor({3, 2, u}, rng, -4, 4));
    const double kl = kl_analytic(probs, Prior{u}).item();
    EXPECT_GE(kl, 0.0);
    double oracle = 0.0;
    for (std::size_t g = 0; g < 6; ++g) {
      oracle += kl_oracle(std::vector<double>(probs.values().begin() + static_cast<long>(g * u),
                                              probs.values().begin() + static_cast<long>((g + 1) * u)));
    }
    EXPECT_NEAR(kl, oracle / 3.0, 1e-12);
  }
}

TEST(Objective, AnalyticKlGradient) {
  Rng rng(3);
  const Tensor logits = random_tensor({3, 2, 4}, rng, -2, 2);
  testing::expect_gradient_matches([](const Tensor& t) { return kl_analytic(softmax(t), Prior{4}); }, logits);
}

TEST(Objective, SingleSampleKlHandValue) {
  const Tensor probs({1, 1, 3}, {0.2, 0.5, 0.3});
  const Tensor sample({1, 1, 3}, {0, 1, 0});
  EXPECT_NEAR(kl_single_sample(probs, sample, Prior{3}).item(), std::log(0.5) + std::log(3.0), 1e-15);
  EXPECT_NEAR(kl_single_sample_from_log(log(probs), sample, Prior{3}).item(), std::log(0.5) + std::log(3.0), 1e-15);
  EXPECT_THROW(kl_single_sample(probs, Tensor({1, 1, 3}, {0.5, 0.5, 0}), Prior{3}), ContractError);
  EXPECT_THROW(kl_single_sample(Tensor({1, 1, 3}, {0, 0.5, 0.5}), Tensor({1, 1, 3}, {1, 0, 0}), Prior{3}),
               DomainError);
}

TEST(Objective, PriorMustMatchUnits) {
  EXPECT_THROW(kl_analytic(Tensor({1, 3}, {0.2, 0.5, 0.3}), Prior{4}), DimensionError);
}

TEST(Objective, ElboDecomposes) {
  Rng rng(4);
  const Network net = small_net(5);
  const Tensor x = random_tensor({8, 1, 1, 6}, rng, 0, 1);
  const auto labels = testing::random_labels(8, 4, rng);
  for (auto est : {KlEstimator::analytic, KlEstimator::single_sample}) {
    ElboOptions opts;
    opts.kl_weight = 0.37;
    opts.kl_estimator = est;
    const auto b = elbo_loss(x, labels, net, opts, rng);
    EXPECT_EQ(b.negative_elbo.item(), b.cross_entropy.item() + 0.37 * b.kl_total.item());
    EXPECT_GE(b.kl_total.item(), est == KlEstimator::analytic ? 0.0 : -1e300);
  }
  ElboOptions bad;
  bad.kl_weight = -1.0;
  EXPECT_THROW(elbo_loss(x, labels, net, bad, rng), ParameterError);
}

TEST(Objective, PredictAveragesLogitsThenSoftmax) {
  Rng rng(6);
  const Network net = small_net(7);
  const Tensor x = random_tensor({4, 1, 1, 6}, rng, 0, 1);
  Rng a(11);
  const auto p = predict(x, net, 5, a);
  ASSERT_EQ(p.logit_samples.size(), 5u);
  std::vector<double> mean(p.logit_samples[0].size(), 0.0);
  for (const auto& s : p.logit_samples)
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += s[i];
  for (auto& m : mean) m /= 5.0;
  testing::expect_same_values(p.probs, softmax(Tensor({4, 4}, mean)), 1e-15);
}

TEST(Objective, PredictIsPermutationInvariantInSamples) {
  // Re-averaging the recorded samples in reverse order changes nothing
  // beyond rounding.
  Rng rng(8);
  const Network net = small_net(9);
  const Tensor x = random_tensor({3, 1, 1, 6}, rng, 0, 1);
  Rng a(1);
  const auto p = predict(x, net, 7, a);
  std::vector<double> mean(p.logit_samples[0].size(), 0.0);
  for (auto it = p.logit_samples.rbegin(); it != p.logit_samples.rend(); ++it)
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += (*it)[i];
  for (auto& m : mean) m /= 7.0;
  testing::expect_same_values(p.probs, softmax(Tensor({3, 4}, mean)), 1e-12);
}

TEST(Objective, PredictWithUniformWinnersAndSymmetricWeightsIsUniform) {
  Network net = small_net(10);
  std::vector<Tensor> params;
  for (const auto& t : net.parameters()) params.push_back(Tensor::zeros(t.shape()));
  net.set_parameters(params);
  Rng rng(12);
  const auto p = predict(random_tensor({5, 1, 1, 6}, rng, 0, 1), net, 8, rng);
  for (double v : p.probs.data()) EXPECT_NEAR(v, 0.25, 1e-6);
}

TEST(Objective, PredictNeedsAtLeastOneSample) {
  Rng rng(13);
  const Network net = small_net(14);
  EXPECT_THROW(predict(Tensor::zeros({1, 1, 1, 6}), net, 0, rng), ParameterError);
}

TEST(Objective, ProbabilityAveragingOption) {
  Rng rng(15);
  const Network net = small_net(16);
  const Tensor x = random_tensor({2, 1, 1, 6}, rng, 0, 1);
  const auto p = predict(x, net, 4, rng, SampleMode::hard, PredictionAverage::probabilities);
  std::vector<double> mean(8, 0.0);
  for (const auto& s : p.logit_samples) {
    const Tensor sm = softmax(s);
    for (std::size_t i = 0; i < 8; ++i) mean[i] += sm[i] / 4.0;
  }
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(p.probs[i], mean[i], 1e-15);
}

}  // namespace
}  // namespace lwta
