#pragma once

#include <cstddef>
#include <vector>

#include "lwta/layers.hpp"
#include "lwta/network.hpp"
#include "lwta/rng.hpp"
#include "lwta/tensor.hpp"

namespace lwta {

// Symmetric categorical prior over the U units of a block: p(u) = 1/U.
struct Prior {
  std::size_t units = 1;
};

// Mean over the batch of -log softmax(logits)[label].
Tensor cross_entropy_loss(const Tensor& logits, const std::vector<std::size_t>& labels);

// Single-sample KL estimate: sum over blocks (and positions) of
// log q(winner) - log(1/U), averaged over the leading batch axis.
// `sample` must be one-hot.
Tensor kl_single_sample(const Tensor& probs, const Tensor& sample, const Prior& prior);
// Same estimate evaluated from log-probabilities, differentiable in them.
Tensor kl_single_sample_from_log(const Tensor& log_probs, const Tensor& sample, const Prior& prior);

// Closed form sum_u q_u log(q_u U) per block, summed over blocks, averaged
// over the batch. 0 log 0 is taken as 0.
Tensor kl_analytic(const Tensor& probs, const Prior& prior);

enum class KlEstimator {
  analytic,       // exact expectation under the current posterior
  single_sample,  // log q(hard winner) - log p(hard winner)
};

struct ElboOptions {
  SampleMode mode = SampleMode::relaxed;
  double temperature = kDefaultTemperature;
  double kl_weight = 1.0;
  KlEstimator kl_estimator = KlEstimator::analytic;
};

struct ElboBreakdown {
  Tensor cross_entropy;
  Tensor kl_total;
  Tensor negative_elbo;  // cross_entropy + kl_weight * kl_total
  double kl_weight = 0.0;
};

// KL summed over the winner states of one forward pass.
Tensor total_kl(const std::vector<WinnerState>& winners, KlEstimator estimator);

// One stochastic forward pass and the resulting negative ELBO, recorded on
// the active tape when parameters are tracked.
ElboBreakdown elbo_loss(const Tensor& x, const std::vector<std::size_t>& labels, const Network& net,
                        const ElboOptions& options, Rng& rng);

enum class PredictionAverage { logits, probabilities };

struct Prediction {
  Tensor probs;                       // [N, classes]
  std::vector<Tensor> logit_samples;  // L entries of [N, classes]

  std::vector<std::size_t> labels() const;
};

// Averages the logits of `samples` independent stochastic passes and applies
// softmax once (or averages per-pass probabilities).
Prediction predict(const Tensor& x, const Network& net, std::size_t samples, Rng& rng,
                   SampleMode mode = SampleMode::hard, PredictionAverage average = PredictionAverage::logits);

}  // namespace lwta
