#include "lwta/objective.hpp"

#include <cmath>

#include "lwta/error.hpp"
#include "lwta/ops.hpp"

namespace lwta {

namespace {

void check_prior(const Tensor& probs, const Prior& prior) {
  if (probs.rank() < 2) throw DimensionError("KL terms need a [N, ..., U] tensor");
  if (probs.shape().back() != prior.units) {
    throw DimensionError("prior has " + std::to_string(prior.units) + " units, posterior has " +
                         std::to_string(probs.shape().back()));
  }
}

std::vector<std::size_t> one_hot_indices(const Tensor& sample) {
  const std::size_t width = sample.shape().back();
  const std::size_t rows = sample.size() / width;
  std::vector<std::size_t> idx(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t ones = 0;
    for (std::size_t u = 0; u < width; ++u) {
      const double v = sample[r * width + u];
      if (v == 1.0) {
        idx[r] = u;
        ++ones;
      } else if (v != 0.0) {
        ones = 2;
      }
    }
    if (ones != 1) throw ContractError("kl_single_sample needs a one-hot sample");
  }
  return idx;
}

}  // namespace

Tensor cross_entropy_loss(const Tensor& logits, const std::vector<std::size_t>& labels) {
  if (logits.rank() != 2) throw DimensionError("cross_entropy_loss expects [N, classes] logits");
  const std::size_t n = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != n) throw DimensionError("label count does not match batch size");
  if (n == 0) throw DimensionError("cross_entropy_loss on an empty batch");
  for (auto y : labels) {
    if (y >= classes) throw ContractError("label " + std::to_string(y) + " out of range for " +
                                          std::to_string(classes) + " classes");
  }
  return scale(sum(pick(log_softmax(logits), labels)), -1.0 / static_cast<double>(n));
}

Tensor kl_single_sample_from_log(const Tensor& log_probs, const Tensor& sample, const Prior& prior) {
  check_prior(log_probs, prior);
  if (sample.shape() != log_probs.shape()) throw DimensionError("sample shape differs from posterior shape");
  const auto winners = one_hot_indices(sample);
  const double n = static_cast<double>(log_probs.dim(0));
  const double log_prior = std::log(1.0 / static_cast<double>(prior.units));
  // sum_b [log q(winner_b) - log p]
  Tensor total = add_scalar(sum(pick(log_probs, winners)), -log_prior * static_cast<double>(winners.size()));
  return scale(total, 1.0 / n);
}

Tensor kl_single_sample(const Tensor& probs, const Tensor& sample, const Prior& prior) {
  check_prior(probs, prior);
  if (sample.shape() != probs.shape()) throw DimensionError("sample shape differs from posterior shape");
  const auto winners = one_hot_indices(sample);
  Tensor q = pick(probs, winners);
  for (double v : q.data()) {
    if (!(v > 0.0)) throw DomainError("winner probability must be positive");
  }
  const double n = static_cast<double>(probs.dim(0));
  const double log_prior = std::log(1.0 / static_cast<double>(prior.units));
  return scale(add_scalar(sum(log(q)), -log_prior * static_cast<double>(winners.size())), 1.0 / n);
}

Tensor kl_analytic(const Tensor& probs, const Prior& prior) {
  check_prior(probs, prior);
  const double units = static_cast<double>(prior.units);
  const double n = static_cast<double>(probs.dim(0));
  const auto q = probs.data();
  double total = 0.0;
  std::vector<double> slope(q.size(), 0.0);
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (q[i] > 0.0) {
      const double l = std::log(q[i] * units);
      total += q[i] * l;
      slope[i] = (l + 1.0) / n;
    }
  }
  return record_op({}, {total / n}, {probs},
                   [slope = std::move(slope)](std::span<const double> g, std::span<std::vector<double>*> gi) {
                     if (auto* gq = gi[0])
                       for (std::size_t i = 0; i < slope.size(); ++i) (*gq)[i] += g[0] * slope[i];
                   });
}

Tensor total_kl(const std::vector<WinnerState>& winners, KlEstimator estimator) {
  Tensor total = Tensor::scalar(0.0);
  for (const auto& state : winners) {
    const Prior prior{state.units()};
    Tensor term;
    if (estimator == KlEstimator::analytic) {
      term = kl_analytic(state.probs, prior);
    } else {
      // a relaxed sample is discretized to its Gumbel-max winner
      const Tensor hard = state.mode == SampleMode::relaxed ? winner_mask_argmax(state.sample) : state.sample;
      term = kl_single_sample_from_log(state.log_probs, hard, prior);
    }
    total = add(total, term);
  }
  return total;
}

ElboBreakdown elbo_loss(const Tensor& x, const std::vector<std::size_t>& labels, const Network& net,
                        const ElboOptions& options, Rng& rng) {
  if (options.kl_weight < 0.0) throw ParameterError("kl_weight must be >= 0");
  auto pass = forward(net, x, ForwardOptions{options.mode, options.temperature}, rng);
  ElboBreakdown out;
  out.kl_weight = options.kl_weight;
  out.cross_entropy = cross_entropy_loss(pass.logits, labels);
  out.kl_total = total_kl(pass.winners, options.kl_estimator);
  out.negative_elbo = add(out.cross_entropy, scale(out.kl_total, options.kl_weight));
  return out;
}

std::vector<std::size_t> Prediction::labels() const { return argmax(probs); }

Prediction predict(const Tensor& x, const Network& net, std::size_t samples, Rng& rng, SampleMode mode,
                   PredictionAverage average) {
  if (samples < 1) throw ParameterError("prediction needs at least one sample");
  NoGradGuard no_grad;
  Prediction out;
  std::vector<double> acc;
  for (std::size_t l = 0; l < samples; ++l) {
    Tensor logits = forward(net, x, ForwardOptions{mode, net.temperature}, rng).logits;
    const Tensor contrib = average == PredictionAverage::logits ? logits : softmax(logits);
    if (acc.empty()) acc.assign(contrib.size(), 0.0);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += contrib[i];
    out.logit_samples.push_back(std::move(logits));
  }
  const Shape shape = out.logit_samples.front().shape();
  for (auto& v : acc) v /= static_cast<double>(samples);
  Tensor mean_value(shape, std::move(acc));
  out.probs = average == PredictionAverage::logits ? softmax(mean_value) : mean_value;
  return out;
}

}  // namespace lwta
