#include "lwta/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lwta/error.hpp"
#include "lwta/objective.hpp"
#include "lwta/ops.hpp"

namespace lwta {

namespace {

constexpr double kDlrStabilizer = 1e-12;
constexpr std::uint64_t kPredictionStream = 0x70726564;  // "pred"
constexpr std::uint64_t kAttackStream = 0x61747463;      // "attc"

Tensor attack_loss(const Tensor& logits, const std::vector<std::size_t>& labels, AttackLoss loss) {
  return loss == AttackLoss::dlr ? dlr_loss(logits, labels) : cross_entropy_loss(logits, labels);
}

}  // namespace

const char* to_string(AttackLoss loss) { return loss == AttackLoss::dlr ? "dlr" : "ce"; }

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0)) throw ParameterError("epsilon must be >= 0");
  if (!(step_size > 0.0)) throw ParameterError("step_size must be > 0");
  if (num_steps < 1) throw ParameterError("num_steps must be >= 1");
  if (eot_samples < 1) throw ParameterError("eot_samples must be >= 1");
  if (!(lower_bound <= upper_bound)) throw ParameterError("input bounds are inverted");
  if (temperature && !(*temperature > 0.0)) throw ParameterError("temperature must be > 0");
}

Tensor dlr_loss(const Tensor& logits, const std::vector<std::size_t>& labels) {
  if (logits.rank() != 2) throw DimensionError("dlr_loss expects [N, classes] logits");
  const std::size_t n = logits.dim(0), classes = logits.dim(1);
  if (classes < 3) throw ParameterError("DLR loss needs at least 3 classes, got " + std::to_string(classes));
  if (labels.size() != n || n == 0) throw DimensionError("label count does not match batch size");

  std::vector<double> slope(logits.size(), 0.0);
  double total = 0.0;
  std::vector<std::size_t> order(classes);
  for (std::size_t r = 0; r < n; ++r) {
    const double* z = logits.data().data() + r * classes;
    const std::size_t y = labels[r];
    if (y >= classes) throw ContractError("label out of range");
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [z](std::size_t a, std::size_t b) { return z[a] > z[b]; });
    const std::size_t other = order[0] != y ? order[0] : order[1];
    const double num = z[y] - z[other];
    const double den = z[order[0]] - z[order[2]] + kDlrStabilizer;
    total += -num / den;
    double* s = slope.data() + r * classes;
    s[y] += -1.0 / den;
    s[other] += 1.0 / den;
    s[order[0]] += num / (den * den);
    s[order[2]] -= num / (den * den);
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  for (auto& v : slope) v *= inv_n;
  return record_op({}, {total * inv_n}, {logits},
                   [slope = std::move(slope)](std::span<const double> g, std::span<std::vector<double>*> gi) {
                     if (auto* gz = gi[0])
                       for (std::size_t i = 0; i < slope.size(); ++i) (*gz)[i] += g[0] * slope[i];
                   });
}

Tensor eot_gradient(const Tensor& x, const std::vector<std::size_t>& labels, const Network& net, std::size_t samples,
                    double temperature, Rng& rng, AttackLoss loss) {
  if (samples < 1) throw ParameterError("EoT needs at least one gradient sample");
  std::vector<double> acc(x.size(), 0.0);
  for (std::size_t s = 0; s < samples; ++s) {
    GradientTape tape;
    Tensor input = x.as_parameter();
    auto pass = forward(net, input, ForwardOptions{SampleMode::relaxed, temperature}, rng);
    tape.backward(attack_loss(pass.logits, labels, loss));
    const auto g = input.grad();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
  }
  if (samples > 1) {
    for (auto& v : acc) v /= static_cast<double>(samples);
  }
  return Tensor(x.shape(), std::move(acc));
}

Tensor pgd_linf(const Tensor& x, const std::vector<std::size_t>& labels, const Network& net, const AttackConfig& cfg,
                Rng& rng) {
  cfg.validate();
  const double lo = cfg.lower_bound, hi = cfg.upper_bound;
  for (double v : x.data()) {
    if (!(v >= lo && v <= hi)) throw ContractError("attack input outside the input bounds");
  }
  const double temperature = cfg.temperature.value_or(net.temperature);
  const std::size_t n = x.size();
  const auto orig = x.data();

  // per-entry projection box: eps-ball intersected with the input bounds
  std::vector<double> box_lo(n), box_hi(n);
  for (std::size_t i = 0; i < n; ++i) {
    box_lo[i] = std::max(orig[i] - cfg.epsilon, lo);
    box_hi[i] = std::min(orig[i] + cfg.epsilon, hi);
  }

  std::vector<double> cur(orig.begin(), orig.end());
  if (cfg.random_start && cfg.epsilon > 0.0) {
    for (std::size_t i = 0; i < n; ++i) cur[i] = std::clamp(orig[i] + rng.uniform(-cfg.epsilon, cfg.epsilon), box_lo[i], box_hi[i]);
  }
  for (std::size_t step = 0; step < cfg.num_steps; ++step) {
    const Tensor g = eot_gradient(Tensor(x.shape(), cur), labels, net, cfg.eot_samples, temperature, rng, cfg.loss);
    for (std::size_t i = 0; i < n; ++i) {
      const double direction = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
      cur[i] = std::clamp(cur[i] + cfg.step_size * direction, box_lo[i], box_hi[i]);
    }
  }
  return Tensor(x.shape(), std::move(cur));
}

Tensor fgsm(const Tensor& x, const std::vector<std::size_t>& labels, const Network& net, double epsilon, Rng& rng,
            double lower_bound, double upper_bound) {
  if (epsilon == 0.0) {
    // a zero step size is not a valid PGD configuration; the result is x
    AttackConfig check;
    check.lower_bound = lower_bound;
    check.upper_bound = upper_bound;
    check.validate();
    return x.detach();
  }
  AttackConfig cfg;
  cfg.epsilon = epsilon;
  cfg.step_size = epsilon;
  cfg.num_steps = 1;
  cfg.eot_samples = 1;
  cfg.random_start = false;
  cfg.lower_bound = lower_bound;
  cfg.upper_bound = upper_bound;
  return pgd_linf(x, labels, net, cfg, rng);
}

double linf_distance(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw DimensionError("linf_distance: shape mismatch");
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

namespace {

std::vector<bool> correct_flags(const Tensor& x, const std::vector<std::size_t>& labels, const Network& net,
                                const EvaluationOptions& options, const Rng& stream) {
  const std::size_t repeats = std::max<std::size_t>(1, options.vote_repeats);
  std::vector<std::size_t> votes(labels.size(), 0);
  for (std::size_t r = 0; r < repeats; ++r) {
    Rng rng = repeats == 1 ? stream : stream.derive(r);
    const auto pred = predict(x, net, options.prediction_samples, rng).labels();
    for (std::size_t i = 0; i < labels.size(); ++i) votes[i] += pred[i] == labels[i] ? 1 : 0;
  }
  std::vector<bool> flags(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) flags[i] = 2 * votes[i] > repeats;
  return flags;
}

}  // namespace

AttackReport evaluate_robustness(const Dataset& data, const Network& net, const AttackConfig& cfg,
                                 const EvaluationOptions& options) {
  if (data.size() == 0) throw ParameterError("cannot evaluate on an empty dataset");
  if (options.prediction_samples < 1) throw ParameterError("prediction needs at least one sample");
  if (options.batch_size < 1) throw ParameterError("batch_size must be >= 1");
  cfg.validate();
  AttackReport report;
  const Rng root(cfg.seed);
  const Rng prediction_root = root.derive(kPredictionStream);
  const Rng attack_root = root.derive(kAttackStream);
  const BatchIterator batches(data, options.batch_size, cfg.seed, /*shuffle=*/false);
  double linf_sum = 0.0;
  std::size_t batch_index = 0;
  for (const auto& idx : batches.batches(0)) {
    const Batch b = gather(data, idx);
    const Rng prediction_stream = prediction_root.derive(batch_index);
    const auto natural = correct_flags(b.images, b.labels, net, options, prediction_stream);

    Rng attack_rng = attack_root.derive(batch_index);
    const Tensor adv = cfg.epsilon == 0.0 ? b.images : pgd_linf(b.images, b.labels, net, cfg, attack_rng);
    const auto robust = correct_flags(adv, b.labels, net, options, prediction_stream);

    const std::size_t per = b.images.size() / idx.size();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      double d = 0.0;
      for (std::size_t k = 0; k < per; ++k) d = std::max(d, std::abs(adv[i * per + k] - b.images[i * per + k]));
      linf_sum += d;
      report.max_linf = std::max(report.max_linf, d);
      report.natural_correct.push_back(natural[i]);
      report.robust_correct.push_back(robust[i]);
      report.attack_success.push_back(natural[i] && !robust[i]);
    }
    ++batch_index;
  }
  const double n = static_cast<double>(data.size());
  report.natural_accuracy =
      static_cast<double>(std::count(report.natural_correct.begin(), report.natural_correct.end(), true)) / n;
  report.robust_accuracy =
      static_cast<double>(std::count(report.robust_correct.begin(), report.robust_correct.end(), true)) / n;
  report.mean_linf = linf_sum / n;
  return report;
}

double accuracy(const Dataset& data, const Network& net, std::size_t prediction_samples, std::uint64_t seed,
                std::size_t batch_size) {
  if (data.size() == 0) throw ParameterError("cannot evaluate on an empty dataset");
  const Rng root = Rng(seed).derive(kPredictionStream);
  const BatchIterator batches(data, batch_size, seed, false);
  std::size_t correct = 0, batch_index = 0;
  for (const auto& idx : batches.batches(0)) {
    const Batch b = gather(data, idx);
    Rng rng = root.derive(batch_index++);
    const auto pred = predict(b.images, net, prediction_samples, rng).labels();
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == b.labels[i] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace lwta
