#include "lwta/training.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "lwta/error.hpp"
#include "lwta/model_io.hpp"

namespace lwta {

namespace {

constexpr std::uint64_t kAttackStream = 0xa77ac0;
constexpr std::uint64_t kSampleStream = 0x5a3b1e;

}  // namespace

double TemperatureSchedule::at(std::size_t epoch) const {
  return std::max(minimum, initial * std::exp(-decay * static_cast<double>(epoch)));
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ParameterError("epochs must be >= 1");
  if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
  if (!(lr0 > 0.0)) throw ParameterError("lr0 must be > 0");
  if (momentum < 0.0 || momentum >= 1.0) throw ParameterError("momentum must be in [0, 1)");
  if (!(temperature.initial > 0.0) || !(temperature.minimum > 0.0)) throw ParameterError("temperature must be > 0");
  if (kl_weight && *kl_weight < 0.0) throw ParameterError("kl_weight must be >= 0");
  attack.validate();
}

double lr_schedule(std::size_t epoch, const TrainConfig& cfg) {
  if (epoch < cfg.lr_halving_start_epoch) return cfg.lr0;
  return std::ldexp(cfg.lr0, -static_cast<int>(epoch - cfg.lr_halving_start_epoch + 1));
}

std::string TrainHistory::to_csv(bool include_timing) const {
  std::ostringstream os;
  os << kCsvHeader << '\n';
  os << std::setprecision(17);
  auto opt = [&](const std::optional<double>& v) {
    if (v) os << *v;
  };
  for (const auto& r : epochs) {
    os << r.epoch << ',' << r.lr << ',' << r.tau << ',' << r.ce << ',' << r.kl << ',' << r.nelbo << ',';
    opt(r.nat_acc);
    os << ',';
    opt(r.rob_acc);
    os << ',' << (include_timing ? r.seconds : 0.0) << '\n';
  }
  return os.str();
}

void SgdMomentum::step(Network& net, double lr) {
  auto params = net.parameters();
  if (velocity_.size() != params.size()) {
    velocity_.clear();
    for (const auto& p : params) velocity_.emplace_back(p.size(), 0.0);
  }
  std::vector<Tensor> updated;
  updated.reserve(params.size());
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& p = params[k];
    const auto g = p.grad();
    auto& v = velocity_[k];
    std::vector<double> next(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i] + weight_decay_ * p[i];
      v[i] = momentum_ * v[i] + gi;
      double w = p[i] - lr * v[i];
      if (net.precision == WeightPrecision::fp32) w = static_cast<float>(w);
      if (!std::isfinite(w)) throw TrainingDiverged("weight update produced a non-finite value");
      next[i] = w;
    }
    updated.push_back(Tensor::parameter(p.shape(), std::move(next)));
  }
  net.set_parameters(updated);
}

TrainResult adversarial_train(Network network, const Dataset& data, const TrainConfig& cfg, const Dataset* eval_data,
                              const EpochCallback& on_epoch) {
  cfg.validate();
  if (data.size() == 0) throw ParameterError("training dataset is empty");
  TrainResult result;
  result.network = network.clone();
  Network& net = result.network;

  const double kl_weight = cfg.kl_weight.value_or(1.0 / static_cast<double>(data.size()));
  const Rng root(cfg.seed);
  const BatchIterator batches(data, cfg.batch_size, cfg.seed);
  SgdMomentum optimizer(cfg.momentum, cfg.weight_decay);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr_schedule(epoch, cfg);
    rec.tau = cfg.temperature.at(epoch);
    net.temperature = rec.tau;

    AttackConfig inner = cfg.attack;
    inner.temperature = rec.tau;
    const Rng epoch_rng = root.derive(epoch);
    double ce_sum = 0.0, kl_sum = 0.0, nelbo_sum = 0.0;
    std::size_t steps = 0;
    for (const auto& idx : batches.batches(epoch)) {
      if (cfg.max_steps_per_epoch && steps >= cfg.max_steps_per_epoch) break;
      const Batch b = gather(data, idx);
      Tensor x = b.images;
      if (inner.epsilon > 0.0) {
        Rng attack_rng = epoch_rng.derive(kAttackStream).derive(steps);
        x = pgd_linf(b.images, b.labels, net, inner, attack_rng);
      }
      Rng sample_rng = epoch_rng.derive(kSampleStream).derive(steps);
      double nelbo_value = 0.0;
      {
        GradientTape tape;
        const auto elbo = elbo_loss(x, b.labels, net,
                                    ElboOptions{SampleMode::relaxed, rec.tau, kl_weight, cfg.kl_estimator}, sample_rng);
        nelbo_value = elbo.negative_elbo.item();
        if (!std::isfinite(nelbo_value)) {
          throw TrainingDiverged("negative ELBO became non-finite at epoch " + std::to_string(epoch) + ", step " +
                                 std::to_string(steps));
        }
        ce_sum += elbo.cross_entropy.item();
        kl_sum += elbo.kl_total.item();
        nelbo_sum += nelbo_value;
        tape.backward(elbo.negative_elbo);
      }
      optimizer.step(net, rec.lr);
      result.history.step_losses.push_back(nelbo_value);
      ++steps;
    }
    const double denom = static_cast<double>(std::max<std::size_t>(steps, 1));
    rec.ce = ce_sum / denom;
    rec.kl = kl_sum / denom;
    rec.nelbo = nelbo_sum / denom;

    if (eval_data != nullptr && eval_data->size() > 0) {
      AttackConfig eval_cfg = cfg.eval_attack;
      eval_cfg.temperature = rec.tau;
      EvaluationOptions opts;
      opts.prediction_samples = cfg.eval_prediction_samples;
      const auto report = evaluate_robustness(*eval_data, net, eval_cfg, opts);
      rec.nat_acc = report.natural_accuracy;
      rec.rob_acc = report.robust_accuracy;
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.epochs.push_back(rec);
    if (cfg.checkpoint_path && cfg.checkpoint_every > 0 &&
        ((epoch + 1) % cfg.checkpoint_every == 0 || epoch + 1 == cfg.epochs)) {
      save_model(net, *cfg.checkpoint_path);
    }
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

}  // namespace lwta
