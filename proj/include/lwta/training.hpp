#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lwta/attacks.hpp"
#include "lwta/data.hpp"
#include "lwta/error.hpp"
#include "lwta/network.hpp"
#include "lwta/objective.hpp"

namespace lwta {

// tau(epoch) = max(min, initial * exp(-decay * epoch)); decay 0 keeps it constant.
struct TemperatureSchedule {
  double initial = kDefaultTemperature;
  double minimum = kDefaultTemperature;
  double decay = 0.0;

  double at(std::size_t epoch) const;
};

struct TrainConfig {
  std::size_t epochs = 1;
  std::size_t batch_size = 128;
  double lr0 = 0.1;
  std::size_t lr_halving_start_epoch = 75;
  double momentum = 0.9;
  double weight_decay = 0.0;
  // Inner maximization. epsilon 0 gives plain ELBO training.
  AttackConfig attack = [] {
    AttackConfig a;
    a.num_steps = 10;
    return a;
  }();
  TemperatureSchedule temperature;
  // Unset: 1 / number of training examples.
  std::optional<double> kl_weight;
  KlEstimator kl_estimator = KlEstimator::analytic;
  std::uint64_t seed = 0;

  // Evaluation after each epoch on `eval_data` (if provided to the trainer).
  AttackConfig eval_attack;
  std::size_t eval_prediction_samples = 1;

  std::size_t checkpoint_every = 1;  // 0 disables
  std::optional<std::filesystem::path> checkpoint_path;
  // Optional cap on optimizer steps per epoch (0 = full epoch).
  std::size_t max_steps_per_epoch = 0;

  void validate() const;
};

// Learning rate: lr0 before `lr_halving_start_epoch`, then halved every epoch.
double lr_schedule(std::size_t epoch, const TrainConfig& cfg);

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double tau = 0.0;
  double ce = 0.0;
  double kl = 0.0;
  double nelbo = 0.0;
  std::optional<double> nat_acc;
  std::optional<double> rob_acc;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  // Per optimizer step, training negative ELBO.
  std::vector<double> step_losses;

  static constexpr const char* kCsvHeader = "epoch,lr,tau,ce,kl,nelbo,nat_acc,rob_acc,seconds";
  // include_timing = false writes seconds as 0 for byte-stable output.
  std::string to_csv(bool include_timing = true) const;
};

class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

struct TrainResult {
  Network network;
  TrainHistory history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Adversarial training: each minibatch is replaced by PGD examples crafted
// against the current weights, then one SGD-with-momentum step is taken on
// the negative ELBO.
TrainResult adversarial_train(Network network, const Dataset& data, const TrainConfig& cfg,
                              const Dataset* eval_data = nullptr, const EpochCallback& on_epoch = {});

// SGD with momentum over a network's parameters.
class SgdMomentum {
 public:
  SgdMomentum(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}
  // Reads gradients from the network parameters and installs updated ones.
  void step(Network& net, double lr);

 private:
  double momentum_;
  double weight_decay_;
  std::vector<std::vector<double>> velocity_;
};

}  // namespace lwta
