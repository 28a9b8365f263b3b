#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "lwta/data.hpp"
#include "lwta/network.hpp"
#include "lwta/rng.hpp"
#include "lwta/tensor.hpp"

namespace lwta {

enum class AttackLoss { cross_entropy, dlr };

const char* to_string(AttackLoss loss);

struct AttackConfig {
  double epsilon = 8.0 / 255.0;
  double step_size = 0.007;
  std::size_t num_steps = 20;
  std::size_t eot_samples = 1;
  AttackLoss loss = AttackLoss::cross_entropy;
  bool random_start = true;
  double lower_bound = 0.0;
  double upper_bound = 1.0;
  std::uint64_t seed = 0;
  // Relaxed sampling temperature for input gradients; unset uses the network's.
  std::optional<double> temperature;

  // Throws ParameterError on invalid settings.
  void validate() const;
};

// Difference of logits ratio: mean of -(z_y - max_{i!=y} z_i) / (z_(1) - z_(3) + 1e-12).
Tensor dlr_loss(const Tensor& logits, const std::vector<std::size_t>& labels);

// Mean over `samples` relaxed forward passes of d loss / d x at the same x.
Tensor eot_gradient(const Tensor& x, const std::vector<std::size_t>& labels, const Network& net, std::size_t samples,
                    double temperature, Rng& rng, AttackLoss loss = AttackLoss::cross_entropy);

// l_inf projected gradient ascent; output stays in the eps-ball around x and
// inside [lower_bound, upper_bound].
Tensor pgd_linf(const Tensor& x, const std::vector<std::size_t>& labels, const Network& net, const AttackConfig& cfg,
                Rng& rng);

// Single signed-gradient step of size eps (pgd_linf with one step, no random
// start, one EoT sample).
Tensor fgsm(const Tensor& x, const std::vector<std::size_t>& labels, const Network& net, double epsilon, Rng& rng,
            double lower_bound = 0.0, double upper_bound = 1.0);

double linf_distance(const Tensor& a, const Tensor& b);

struct AttackReport {
  double natural_accuracy = 0.0;
  double robust_accuracy = 0.0;
  std::vector<bool> natural_correct;
  std::vector<bool> robust_correct;
  std::vector<bool> attack_success;  // correct before the attack, wrong after
  double mean_linf = 0.0;
  double max_linf = 0.0;
};

struct EvaluationOptions {
  std::size_t prediction_samples = 1;
  std::size_t batch_size = 128;
  // >1: an example counts as correct when the majority of this many
  // independent predictions is correct.
  std::size_t vote_repeats = 1;
};

AttackReport evaluate_robustness(const Dataset& data, const Network& net, const AttackConfig& cfg,
                                 const EvaluationOptions& options = {});

// Fraction of correct predictions under predict(L) with a fixed seed.
double accuracy(const Dataset& data, const Network& net, std::size_t prediction_samples, std::uint64_t seed,
                std::size_t batch_size = 256);

}  // namespace lwta
