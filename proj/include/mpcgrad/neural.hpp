#pragma once

#include "mpcgrad/dataset.hpp"
#include "mpcgrad/json_io.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mpcgrad {

struct MlpArchitecture {
  int input_dim = 2;
  std::vector<int> hidden = {16, 16};
  int output_dim = 1;

  void validate() const;
  bool operator==(const MlpArchitecture&) const = default;
};

struct DenseLayer {
  Matrix W;  // fan_out x fan_in
  Vector b;

  bool operator==(const DenseLayer& o) const { return W == o.W && b == o.b; }
};

/// ReLU hidden layers followed by an affine output layer.
struct MlpParams {
  std::vector<DenseLayer> layers;

  MlpArchitecture architecture() const;
  std::size_t size() const;
  bool operator==(const MlpParams&) const = default;
};

/// Glorot-uniform weights, zero biases; a pure function of (arch, seed).
MlpParams init_params(const MlpArchitecture& arch, std::uint64_t seed);

/// Parameters concatenated layer by layer: W row-major, then b.
Vector flatten(const MlpParams& params);
MlpParams unflatten(const MlpArchitecture& arch, const Vector& theta);

Vector forward(const MlpParams& params, const Vector& x);

/// d mu / d x (m x n). A pre-activation of exactly zero counts as inactive.
Matrix input_jacobian(const MlpParams& params, const Vector& x);

/// sum_i |u_i - mu(x_i)|^2 + gamma |u'_i - dmu/dx(x_i)|_F^2
double sobolev_loss(const MlpParams& params, std::span<const SampleTriplet> batch, double gamma);

/// Exact gradient of sobolev_loss with activation masks held fixed.
MlpParams loss_gradient(const MlpParams& params, std::span<const SampleTriplet> batch,
                        double gamma);

struct TrainConfig {
  double gamma = 0.0;
  int batch_size = 5;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double loss_target = 0.01;
  int max_epochs = 50000;
  std::uint64_t seed = 0;
  bool shuffle = true;

  void validate() const;
};

enum class StopReason { TargetReached, EpochCap };

struct TrainReport {
  MlpParams final_params;
  int epochs_run = 0;
  std::vector<double> loss_history;  ///< full training-set loss after each epoch
  StopReason stop_reason = StopReason::EpochCap;

  bool operator==(const TrainReport&) const = default;
};

/// Mini-batch Adam on the Sobolev loss. Deterministic in cfg.seed.
TrainReport train(const Dataset& ds, const MlpArchitecture& arch, const TrainConfig& cfg);

/// Same loop starting from given parameters.
TrainReport train_from(const Dataset& ds, MlpParams params, const TrainConfig& cfg);

Json params_to_json(const MlpParams& params);
MlpParams params_from_json(const Json& j);

const char* to_string(StopReason r);

}  // namespace mpcgrad
