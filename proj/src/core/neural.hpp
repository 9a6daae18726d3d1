#pragma once

#include <cstdint>

#include <Eigen/Dense>

#include "core/opf_model.hpp"

namespace acopf {

// One-hidden-layer network: y = Box(Sigmoid(W2 ReLu(W1 x + b1) + b2)).
struct MLPParams {
  Eigen::MatrixXd w1;  // hidden x dim_in
  Eigen::VectorXd b1;  // hidden
  Eigen::MatrixXd w2;  // dim_out x hidden
  Eigen::VectorXd b2;  // dim_out

  MLPParams& operator+=(const MLPParams& other);
  MLPParams& operator*=(double s);
  void set_zero();
  bool all_finite() const;
};

using Gradients = MLPParams;

// Per-component input standardization fitted on the training split.
// Components with (near) zero spread keep scale 1 so constant inputs pass
// through unchanged.
struct Scaler {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  Eigen::VectorXd standardize(const Eigen::VectorXd& x) const {
    return (x - mean).cwiseQuotient(scale);
  }
};

Scaler fit_scaler(const Eigen::MatrixXd& rows);  // one sample per row

struct ForwardTrace {
  Eigen::VectorXd x_std;
  Eigen::VectorXd hidden_pre;
  Eigen::VectorXd hidden;
  Eigen::VectorXd beta;  // sigmoid outputs in (0, 1)
  Eigen::VectorXd y;     // box-mapped outputs
};

// He-style uniform fan-in initialization, biases zero. Deterministic for a
// given seed.
MLPParams init_params(int dim_in, int hidden, int dim_out, std::uint64_t seed);

ForwardTrace forward(const MLPParams& params, const Scaler& scaler, const Boxes& boxes,
                     const Eigen::VectorXd& x);

// Exact reverse-mode gradients through the box map (slope lo - hi), sigmoid
// and ReLu (subgradient 0 at the kink).
Gradients backward(const MLPParams& params, const ForwardTrace& trace, const Boxes& boxes,
                   const Eigen::VectorXd& dL_dy);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  MLPParams m;
  MLPParams v;
  long step = 0;

  static AdamState zeros_like(const MLPParams& params);
};

// Standard bias-corrected Adam update.
void adam_step(MLPParams& params, const Gradients& grads, AdamState& state,
               const AdamConfig& config);

// Chains loss adjoints on (y, z1, z2) through the recovery derivatives and
// then through the network:
//   dL/dy_total = dL_dy + (dz1/dy)^T dL_dz1 + (dz2/dy)^T dL_dz2
// followed by backward(trace, dL/dy_total).
Gradients chain_total_gradient(const MLPParams& params, const ForwardTrace& trace,
                               const Boxes& boxes, const Eigen::VectorXd& dL_dy_direct,
                               const Eigen::VectorXd& dL_dz1, const Eigen::VectorXd& dL_dz2,
                               const RecoveryChain& chain);

}  // namespace acopf
