#include "core/neural.hpp"

#include <cmath>
#include <random>

namespace acopf {

MLPParams& MLPParams::operator+=(const MLPParams& other) {
  w1 += other.w1;
  b1 += other.b1;
  w2 += other.w2;
  b2 += other.b2;
  return *this;
}

MLPParams& MLPParams::operator*=(double s) {
  w1 *= s;
  b1 *= s;
  w2 *= s;
  b2 *= s;
  return *this;
}

void MLPParams::set_zero() {
  w1.setZero();
  b1.setZero();
  w2.setZero();
  b2.setZero();
}

bool MLPParams::all_finite() const {
  return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite();
}

Scaler fit_scaler(const Eigen::MatrixXd& rows) {
  const int dim = static_cast<int>(rows.cols());
  const double n = static_cast<double>(rows.rows());
  Scaler scaler;
  scaler.mean = rows.colwise().mean();
  scaler.scale.resize(dim);
  for (int j = 0; j < dim; ++j) {
    const double var = (rows.col(j).array() - scaler.mean[j]).square().sum() / n;
    const double sd = std::sqrt(var);
    scaler.scale[j] = sd > 1e-12 ? sd : 1.0;
  }
  return scaler;
}

MLPParams init_params(int dim_in, int hidden, int dim_out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto uniform_in = [&rng](double limit) {
    return (2.0 * uniform_unit(rng()) - 1.0) * limit;
  };
  MLPParams params;
  params.w1.resize(hidden, dim_in);
  params.b1 = Eigen::VectorXd::Zero(hidden);
  params.w2.resize(dim_out, hidden);
  params.b2 = Eigen::VectorXd::Zero(dim_out);
  const double lim1 = std::sqrt(6.0 / static_cast<double>(dim_in));
  for (int i = 0; i < hidden; ++i)
    for (int j = 0; j < dim_in; ++j) params.w1(i, j) = uniform_in(lim1);
  const double lim2 = std::sqrt(6.0 / static_cast<double>(hidden));
  for (int i = 0; i < dim_out; ++i)
    for (int j = 0; j < hidden; ++j) params.w2(i, j) = uniform_in(lim2);
  return params;
}

ForwardTrace forward(const MLPParams& params, const Scaler& scaler, const Boxes& boxes,
                     const Eigen::VectorXd& x) {
  ForwardTrace trace;
  trace.x_std = scaler.standardize(x);
  trace.hidden_pre = params.w1 * trace.x_std + params.b1;
  trace.hidden = trace.hidden_pre.cwiseMax(0.0);
  Eigen::VectorXd out_pre = params.w2 * trace.hidden + params.b2;
  trace.beta = (1.0 + (-out_pre.array()).exp()).inverse().matrix();
  trace.y = apply_box(trace.beta, boxes);
  return trace;
}

Gradients backward(const MLPParams& params, const ForwardTrace& trace, const Boxes& boxes,
                   const Eigen::VectorXd& dL_dy) {
  // dy/dbeta = lo - hi, dbeta/dpre = beta (1 - beta)
  Eigen::VectorXd d_out = dL_dy.array() * (boxes.lo - boxes.hi).array() * trace.beta.array() *
                          (1.0 - trace.beta.array());
  Gradients grads;
  grads.w2 = d_out * trace.hidden.transpose();
  grads.b2 = d_out;
  Eigen::VectorXd d_hidden = params.w2.transpose() * d_out;
  for (int i = 0; i < d_hidden.size(); ++i) {
    if (trace.hidden_pre[i] <= 0.0) d_hidden[i] = 0.0;
  }
  grads.w1 = d_hidden * trace.x_std.transpose();
  grads.b1 = d_hidden;
  return grads;
}

AdamState AdamState::zeros_like(const MLPParams& params) {
  AdamState state;
  state.m = params;
  state.m.set_zero();
  state.v = state.m;
  state.step = 0;
  return state;
}

void adam_step(MLPParams& params, const Gradients& grads, AdamState& state,
               const AdamConfig& config) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    m = config.beta1 * m + (1.0 - config.beta1) * g;
    v = config.beta2 * v + (1.0 - config.beta2) * g.cwiseProduct(g);
    p -= (config.lr * (m / bc1).array() / ((v / bc2).array().sqrt() + config.eps)).matrix();
  };
  update(params.w1, grads.w1, state.m.w1, state.v.w1);
  update(params.w2, grads.w2, state.m.w2, state.v.w2);
  update(params.b1, grads.b1, state.m.b1, state.v.b1);
  update(params.b2, grads.b2, state.m.b2, state.v.b2);
}

Gradients chain_total_gradient(const MLPParams& params, const ForwardTrace& trace,
                               const Boxes& boxes, const Eigen::VectorXd& dL_dy_direct,
                               const Eigen::VectorXd& dL_dz1, const Eigen::VectorXd& dL_dz2,
                               const RecoveryChain& chain) {
  return backward(params, trace, boxes, chain.total_dy(dL_dy_direct, dL_dz1, dL_dz2));
}

}  // namespace acopf
