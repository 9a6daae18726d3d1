#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "core/neural.hpp"

namespace acopf {

// Load scenarios drawn around the case's nominal demands, split
// train/validation/test 10:1:1 along cumulative-floor boundaries (the test
// count is floor(n/12), validation fills up to floor(2n/12), the remainder
// trains; 5000 -> 4167/417/416).
struct Dataset {
  Eigen::MatrixXd x;  // one sample per row, columns [Pd per bus; Qd per bus]
  int n_train = 0, n_val = 0, n_test = 0;
  std::uint64_t seed = 0;

  int count() const { return static_cast<int>(x.rows()); }
  int train_begin() const { return 0; }
  int val_begin() const { return n_train; }
  int test_begin() const { return n_train + n_val; }
};

// Each component is drawn independently and uniformly within +-10% of its
// nominal value (a zero nominal stays exactly zero).
Dataset sample_dataset(const NetworkModel& net, int count, std::uint64_t seed);

struct MultiplierVector {
  Eigen::VectorXd mu;  // one per inequality slot, >= 0 throughout
  double alpha = 2.0;
  int update_period = 10;
};

// mu' = ReLu(mu + alpha * h_aggregate), element-wise. h_aggregate is the
// mean inequality vector over the epoch's training samples.
Eigen::VectorXd dual_update(const Eigen::VectorXd& mu, const Eigen::VectorXd& h_aggregate,
                            double alpha);

struct LossBreakdown {
  double total = 0.0;
  double cost = 0.0;      // generation cost term f
  double penalty = 0.0;   // constraint penalty term
  double mismatch = 0.0;  // load-mismatch term (no-solver baseline only)
  std::array<double, 4> nu_block_mean{};  // indexed by SplitLayout::Block
  std::array<double, 4> nu_block_max{};
};

// Modified augmented Lagrangian:
//   L = f + (1/2a) sum_i [ ReLu(mu_i + a h_i)^2 - mu_i^2 ]
// Sentinel slots carry mu = 0 and contribute nothing.
LossBreakdown augmented_loss(const SplitLayout& layout, double f, const Eigen::VectorXd& h,
                             const Eigen::VectorXd& mu, double alpha);

// Quadratic-penalty baseline: L = f + lambda ||nu||^2.
LossBreakdown dc3_loss(const SplitLayout& layout, double f, const Eigen::VectorXd& nu,
                       double lambda);

enum class LossKind { Dual, Dc3, Ngt };
const char* loss_kind_name(LossKind kind);

enum class ModelVariant {
  PartialDecisions,  // y head, remaining variables recovered by a solver
  FullState,         // [V; theta] head, injections rebuilt algebraically
};

struct TrainConfig {
  LossKind loss = LossKind::Dual;
  SolverKind solver = SolverKind::NewtonRaphson;
  int epochs = 1000;
  int batch_size = 32;
  int dual_period = 10;
  double alpha = 2.0;
  double lambda = 1.0;  // dc3 penalty weight
  double eta = 10.0;    // ngt weights
  double tau = 0.5;
  int samples = 5000;
  int hidden = 0;  // 0 -> 50 for systems up to 30 buses, else 100
  double lr = 1e-3;
  std::uint64_t seed = 1;
  double pf_tol = kDefaultTolerance;
  int pf_max_iter = -1;  // solver default
  double max_failure_fraction = 0.01;
  double theta_band = 0.5;  // angle box half-width for the full-state head
  int threads = 0;          // 0 -> hardware concurrency
};

int resolve_hidden(const TrainConfig& config, const NetworkModel& net);

struct TrainedModel {
  ModelVariant variant = ModelVariant::PartialDecisions;
  MLPParams params;
  Scaler scaler;
  int hidden = 0;
  std::string case_checksum;
  TrainConfig config;
};

struct EpochLog {
  int epoch = 0;
  LossBreakdown loss;         // averaged over the epoch's solved samples
  double nu_mean = 0.0;       // pooled over non-sentinel slots and samples
  double nu_max = 0.0;
  int pf_failures = 0;
  double mu_norm = 0.0;
  double val_metric = std::numeric_limits<double>::quiet_NaN();
  bool checkpointed = false;
};

struct TrainOutput {
  TrainedModel model;  // parameters with the best validation metric
  std::vector<EpochLog> log;
  Eigen::VectorXd mu_final;
};

// One evaluation of the full-state baseline on a sample: predicted voltage
// state, implied generation and flows, constraint vector and loss. No power
// flow is solved.
struct NgtEval {
  ForwardTrace trace;
  Eigen::VectorXd v, theta;
  Eigen::VectorXd h;
  Eigen::VectorXd pd_hat, qd_hat;  // implied loads at every bus
  double load_mismatch_sq = 0.0;   // squared error over PQ buses
  LossBreakdown loss;
};

NgtEval ngt_forward_and_loss(const SplitLayout& layout, const MLPParams& params,
                             const Scaler& scaler, const Boxes& boxes, const Eigen::VectorXd& x,
                             double eta, double tau);

Gradients ngt_gradient(const SplitLayout& layout, const MLPParams& params, const Scaler& scaler,
                       const Boxes& boxes, const NgtEval& eval, const Eigen::VectorXd& x,
                       double eta, double tau);

// Minibatch training with the periodic projected dual update. Throws
// Error{TooManyPFFailures} when more than max_failure_fraction of an epoch's
// samples diverge and Error{NonFiniteLoss} on a non-finite loss or gradient.
TrainOutput train(const SplitLayout& layout, const TrainConfig& config, const Dataset& dataset,
                  const std::function<void(const EpochLog&)>& on_epoch = nullptr);

}  // namespace acopf
