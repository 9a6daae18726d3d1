#pragma once

#include <memory>

#include "core/powerflow.hpp"

namespace acopf {

// Placeholder written into inequality slots of branches without a flow
// limit; keeps the constraint vector at its full dimension while making the
// slot inert (its multiplier stays at zero and its violation is zero).
constexpr double kSentinelH = -1e6;

// Slot bookkeeping for the decision split
//   x  = [Pd all buses; Qd all buses]                          (2N)
//   y  = [Pg at gen buses; V at gen buses; V_ref; theta_ref]   (2Ng + 2)
//   z1 = [V at PQ buses; theta at PV buses; theta at PQ buses] (2Nd + Ng)
//   z2 = [Pg_ref; Qg_ref; Qg at gen buses; S^2 per branch]     (Ng + M + 2)
// and for the inequality vector
//   h  = [S^2 - S_max^2 (M); V - V_max (N); V_min - V (N);
//         Pg - Pg_max, Pg_min - Pg, Qg - Qg_max, Qg_min - Qg
//         (each over the Ng generators then the reference one)]
// of total length M + 2N + 4(Ng + 1). Generator ordinals are bus-index
// ascending; ordinal Ng denotes the reference generator.
class SplitLayout {
 public:
  explicit SplitLayout(const NetworkModel& net);

  const NetworkModel& net() const { return *net_; }

  int n_bus() const { return net_->n_bus; }
  int n_branch() const { return net_->n_branch; }
  int n_gen() const { return static_cast<int>(net_->gens.size()); }
  int n_pq() const { return static_cast<int>(net_->pq_buses.size()); }

  int dim_x() const { return 2 * n_bus(); }
  int dim_y() const { return 2 * n_gen() + 2; }
  int dim_z1() const { return 2 * n_pq() + n_gen(); }
  int dim_z2() const { return n_gen() + n_branch() + 2; }
  int dim_h() const { return n_branch() + 2 * n_bus() + 4 * (n_gen() + 1); }

  // x slots
  int x_pd(int bus) const { return bus; }
  int x_qd(int bus) const { return n_bus() + bus; }

  // y slots
  int y_pg(int gen) const { return gen; }
  int y_vg(int gen) const { return n_gen() + gen; }
  int y_vref() const { return 2 * n_gen(); }
  int y_thref() const { return 2 * n_gen() + 1; }

  // z1 slots
  int z1_v_pq(int pq_ordinal) const { return pq_ordinal; }
  int z1_theta_pv(int gen) const { return n_pq() + gen; }
  int z1_theta_pq(int pq_ordinal) const { return n_pq() + n_gen() + pq_ordinal; }

  // z2 slots
  int z2_pg_ref() const { return 0; }
  int z2_qg_ref() const { return 1; }
  int z2_qg(int gen) const { return 2 + gen; }
  int z2_s2(int branch) const { return 2 + n_gen() + branch; }

  // h slots; gen_ordinal in [0, n_gen()] with n_gen() = reference generator
  int h_s2(int branch) const { return branch; }
  int h_v_upper(int bus) const { return n_branch() + bus; }
  int h_v_lower(int bus) const { return n_branch() + n_bus() + bus; }
  int h_pg_upper(int gen_ordinal) const { return gen_base() + gen_ordinal; }
  int h_pg_lower(int gen_ordinal) const { return gen_base() + (n_gen() + 1) + gen_ordinal; }
  int h_qg_upper(int gen_ordinal) const { return gen_base() + 2 * (n_gen() + 1) + gen_ordinal; }
  int h_qg_lower(int gen_ordinal) const { return gen_base() + 3 * (n_gen() + 1) + gen_ordinal; }

  bool h_is_sentinel(int slot) const {
    return slot < n_branch() && net_->branches[slot].s_max <= 0.0;
  }
  int sentinel_count() const { return sentinel_count_; }

  // Metric grouping of h slots by the decision quantity they bound.
  enum class Block { S2 = 0, V = 1, Pg = 2, Qg = 3 };
  Block block_of(int slot) const;
  static const char* block_name(Block b);

  // Full-bus voltage state from the split pieces (theta at the slack comes
  // from y's reference-angle slot).
  void assemble_state(const Eigen::VectorXd& y, const Eigen::VectorXd& z1, Eigen::VectorXd& v,
                      Eigen::VectorXd& theta) const;
  Eigen::VectorXd z1_from_state(const Eigen::VectorXd& v, const Eigen::VectorXd& theta) const;

  // Permutations between z1 slots and the solver's unknown ordering.
  Eigen::VectorXd z1_from_unknowns(const Eigen::VectorXd& u) const;
  Eigen::VectorXd unknowns_from_z1_adjoint(const Eigen::VectorXd& z1_bar) const;

 private:
  int gen_base() const { return n_branch() + 2 * n_bus(); }
  const NetworkModel* net_;
  int sentinel_count_ = 0;
};

// Per-slot output boxes, applied through apply_box.
struct Boxes {
  Eigen::VectorXd lo, hi;
  int size() const { return static_cast<int>(lo.size()); }
};

// Boxes for the y layout: generator P limits, generator-bus V limits, slack
// V limits and the degenerate [0, 0] reference-angle slot.
Boxes y_boxes(const SplitLayout& layout);

// Boxes for the whole-state output head used by the no-solver baseline:
// [V per bus; theta per bus] with theta in +-theta_band and the reference
// angle pinned to zero.
Boxes state_boxes(const NetworkModel& net, double theta_band);

// beta in [0, 1] -> beta*lo + (1-beta)*hi, clamped into the box so floating
// point rounding can never step outside it.
double apply_box(double beta, double lo, double hi);
Eigen::VectorXd apply_box(const Eigen::VectorXd& beta, const Boxes& boxes);

struct RecoveryResult {
  Eigen::VectorXd z1;
  PFSolution solution;
  PFProblem problem;
};

// Solves the balance equations for the unknown voltages/angles given loads x
// and partial decisions y. Propagates solver errors; a non-converged solve
// is reported through solution.converged.
RecoveryResult recover_z1(const SplitLayout& layout, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& y, SolverKind solver,
                          const FdpfFactors* factors = nullptr,
                          std::optional<PFState> warm_start = std::nullopt,
                          double tol = kDefaultTolerance, int max_iter = -1);

// Active/reactive flow on the from side of a branch.
struct BranchFlow {
  double p = 0.0, q = 0.0;
};
BranchFlow branch_flow_from(const BranchParams& br, const Eigen::VectorXd& v,
                            const Eigen::VectorXd& theta);

// Partials of the from-side flow with respect to the endpoint state;
// d/dtheta_to = -d/dtheta_from for both components.
struct BranchFlowPartials {
  double dp_dvf = 0.0, dp_dvt = 0.0, dp_dthf = 0.0;
  double dq_dvf = 0.0, dq_dvt = 0.0, dq_dthf = 0.0;
};
BranchFlowPartials branch_flow_partials(const BranchParams& br, const Eigen::VectorXd& v,
                                        const Eigen::VectorXd& theta);

// Derived variables from the full voltage state: reference-bus generation,
// generator reactive outputs and squared from-side branch flows.
Eigen::VectorXd compute_z2(const SplitLayout& layout, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& v, const Eigen::VectorXd& theta);

// Total polynomial generation cost; coefficients act on MW.
double objective(const SplitLayout& layout, const Eigen::VectorXd& y, const Eigen::VectorXd& z2);

// Gradient of the objective with respect to the y and z2 slots it touches.
void objective_gradient(const SplitLayout& layout, const Eigen::VectorXd& y,
                        const Eigen::VectorXd& z2, Eigen::VectorXd& df_dy,
                        Eigen::VectorXd& df_dz2);

// Inequality vector in layout order; unconstrained branch slots pinned at
// kSentinelH.
Eigen::VectorXd inequality_h(const SplitLayout& layout, const Eigen::VectorXd& y,
                             const Eigen::VectorXd& z1, const Eigen::VectorXd& z2);

// Element-wise ReLu of h; sentinel slots map to zero.
Eigen::VectorXd violation_nu(const Eigen::VectorXd& h);

// Loads implied by a voltage state at every bus: known generation minus
// calculated injection (exact at the reference bus by the z2 definitions).
void reconstructed_loads(const SplitLayout& layout, const Eigen::VectorXd& y,
                         const Eigen::VectorXd& z2, const Eigen::VectorXd& v,
                         const Eigen::VectorXd& theta, Eigen::VectorXd& pd_hat,
                         Eigen::VectorXd& qd_hat);

// Adjoints of a scalar loss with respect to the split pieces, assembled from
// dL/dh plus the objective gradient.
struct LossAdjoints {
  Eigen::VectorXd dy;   // direct dependence through y slots in h and f
  Eigen::VectorXd dz1;  // through V at PQ buses in h
  Eigen::VectorXd dz2;  // through Pg_ref/Qg/S^2 slots in h and f
};
LossAdjoints loss_adjoints(const SplitLayout& layout, const Eigen::VectorXd& dL_dh,
                           const Eigen::VectorXd& df_dy, const Eigen::VectorXd& df_dz2);

// Backpropagation context around one converged recovery: chains adjoints on
// (y, z1, z2) into the total derivative with respect to y, using the
// implicit sensitivities of the solve and the analytic z2 derivatives.
class RecoveryChain {
 public:
  RecoveryChain(const SplitLayout& layout, const PFProblem& problem, const PFSolution& solution);

  // dL/dy_total = dL_dy + (dz1/dy)^T dL_dz1 + (dz2/dy)^T dL_dz2
  Eigen::VectorXd total_dy(const Eigen::VectorXd& dL_dy, const Eigen::VectorXd& dL_dz1,
                           const Eigen::VectorXd& dL_dz2) const;

  // Full-state adjoint of the z2 map: (dz2/d(V, theta))^T lambda.
  void state_adjoint_from_z2(const Eigen::VectorXd& dL_dz2, Eigen::VectorXd& v_bar,
                             Eigen::VectorXd& theta_bar) const;

  const ImplicitSensitivity& sensitivity() const { return sens_; }

 private:
  const SplitLayout* layout_;
  Eigen::VectorXd v_, theta_;
  ImplicitSensitivity sens_;
};

}  // namespace acopf
