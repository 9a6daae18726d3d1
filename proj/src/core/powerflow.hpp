#pragma once

#include <atomic>
#include <memory>
#include <optional>

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "core/case_io.hpp"

namespace acopf {

// Index bookkeeping shared by the residual vector, the Jacobian, the
// decoupled matrices and the sensitivity machinery.
//
//   unknowns u: [theta at PV buses asc; theta at PQ buses asc; V at PQ asc]
//   rows r(u):  [dP at PV asc; dP at PQ asc; dQ at PQ asc]
//
// with dP_i = P_inj,i - V_i sum_j V_j (G_ij cos th_ij + B_ij sin th_ij) and
// dQ_i analogous. Dimension is n_gen + 2*n_pq for both.
struct SolverIndex {
  explicit SolverIndex(const NetworkModel& net);

  int n = 0;
  std::vector<int> theta_pos;  // bus -> unknown slot, -1 if fixed
  std::vector<int> v_pos;      // bus -> unknown slot, -1 if fixed
  std::vector<int> p_row;      // bus -> residual row, -1 if none
  std::vector<int> q_row;      // bus -> residual row, -1 if none
};

struct PFProblem {
  const NetworkModel* net = nullptr;
  // Net scheduled injections, in residual row order (PV asc then PQ asc for
  // p, PQ asc for q).
  Eigen::VectorXd p_injection;
  Eigen::VectorXd q_injection;
  // Per-bus voltage setpoints; only slack and PV entries are binding, PQ
  // entries seed the flat start.
  Eigen::VectorXd v_setpoint;
  double theta_ref = 0.0;
};

// Builds the problem for a case's own load and dispatch (gen-table Pg and Vg,
// slack absorbing the balance).
PFProblem nominal_problem(const NetworkModel& net);

struct PFState {
  Eigen::VectorXd v;      // all buses
  Eigen::VectorXd theta;  // all buses (rad)
};

struct PFSolution {
  Eigen::VectorXd v;
  Eigen::VectorXd theta;
  int iterations = 0;
  double residual_norm = 0.0;
  bool converged = false;
};

struct PFJacobian {
  // d(dP,dQ)/d(theta_PV, theta_PQ, V_PQ) in SolverIndex ordering.
  Eigen::SparseMatrix<double> matrix;
};

enum class SolverKind { NewtonRaphson, FastDecoupled };

constexpr double kDefaultTolerance = 1e-5;
constexpr int kDefaultNrMaxIter = 30;
constexpr int kDefaultFdpfMaxIter = 100;

// Calculated complex injections at every bus for a voltage state.
void bus_injections(const NetworkModel& net, const Eigen::VectorXd& v,
                    const Eigen::VectorXd& theta, Eigen::VectorXd& p_calc,
                    Eigen::VectorXd& q_calc);

// Accumulates wp * dP_bus/d(V, theta) + wq * dQ_bus/d(V, theta) into full-bus
// adjoint vectors; the reverse-mode counterpart of bus_injections.
void add_injection_adjoint(const NetworkModel& net, const Eigen::VectorXd& v,
                           const Eigen::VectorXd& theta, int bus, double wp, double wq,
                           Eigen::VectorXd& v_bar, Eigen::VectorXd& theta_bar);

// Mismatch vector (scheduled minus calculated) in row order.
Eigen::VectorXd residuals(const PFProblem& problem, const Eigen::VectorXd& v,
                          const Eigen::VectorXd& theta);

PFJacobian jacobian(const PFProblem& problem, const Eigen::VectorXd& v,
                    const Eigen::VectorXd& theta);

PFSolution solve_nr(const PFProblem& problem, std::optional<PFState> start = std::nullopt,
                    double tol = kDefaultTolerance, int max_iter = kDefaultNrMaxIter);

// Constant decoupled matrices of a network, factorized once and reused for
// every fast-decoupled solve against that network.
//
// B' is assembled from branch reactances alone (resistances, charging, taps,
// shifts and bus shunts dropped), reduced to non-slack buses in theta order.
// B'' is the negated imaginary part of the full nodal admittance with phase
// shifts zeroed, reduced to PQ buses.
class FdpfFactors {
 public:
  explicit FdpfFactors(const NetworkModel& net);

  const Eigen::SparseLU<Eigen::SparseMatrix<double>>& bp() const { return bp_lu_; }
  const Eigen::SparseLU<Eigen::SparseMatrix<double>>& bpp() const { return bpp_lu_; }

  // Total matrix factorizations performed by all instances since process
  // start. Lets tests pin down that solves never refactorize.
  static long total_factorizations();

 private:
  Eigen::SparseLU<Eigen::SparseMatrix<double>> bp_lu_;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> bpp_lu_;
};

PFSolution solve_fdpf(const PFProblem& problem, const FdpfFactors& factors,
                      std::optional<PFState> start = std::nullopt,
                      double tol = kDefaultTolerance, int max_iter = kDefaultFdpfMaxIter);

// Convenience overload that factorizes ad hoc; fine for one-off solves.
PFSolution solve_fdpf(const PFProblem& problem, std::optional<PFState> start = std::nullopt,
                      double tol = kDefaultTolerance, int max_iter = kDefaultFdpfMaxIter);

PFSolution solve(const PFProblem& problem, SolverKind kind,
                 std::optional<PFState> start = std::nullopt, double tol = kDefaultTolerance,
                 int max_iter = -1);

// Derivatives of the solved unknowns with respect to the solver inputs,
// obtained from the implicit function theorem at a converged solution:
// du/dp = -J^{-1} dr/dp with J the residual Jacobian. Input columns are
// ordered [P injections at PV buses asc; V setpoints at PV asc; V setpoint
// at slack; reference angle]. The reference-angle column is identically
// zero: solutions are anchored to the slack angle, so shifting it moves all
// angles together and leaves the anchored unknowns unchanged.
class ImplicitSensitivity {
 public:
  ImplicitSensitivity(const PFProblem& problem, const PFSolution& solution);

  int n_unknowns() const { return index_.n; }
  int n_inputs() const { return 2 * static_cast<int>(net_->gens.size()) + 2; }

  // Dense d(unknowns)/d(inputs), unknowns in SolverIndex order.
  Eigen::MatrixXd dense_matrix() const;

  // Adjoint product (d unknowns / d inputs)^T u_bar via one transposed solve.
  Eigen::VectorXd vjp(const Eigen::VectorXd& u_bar) const;

  const SolverIndex& index() const { return index_; }

 private:
  Eigen::SparseMatrix<double> input_jacobian() const;  // dr/d(inputs), sparse

  const NetworkModel* net_;
  SolverIndex index_;
  Eigen::VectorXd v_, theta_;
  Eigen::SparseMatrix<double> jac_;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu_;
};

}  // namespace acopf
