#include "core/powerflow.hpp"

#include <cmath>
#include <limits>

namespace acopf {

namespace {

using Complex = std::complex<double>;
using SparseC = Eigen::SparseMatrix<Complex, Eigen::RowMajor>;

// Walks one Ybus row and emits the partial derivatives of the calculated
// injections P_i, Q_i with respect to every coupled bus variable:
//   emit(j, dP_i/dV_j, dP_i/dth_j, dQ_i/dV_j, dQ_i/dth_j)
// off-diagonals first, then the accumulated j == i entry.
template <class Emit>
void injection_partials_row(const NetworkModel& net, const Eigen::VectorXd& v,
                            const Eigen::VectorXd& theta, int i, Emit&& emit) {
  double dp_dvi = 0.0, dp_dthi = 0.0, dq_dvi = 0.0, dq_dthi = 0.0;
  for (SparseC::InnerIterator it(net.ybus, i); it; ++it) {
    const int j = static_cast<int>(it.col());
    const double g = it.value().real();
    const double b = it.value().imag();
    if (j == i) {
      dp_dvi += 2.0 * v[i] * g;
      dq_dvi += -2.0 * v[i] * b;
      continue;
    }
    const double c = std::cos(theta[i] - theta[j]);
    const double s = std::sin(theta[i] - theta[j]);
    const double t1 = g * c + b * s;
    const double t2 = g * s - b * c;
    emit(j, v[i] * t1, v[i] * v[j] * t2, v[i] * t2, -v[i] * v[j] * t1);
    dp_dvi += v[j] * t1;
    dp_dthi -= v[i] * v[j] * t2;
    dq_dvi += v[j] * t2;
    dq_dthi += v[i] * v[j] * t1;
  }
  emit(i, dp_dvi, dp_dthi, dq_dvi, dq_dthi);
}

PFState initial_state(const PFProblem& problem, const std::optional<PFState>& start) {
  const NetworkModel& net = *problem.net;
  PFState state;
  if (start.has_value()) {
    state = *start;
  } else {
    state.v = problem.v_setpoint;
    state.theta = Eigen::VectorXd::Constant(net.n_bus, problem.theta_ref);
  }
  // Fixed quantities are part of the problem, not the start guess.
  state.v[net.ref_bus] = problem.v_setpoint[net.ref_bus];
  for (int b : net.pv_buses) state.v[b] = problem.v_setpoint[b];
  state.theta[net.ref_bus] = problem.theta_ref;
  return state;
}

std::atomic<long> g_fdpf_factorizations{0};

}  // namespace

SolverIndex::SolverIndex(const NetworkModel& net) {
  const int n_bus = net.n_bus;
  theta_pos.assign(n_bus, -1);
  v_pos.assign(n_bus, -1);
  p_row.assign(n_bus, -1);
  q_row.assign(n_bus, -1);

  int slot = 0;
  for (int b : net.pv_buses) theta_pos[b] = slot++;
  for (int b : net.pq_buses) theta_pos[b] = slot++;
  for (int b : net.pq_buses) v_pos[b] = slot++;
  n = slot;

  int row = 0;
  for (int b : net.pv_buses) p_row[b] = row++;
  for (int b : net.pq_buses) p_row[b] = row++;
  for (int b : net.pq_buses) q_row[b] = row++;
}

void bus_injections(const NetworkModel& net, const Eigen::VectorXd& v,
                    const Eigen::VectorXd& theta, Eigen::VectorXd& p_calc,
                    Eigen::VectorXd& q_calc) {
  Eigen::VectorXcd vc(net.n_bus);
  for (int i = 0; i < net.n_bus; ++i) vc[i] = std::polar(v[i], theta[i]);
  Eigen::VectorXcd s = vc.cwiseProduct((net.ybus * vc).conjugate());
  p_calc = s.real();
  q_calc = s.imag();
}

void add_injection_adjoint(const NetworkModel& net, const Eigen::VectorXd& v,
                           const Eigen::VectorXd& theta, int bus, double wp, double wq,
                           Eigen::VectorXd& v_bar, Eigen::VectorXd& theta_bar) {
  if (wp == 0.0 && wq == 0.0) return;
  injection_partials_row(net, v, theta, bus,
                         [&](int j, double dp_dv, double dp_dth, double dq_dv, double dq_dth) {
                           v_bar[j] += wp * dp_dv + wq * dq_dv;
                           theta_bar[j] += wp * dp_dth + wq * dq_dth;
                         });
}

Eigen::VectorXd residuals(const PFProblem& problem, const Eigen::VectorXd& v,
                          const Eigen::VectorXd& theta) {
  const NetworkModel& net = *problem.net;
  SolverIndex idx(net);
  Eigen::VectorXd p_calc, q_calc;
  bus_injections(net, v, theta, p_calc, q_calc);

  const int n_p = static_cast<int>(net.pv_buses.size() + net.pq_buses.size());
  Eigen::VectorXd r(idx.n);
  for (int b = 0; b < net.n_bus; ++b) {
    if (idx.p_row[b] >= 0) r[idx.p_row[b]] = problem.p_injection[idx.p_row[b]] - p_calc[b];
    if (idx.q_row[b] >= 0) r[idx.q_row[b]] = problem.q_injection[idx.q_row[b] - n_p] - q_calc[b];
  }
  return r;
}

PFJacobian jacobian(const PFProblem& problem, const Eigen::VectorXd& v,
                    const Eigen::VectorXd& theta) {
  const NetworkModel& net = *problem.net;
  SolverIndex idx(net);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(net.ybus.nonZeros() * 4);
  for (int b = 0; b < net.n_bus; ++b) {
    const int rp = idx.p_row[b];
    const int rq = idx.q_row[b];
    if (rp < 0 && rq < 0) continue;
    injection_partials_row(net, v, theta, b,
                           [&](int j, double dp_dv, double dp_dth, double dq_dv, double dq_dth) {
                             // residual = scheduled - calculated
                             if (idx.theta_pos[j] >= 0) {
                               if (rp >= 0) trip.emplace_back(rp, idx.theta_pos[j], -dp_dth);
                               if (rq >= 0) trip.emplace_back(rq, idx.theta_pos[j], -dq_dth);
                             }
                             if (idx.v_pos[j] >= 0) {
                               if (rp >= 0) trip.emplace_back(rp, idx.v_pos[j], -dp_dv);
                               if (rq >= 0) trip.emplace_back(rq, idx.v_pos[j], -dq_dv);
                             }
                           });
  }
  PFJacobian jac;
  jac.matrix.resize(idx.n, idx.n);
  jac.matrix.setFromTriplets(trip.begin(), trip.end());
  jac.matrix.makeCompressed();
  return jac;
}

PFSolution solve_nr(const PFProblem& problem, std::optional<PFState> start, double tol,
                    int max_iter) {
  if (!(tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "tolerance must be positive");
  const NetworkModel& net = *problem.net;
  SolverIndex idx(net);
  PFState state = initial_state(problem, start);

  PFSolution sol;
  for (int iter = 0;; ++iter) {
    Eigen::VectorXd r = residuals(problem, state.v, state.theta);
    const double rn = r.norm();
    if (rn < tol) {
      sol.converged = true;
      sol.iterations = iter;
      sol.residual_norm = rn;
      break;
    }
    if (iter >= max_iter || !std::isfinite(rn)) {
      sol.converged = false;
      sol.iterations = iter;
      sol.residual_norm = rn;
      break;
    }

    PFJacobian jac = jacobian(problem, state.v, state.theta);
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(jac.matrix);
    if (lu.info() != Eigen::Success) {
      throw Error(ErrorCode::SingularJacobian, "power-flow Jacobian factorization failed");
    }
    Eigen::VectorXd step = lu.solve(-r);
    if (!step.allFinite()) {
      throw Error(ErrorCode::SingularJacobian, "power-flow Jacobian solve produced non-finite step");
    }
    for (int b = 0; b < net.n_bus; ++b) {
      if (idx.theta_pos[b] >= 0) state.theta[b] += step[idx.theta_pos[b]];
      if (idx.v_pos[b] >= 0) state.v[b] += step[idx.v_pos[b]];
    }
  }
  sol.v = std::move(state.v);
  sol.theta = std::move(state.theta);
  return sol;
}

FdpfFactors::FdpfFactors(const NetworkModel& net) {
  SolverIndex idx(net);
  const int n_theta = static_cast<int>(net.pv_buses.size() + net.pq_buses.size());
  const int n_pq = static_cast<int>(net.pq_buses.size());

  // B': series-reactance network Laplacian over non-slack buses.
  std::vector<Eigen::Triplet<double>> bp_trip;
  for (const auto& br : net.branches) {
    const double x = std::imag(1.0 / br.y_series);
    if (x == 0.0) {
      throw Error(ErrorCode::SingularDecoupledMatrix,
                  "branch with zero reactance cannot enter the decoupled model");
    }
    const double w = 1.0 / x;
    const int pf = idx.theta_pos[br.from];
    const int pt = idx.theta_pos[br.to];
    if (pf >= 0) bp_trip.emplace_back(pf, pf, w);
    if (pt >= 0) bp_trip.emplace_back(pt, pt, w);
    if (pf >= 0 && pt >= 0) {
      bp_trip.emplace_back(pf, pt, -w);
      bp_trip.emplace_back(pt, pf, -w);
    }
  }
  Eigen::SparseMatrix<double> bp(n_theta, n_theta);
  bp.setFromTriplets(bp_trip.begin(), bp_trip.end());
  bp.makeCompressed();

  // B'': -Im of the full nodal admittance with phase shifts removed,
  // reduced to PQ buses.
  std::vector<int> pq_pos(net.n_bus, -1);
  for (int k = 0; k < n_pq; ++k) pq_pos[net.pq_buses[k]] = k;
  std::vector<Eigen::Triplet<double>> bpp_trip;
  auto add_bpp = [&](int i, int j, const Complex& y) {
    if (pq_pos[i] >= 0 && pq_pos[j] >= 0) bpp_trip.emplace_back(pq_pos[i], pq_pos[j], -y.imag());
  };
  for (const auto& br : net.branches) {
    BranchParams flat = br;
    flat.shift = 0.0;
    BranchAdmittance adm = branch_admittance(flat);
    add_bpp(br.from, br.from, adm.yff);
    add_bpp(br.from, br.to, adm.yft);
    add_bpp(br.to, br.from, adm.ytf);
    add_bpp(br.to, br.to, adm.ytt);
  }
  for (int i = 0; i < net.n_bus; ++i) {
    add_bpp(i, i, Complex(net.shunt_g[i], net.shunt_b[i]));
  }
  Eigen::SparseMatrix<double> bpp(n_pq, n_pq);
  bpp.setFromTriplets(bpp_trip.begin(), bpp_trip.end());
  bpp.makeCompressed();

  bp_lu_.compute(bp);
  g_fdpf_factorizations.fetch_add(1, std::memory_order_relaxed);
  if (bp_lu_.info() != Eigen::Success) {
    throw Error(ErrorCode::SingularDecoupledMatrix, "B' factorization failed");
  }
  bpp_lu_.compute(bpp);
  g_fdpf_factorizations.fetch_add(1, std::memory_order_relaxed);
  if (bpp_lu_.info() != Eigen::Success) {
    throw Error(ErrorCode::SingularDecoupledMatrix, "B'' factorization failed");
  }
}

long FdpfFactors::total_factorizations() {
  return g_fdpf_factorizations.load(std::memory_order_relaxed);
}

PFSolution solve_fdpf(const PFProblem& problem, const FdpfFactors& factors,
                      std::optional<PFState> start, double tol, int max_iter) {
  if (!(tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "tolerance must be positive");
  const NetworkModel& net = *problem.net;
  SolverIndex idx(net);
  const int n_theta = static_cast<int>(net.pv_buses.size() + net.pq_buses.size());
  const int n_pq = static_cast<int>(net.pq_buses.size());
  PFState state = initial_state(problem, start);

  PFSolution sol;
  auto finish = [&](bool converged, int iterations, double rn) {
    sol.converged = converged;
    sol.iterations = iterations;
    sol.residual_norm = rn;
    sol.v = state.v;
    sol.theta = state.theta;
  };

  Eigen::VectorXd r = residuals(problem, state.v, state.theta);
  double rn = r.norm();
  if (rn < tol) {
    finish(true, 0, rn);
    return sol;
  }

  for (int iter = 1; iter <= max_iter; ++iter) {
    // Angle half-step from the active mismatches scaled by voltage.
    Eigen::VectorXd rhs_p(n_theta);
    for (int b = 0; b < net.n_bus; ++b) {
      if (idx.p_row[b] >= 0) rhs_p[idx.p_row[b]] = r[idx.p_row[b]] / state.v[b];
    }
    Eigen::VectorXd dth = factors.bp().solve(rhs_p);
    for (int b = 0; b < net.n_bus; ++b) {
      if (idx.theta_pos[b] >= 0) state.theta[b] += dth[idx.theta_pos[b]];
    }
    r = residuals(problem, state.v, state.theta);
    rn = r.norm();
    if (!std::isfinite(rn)) {
      finish(false, iter, rn);
      return sol;
    }
    if (rn < tol) {
      finish(true, iter, rn);
      return sol;
    }

    // Magnitude half-step from the reactive mismatches.
    if (n_pq > 0) {
      Eigen::VectorXd rhs_q(n_pq);
      for (int b = 0; b < net.n_bus; ++b) {
        if (idx.q_row[b] >= 0) rhs_q[idx.q_row[b] - n_theta] = r[idx.q_row[b]] / state.v[b];
      }
      Eigen::VectorXd dv = factors.bpp().solve(rhs_q);
      for (int k = 0; k < n_pq; ++k) state.v[net.pq_buses[k]] += dv[k];
      r = residuals(problem, state.v, state.theta);
      rn = r.norm();
      if (!std::isfinite(rn)) {
        finish(false, iter, rn);
        return sol;
      }
      if (rn < tol) {
        finish(true, iter, rn);
        return sol;
      }
    }
  }
  finish(false, max_iter, rn);
  return sol;
}

PFSolution solve_fdpf(const PFProblem& problem, std::optional<PFState> start, double tol,
                      int max_iter) {
  FdpfFactors factors(*problem.net);
  return solve_fdpf(problem, factors, std::move(start), tol, max_iter);
}

PFSolution solve(const PFProblem& problem, SolverKind kind, std::optional<PFState> start,
                 double tol, int max_iter) {
  if (kind == SolverKind::NewtonRaphson) {
    return solve_nr(problem, std::move(start), tol, max_iter < 0 ? kDefaultNrMaxIter : max_iter);
  }
  return solve_fdpf(problem, std::move(start), tol, max_iter < 0 ? kDefaultFdpfMaxIter : max_iter);
}

PFProblem nominal_problem(const NetworkModel& net) {
  SolverIndex idx(net);
  const int n_p = static_cast<int>(net.pv_buses.size() + net.pq_buses.size());
  PFProblem problem;
  problem.net = &net;
  problem.p_injection = Eigen::VectorXd::Zero(n_p);
  problem.q_injection = Eigen::VectorXd::Zero(static_cast<int>(net.pq_buses.size()));
  problem.v_setpoint = Eigen::VectorXd::Ones(net.n_bus);
  problem.theta_ref = 0.0;

  for (int b = 0; b < net.n_bus; ++b) {
    if (idx.p_row[b] >= 0) problem.p_injection[idx.p_row[b]] = -net.nominal_pd[b];
    if (idx.q_row[b] >= 0) problem.q_injection[idx.q_row[b] - n_p] = -net.nominal_qd[b];
  }
  for (const auto& gen : net.gens) {
    problem.p_injection[idx.p_row[gen.bus]] += gen.p_default;
    problem.v_setpoint[gen.bus] = gen.v_setpoint;
  }
  problem.v_setpoint[net.ref_bus] = net.ref_gen.v_setpoint;
  return problem;
}

ImplicitSensitivity::ImplicitSensitivity(const PFProblem& problem, const PFSolution& solution)
    : net_(problem.net), index_(*problem.net), v_(solution.v), theta_(solution.theta) {
  if (!solution.converged) {
    throw Error(ErrorCode::NotConvergedInput,
                "sensitivities need a converged power-flow solution");
  }
  jac_ = jacobian(problem, v_, theta_).matrix;
  lu_.compute(jac_);
  if (lu_.info() != Eigen::Success) {
    throw Error(ErrorCode::SingularJacobian, "Jacobian factorization failed at the solution");
  }
}

Eigen::SparseMatrix<double> ImplicitSensitivity::input_jacobian() const {
  const NetworkModel& net = *net_;
  const int n_gen = static_cast<int>(net.gens.size());
  std::vector<int> v_input_col(net.n_bus, -1);
  for (int k = 0; k < n_gen; ++k) v_input_col[net.gens[k].bus] = n_gen + k;
  v_input_col[net.ref_bus] = 2 * n_gen;

  std::vector<Eigen::Triplet<double>> trip;
  // Scheduled active injections: unit entries in the matching dP rows.
  for (int k = 0; k < n_gen; ++k) {
    trip.emplace_back(index_.p_row[net.gens[k].bus], k, 1.0);
  }
  // Fixed voltage magnitudes enter every coupled residual through the
  // calculated injections. The reference-angle column stays zero.
  for (int b = 0; b < net.n_bus; ++b) {
    const int rp = index_.p_row[b];
    const int rq = index_.q_row[b];
    if (rp < 0 && rq < 0) continue;
    injection_partials_row(net, v_, theta_, b,
                           [&](int j, double dp_dv, double, double dq_dv, double) {
                             const int col = v_input_col[j];
                             if (col < 0) return;
                             if (rp >= 0) trip.emplace_back(rp, col, -dp_dv);
                             if (rq >= 0) trip.emplace_back(rq, col, -dq_dv);
                           });
  }
  Eigen::SparseMatrix<double> dr_dy(index_.n, n_inputs());
  dr_dy.setFromTriplets(trip.begin(), trip.end());
  dr_dy.makeCompressed();
  return dr_dy;
}

Eigen::MatrixXd ImplicitSensitivity::dense_matrix() const {
  Eigen::MatrixXd rhs = Eigen::MatrixXd(input_jacobian());
  Eigen::MatrixXd sens = -lu_.solve(rhs);
  if (!sens.allFinite()) {
    throw Error(ErrorCode::SingularJacobian, "sensitivity solve produced non-finite values");
  }
  return sens;
}

Eigen::VectorXd ImplicitSensitivity::vjp(const Eigen::VectorXd& u_bar) const {
  Eigen::VectorXd adj = lu_.transpose().solve(u_bar);
  if (!adj.allFinite()) {
    throw Error(ErrorCode::SingularJacobian, "adjoint solve produced non-finite values");
  }
  return -(input_jacobian().transpose() * adj);
}

}  // namespace acopf
