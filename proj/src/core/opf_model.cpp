#include "core/opf_model.hpp"

#include <cmath>

namespace acopf {

SplitLayout::SplitLayout(const NetworkModel& net) : net_(&net) {
  for (const auto& br : net.branches) {
    if (br.s_max <= 0.0) ++sentinel_count_;
  }
}

SplitLayout::Block SplitLayout::block_of(int slot) const {
  if (slot < n_branch()) return Block::S2;
  if (slot < n_branch() + 2 * n_bus()) return Block::V;
  const int g = slot - gen_base();
  return g < 2 * (n_gen() + 1) ? Block::Pg : Block::Qg;
}

const char* SplitLayout::block_name(Block b) {
  switch (b) {
    case Block::S2: return "S2";
    case Block::V: return "V";
    case Block::Pg: return "Pg";
    case Block::Qg: return "Qg";
  }
  return "?";
}

void SplitLayout::assemble_state(const Eigen::VectorXd& y, const Eigen::VectorXd& z1,
                                 Eigen::VectorXd& v, Eigen::VectorXd& theta) const {
  const NetworkModel& net = *net_;
  v.resize(net.n_bus);
  theta.resize(net.n_bus);
  v[net.ref_bus] = y[y_vref()];
  theta[net.ref_bus] = y[y_thref()];
  for (int k = 0; k < n_gen(); ++k) {
    v[net.gens[k].bus] = y[y_vg(k)];
    theta[net.gens[k].bus] = z1[z1_theta_pv(k)];
  }
  for (int k = 0; k < n_pq(); ++k) {
    v[net.pq_buses[k]] = z1[z1_v_pq(k)];
    theta[net.pq_buses[k]] = z1[z1_theta_pq(k)];
  }
}

Eigen::VectorXd SplitLayout::z1_from_state(const Eigen::VectorXd& v,
                                           const Eigen::VectorXd& theta) const {
  const NetworkModel& net = *net_;
  Eigen::VectorXd z1(dim_z1());
  for (int k = 0; k < n_pq(); ++k) {
    z1[z1_v_pq(k)] = v[net.pq_buses[k]];
    z1[z1_theta_pq(k)] = theta[net.pq_buses[k]];
  }
  for (int k = 0; k < n_gen(); ++k) z1[z1_theta_pv(k)] = theta[net.gens[k].bus];
  return z1;
}

Eigen::VectorXd SplitLayout::z1_from_unknowns(const Eigen::VectorXd& u) const {
  // unknown order: [theta PV; theta PQ; V PQ]; z1 order: [V PQ; theta PV; theta PQ]
  const int nth = n_gen() + n_pq();
  Eigen::VectorXd z1(dim_z1());
  for (int k = 0; k < n_pq(); ++k) z1[z1_v_pq(k)] = u[nth + k];
  for (int k = 0; k < n_gen(); ++k) z1[z1_theta_pv(k)] = u[k];
  for (int k = 0; k < n_pq(); ++k) z1[z1_theta_pq(k)] = u[n_gen() + k];
  return z1;
}

Eigen::VectorXd SplitLayout::unknowns_from_z1_adjoint(const Eigen::VectorXd& z1_bar) const {
  const int nth = n_gen() + n_pq();
  Eigen::VectorXd u_bar(dim_z1());
  for (int k = 0; k < n_pq(); ++k) u_bar[nth + k] = z1_bar[z1_v_pq(k)];
  for (int k = 0; k < n_gen(); ++k) u_bar[k] = z1_bar[z1_theta_pv(k)];
  for (int k = 0; k < n_pq(); ++k) u_bar[n_gen() + k] = z1_bar[z1_theta_pq(k)];
  return u_bar;
}

Boxes y_boxes(const SplitLayout& layout) {
  const NetworkModel& net = layout.net();
  Boxes boxes;
  boxes.lo.resize(layout.dim_y());
  boxes.hi.resize(layout.dim_y());
  for (int k = 0; k < layout.n_gen(); ++k) {
    const Generator& gen = net.gens[k];
    boxes.lo[layout.y_pg(k)] = gen.p_min;
    boxes.hi[layout.y_pg(k)] = gen.p_max;
    boxes.lo[layout.y_vg(k)] = net.v_min[gen.bus];
    boxes.hi[layout.y_vg(k)] = net.v_max[gen.bus];
  }
  boxes.lo[layout.y_vref()] = net.v_min[net.ref_bus];
  boxes.hi[layout.y_vref()] = net.v_max[net.ref_bus];
  boxes.lo[layout.y_thref()] = 0.0;
  boxes.hi[layout.y_thref()] = 0.0;
  return boxes;
}

Boxes state_boxes(const NetworkModel& net, double theta_band) {
  Boxes boxes;
  boxes.lo.resize(2 * net.n_bus);
  boxes.hi.resize(2 * net.n_bus);
  for (int b = 0; b < net.n_bus; ++b) {
    boxes.lo[b] = net.v_min[b];
    boxes.hi[b] = net.v_max[b];
    boxes.lo[net.n_bus + b] = -theta_band;
    boxes.hi[net.n_bus + b] = theta_band;
  }
  boxes.lo[net.n_bus + net.ref_bus] = 0.0;
  boxes.hi[net.n_bus + net.ref_bus] = 0.0;
  return boxes;
}

double apply_box(double beta, double lo, double hi) {
  const double value = beta * lo + (1.0 - beta) * hi;
  return std::min(std::max(value, lo), hi);
}

Eigen::VectorXd apply_box(const Eigen::VectorXd& beta, const Boxes& boxes) {
  Eigen::VectorXd out(beta.size());
  for (int i = 0; i < beta.size(); ++i) out[i] = apply_box(beta[i], boxes.lo[i], boxes.hi[i]);
  return out;
}

RecoveryResult recover_z1(const SplitLayout& layout, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& y, SolverKind solver, const FdpfFactors* factors,
                          std::optional<PFState> warm_start, double tol, int max_iter) {
  const NetworkModel& net = layout.net();
  SolverIndex idx(net);
  const int n_p = layout.n_gen() + layout.n_pq();

  RecoveryResult out;
  PFProblem& problem = out.problem;
  problem.net = &net;
  problem.p_injection.resize(n_p);
  problem.q_injection.resize(layout.n_pq());
  problem.v_setpoint = Eigen::VectorXd::Ones(net.n_bus);
  problem.theta_ref = y[layout.y_thref()];

  for (int k = 0; k < layout.n_gen(); ++k) {
    const int bus = net.gens[k].bus;
    problem.p_injection[idx.p_row[bus]] = y[layout.y_pg(k)] - x[layout.x_pd(bus)];
    problem.v_setpoint[bus] = y[layout.y_vg(k)];
  }
  for (int k = 0; k < layout.n_pq(); ++k) {
    const int bus = net.pq_buses[k];
    problem.p_injection[idx.p_row[bus]] = -x[layout.x_pd(bus)];
    problem.q_injection[idx.q_row[bus] - n_p] = -x[layout.x_qd(bus)];
  }
  problem.v_setpoint[net.ref_bus] = y[layout.y_vref()];

  if (solver == SolverKind::NewtonRaphson) {
    out.solution = solve_nr(problem, std::move(warm_start), tol,
                            max_iter < 0 ? kDefaultNrMaxIter : max_iter);
  } else if (factors != nullptr) {
    out.solution = solve_fdpf(problem, *factors, std::move(warm_start), tol,
                              max_iter < 0 ? kDefaultFdpfMaxIter : max_iter);
  } else {
    out.solution = solve_fdpf(problem, std::move(warm_start), tol,
                              max_iter < 0 ? kDefaultFdpfMaxIter : max_iter);
  }
  out.z1 = layout.z1_from_state(out.solution.v, out.solution.theta);
  return out;
}

BranchFlow branch_flow_from(const BranchParams& br, const Eigen::VectorXd& v,
                            const Eigen::VectorXd& theta) {
  const BranchAdmittance adm = branch_admittance(br);
  const double gff = adm.yff.real(), bff = adm.yff.imag();
  const double gft = adm.yft.real(), bft = adm.yft.imag();
  const double vf = v[br.from], vt = v[br.to];
  const double c = std::cos(theta[br.from] - theta[br.to]);
  const double s = std::sin(theta[br.from] - theta[br.to]);
  BranchFlow flow;
  flow.p = gff * vf * vf + vf * vt * (gft * c + bft * s);
  flow.q = -bff * vf * vf + vf * vt * (gft * s - bft * c);
  return flow;
}

BranchFlowPartials branch_flow_partials(const BranchParams& br, const Eigen::VectorXd& v,
                                        const Eigen::VectorXd& theta) {
  const BranchAdmittance adm = branch_admittance(br);
  const double gff = adm.yff.real(), bff = adm.yff.imag();
  const double gft = adm.yft.real(), bft = adm.yft.imag();
  const double vf = v[br.from], vt = v[br.to];
  const double c = std::cos(theta[br.from] - theta[br.to]);
  const double s = std::sin(theta[br.from] - theta[br.to]);
  BranchFlowPartials d;
  d.dp_dvf = 2.0 * gff * vf + vt * (gft * c + bft * s);
  d.dp_dvt = vf * (gft * c + bft * s);
  d.dp_dthf = vf * vt * (-gft * s + bft * c);
  d.dq_dvf = -2.0 * bff * vf + vt * (gft * s - bft * c);
  d.dq_dvt = vf * (gft * s - bft * c);
  d.dq_dthf = vf * vt * (gft * c + bft * s);
  return d;
}

Eigen::VectorXd compute_z2(const SplitLayout& layout, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& v, const Eigen::VectorXd& theta) {
  const NetworkModel& net = layout.net();
  Eigen::VectorXd p_calc, q_calc;
  bus_injections(net, v, theta, p_calc, q_calc);

  Eigen::VectorXd z2(layout.dim_z2());
  z2[layout.z2_pg_ref()] = p_calc[net.ref_bus] + x[layout.x_pd(net.ref_bus)];
  z2[layout.z2_qg_ref()] = q_calc[net.ref_bus] + x[layout.x_qd(net.ref_bus)];
  for (int k = 0; k < layout.n_gen(); ++k) {
    const int bus = net.gens[k].bus;
    z2[layout.z2_qg(k)] = q_calc[bus] + x[layout.x_qd(bus)];
  }
  for (int b = 0; b < layout.n_branch(); ++b) {
    const BranchFlow flow = branch_flow_from(net.branches[b], v, theta);
    z2[layout.z2_s2(b)] = flow.p * flow.p + flow.q * flow.q;
  }
  return z2;
}

namespace {

double poly_cost(const Generator& gen, double pg_pu, double base_mva) {
  const double p_mw = pg_pu * base_mva;
  return (gen.cost_c2 * p_mw + gen.cost_c1) * p_mw + gen.cost_c0;
}

double poly_cost_slope(const Generator& gen, double pg_pu, double base_mva) {
  const double p_mw = pg_pu * base_mva;
  return (2.0 * gen.cost_c2 * p_mw + gen.cost_c1) * base_mva;  // d cost / d pg_pu
}

}  // namespace

double objective(const SplitLayout& layout, const Eigen::VectorXd& y, const Eigen::VectorXd& z2) {
  const NetworkModel& net = layout.net();
  double total = 0.0;
  for (int k = 0; k < layout.n_gen(); ++k) {
    total += poly_cost(net.gens[k], y[layout.y_pg(k)], net.base_mva);
  }
  total += poly_cost(net.ref_gen, z2[layout.z2_pg_ref()], net.base_mva);
  return total;
}

void objective_gradient(const SplitLayout& layout, const Eigen::VectorXd& y,
                        const Eigen::VectorXd& z2, Eigen::VectorXd& df_dy,
                        Eigen::VectorXd& df_dz2) {
  const NetworkModel& net = layout.net();
  df_dy = Eigen::VectorXd::Zero(layout.dim_y());
  df_dz2 = Eigen::VectorXd::Zero(layout.dim_z2());
  for (int k = 0; k < layout.n_gen(); ++k) {
    df_dy[layout.y_pg(k)] = poly_cost_slope(net.gens[k], y[layout.y_pg(k)], net.base_mva);
  }
  df_dz2[layout.z2_pg_ref()] =
      poly_cost_slope(net.ref_gen, z2[layout.z2_pg_ref()], net.base_mva);
}

Eigen::VectorXd inequality_h(const SplitLayout& layout, const Eigen::VectorXd& y,
                             const Eigen::VectorXd& z1, const Eigen::VectorXd& z2) {
  const NetworkModel& net = layout.net();
  Eigen::VectorXd v, theta;
  layout.assemble_state(y, z1, v, theta);

  Eigen::VectorXd h(layout.dim_h());
  for (int b = 0; b < layout.n_branch(); ++b) {
    const double s_max = net.branches[b].s_max;
    h[layout.h_s2(b)] = s_max > 0.0 ? z2[layout.z2_s2(b)] - s_max * s_max : kSentinelH;
  }
  for (int bus = 0; bus < layout.n_bus(); ++bus) {
    h[layout.h_v_upper(bus)] = v[bus] - net.v_max[bus];
    h[layout.h_v_lower(bus)] = net.v_min[bus] - v[bus];
  }
  auto fill_gen = [&](int ordinal, const Generator& gen, double pg, double qg) {
    h[layout.h_pg_upper(ordinal)] = pg - gen.p_max;
    h[layout.h_pg_lower(ordinal)] = gen.p_min - pg;
    h[layout.h_qg_upper(ordinal)] = qg - gen.q_max;
    h[layout.h_qg_lower(ordinal)] = gen.q_min - qg;
  };
  for (int k = 0; k < layout.n_gen(); ++k) {
    fill_gen(k, net.gens[k], y[layout.y_pg(k)], z2[layout.z2_qg(k)]);
  }
  fill_gen(layout.n_gen(), net.ref_gen, z2[layout.z2_pg_ref()], z2[layout.z2_qg_ref()]);
  return h;
}

Eigen::VectorXd violation_nu(const Eigen::VectorXd& h) {
  return h.cwiseMax(0.0);
}

void reconstructed_loads(const SplitLayout& layout, const Eigen::VectorXd& y,
                         const Eigen::VectorXd& z2, const Eigen::VectorXd& v,
                         const Eigen::VectorXd& theta, Eigen::VectorXd& pd_hat,
                         Eigen::VectorXd& qd_hat) {
  const NetworkModel& net = layout.net();
  Eigen::VectorXd p_calc, q_calc;
  bus_injections(net, v, theta, p_calc, q_calc);
  pd_hat = -p_calc;
  qd_hat = -q_calc;
  for (int k = 0; k < layout.n_gen(); ++k) {
    const int bus = net.gens[k].bus;
    pd_hat[bus] += y[layout.y_pg(k)];
    qd_hat[bus] += z2[layout.z2_qg(k)];
  }
  pd_hat[net.ref_bus] += z2[layout.z2_pg_ref()];
  qd_hat[net.ref_bus] += z2[layout.z2_qg_ref()];
}

LossAdjoints loss_adjoints(const SplitLayout& layout, const Eigen::VectorXd& dL_dh,
                           const Eigen::VectorXd& df_dy, const Eigen::VectorXd& df_dz2) {
  const NetworkModel& net = layout.net();
  LossAdjoints adj;
  adj.dy = df_dy;
  adj.dz1 = Eigen::VectorXd::Zero(layout.dim_z1());
  adj.dz2 = df_dz2;

  for (int b = 0; b < layout.n_branch(); ++b) {
    if (!layout.h_is_sentinel(layout.h_s2(b))) {
      adj.dz2[layout.z2_s2(b)] += dL_dh[layout.h_s2(b)];
    }
  }

  std::vector<int> pq_ordinal(net.n_bus, -1);
  for (int k = 0; k < layout.n_pq(); ++k) pq_ordinal[net.pq_buses[k]] = k;
  std::vector<int> gen_ordinal(net.n_bus, -1);
  for (int k = 0; k < layout.n_gen(); ++k) gen_ordinal[net.gens[k].bus] = k;

  for (int bus = 0; bus < layout.n_bus(); ++bus) {
    const double w = dL_dh[layout.h_v_upper(bus)] - dL_dh[layout.h_v_lower(bus)];
    if (w == 0.0) continue;
    if (pq_ordinal[bus] >= 0) {
      adj.dz1[layout.z1_v_pq(pq_ordinal[bus])] += w;
    } else if (gen_ordinal[bus] >= 0) {
      adj.dy[layout.y_vg(gen_ordinal[bus])] += w;
    } else {
      adj.dy[layout.y_vref()] += w;
    }
  }

  for (int k = 0; k < layout.n_gen(); ++k) {
    adj.dy[layout.y_pg(k)] += dL_dh[layout.h_pg_upper(k)] - dL_dh[layout.h_pg_lower(k)];
    adj.dz2[layout.z2_qg(k)] += dL_dh[layout.h_qg_upper(k)] - dL_dh[layout.h_qg_lower(k)];
  }
  const int ref = layout.n_gen();
  adj.dz2[layout.z2_pg_ref()] += dL_dh[layout.h_pg_upper(ref)] - dL_dh[layout.h_pg_lower(ref)];
  adj.dz2[layout.z2_qg_ref()] += dL_dh[layout.h_qg_upper(ref)] - dL_dh[layout.h_qg_lower(ref)];
  return adj;
}

RecoveryChain::RecoveryChain(const SplitLayout& layout, const PFProblem& problem,
                             const PFSolution& solution)
    : layout_(&layout), v_(solution.v), theta_(solution.theta), sens_(problem, solution) {}

void RecoveryChain::state_adjoint_from_z2(const Eigen::VectorXd& dL_dz2, Eigen::VectorXd& v_bar,
                                          Eigen::VectorXd& theta_bar) const {
  const SplitLayout& layout = *layout_;
  const NetworkModel& net = layout.net();
  v_bar = Eigen::VectorXd::Zero(net.n_bus);
  theta_bar = Eigen::VectorXd::Zero(net.n_bus);

  add_injection_adjoint(net, v_, theta_, net.ref_bus, dL_dz2[layout.z2_pg_ref()],
                        dL_dz2[layout.z2_qg_ref()], v_bar, theta_bar);
  for (int k = 0; k < layout.n_gen(); ++k) {
    add_injection_adjoint(net, v_, theta_, net.gens[k].bus, 0.0, dL_dz2[layout.z2_qg(k)], v_bar,
                          theta_bar);
  }
  for (int b = 0; b < layout.n_branch(); ++b) {
    const double lam = dL_dz2[layout.z2_s2(b)];
    if (lam == 0.0) continue;
    const BranchParams& br = net.branches[b];
    const BranchFlow flow = branch_flow_from(br, v_, theta_);
    const BranchFlowPartials d = branch_flow_partials(br, v_, theta_);
    const double wp = 2.0 * lam * flow.p;
    const double wq = 2.0 * lam * flow.q;
    v_bar[br.from] += wp * d.dp_dvf + wq * d.dq_dvf;
    v_bar[br.to] += wp * d.dp_dvt + wq * d.dq_dvt;
    theta_bar[br.from] += wp * d.dp_dthf + wq * d.dq_dthf;
    theta_bar[br.to] -= wp * d.dp_dthf + wq * d.dq_dthf;
  }
}

Eigen::VectorXd RecoveryChain::total_dy(const Eigen::VectorXd& dL_dy,
                                        const Eigen::VectorXd& dL_dz1,
                                        const Eigen::VectorXd& dL_dz2) const {
  const SplitLayout& layout = *layout_;
  const NetworkModel& net = layout.net();

  Eigen::VectorXd v_bar, theta_bar;
  state_adjoint_from_z2(dL_dz2, v_bar, theta_bar);

  // Adjoint on the solver unknowns: z1 slots plus the z2 chain through the
  // solved state.
  Eigen::VectorXd z1_bar = dL_dz1;
  for (int k = 0; k < layout.n_pq(); ++k) {
    const int bus = net.pq_buses[k];
    z1_bar[layout.z1_v_pq(k)] += v_bar[bus];
    z1_bar[layout.z1_theta_pq(k)] += theta_bar[bus];
  }
  for (int k = 0; k < layout.n_gen(); ++k) {
    z1_bar[layout.z1_theta_pv(k)] += theta_bar[net.gens[k].bus];
  }

  Eigen::VectorXd y_bar = dL_dy + sens_.vjp(layout.unknowns_from_z1_adjoint(z1_bar));

  // Direct dependence of the z2 map on the fixed voltage magnitudes in y.
  for (int k = 0; k < layout.n_gen(); ++k) {
    y_bar[layout.y_vg(k)] += v_bar[net.gens[k].bus];
  }
  y_bar[layout.y_vref()] += v_bar[net.ref_bus];
  // The reference angle is a gauge direction: shifting it moves all angles
  // together, so the total derivative through z1 and z2 cancels to zero.
  y_bar[layout.y_thref()] = dL_dy[layout.y_thref()];
  return y_bar;
}

}  // namespace acopf
