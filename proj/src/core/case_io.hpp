#pragma once

#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "core/common.hpp"

namespace acopf {

// Raw tables of a MATPOWER-style case, still in the file's units (MW/MVAr,
// mixed per-unit) and keyed by external bus ids. Column meanings follow the
// MATPOWER version-2 matrix layout; columns beyond the ones consumed by
// build_network are carried along untouched.
struct RawCase {
  double base_mva = 0.0;
  std::vector<std::vector<double>> bus_table;
  std::vector<std::vector<double>> gen_table;
  std::vector<std::vector<double>> branch_table;
  std::vector<std::vector<double>> gencost_table;
  std::string checksum;  // fnv1a of the source text
};

enum class BusKind { Slack, PV, PQ };

struct BranchParams {
  int from = 0;  // internal bus index
  int to = 0;
  std::complex<double> y_series;  // 1/(r + jx)
  double b_charging = 0.0;        // total line charging susceptance (p.u.)
  double tap = 1.0;               // off-nominal turns ratio on the from side
  double shift = 0.0;             // phase shift (rad) on the from side
  double s_max = 0.0;             // apparent-power limit (p.u.); <= 0 means unconstrained
};

struct Generator {
  int bus = 0;  // internal bus index
  double p_min = 0.0, p_max = 0.0;  // p.u.
  double q_min = 0.0, q_max = 0.0;  // p.u.
  double p_default = 0.0;           // dispatch from the case file (p.u.)
  double v_setpoint = 1.0;
  // polynomial cost c2*P^2 + c1*P + c0 with P in MW
  double cost_c2 = 0.0, cost_c1 = 0.0, cost_c0 = 0.0;
};

// Validated per-unit network. Immutable after build_network and safe to
// share across threads.
struct NetworkModel {
  int n_bus = 0;
  int n_branch = 0;
  double base_mva = 100.0;
  std::string case_checksum;

  std::vector<int> bus_id;  // internal index -> external id
  std::vector<BusKind> bus_kind;
  std::vector<double> v_min, v_max;       // per bus
  Eigen::VectorXd shunt_g, shunt_b;       // per bus (p.u.)
  Eigen::VectorXd nominal_pd, nominal_qd; // per bus (p.u.)

  Eigen::SparseMatrix<std::complex<double>, Eigen::RowMajor> ybus;
  std::vector<BranchParams> branches;

  int ref_bus = -1;
  Generator ref_gen;               // generator at the reference bus
  std::vector<Generator> gens;     // generators at PV buses, bus-index ascending

  std::vector<int> pv_buses;  // ascending internal indices
  std::vector<int> pq_buses;

  int n_gen() const { return static_cast<int>(gens.size()); }  // excludes the reference generator
  int n_pq() const { return static_cast<int>(pq_buses.size()); }
  int external_id(int bus) const { return bus_id[bus]; }
};

// Parses MATPOWER-style case text (version-2 matrix layout). Line oriented:
// '%' comments and whitespace variation are tolerated, scripts are not
// evaluated. Throws Error{MissingSection, MalformedRow, DuplicateBusId}.
RawCase parse_case(const std::string& text);

// Reads and parses a case file from disk.
RawCase parse_case_file(const std::string& path);

// Converts a RawCase to per-unit, assembles the sparse nodal admittance
// matrix (standard branch two-port with taps/shifts on the from side plus
// bus shunts) and classifies buses. Out-of-service branches and generators
// are dropped. Throws Error{SingularBranch, NoSlackBus, UnsupportedCostModel,
// InvalidCase, DuplicateBusId}.
NetworkModel build_network(const RawCase& raw);

// Complex admittance blocks of one branch's two-port model.
struct BranchAdmittance {
  std::complex<double> yff, yft, ytf, ytt;
};
BranchAdmittance branch_admittance(const BranchParams& br);

}  // namespace acopf
