#include "core/case_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace acopf {

namespace {

// MATPOWER column indices (0-based).
enum BusCol { BUS_I = 0, BUS_TYPE = 1, PD = 2, QD = 3, GS = 4, BS = 5, VMAX = 11, VMIN = 12 };
enum GenCol { GEN_BUS = 0, PG = 1, QG = 2, QMAX = 3, QMIN = 4, VG = 5, MBASE = 6, GEN_STATUS = 7, PMAX = 8, PMIN = 9 };
enum BranchCol { F_BUS = 0, T_BUS = 1, BR_R = 2, BR_X = 3, BR_B = 4, RATE_A = 5, TAP = 8, SHIFT = 9, BR_STATUS = 10 };
enum CostCol { COST_MODEL = 0, NCOST = 3, COST_COEFF = 4 };

constexpr int kBusTypePQ = 1;
constexpr int kBusTypeRef = 3;
constexpr double kDegToRad = 3.14159265358979323846 / 180.0;

std::string strip_comment(const std::string& line) {
  auto pos = line.find('%');
  return pos == std::string::npos ? line : line.substr(0, pos);
}

bool parse_double(std::string_view token, double& out) {
  const char* begin = token.data();
  const char* end = begin + token.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end;
}

std::vector<double> parse_row(const std::string& text, const std::string& section) {
  std::vector<double> row;
  std::istringstream ss(text);
  std::string token;
  while (ss >> token) {
    double value = 0.0;
    if (!parse_double(token, value)) {
      throw Error(ErrorCode::MalformedRow,
                  "non-numeric token '" + token + "' in " + section + " row");
    }
    row.push_back(value);
  }
  return row;
}

// Collects the rows of "mpc.<name> = [ ... ];". Rows are separated by ';' or
// newlines; the closing "];" may share a line with data.
struct SectionReader {
  const std::vector<std::string>& lines;

  std::vector<std::vector<double>> read(const std::string& name) const {
    const std::string key = "mpc." + name;
    std::size_t i = 0;
    for (; i < lines.size(); ++i) {
      const std::string& l = lines[i];
      auto pos = l.find(key);
      if (pos == std::string::npos) continue;
      auto eq = l.find('=', pos);
      auto br = l.find('[', pos);
      if (eq == std::string::npos || br == std::string::npos) continue;
      break;
    }
    if (i == lines.size()) {
      throw Error(ErrorCode::MissingSection, "matrix mpc." + name + " not found");
    }

    std::vector<std::vector<double>> rows;
    std::string pending;
    bool closed = false;
    std::string remainder = lines[i].substr(lines[i].find('[', lines[i].find("mpc." + name)) + 1);
    auto consume = [&](const std::string& chunk) {
      std::string text = chunk;
      auto close = text.find(']');
      if (close != std::string::npos) {
        text = text.substr(0, close);
        closed = true;
      }
      std::size_t start = 0;
      while (true) {
        auto semi = text.find(';', start);
        std::string piece = text.substr(start, semi == std::string::npos ? std::string::npos : semi - start);
        pending += piece;
        if (semi == std::string::npos) break;
        if (!pending.empty() && pending.find_first_not_of(" \t\r") != std::string::npos) {
          rows.push_back(parse_row(pending, "mpc." + name));
        }
        pending.clear();
        start = semi + 1;
      }
    };

    consume(remainder);
    while (!closed && ++i < lines.size()) {
      consume(lines[i]);
    }
    if (!closed) {
      throw Error(ErrorCode::MissingSection, "matrix mpc." + name + " not terminated with ']'");
    }
    if (!pending.empty() && pending.find_first_not_of(" \t\r") != std::string::npos) {
      rows.push_back(parse_row(pending, "mpc." + name));
    }
    if (rows.empty()) {
      throw Error(ErrorCode::MissingSection, "matrix mpc." + name + " is empty");
    }
    for (const auto& row : rows) {
      if (row.size() != rows.front().size()) {
        throw Error(ErrorCode::MalformedRow, "ragged row width in mpc." + name);
      }
    }
    return rows;
  }
};

void require_width(const std::vector<std::vector<double>>& table, std::size_t width,
                   const std::string& name) {
  if (table.front().size() < width) {
    throw Error(ErrorCode::MalformedRow, "mpc." + name + " rows need at least " +
                                             std::to_string(width) + " columns, got " +
                                             std::to_string(table.front().size()));
  }
}

}  // namespace

RawCase parse_case(const std::string& text) {
  std::vector<std::string> lines;
  {
    std::istringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) lines.push_back(strip_comment(line));
  }

  RawCase raw;
  raw.checksum = fnv1a_hex(text);

  bool have_base = false;
  for (const auto& l : lines) {
    auto pos = l.find("mpc.baseMVA");
    if (pos == std::string::npos) continue;
    auto eq = l.find('=', pos);
    if (eq == std::string::npos) continue;
    std::string rhs = l.substr(eq + 1);
    std::erase_if(rhs, [](char c) { return c == ';' || std::isspace(static_cast<unsigned char>(c)); });
    if (!parse_double(rhs, raw.base_mva)) {
      throw Error(ErrorCode::MalformedRow, "unreadable mpc.baseMVA value '" + rhs + "'");
    }
    have_base = true;
    break;
  }
  if (!have_base) throw Error(ErrorCode::MissingSection, "mpc.baseMVA not found");
  if (!(raw.base_mva > 0.0)) throw Error(ErrorCode::MalformedRow, "mpc.baseMVA must be positive");

  SectionReader reader{lines};
  raw.bus_table = reader.read("bus");
  raw.gen_table = reader.read("gen");
  raw.branch_table = reader.read("branch");
  raw.gencost_table = reader.read("gencost");

  require_width(raw.bus_table, 13, "bus");
  require_width(raw.gen_table, 10, "gen");
  require_width(raw.branch_table, 11, "branch");
  require_width(raw.gencost_table, 5, "gencost");

  std::set<long long> seen;
  for (const auto& row : raw.bus_table) {
    long long id = static_cast<long long>(row[BUS_I]);
    if (!seen.insert(id).second) {
      throw Error(ErrorCode::DuplicateBusId, "bus id " + std::to_string(id) + " appears twice");
    }
  }
  return raw;
}

RawCase parse_case_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open case file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_case(buf.str());
}

BranchAdmittance branch_admittance(const BranchParams& br) {
  const std::complex<double> ycharge(0.0, br.b_charging / 2.0);
  const std::complex<double> ys = br.y_series;
  const double tap = br.tap;
  const std::complex<double> phase = std::polar(1.0, br.shift);
  BranchAdmittance adm;
  adm.yff = (ys + ycharge) / (tap * tap);
  adm.yft = -ys / (tap * std::conj(phase));
  adm.ytf = -ys / (tap * phase);
  adm.ytt = ys + ycharge;
  return adm;
}

NetworkModel build_network(const RawCase& raw) {
  NetworkModel net;
  net.base_mva = raw.base_mva;
  net.case_checksum = raw.checksum;
  net.n_bus = static_cast<int>(raw.bus_table.size());

  std::map<long long, int> bus_index;
  net.bus_id.resize(net.n_bus);
  net.v_min.resize(net.n_bus);
  net.v_max.resize(net.n_bus);
  net.shunt_g = Eigen::VectorXd::Zero(net.n_bus);
  net.shunt_b = Eigen::VectorXd::Zero(net.n_bus);
  net.nominal_pd = Eigen::VectorXd::Zero(net.n_bus);
  net.nominal_qd = Eigen::VectorXd::Zero(net.n_bus);

  int ref_bus = -1;
  for (int i = 0; i < net.n_bus; ++i) {
    const auto& row = raw.bus_table[i];
    long long id = static_cast<long long>(row[BUS_I]);
    if (!bus_index.emplace(id, i).second) {
      throw Error(ErrorCode::DuplicateBusId, "bus id " + std::to_string(id) + " appears twice");
    }
    net.bus_id[i] = static_cast<int>(id);
    net.nominal_pd[i] = row[PD] / net.base_mva;
    net.nominal_qd[i] = row[QD] / net.base_mva;
    net.shunt_g[i] = row[GS] / net.base_mva;
    net.shunt_b[i] = row[BS] / net.base_mva;
    net.v_max[i] = row[VMAX];
    net.v_min[i] = row[VMIN];
    if (net.v_min[i] > net.v_max[i]) {
      throw Error(ErrorCode::InvalidCase, "bus " + std::to_string(id) + " has Vmin > Vmax");
    }
    int type = static_cast<int>(row[BUS_TYPE]);
    if (type == kBusTypeRef) {
      if (ref_bus >= 0) {
        throw Error(ErrorCode::NoSlackBus, "more than one reference bus declared");
      }
      ref_bus = i;
    } else if (type != kBusTypePQ && type != 2) {
      throw Error(ErrorCode::InvalidCase,
                  "bus " + std::to_string(id) + " has unsupported type code " + std::to_string(type));
    }
  }
  if (ref_bus < 0) throw Error(ErrorCode::NoSlackBus, "no reference bus in case");
  net.ref_bus = ref_bus;

  // Generators: drop out-of-service units, convert to per-unit, attach costs.
  if (raw.gencost_table.size() != raw.gen_table.size() &&
      raw.gencost_table.size() != 2 * raw.gen_table.size()) {
    throw Error(ErrorCode::InvalidCase, "gencost row count does not match gen table");
  }
  std::map<int, Generator> by_bus;  // ordered by internal index
  for (std::size_t g = 0; g < raw.gen_table.size(); ++g) {
    const auto& row = raw.gen_table[g];
    if (row[GEN_STATUS] <= 0.0) continue;
    auto it = bus_index.find(static_cast<long long>(row[GEN_BUS]));
    if (it == bus_index.end()) {
      throw Error(ErrorCode::InvalidCase,
                  "generator references unknown bus " + std::to_string(row[GEN_BUS]));
    }
    Generator gen;
    gen.bus = it->second;
    gen.p_max = row[PMAX] / net.base_mva;
    gen.p_min = row[PMIN] / net.base_mva;
    gen.q_max = row[QMAX] / net.base_mva;
    gen.q_min = row[QMIN] / net.base_mva;
    gen.p_default = row[PG] / net.base_mva;
    gen.v_setpoint = row[VG];
    if (gen.p_min > gen.p_max || gen.q_min > gen.q_max) {
      throw Error(ErrorCode::InvalidCase,
                  "generator at bus " + std::to_string(row[GEN_BUS]) + " has inverted limits");
    }

    const auto& cost = raw.gencost_table[g];
    if (static_cast<int>(cost[COST_MODEL]) != 2) {
      throw Error(ErrorCode::UnsupportedCostModel,
                  "only polynomial gencost (model 2) is supported");
    }
    int ncost = static_cast<int>(cost[NCOST]);
    if (ncost < 1 || ncost > 3) {
      throw Error(ErrorCode::UnsupportedCostModel,
                  "polynomial cost degree must be <= 2, got ncost=" + std::to_string(ncost));
    }
    if (cost.size() < static_cast<std::size_t>(COST_COEFF + ncost)) {
      throw Error(ErrorCode::MalformedRow, "gencost row shorter than its ncost declares");
    }
    double c[3] = {0.0, 0.0, 0.0};  // c2, c1, c0
    for (int k = 0; k < ncost; ++k) c[3 - ncost + k] = cost[COST_COEFF + k];
    gen.cost_c2 = c[0];
    gen.cost_c1 = c[1];
    gen.cost_c0 = c[2];

    if (!by_bus.emplace(gen.bus, gen).second) {
      throw Error(ErrorCode::InvalidCase,
                  "multiple in-service generators at bus " + std::to_string(row[GEN_BUS]) +
                      "; aggregate them before use");
    }
  }

  if (!by_bus.count(ref_bus)) {
    throw Error(ErrorCode::InvalidCase, "reference bus has no in-service generator");
  }
  net.ref_gen = by_bus.at(ref_bus);
  for (const auto& [bus, gen] : by_bus) {
    if (bus != ref_bus) net.gens.push_back(gen);
  }

  // Bus classification: reference bus -> Slack, in-service generator -> PV,
  // everything else -> PQ.
  net.bus_kind.assign(net.n_bus, BusKind::PQ);
  net.bus_kind[ref_bus] = BusKind::Slack;
  for (const auto& gen : net.gens) net.bus_kind[gen.bus] = BusKind::PV;
  for (int i = 0; i < net.n_bus; ++i) {
    if (net.bus_kind[i] == BusKind::PV) net.pv_buses.push_back(i);
    if (net.bus_kind[i] == BusKind::PQ) net.pq_buses.push_back(i);
  }

  // Branches and Ybus.
  using Triplet = Eigen::Triplet<std::complex<double>>;
  std::vector<Triplet> triplets;
  for (const auto& row : raw.branch_table) {
    if (row[BR_STATUS] <= 0.0) continue;
    auto fit = bus_index.find(static_cast<long long>(row[F_BUS]));
    auto tit = bus_index.find(static_cast<long long>(row[T_BUS]));
    if (fit == bus_index.end() || tit == bus_index.end()) {
      throw Error(ErrorCode::InvalidCase, "branch endpoint references unknown bus");
    }
    double r = row[BR_R];
    double x = row[BR_X];
    if (r == 0.0 && x == 0.0) {
      throw Error(ErrorCode::SingularBranch,
                  "branch " + std::to_string(row[F_BUS]) + "-" + std::to_string(row[T_BUS]) +
                      " has zero impedance");
    }
    BranchParams br;
    br.from = fit->second;
    br.to = tit->second;
    br.y_series = 1.0 / std::complex<double>(r, x);
    br.b_charging = row[BR_B];
    br.tap = row[TAP] == 0.0 ? 1.0 : row[TAP];
    br.shift = row[SHIFT] * kDegToRad;
    br.s_max = row[RATE_A] / net.base_mva;  // rateA = 0 -> unconstrained
    net.branches.push_back(br);

    BranchAdmittance adm = branch_admittance(br);
    triplets.emplace_back(br.from, br.from, adm.yff);
    triplets.emplace_back(br.from, br.to, adm.yft);
    triplets.emplace_back(br.to, br.from, adm.ytf);
    triplets.emplace_back(br.to, br.to, adm.ytt);
  }
  net.n_branch = static_cast<int>(net.branches.size());
  for (int i = 0; i < net.n_bus; ++i) {
    std::complex<double> ysh(net.shunt_g[i], net.shunt_b[i]);
    if (ysh != std::complex<double>(0.0, 0.0)) triplets.emplace_back(i, i, ysh);
  }

  net.ybus.resize(net.n_bus, net.n_bus);
  net.ybus.setFromTriplets(triplets.begin(), triplets.end());
  net.ybus.makeCompressed();
  return net;
}

}  // namespace acopf
