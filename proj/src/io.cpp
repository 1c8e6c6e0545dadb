#include "selab/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "selab/errors.hpp"

namespace selab {

void atomic_write_file(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("atomic_write_file: cannot open " + tmp);
    out << content;
    if (!out) throw Error("atomic_write_file: write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw Error("atomic_write_file: rename failed for " + path);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifact("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

json matrix_to_json(const Matrix& M) {
  json rows = json::array();
  for (std::size_t i = 0; i < M.rows; ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < M.cols; ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j) {
  Matrix M(j.size(), j.empty() ? 0 : j[0].size());
  for (std::size_t i = 0; i < M.rows; ++i)
    for (std::size_t jj = 0; jj < M.cols; ++jj) M(i, jj) = j[i][jj].get<double>();
  return M;
}

const char* kind_name(StepKind k) {
  switch (k) {
    case StepKind::Init: return "init";
    case StepKind::FirstOrder: return "first-order";
    case StepKind::Saddle: return "saddle";
  }
  return "?";
}

StepKind kind_from_name(const std::string& s) {
  if (s == "init") return StepKind::Init;
  if (s == "first-order") return StepKind::FirstOrder;
  if (s == "saddle") return StepKind::Saddle;
  throw Error("unknown step kind: " + s);
}

}  // namespace

json se_parameters_to_json(const SEParameters& se) {
  json j;
  j["T"] = se.T;
  j["k"] = se.k;
  j["lambda"] = se.lambda;
  j["plan_signature"] = se.plan_signature;
  j["Kg"] = matrix_to_json(se.Kg.entries);
  j["Kh"] = matrix_to_json(se.Kh.entries);
  j["alpha"] = matrix_to_json(se.Kg.factor);
  j["beta"] = matrix_to_json(se.Kh.factor);
  j["Lu"] = matrix_to_json(se.Lu);
  j["Lv"] = matrix_to_json(se.Lv);
  json diags = json::array();
  for (const auto& d : se.diagnostics) {
    json dj;
    dj["kind"] = kind_name(d.kind);
    dj["min_eig_Kg"] = d.min_eig_Kg;
    dj["min_eig_Kh"] = d.min_eig_Kh;
    dj["degenerate"] = d.degenerate;
    dj["sweeps"] = d.sweeps;
    dj["converged"] = d.converged;
    dj["theta_residual"] = d.theta_residual;
    dj["s_g"] = d.s_g;
    dj["s_h"] = d.s_h;
    dj["p_u"] = d.p_u;
    dj["p_v"] = d.p_v;
    diags.push_back(std::move(dj));
  }
  j["diagnostics"] = std::move(diags);
  return j;
}

SEParameters se_parameters_from_json(const json& j) {
  SEParameters se;
  se.T = j.at("T").get<std::size_t>();
  se.k = j.at("k").get<std::size_t>();
  se.lambda = j.at("lambda").get<double>();
  se.plan_signature = j.at("plan_signature").get<std::string>();
  Matrix Kg = matrix_from_json(j.at("Kg"));
  Matrix Kh = matrix_from_json(j.at("Kh"));
  se.Kg = CovarianceMatrix::from(Kg, 0.0);
  se.Kh = CovarianceMatrix::from(Kh, 0.0);
  se.Lu = matrix_from_json(j.at("Lu"));
  se.Lv = matrix_from_json(j.at("Lv"));
  for (const auto& dj : j.at("diagnostics")) {
    StepDiagnostics d;
    d.kind = kind_from_name(dj.at("kind").get<std::string>());
    d.min_eig_Kg = dj.at("min_eig_Kg").get<double>();
    d.min_eig_Kh = dj.at("min_eig_Kh").get<double>();
    d.degenerate = dj.at("degenerate").get<bool>();
    d.sweeps = dj.at("sweeps").get<std::size_t>();
    d.converged = dj.at("converged").get<bool>();
    d.theta_residual = dj.at("theta_residual").get<double>();
    d.s_g = dj.at("s_g").get<double>();
    d.s_h = dj.at("s_h").get<double>();
    d.p_u = dj.at("p_u").get<double>();
    d.p_v = dj.at("p_v").get<double>();
    se.diagnostics.push_back(d);
  }
  return se;
}

json fixpoint_audit_to_json(const FixpointAudit& audit) {
  json j;
  j["worst_stderr_units"] = audit.worst_stderr_units;
  json blocks = json::array();
  for (const auto& b : audit.blocks) {
    json bj;
    bj["name"] = b.name;
    bj["max_abs_residual"] = b.max_abs_residual;
    bj["max_stderr_units"] = b.max_stderr_units;
    blocks.push_back(std::move(bj));
  }
  j["blocks"] = std::move(blocks);
  return j;
}

json deviation_report_to_json(const DeviationReport& rep) {
  json j;
  j["n"] = rep.n;
  j["d"] = rep.d;
  j["T"] = rep.T;
  j["lambda"] = rep.lambda;
  j["delta"] = rep.delta;
  j["plan_signature"] = rep.plan_signature;
  j["seeds"] = rep.seeds;
  json rows = json::array();
  for (const auto& r : rep.rows) {
    json rj;
    rj["test_id"] = r.test_id;
    rj["empirical"] = r.empirical;
    rj["se_estimate"] = r.se_estimate;
    rj["se_std_error"] = r.se_std_error;
    rj["deviation"] = r.deviation;
    rj["delta1_reference"] = r.delta1_reference;
    rows.push_back(std::move(rj));
  }
  j["rows"] = std::move(rows);
  return j;
}

DeviationReport deviation_report_from_json(const json& j) {
  DeviationReport rep;
  rep.n = j.at("n").get<std::size_t>();
  rep.d = j.at("d").get<std::size_t>();
  rep.T = j.at("T").get<std::size_t>();
  rep.lambda = j.at("lambda").get<double>();
  rep.delta = j.at("delta").get<double>();
  rep.plan_signature = j.at("plan_signature").get<std::string>();
  rep.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  for (const auto& rj : j.at("rows")) {
    DeviationRow r;
    r.test_id = rj.at("test_id").get<std::string>();
    r.empirical = rj.at("empirical").get<double>();
    r.se_estimate = rj.at("se_estimate").get<double>();
    r.se_std_error = rj.at("se_std_error").get<double>();
    r.deviation = rj.at("deviation").get<double>();
    r.delta1_reference = rj.at("delta1_reference").get<double>();
    rep.rows.push_back(r);
  }
  return rep;
}

json sweep_report_to_json(const SweepReport& rep) {
  json j;
  j["plan_signature"] = rep.plan_signature;
  j["all_first_order"] = rep.all_first_order;
  j["lambda"] = rep.lambda;
  j["trials"] = rep.trials;
  j["test_ids"] = rep.test_ids;
  j["slopes"] = rep.slopes;
  json degenerate = json::array();
  for (bool b : rep.degenerate) degenerate.push_back(b);
  j["degenerate"] = std::move(degenerate);
  json points = json::array();
  for (const auto& p : rep.points) {
    json pj;
    pj["n"] = p.n;
    pj["d"] = p.d;
    pj["median_deviations"] = p.median_deviations;
    pj["failures"] = p.failures;
    pj["delta1_reference"] = p.delta1_reference;
    points.push_back(std::move(pj));
  }
  j["points"] = std::move(points);
  return j;
}

SweepReport sweep_report_from_json(const json& j) {
  SweepReport rep;
  rep.plan_signature = j.at("plan_signature").get<std::string>();
  rep.all_first_order = j.at("all_first_order").get<bool>();
  rep.lambda = j.at("lambda").get<double>();
  rep.trials = j.at("trials").get<std::size_t>();
  rep.test_ids = j.at("test_ids").get<std::vector<std::string>>();
  rep.slopes = j.at("slopes").get<std::vector<double>>();
  for (const auto& b : j.at("degenerate")) rep.degenerate.push_back(b.get<bool>());
  for (const auto& pj : j.at("points")) {
    SweepPoint p;
    p.n = pj.at("n").get<std::size_t>();
    p.d = pj.at("d").get<std::size_t>();
    p.median_deviations = pj.at("median_deviations").get<std::vector<double>>();
    p.failures = pj.at("failures").get<std::size_t>();
    p.delta1_reference = pj.at("delta1_reference").get<double>();
    rep.points.push_back(std::move(p));
  }
  return rep;
}

namespace {

void append_matrix_csv(std::ostringstream& os, const char* name, const Matrix& M) {
  os.precision(17);
  for (std::size_t j = 0; j < M.cols; ++j)
    for (std::size_t i = 0; i < M.rows; ++i)
      os << name << "," << (j + 1) << "," << i << "," << M(i, j) << "\n";
}

}  // namespace

std::string trajectory_to_csv(const Trajectory& traj) {
  std::ostringstream os;
  os << "matrix,step,i,value\n";
  append_matrix_csv(os, "U", traj.U);
  append_matrix_csv(os, "V", traj.V);
  append_matrix_csv(os, "G", traj.G);
  append_matrix_csv(os, "H", traj.H);
  append_matrix_csv(os, "E_u", traj.E_u);
  append_matrix_csv(os, "E_v", traj.E_v);
  return os.str();
}

json trajectory_meta_to_json(const Trajectory& traj, std::uint64_t data_seed) {
  json j;
  j["n"] = traj.n;
  j["d"] = traj.d;
  j["T"] = traj.T;
  j["lambda"] = traj.lambda;
  j["seed"] = traj.seed;
  j["data_seed"] = data_seed;
  j["plan_signature"] = traj.plan_signature;
  json steps = json::array();
  for (const auto& m : traj.meta) {
    json mj;
    mj["kind"] = kind_name(m.kind);
    mj["kkt_u"] = m.kkt_u;
    mj["kkt_v"] = m.kkt_v;
    mj["solver_iterations"] = m.solver_iterations;
    mj["fast_path"] = m.fast_path;
    steps.push_back(std::move(mj));
  }
  j["steps"] = std::move(steps);
  return j;
}

Trajectory trajectory_from_csv(const std::string& csv, const json& meta) {
  Trajectory traj;
  traj.n = meta.at("n").get<std::size_t>();
  traj.d = meta.at("d").get<std::size_t>();
  traj.T = meta.at("T").get<std::size_t>();
  traj.lambda = meta.at("lambda").get<double>();
  traj.seed = meta.at("seed").get<std::uint64_t>();
  traj.plan_signature = meta.at("plan_signature").get<std::string>();
  traj.U = Matrix(traj.n, traj.T);
  traj.V = Matrix(traj.d, traj.T);
  traj.G = Matrix(traj.d, traj.T);
  traj.H = Matrix(traj.n, traj.T);
  traj.E_u = Matrix(traj.n, traj.T);
  traj.E_v = Matrix(traj.d, traj.T);
  for (const auto& mj : meta.at("steps")) {
    StepMeta m;
    m.kind = kind_from_name(mj.at("kind").get<std::string>());
    m.kkt_u = mj.at("kkt_u").get<double>();
    m.kkt_v = mj.at("kkt_v").get<double>();
    m.solver_iterations = mj.at("solver_iterations").get<std::size_t>();
    m.fast_path = mj.at("fast_path").get<bool>();
    traj.meta.push_back(m);
  }
  std::istringstream is(csv);
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    const auto c3 = line.find(',', c2 + 1);
    const std::string name = line.substr(0, c1);
    const std::size_t step = std::stoul(line.substr(c1 + 1, c2 - c1 - 1));
    const std::size_t i = std::stoul(line.substr(c2 + 1, c3 - c2 - 1));
    const double value = std::stod(line.substr(c3 + 1));
    Matrix* M = nullptr;
    if (name == "U") M = &traj.U;
    else if (name == "V") M = &traj.V;
    else if (name == "G") M = &traj.G;
    else if (name == "H") M = &traj.H;
    else if (name == "E_u") M = &traj.E_u;
    else if (name == "E_v") M = &traj.E_v;
    else throw Error("trajectory_from_csv: unknown matrix " + name);
    (*M)(i, step - 1) = value;
  }
  return traj;
}

std::string sweep_to_plot_csv(const SweepReport& rep) {
  std::ostringstream os;
  os.precision(17);
  os << "n,delta1_reference";
  for (const auto& id : rep.test_ids) os << ",\"" << id << "\"";
  os << "\n";
  for (const auto& p : rep.points) {
    os << p.n << "," << p.delta1_reference;
    for (double v : p.median_deviations) os << "," << v;
    os << "\n";
  }
  return os.str();
}

std::string sweep_to_svg(const SweepReport& rep) {
  const double W = 640, H = 480, ml = 70, mr = 20, mt = 30, mb = 50;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  auto upd = [&](double x, double y) {
    xmin = std::min(xmin, x);
    xmax = std::max(xmax, x);
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  };
  for (const auto& p : rep.points) {
    const double lx = std::log10(static_cast<double>(p.n));
    if (p.delta1_reference > 0) upd(lx, std::log10(p.delta1_reference));
    for (double v : p.median_deviations)
      if (v > 0) upd(lx, std::log10(v));
  }
  if (!(xmax > xmin)) {
    xmin = 0;
    xmax = 1;
  }
  if (!(ymax > ymin)) {
    ymin = -1;
    ymax = 1;
  }
  auto sx = [&](double lx) { return ml + (lx - xmin) / (xmax - xmin) * (W - ml - mr); };
  auto sy = [&](double ly) { return H - mb - (ly - ymin) / (ymax - ymin) * (H - mt - mb); };
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  std::ostringstream os;
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
  os << "<rect width='100%' height='100%' fill='white'/>\n";
  os << "<text x='" << W / 2 << "' y='" << H - 10
     << "' text-anchor='middle' font-size='13'>log10 n</text>\n";
  os << "<text x='15' y='" << H / 2 << "' transform='rotate(-90 15 " << H / 2
     << ")' text-anchor='middle' font-size='13'>log10 median deviation</text>\n";
  // axes
  os << "<line x1='" << ml << "' y1='" << H - mb << "' x2='" << W - mr << "' y2='" << H - mb
     << "' stroke='black'/>\n";
  os << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << H - mb
     << "' stroke='black'/>\n";
  // reference curve
  os << "<polyline fill='none' stroke='#888888' stroke-dasharray='4 3' points='";
  for (const auto& p : rep.points)
    if (p.delta1_reference > 0)
      os << sx(std::log10(static_cast<double>(p.n))) << "," << sy(std::log10(p.delta1_reference)) << " ";
  os << "'/>\n";
  for (std::size_t t = 0; t < rep.test_ids.size(); ++t) {
    os << "<polyline fill='none' stroke='" << colors[t % 6] << "' stroke-width='1.5' points='";
    for (const auto& p : rep.points)
      if (p.median_deviations[t] > 0)
        os << sx(std::log10(static_cast<double>(p.n))) << ","
           << sy(std::log10(p.median_deviations[t])) << " ";
    os << "'/>\n";
    os << "<text x='" << W - mr - 5 << "' y='" << mt + 16 * (t + 1) << "' text-anchor='end' fill='"
       << colors[t % 6] << "' font-size='12'>" << rep.test_ids[t] << " slope "
       << (rep.degenerate[t] ? std::string("n/a") : std::to_string(rep.slopes[t])) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace selab
