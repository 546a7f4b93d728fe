#pragma once

#include <json.hpp>

#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tenseg/errors.hpp"
#include "tenseg/form_finding.hpp"
#include "tenseg/geometry.hpp"
#include "tenseg/reconfiguration.hpp"
#include "tenseg/stability.hpp"

namespace tenseg {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Placement: {"nodes": [[x, y], ...]} in meters; array order is node order.

inline json placement_to_json(const Placement& p) {
  json nodes = json::array();
  for (const Vec2& q : p.nodes()) nodes.push_back({q.x(), q.y()});
  return json{{"nodes", nodes}};
}

inline Placement placement_from_json(const json& j) {
  if (!j.contains("nodes") || !j["nodes"].is_array()) {
    throw UsageError("placement json must contain a \"nodes\" array");
  }
  std::vector<Vec2> nodes;
  for (const auto& entry : j["nodes"]) {
    if (!entry.is_array() || entry.size() != 2) {
      throw UsageError("each node must be an [x, y] pair");
    }
    nodes.emplace_back(entry[0].get<double>(), entry[1].get<double>());
  }
  return Placement(std::move(nodes));
}

// ---------------------------------------------------------------------------
// Model: equilibrium placement, prescribed eigenvalues, edge list, and
// (optionally) the dense stress matrix in row-major order. Node indices are
// zero-based.

inline json model_to_json(const TensegrityModel& model, bool include_stress = true) {
  json edges = json::array();
  for (const Edge& e : model.edges) {
    edges.push_back({{"i", e.i},
                     {"j", e.j},
                     {"omega", e.omega},
                     {"alpha", e.alpha},
                     {"rest_length", e.rest_length},
                     {"kind", to_string(e.kind)}});
  }
  json j{{"equilibrium", placement_to_json(model.equilibrium)},
         {"eigen_d", std::vector<double>(model.eigen_d.data(), model.eigen_d.data() + model.eigen_d.size())},
         {"edges", edges}};
  if (include_stress) {
    std::vector<double> dense;
    dense.reserve(static_cast<size_t>(model.stress.size()));
    for (int r = 0; r < model.stress.rows(); ++r) {
      for (int c = 0; c < model.stress.cols(); ++c) dense.push_back(model.stress(r, c));
    }
    j["stress"] = json{{"n", model.stress.rows()}, {"data_row_major", dense}};
  }
  return j;
}

inline TensegrityModel model_from_json(const json& j) {
  TensegrityModel model;
  model.equilibrium = placement_from_json(j.at("equilibrium"));
  const auto d = j.at("eigen_d").get<std::vector<double>>();
  model.eigen_d = Eigen::Map<const Eigen::VectorXd>(d.data(), static_cast<long>(d.size()));
  const int n = model.equilibrium.size();
  for (const auto& e : j.at("edges")) {
    Edge edge;
    edge.i = e.at("i").get<int>();
    edge.j = e.at("j").get<int>();
    edge.omega = e.at("omega").get<double>();
    edge.alpha = e.at("alpha").get<double>();
    edge.rest_length = e.at("rest_length").get<double>();
    edge.kind = e.at("kind").get<std::string>() == "strut" ? EdgeKind::strut : EdgeKind::cable;
    if (edge.i < 0 || edge.j < 0 || edge.i >= n || edge.j >= n) {
      throw UsageError("edge index out of range");
    }
    model.edges.push_back(edge);
  }
  if (j.contains("stress")) {
    const int sn = j["stress"].at("n").get<int>();
    const auto dense = j["stress"].at("data_row_major").get<std::vector<double>>();
    if (sn != n || dense.size() != static_cast<size_t>(n) * static_cast<size_t>(n)) {
      throw UsageError("stress block dimensions do not match the placement");
    }
    model.stress.resize(n, n);
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) model.stress(r, c) = dense[static_cast<size_t>(r * n + c)];
    }
  } else {
    // The stress matrix is regenerable from the edge list: off-diagonal
    // entries are the negated stresses, diagonals make rows sum to zero.
    model.stress = Eigen::MatrixXd::Zero(n, n);
    for (const Edge& e : model.edges) {
      model.stress(e.i, e.j) = -e.omega;
      model.stress(e.j, e.i) = -e.omega;
      model.stress(e.i, e.i) += e.omega;
      model.stress(e.j, e.j) += e.omega;
    }
  }
  return model;
}

// ---------------------------------------------------------------------------
// Plan: endpoints, pairing, horizon, eigenvalues.

inline json plan_to_json(const ReconfigPlan& plan) {
  return json{{"q0", placement_to_json(plan.q0())},
              {"qf", placement_to_json(plan.qf())},
              {"pairing", plan.pairing().perm},
              {"pairing_cost", plan.pairing().cost},
              {"tau", plan.tau()},
              {"eigen_d", std::vector<double>(plan.eigen_d().data(),
                                              plan.eigen_d().data() + plan.eigen_d().size())}};
}

inline ReconfigPlan plan_from_json(const json& j) {
  const auto d = j.at("eigen_d").get<std::vector<double>>();
  Pairing pairing;
  if (j.contains("pairing")) pairing.perm = j["pairing"].get<std::vector<int>>();
  if (j.contains("pairing_cost")) pairing.cost = j["pairing_cost"].get<double>();
  return ReconfigPlan(placement_from_json(j.at("q0")), placement_from_json(j.at("qf")),
                      j.at("tau").get<double>(),
                      Eigen::Map<const Eigen::VectorXd>(d.data(), static_cast<long>(d.size())),
                      std::move(pairing));
}

// ---------------------------------------------------------------------------
// Stability report.

inline json report_to_json(const StabilityReport& report) {
  json spectrum = json::array();
  for (const auto& ev : report.jacobian_eigenvalues) spectrum.push_back({ev.real(), ev.imag()});
  return json{
      {"stress",
       {{"symmetry_defect", report.stress.symmetry_defect},
        {"ones_residual", report.stress.ones_residual},
        {"x_residual", report.stress.x_residual},
        {"y_residual", report.stress.y_residual},
        {"eig_floor", report.stress.eig_floor},
        {"lambda_max", report.stress.lambda_max},
        {"rank", report.stress.rank},
        {"pass", report.stress.pass}}},
      {"hessian_spectrum", std::vector<double>(report.hessian_spectrum.data(),
                                               report.hessian_spectrum.data() +
                                                   report.hessian_spectrum.size())},
      {"kernel_zero_count", report.kernel_zero_count},
      {"kernel_match_error", report.kernel_match_error},
      {"jacobian_spectrum", spectrum},
      {"spectral_margin", report.spectral_margin},
      {"damping_bound", report.damping_bound},
      {"nu", report.nu},
      {"checks",
       {{"stress_ok", report.stress_ok},
        {"hessian_psd", report.hessian_psd},
        {"kernel_ok", report.kernel_ok},
        {"margin_ok", report.margin_ok}}},
      {"failed_stage", report.failed_stage},
      {"pass", report.pass}};
}

// ---------------------------------------------------------------------------
// Files.

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes to a temporary sibling first, then renames into place.
inline void write_text_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw Error("cannot write file: " + tmp.string());
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

inline Placement load_placement(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw UsageError("cannot parse " + path.string() + ": " + e.what());
  }
  return placement_from_json(j);
}

inline void save_placement(const std::filesystem::path& path, const Placement& p) {
  write_text_file_atomic(path, placement_to_json(p).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// CSV. %.17g keeps doubles round-trippable and the files byte-deterministic.

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string trajectory_to_csv(const Trajectory& traj) {
  const int n = traj.node_count;
  std::ostringstream out;
  out << "t";
  for (int i = 1; i <= n; ++i) out << ",x" << i;
  for (int i = 1; i <= n; ++i) out << ",y" << i;
  for (int i = 1; i <= n; ++i) out << ",px" << i;
  for (int i = 1; i <= n; ++i) out << ",py" << i;
  out << "\n";
  for (size_t k = 0; k < traj.times.size(); ++k) {
    out << format_double(traj.times[k]);
    const Eigen::VectorXd& z = traj.states[k];
    for (int c = 0; c < 4 * n; ++c) out << "," << format_double(z(c));
    out << "\n";
  }
  return out.str();
}

}  // namespace tenseg
