#pragma once

// Run configuration: flat "key = value" text with [section] headers.
// Keys are addressed as "section.key"; "section.key = value" also works
// outside any section. '#' starts a comment.
//
//   [system]      name = benchmark | external, command = ..., dimension = 2,
//                 mode = analytic | black-box, fd_step = 1e-4
//   [design]      A = 0.5 0.3; 0.5 0.4      c = 1 0
//   [network]     N1 = 5, N2 = 5, activation = sigmoid
//   [schedule]    preset = benchmark-default | single-stage | custom,
//                 x_lower = -0.495, points_per_axis = 20,
//                 stages = -0.2:20, -0.25:20, ...   warm_restart = true
//   [optimizer]   func_tol, max_iterations, max_function_evals, initial_damping,
//                 damping_up, damping_down, diagonal_scaling
//   [train]       seed = 0, restarts = 5
//   [evaluate]    reference = benchmark | none, test_points = 50, train_points = 20
//   [baseline]    order = 6, points_per_axis = 20, x_lower = -0.495
//   [check]       resonance_bound = 10
//   [simulate]    x0 = -0.4 -0.4, horizon = 50
//   [output]      dir = out

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fblin/continuation.hpp"
#include "fblin/errors.hpp"
#include "fblin/levenberg_marquardt.hpp"
#include "fblin/linalg.hpp"
#include "fblin/network.hpp"
#include "fblin/system.hpp"

namespace fblin {

struct SchedulePlan {
  enum class Preset { benchmark_default, single_stage, custom };
  Preset preset = Preset::benchmark_default;
  double x_lower = benchmark::kDomainLower;
  Eigen::Index points_per_axis = 20;
  std::vector<std::pair<double, Eigen::Index>> stages;  // custom: (x_lower, points_per_axis)
  bool warm_restart = true;
};

struct RunConfig {
  std::string system_name = "benchmark";
  std::string system_command;
  Eigen::Index dimension = 2;
  SystemMode mode = SystemMode::analytic;
  double fd_step = kDefaultFdStep;

  Matrix A = benchmark::design_A();
  RowVector c = benchmark::design_c();

  Architecture arch;
  SchedulePlan schedule;
  LmSettings optimizer = network_training_settings();

  std::uint64_t seed = 0;
  int restarts = 5;

  bool benchmark_reference = true;
  Eigen::Index test_points = 50;
  Eigen::Index train_points = 20;

  int baseline_order = 6;
  Eigen::Index baseline_points = 20;
  double baseline_x_lower = benchmark::kDomainLower;

  int resonance_bound = 10;

  Vector x0 = Vector{{-0.4, -0.4}};
  long horizon = 50;

  std::string output_dir = "fblin-out";

  DesignSpec design() const { return {A, c}; }

  ContinuationSchedule make_schedule() const {
    ContinuationSchedule s;
    switch (schedule.preset) {
      case SchedulePlan::Preset::benchmark_default:
        s = default_benchmark_schedule(optimizer, schedule.points_per_axis);
        for (Stage& st : s.stages) st.box = BoxDomain::corner(st.box.lower(0), dimension);
        break;
      case SchedulePlan::Preset::single_stage:
        s = single_stage_schedule(schedule.x_lower, optimizer, schedule.points_per_axis, dimension);
        break;
      case SchedulePlan::Preset::custom:
        for (const auto& [xl, pts] : schedule.stages) s.stages.push_back({BoxDomain::corner(xl, dimension), pts, optimizer});
        break;
    }
    s.warm_restart = schedule.warm_restart;
    s.validate();
    return s;
  }

  void validate() const {
    if (A.rows() != dimension || A.cols() != dimension) {
      throw ConfigError("design.A must be " + std::to_string(dimension) + "x" + std::to_string(dimension));
    }
    if (c.size() != dimension) throw ConfigError("design.c must have length " + std::to_string(dimension));
    if (arch.n != dimension) throw ConfigError("network input size must equal system.dimension");
    if (system_name == "external" && system_command.empty()) throw ConfigError("system.command is required for external systems");
    if (system_name != "benchmark" && system_name != "external") {
      throw ConfigError("system.name must be 'benchmark' or 'external'");
    }
    if (system_name == "external" && mode == SystemMode::analytic) {
      throw ConfigError("external systems only support black-box mode");
    }
    if (x0.size() != dimension) throw ConfigError("simulate.x0 must have length " + std::to_string(dimension));
    if (restarts < 1) throw ConfigError("train.restarts must be >= 1");
    if (baseline_order < 1) throw ConfigError("baseline.order must be >= 1");
    optimizer.validate();
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<double> parse_numbers(const std::string& s, const std::string& where) {
  std::string t = s;
  std::replace(t.begin(), t.end(), ',', ' ');
  std::istringstream is(t);
  std::vector<double> v;
  std::string tok;
  while (is >> tok) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::logic_error&) {
      throw ConfigError(where + ": '" + tok + "' is not a number");
    }
  }
  return v;
}

inline Matrix parse_matrix(const std::string& s, const std::string& where) {
  std::vector<std::vector<double>> rows;
  std::stringstream ss(s);
  std::string row;
  while (std::getline(ss, row, ';')) {
    if (trim(row).empty()) continue;
    rows.push_back(parse_numbers(row, where));
  }
  if (rows.empty()) throw ConfigError(where + ": empty matrix");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.front().size()) throw ConfigError(where + ": ragged matrix rows");
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return m;
}

inline bool parse_bool(const std::string& s, const std::string& where) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError(where + ": expected a boolean, got '" + s + "'");
}

inline double parse_double(const std::string& s, const std::string& where) {
  const auto v = parse_numbers(s, where);
  if (v.size() != 1) throw ConfigError(where + ": expected one number");
  return v.front();
}

inline long long parse_int(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::logic_error&) {
    throw ConfigError(where + ": expected an integer, got '" + s + "'");
  }
}

}  // namespace detail

/// Applies one "section.key = value" setting.
inline void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value,
                          const std::string& where) {
  using namespace detail;
  const std::string at = where + " (" + key + ")";
  if (key == "system.name") cfg.system_name = value;
  else if (key == "system.command") cfg.system_command = value;
  else if (key == "system.dimension") cfg.dimension = parse_int(value, at);
  else if (key == "system.mode") {
    if (value == "analytic") cfg.mode = SystemMode::analytic;
    else if (value == "black-box" || value == "black_box") cfg.mode = SystemMode::black_box;
    else throw ConfigError(at + ": mode must be analytic or black-box");
  } else if (key == "system.fd_step") cfg.fd_step = parse_double(value, at);
  else if (key == "design.A") cfg.A = parse_matrix(value, at);
  else if (key == "design.c") {
    const auto v = parse_numbers(value, at);
    cfg.c = Eigen::Map<const RowVector>(v.data(), static_cast<Eigen::Index>(v.size()));
  } else if (key == "network.N1") cfg.arch.N1 = parse_int(value, at);
  else if (key == "network.N2") cfg.arch.N2 = parse_int(value, at);
  else if (key == "network.activation") {
    try {
      cfg.arch.activation = parse_activation(value);
    } catch (const ConfigError& e) {
      throw ConfigError(at + ": " + e.what());
    }
  } else if (key == "schedule.preset") {
    if (value == "benchmark-default") cfg.schedule.preset = SchedulePlan::Preset::benchmark_default;
    else if (value == "single-stage") cfg.schedule.preset = SchedulePlan::Preset::single_stage;
    else if (value == "custom") cfg.schedule.preset = SchedulePlan::Preset::custom;
    else throw ConfigError(at + ": preset must be benchmark-default, single-stage or custom");
  } else if (key == "schedule.x_lower") cfg.schedule.x_lower = parse_double(value, at);
  else if (key == "schedule.points_per_axis") cfg.schedule.points_per_axis = parse_int(value, at);
  else if (key == "schedule.warm_restart") cfg.schedule.warm_restart = parse_bool(value, at);
  else if (key == "schedule.stages") {
    cfg.schedule.stages.clear();
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (item.empty()) continue;
      const auto colon = item.find(':');
      const double xl = parse_double(item.substr(0, colon), at);
      const Eigen::Index pts = colon == std::string::npos ? cfg.schedule.points_per_axis
                                                          : parse_int(trim(item.substr(colon + 1)), at);
      cfg.schedule.stages.emplace_back(xl, pts);
    }
    cfg.schedule.preset = SchedulePlan::Preset::custom;
  } else if (key == "optimizer.func_tol") cfg.optimizer.func_tol = parse_double(value, at);
  else if (key == "optimizer.max_iterations") cfg.optimizer.max_iterations = parse_int(value, at);
  else if (key == "optimizer.max_function_evals") cfg.optimizer.max_function_evals = parse_int(value, at);
  else if (key == "optimizer.initial_damping") cfg.optimizer.initial_damping = parse_double(value, at);
  else if (key == "optimizer.damping_up") cfg.optimizer.damping_up = parse_double(value, at);
  else if (key == "optimizer.damping_down") cfg.optimizer.damping_down = parse_double(value, at);
  else if (key == "optimizer.diagonal_scaling") cfg.optimizer.diagonal_scaling = parse_bool(value, at);
  else if (key == "train.seed") cfg.seed = static_cast<std::uint64_t>(parse_int(value, at));
  else if (key == "train.restarts") cfg.restarts = static_cast<int>(parse_int(value, at));
  else if (key == "evaluate.reference") {
    if (value == "benchmark") cfg.benchmark_reference = true;
    else if (value == "none") cfg.benchmark_reference = false;
    else throw ConfigError(at + ": reference must be benchmark or none");
  } else if (key == "evaluate.test_points") cfg.test_points = parse_int(value, at);
  else if (key == "evaluate.train_points") cfg.train_points = parse_int(value, at);
  else if (key == "baseline.order") cfg.baseline_order = static_cast<int>(parse_int(value, at));
  else if (key == "baseline.points_per_axis") cfg.baseline_points = parse_int(value, at);
  else if (key == "baseline.x_lower") cfg.baseline_x_lower = parse_double(value, at);
  else if (key == "check.resonance_bound") cfg.resonance_bound = static_cast<int>(parse_int(value, at));
  else if (key == "simulate.x0") {
    const auto v = parse_numbers(value, at);
    cfg.x0 = Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
  } else if (key == "simulate.horizon") cfg.horizon = parse_int(value, at);
  else if (key == "output.dir") cfg.output_dir = value;
  else throw ConfigError(where + ": unknown key '" + key + "'");
}

inline RunConfig parse_config(std::istream& is, const std::string& source = "<config>") {
  RunConfig cfg;
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string where = source + ":" + std::to_string(lineno);
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.find('.') == std::string::npos) {
      if (section.empty()) throw ConfigError(where + ": key '" + key + "' outside any section");
      key = section + "." + key;
    }
    apply_setting(cfg, key, value, where);
  }
  cfg.arch.n = cfg.dimension;
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(in, path);
}

}  // namespace fblin
