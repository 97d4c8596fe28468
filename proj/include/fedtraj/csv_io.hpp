#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "fedtraj/errors.hpp"
#include "fedtraj/trajectory.hpp"

namespace fedtraj {

namespace detail {

inline std::string fmt9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

inline double parse_double(std::string_view s, int line, const char* col) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  require(res.ec == std::errc() && res.ptr == s.data() + s.size(),
          errc::malformed_row,
          "line " + std::to_string(line) + ": bad " + col + " value '" +
              std::string(s) + "'");
  return v;
}

inline long parse_long(std::string_view s, int line, const char* col) {
  long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  require(res.ec == std::errc() && res.ptr == s.data() + s.size(),
          errc::malformed_row,
          "line " + std::to_string(line) + ": bad " + col + " value '" +
              std::string(s) + "'");
  return v;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

}  // namespace detail

// Raw GPS rows: traj_id,t,x,y
inline void write_raw_csv(const std::vector<raw_trajectory>& trajs,
                          const std::string& path) {
  std::ofstream out(path);
  require(out.good(), errc::io_error, "cannot write " + path);
  out << "traj_id,t,x,y\n";
  for (std::size_t id = 0; id < trajs.size(); ++id)
    for (const auto& p : trajs[id].points)
      out << id << ',' << detail::fmt9(p.t) << ',' << detail::fmt9(p.pos.x)
          << ',' << detail::fmt9(p.pos.y) << '\n';
}

inline std::vector<raw_trajectory> read_raw_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), errc::io_error, "cannot open " + path);
  std::vector<raw_trajectory> out;
  std::string line;
  int lineno = 0;
  long prev_id = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (lineno == 1 && line.rfind("traj_id", 0) == 0) continue;
    const auto cols = detail::split_csv(line);
    require(cols.size() == 4, errc::malformed_row,
            "line " + std::to_string(lineno) + ": expected 4 columns");
    const long id = detail::parse_long(cols[0], lineno, "traj_id");
    raw_point p;
    p.t = detail::parse_double(cols[1], lineno, "t");
    p.pos.x = detail::parse_double(cols[2], lineno, "x");
    p.pos.y = detail::parse_double(cols[3], lineno, "y");
    if (id != prev_id) {
      out.emplace_back();
      prev_id = id;
    }
    out.back().points.push_back(p);
  }
  return out;
}

// Map-matched rows: traj_id,t,edge,r — 9 significant digits on t and r.
inline void write_matched_csv(const std::vector<map_matched_trajectory>& trajs,
                              const std::string& path) {
  std::ofstream out(path);
  require(out.good(), errc::io_error, "cannot write " + path);
  out << "traj_id,t,edge,r\n";
  for (std::size_t id = 0; id < trajs.size(); ++id)
    for (const auto& p : trajs[id].points)
      out << id << ',' << detail::fmt9(p.t) << ',' << p.edge << ','
          << detail::fmt9(p.r) << '\n';
}

inline std::vector<map_matched_trajectory> read_matched_csv(const std::string& path,
                                                            double epsilon) {
  std::ifstream in(path);
  require(in.good(), errc::io_error, "cannot open " + path);
  std::vector<map_matched_trajectory> out;
  std::string line;
  int lineno = 0;
  long prev_id = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (lineno == 1 && line.rfind("traj_id", 0) == 0) continue;
    const auto cols = detail::split_csv(line);
    require(cols.size() == 4, errc::malformed_row,
            "line " + std::to_string(lineno) + ": expected 4 columns");
    const long id = detail::parse_long(cols[0], lineno, "traj_id");
    map_matched_point p;
    p.t = detail::parse_double(cols[1], lineno, "t");
    p.edge = static_cast<int>(detail::parse_long(cols[2], lineno, "edge"));
    p.r = detail::parse_double(cols[3], lineno, "r");
    if (id != prev_id) {
      out.emplace_back();
      out.back().epsilon = epsilon;
      prev_id = id;
    }
    out.back().points.push_back(p);
  }
  return out;
}

// Observed-subset rows share the matched format; the epsilon grid metadata
// comes from the caller, endpoints from the rows themselves.
inline std::vector<incomplete_trajectory> read_incomplete_csv(
    const std::string& path, double epsilon) {
  std::vector<incomplete_trajectory> out;
  for (auto& t : read_matched_csv(path, epsilon)) {
    incomplete_trajectory icp;
    icp.epsilon = epsilon;
    icp.points = std::move(t.points);
    require(!icp.points.empty(), errc::empty_list, "empty trajectory in " + path);
    icp.t_start = icp.points.front().t;
    icp.t_end = icp.points.back().t;
    out.push_back(std::move(icp));
  }
  return out;
}

inline void write_incomplete_csv(const std::vector<incomplete_trajectory>& trajs,
                                 const std::string& path) {
  std::vector<map_matched_trajectory> tmp;
  tmp.reserve(trajs.size());
  for (const auto& icp : trajs) tmp.push_back({icp.points, icp.epsilon});
  write_matched_csv(tmp, path);
}

}  // namespace fedtraj
