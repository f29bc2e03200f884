// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lpvid/benchmark.hpp"
#include "lpvid/dataset.hpp"
#include "lpvid/text.hpp"

#include <json.hpp>

namespace lpvid {

/// CSV layout: header `k,u_1..u_nu,y_1..y_ny[,p_1..p_np]`, one row per
/// sample, k starting at 1, full-precision decimal floats.
inline void write_dataset_csv(const std::string& path, const DataSet& ds) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path);
  os << 'k';
  for (int i = 1; i <= ds.n_u(); ++i) os << ",u_" << i;
  for (int i = 1; i <= ds.n_y(); ++i) os << ",y_" << i;
  for (int i = 1; i <= ds.n_p(); ++i) os << ",p_" << i;
  os << '\n';
  for (int k = 0; k < ds.n(); ++k) {
    os << (k + 1);
    for (int i = 0; i < ds.n_u(); ++i) os << ',' << format_double(ds.u(k, i));
    for (int i = 0; i < ds.n_y(); ++i) os << ',' << format_double(ds.y(k, i));
    for (int i = 0; i < ds.n_p(); ++i) os << ',' << format_double(ds.p(k, i));
    os << '\n';
  }
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

/// Reads a dataset CSV; channel counts are inferred from the header.
inline DataSet read_dataset_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path);
  std::string line;
  if (!std::getline(is, line)) throw DataError("empty file " + path, 1);

  const auto header = detail::split_csv_line(line);
  if (header.empty() || header[0] != "k")
    throw DataError(path + ": header must start with k", 1);
  int n_u = 0, n_y = 0, n_p = 0;
  for (size_t i = 1; i < header.size(); ++i) {
    const std::string& h = header[i];
    if (h.rfind("u_", 0) == 0 && n_y == 0 && n_p == 0) ++n_u;
    else if (h.rfind("y_", 0) == 0 && n_p == 0) ++n_y;
    else if (h.rfind("p_", 0) == 0) ++n_p;
    else throw DataError(path + ": unexpected column '" + h + "'", 1);
  }
  if (n_u == 0 || n_y == 0)
    throw DataError(path + ": need at least one u and one y column", 1);

  std::vector<std::vector<double>> rows;
  long line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw DataError(path + ": wrong field count", line_no);
    const long k = parse_long(cells[0], line_no);
    if (k != static_cast<long>(rows.size()) + 1)
      throw DataError(path + ": non-contiguous sample index", line_no);
    std::vector<double> row;
    row.reserve(cells.size() - 1);
    for (size_t i = 1; i < cells.size(); ++i)
      row.push_back(parse_double(cells[i], line_no));
    rows.push_back(std::move(row));
  }

  DataSet ds;
  const int N = static_cast<int>(rows.size());
  ds.u.resize(N, n_u);
  ds.y.resize(N, n_y);
  if (n_p > 0) ds.p.resize(N, n_p);
  for (int k = 0; k < N; ++k) {
    int j = 0;
    for (int i = 0; i < n_u; ++i) ds.u(k, i) = rows[k][j++];
    for (int i = 0; i < n_y; ++i) ds.y(k, i) = rows[k][j++];
    for (int i = 0; i < n_p; ++i) ds.p(k, i) = rows[k][j++];
  }
  return ds;
}

/// Sidecar metadata: sample time, seeds, generating system, noise level and
/// the estimation-split normalization statistics.
inline nlohmann::json dataset_metadata(const DataSet& ds,
                                       const NonlinearSystemDef* sys,
                                       uint64_t master_seed, double sigma_e,
                                       std::optional<double> snr_db) {
  nlohmann::json j;
  j["schema"] = "lpvid-dataset/1";
  j["role"] = ds.role;
  j["n"] = ds.n();
  j["sample_time"] = ds.sample_time;
  j["seed"] = ds.seed;
  j["master_seed"] = master_seed;
  j["noise"]["sigma_e"] = sigma_e;
  if (snr_db) j["noise"]["snr_db"] = *snr_db;
  if (sys) {
    j["system"]["name"] = sys->name;
    for (const auto& [k, v] : sys->parameters) j["system"][k] = v;
  }
  if (ds.has_stats) {
    auto vec = [](const Vector& v) {
      return std::vector<double>(v.data(), v.data() + v.size());
    };
    j["normalization"]["u_mean"] = vec(ds.stats.u.mean);
    j["normalization"]["u_std"] = vec(ds.stats.u.stdev);
    j["normalization"]["y_mean"] = vec(ds.stats.y.mean);
    j["normalization"]["y_std"] = vec(ds.stats.y.stdev);
  }
  return j;
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path);
  os << j.dump(2) << '\n';
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path);
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path + ": " + e.what());
  }
}

}  // namespace lpvid
