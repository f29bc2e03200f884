// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fstream>
#include <optional>
#include <string>

#include "lpvid/encoder.hpp"
#include "lpvid/lpv_model.hpp"

#include <json.hpp>

namespace lpvid {

namespace detail {

inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j, Eigen::Index rows,
                               Eigen::Index cols, const std::string& what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
    throw DataError("model document: bad row count for " + what);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[r];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw DataError("model document: bad column count for " + what);
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[c].get<double>();
  }
  return m;
}

inline nlohmann::json affine_to_json(const AffineMatrixFunction& f) {
  nlohmann::json mats = nlohmann::json::array();
  mats.push_back(matrix_to_json(f.base));
  for (const auto& c : f.coeffs) mats.push_back(matrix_to_json(c));
  return mats;
}

inline AffineMatrixFunction affine_from_json(const nlohmann::json& j,
                                             Eigen::Index rows,
                                             Eigen::Index cols, int np,
                                             const std::string& what) {
  if (!j.is_array() || static_cast<int>(j.size()) != np + 1)
    throw DataError("model document: bad matrix count for " + what);
  AffineMatrixFunction f;
  f.base = matrix_from_json(j[0], rows, cols, what);
  for (int i = 0; i < np; ++i)
    f.coeffs.push_back(matrix_from_json(j[i + 1], rows, cols, what));
  return f;
}

inline nlohmann::json mlp_to_json(const Mlp& net) {
  nlohmann::json j;
  j["widths"] = net.widths;
  j["weights"] = nlohmann::json::array();
  for (const auto& w : net.weights) j["weights"].push_back(matrix_to_json(w));
  j["biases"] = nlohmann::json::array();
  for (const auto& b : net.biases) j["biases"].push_back(matrix_to_json(b));
  j["bypass"] = net.bypass ? matrix_to_json(*net.bypass) : nlohmann::json();
  return j;
}

inline Mlp mlp_from_json(const nlohmann::json& j, const std::string& what) {
  Mlp net;
  net.widths = j.at("widths").get<std::vector<int>>();
  if (net.widths.size() < 2)
    throw DataError("model document: bad widths for " + what);
  const auto& jw = j.at("weights");
  const auto& jb = j.at("biases");
  const size_t layers = net.widths.size() - 1;
  if (jw.size() != layers || jb.size() != layers)
    throw DataError("model document: layer count mismatch for " + what);
  for (size_t i = 0; i < layers; ++i) {
    net.weights.push_back(
        matrix_from_json(jw[i], net.widths[i + 1], net.widths[i], what));
    net.biases.push_back(matrix_from_json(jb[i], net.widths[i + 1], 1, what));
  }
  if (j.contains("bypass") && !j.at("bypass").is_null())
    net.bypass = matrix_from_json(j.at("bypass"), net.widths.back(),
                                  net.widths.front(), what);
  return net;
}

inline std::vector<double> vec_to_std(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline Vector vec_from_json(const nlohmann::json& j, Eigen::Index n,
                            const std::string& what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != n)
    throw DataError("model document: bad vector length for " + what);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = j[i].get<double>();
  return v;
}

}  // namespace detail

/// Everything needed to run a trained model on new data.
struct ModelBundle {
  LpvSsModel model;
  std::optional<SchedulingNet> sched;  // absent for oracle-scheduled training
  EncoderNet encoder;
};

inline nlohmann::json model_to_json(const LpvSsModel& m,
                                    const SchedulingNet* sched,
                                    const EncoderNet& enc) {
  nlohmann::json j;
  j["schema"] = "lpvid-model/1";
  j["noise_structure"] =
      m.noise == NoiseStructure::innovation ? "innovation" : "output_error";
  j["dims"] = {{"n_x", m.n_x}, {"n_u", m.n_u},     {"n_y", m.n_y},
               {"n_p_x", m.n_p_x}, {"n_p_y", m.n_p_y}, {"lag", enc.lag}};
  j["normalization"] = {{"u_mean", detail::vec_to_std(m.stats.u.mean)},
                        {"u_std", detail::vec_to_std(m.stats.u.stdev)},
                        {"y_mean", detail::vec_to_std(m.stats.y.mean)},
                        {"y_std", detail::vec_to_std(m.stats.y.stdev)}};
  j["matrices"] = {{"A", detail::affine_to_json(m.A)},
                   {"B", detail::affine_to_json(m.B)},
                   {"C", detail::affine_to_json(m.C)},
                   {"D", detail::affine_to_json(m.D)},
                   {"K", detail::affine_to_json(m.K)}};
  if (sched) {
    j["scheduling"] = nlohmann::json::object();
    j["scheduling"]["phi_x"] =
        sched->phi_x ? detail::mlp_to_json(*sched->phi_x) : nlohmann::json();
    j["scheduling"]["phi_y"] =
        sched->phi_y ? detail::mlp_to_json(*sched->phi_y) : nlohmann::json();
  } else {
    j["scheduling"] = nlohmann::json();
  }
  j["encoder"] = {{"lag", enc.lag}, {"net", detail::mlp_to_json(enc.net)}};
  return j;
}

inline ModelBundle model_from_json(const nlohmann::json& j) {
  if (j.value("schema", "") != "lpvid-model/1")
    throw DataError("model document: unsupported schema");
  ModelBundle b;
  LpvSsModel& m = b.model;
  const auto& d = j.at("dims");
  m.n_x = d.at("n_x").get<int>();
  m.n_u = d.at("n_u").get<int>();
  m.n_y = d.at("n_y").get<int>();
  m.n_p_x = d.at("n_p_x").get<int>();
  m.n_p_y = d.at("n_p_y").get<int>();
  const std::string noise = j.at("noise_structure").get<std::string>();
  if (noise == "innovation") m.noise = NoiseStructure::innovation;
  else if (noise == "output_error") m.noise = NoiseStructure::output_error;
  else throw DataError("model document: bad noise_structure");

  const auto& nj = j.at("normalization");
  m.stats.u.mean = detail::vec_from_json(nj.at("u_mean"), m.n_u, "u_mean");
  m.stats.u.stdev = detail::vec_from_json(nj.at("u_std"), m.n_u, "u_std");
  m.stats.y.mean = detail::vec_from_json(nj.at("y_mean"), m.n_y, "y_mean");
  m.stats.y.stdev = detail::vec_from_json(nj.at("y_std"), m.n_y, "y_std");

  const auto& mats = j.at("matrices");
  m.A = detail::affine_from_json(mats.at("A"), m.n_x, m.n_x, m.n_p_x, "A");
  m.B = detail::affine_from_json(mats.at("B"), m.n_x, m.n_u, m.n_p_x, "B");
  m.C = detail::affine_from_json(mats.at("C"), m.n_y, m.n_x, m.n_p_y, "C");
  m.D = detail::affine_from_json(mats.at("D"), m.n_y, m.n_u, m.n_p_y, "D");
  m.K = detail::affine_from_json(mats.at("K"), m.n_x, m.n_y, m.n_p_x, "K");

  if (j.contains("scheduling") && !j.at("scheduling").is_null()) {
    SchedulingNet s;
    s.noise = m.noise;
    s.n_p_x = m.n_p_x;
    s.n_p_y = m.n_p_y;
    const auto& sj = j.at("scheduling");
    if (sj.contains("phi_x") && !sj.at("phi_x").is_null())
      s.phi_x = detail::mlp_from_json(sj.at("phi_x"), "phi_x");
    if (sj.contains("phi_y") && !sj.at("phi_y").is_null())
      s.phi_y = detail::mlp_from_json(sj.at("phi_y"), "phi_y");
    b.sched = std::move(s);
  }

  const auto& ej = j.at("encoder");
  b.encoder.lag = ej.at("lag").get<int>();
  b.encoder.net = detail::mlp_from_json(ej.at("net"), "encoder");

  validate_model(m);
  return b;
}

inline void save_model(const std::string& path, const LpvSsModel& m,
                       const SchedulingNet* sched, const EncoderNet& enc) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path);
  os << model_to_json(m, sched, enc).dump(2) << '\n';
}

inline ModelBundle load_model(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path + ": " + e.what());
  }
  return model_from_json(j);
}

}  // namespace lpvid
