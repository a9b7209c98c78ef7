#include "mpcgrad/json_io.hpp"

#include "mpcgrad/errors.hpp"

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>

namespace mpcgrad {

Json matrix_to_json(const Matrix& M) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Json vector_to_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Matrix matrix_from_json(const Json& j, const std::string& field) {
  if (!j.is_array()) throw ParseError("field '" + field + "': expected an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  Eigen::Index cols = -1;
  Matrix M;
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array())
      throw ParseError("field '" + field + "': row " + std::to_string(i) + " is not an array");
    if (cols < 0) {
      cols = static_cast<Eigen::Index>(row.size());
      M.resize(rows, cols);
    } else if (static_cast<Eigen::Index>(row.size()) != cols) {
      throw ArgumentError("field '" + field + "': ragged rows (row " + std::to_string(i) + ")");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      const Json& v = row[static_cast<std::size_t>(c)];
      if (!v.is_number())
        throw ParseError("field '" + field + "': entry (" + std::to_string(i) + ", " +
                         std::to_string(c) + ") is not a number");
      M(i, c) = v.get<double>();
    }
  }
  if (rows == 0) M.resize(0, 0);
  return M;
}

Vector vector_from_json(const Json& j, const std::string& field) {
  if (!j.is_array()) throw ParseError("field '" + field + "': expected an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number())
      throw ParseError("field '" + field + "': entry " + std::to_string(i) + " is not a number");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

Json polytope_to_json(const HPolytope& P) {
  Json j;
  j["C"] = matrix_to_json(P.C());
  j["d"] = vector_to_json(P.d());
  if (P.rows() == 0) j["dim"] = P.dim();
  return j;
}

HPolytope polytope_from_json(const Json& j, const std::string& field) {
  if (!j.is_object() || !j.contains("C") || !j.contains("d"))
    throw ParseError("field '" + field + "': expected an object with 'C' and 'd'");
  Matrix C = matrix_from_json(j["C"], field + ".C");
  Vector d = vector_from_json(j["d"], field + ".d");
  if (C.rows() == 0) {
    if (!j.contains("dim") || !j["dim"].is_number_integer())
      throw ParseError("field '" + field + "': empty constraint list needs 'dim'");
    return HPolytope::universe(j["dim"].get<int>());
  }
  return HPolytope(std::move(C), std::move(d));
}

Json problem_to_json(const MpcProblem& p) {
  Json j;
  j["A"] = matrix_to_json(p.system.A);
  j["B"] = matrix_to_json(p.system.B);
  j["Q"] = matrix_to_json(p.Q);
  j["R"] = matrix_to_json(p.R);
  j["QN"] = matrix_to_json(p.QN);
  j["N"] = p.horizon;
  j["X"] = polytope_to_json(p.X);
  j["U"] = polytope_to_json(p.U);
  return j;
}

MpcProblem problem_from_json(const Json& j) {
  if (!j.is_object()) throw ParseError("problem: expected a JSON object");
  for (const char* key : {"A", "B", "Q", "R", "QN", "N", "X", "U"})
    if (!j.contains(key)) throw ParseError(std::string("problem: missing field '") + key + "'");
  MpcProblem p;
  p.system.A = matrix_from_json(j["A"], "A");
  p.system.B = matrix_from_json(j["B"], "B");
  p.Q = matrix_from_json(j["Q"], "Q");
  p.R = matrix_from_json(j["R"], "R");
  p.QN = matrix_from_json(j["QN"], "QN");
  if (!j["N"].is_number_integer()) throw ParseError("problem: field 'N' must be an integer");
  p.horizon = j["N"].get<int>();
  p.X = polytope_from_json(j["X"], "X");
  p.U = polytope_from_json(j["U"], "U");
  p.validate();
  return p;
}

std::string problem_hash(const MpcProblem& p) {
  const std::string canonical = problem_to_json(p).dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Json read_json_file(const std::string& path) {
  const std::string text = read_text_file(path);
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParseError("cannot write '" + path + "'");
  out << text;
  if (!out) throw ParseError("write failed for '" + path + "'");
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace mpcgrad
