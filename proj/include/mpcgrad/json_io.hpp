#pragma once

#include "mpcgrad/mpc.hpp"
#include "mpcgrad/poly.hpp"

#include <json.hpp>

#include <string>

namespace mpcgrad {

using Json = nlohmann::ordered_json;

Json matrix_to_json(const Matrix& M);
Json vector_to_json(const Vector& v);

/// `field` names the value in error messages.
Matrix matrix_from_json(const Json& j, const std::string& field);
Vector vector_from_json(const Json& j, const std::string& field);

/// {"C": [[...]], "d": [...]}
Json polytope_to_json(const HPolytope& P);
HPolytope polytope_from_json(const Json& j, const std::string& field = "polytope");

/// {"A", "B", "Q", "R", "QN", "N", "X", "U"}; matrices row-major.
Json problem_to_json(const MpcProblem& p);
/// Validates the problem; shape errors surface as ArgumentError.
MpcProblem problem_from_json(const Json& j);

/// 16 hex digits of FNV-1a over the canonical problem JSON.
std::string problem_hash(const MpcProblem& p);

/// Throws ParseError with the file name and the parser's line/column.
Json read_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

/// Shortest round-trip decimal form.
std::string format_double(double v);

}  // namespace mpcgrad
