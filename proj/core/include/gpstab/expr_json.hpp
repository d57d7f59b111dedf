#pragma once

#include <nlohmann/json.hpp>

#include "gpstab/expr.hpp"

namespace gpstab {

// Tagged-union encoding:
//   {"type":"constant","value":c}
//   {"type":"linear","a":[...],"b":b}
//   {"type":"kernel","center":[...],"amplitude":s,"inv_lengthscale":[...]}
//   {"type":"sum","coefficients":[...],"children":[...]}
//   {"type":"product","children":[...]}
nlohmann::json to_json(const BoundExpr& e);
// Throws std::invalid_argument on a malformed document.
BoundExpr expr_from_json(const nlohmann::json& j);

nlohmann::json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const nlohmann::json& j);
// Row-major array of arrays.
nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j);

}  // namespace gpstab
