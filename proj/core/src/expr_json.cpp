#include "gpstab/expr_json.hpp"

#include <stdexcept>
#include <string>

namespace gpstab {

nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw std::invalid_argument("expected a numeric array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw std::invalid_argument("expected a numeric array");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(vector_to_json(m.row(r).transpose()));
  return out;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw std::invalid_argument("expected an array of rows");
  if (j.empty()) return Eigen::MatrixXd(0, 0);
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    const Eigen::VectorXd row = vector_from_json(j[r]);
    if (row.size() != cols) throw std::invalid_argument("ragged matrix rows");
    m.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return m;
}

nlohmann::json to_json(const BoundExpr& e) {
  if (const auto* c = e.as<ConstantNode>()) return {{"type", "constant"}, {"value", c->value}};
  if (const auto* l = e.as<LinearNode>()) {
    return {{"type", "linear"}, {"a", vector_to_json(l->a)}, {"b", l->b}};
  }
  if (const auto* k = e.as<KernelNode>()) {
    return {{"type", "kernel"},
            {"center", vector_to_json(k->kernel.center)},
            {"amplitude", k->kernel.amplitude},
            {"inv_lengthscale", vector_to_json(k->kernel.inv_lengthscale)}};
  }
  nlohmann::json children = nlohmann::json::array();
  if (const auto* s = e.as<SumNode>()) {
    for (const auto& child : s->children) children.push_back(to_json(child));
    return {{"type", "sum"}, {"coefficients", s->coefficients}, {"children", std::move(children)}};
  }
  const auto& p = std::get<ProductNode>(e.node());
  for (const auto& child : p.children) children.push_back(to_json(child));
  return {{"type", "product"}, {"children", std::move(children)}};
}

BoundExpr expr_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) {
    throw std::invalid_argument("expression node must be an object with a string \"type\"");
  }
  const std::string type = j["type"].get<std::string>();
  try {
    if (type == "constant") return BoundExpr::constant(j.at("value").get<double>());
    if (type == "linear") return BoundExpr::linear(vector_from_json(j.at("a")), j.at("b").get<double>());
    if (type == "kernel") {
      return BoundExpr::kernel(make_kernel(vector_from_json(j.at("center")),
                                           j.at("amplitude").get<double>(),
                                           vector_from_json(j.at("inv_lengthscale"))));
    }
    if (type == "sum" || type == "product") {
      std::vector<BoundExpr> children;
      for (const auto& c : j.at("children")) children.push_back(expr_from_json(c));
      if (type == "product") return BoundExpr::product(std::move(children));
      return BoundExpr::sum(std::move(children), j.at("coefficients").get<std::vector<double>>());
    }
  } catch (const nlohmann::json::exception& ex) {
    throw std::invalid_argument(std::string("malformed ") + type + " node: " + ex.what());
  }
  throw std::invalid_argument("unknown expression type: " + type);
}

}  // namespace gpstab
