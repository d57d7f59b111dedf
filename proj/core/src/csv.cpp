#include "gpstab/csv.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gpstab {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_csv(std::ostream& os, const CsvTable& table) {
  for (std::size_t c = 0; c < table.header.size(); ++c) os << (c ? "," : "") << table.header[c];
  os << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) os << (c ? "," : "") << format_double(row[c]);
    os << '\n';
  }
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  write_csv(os, table);
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  CsvTable table;
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error(path.string() + ": empty file");
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) table.header.push_back(cell);
  }
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != cell.size()) {
        throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": not a number: " + cell);
      }
      row.push_back(v);
    }
    if (row.size() != table.header.size()) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": wrong column count");
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

CsvTable training_set_table(const TrainingSet& ts) {
  CsvTable t;
  for (Eigen::Index d = 0; d < ts.input_dim(); ++d) t.header.push_back("x_" + std::to_string(d + 1));
  for (Eigen::Index d = 0; d < ts.output_dim(); ++d) t.header.push_back("f_" + std::to_string(d + 1));
  for (Eigen::Index r = 0; r < ts.size(); ++r) {
    std::vector<double> row;
    for (Eigen::Index d = 0; d < ts.input_dim(); ++d) row.push_back(ts.inputs(r, d));
    for (Eigen::Index d = 0; d < ts.output_dim(); ++d) row.push_back(ts.outputs(r, d));
    t.rows.push_back(std::move(row));
  }
  return t;
}

TrainingSet training_set_from_table(const CsvTable& table) {
  Eigen::Index nx = 0, nf = 0;
  for (const auto& h : table.header) {
    if (h.rfind("x_", 0) == 0) {
      ++nx;
    } else if (h.rfind("f_", 0) == 0) {
      ++nf;
    } else {
      throw std::runtime_error("training data: unexpected column " + h);
    }
  }
  if (nx == 0 || nf == 0) throw std::runtime_error("training data: need x_ and f_ columns");
  TrainingSet ts;
  ts.inputs.resize(static_cast<Eigen::Index>(table.rows.size()), nx);
  ts.outputs.resize(static_cast<Eigen::Index>(table.rows.size()), nf);
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto ri = static_cast<Eigen::Index>(r);
    for (Eigen::Index d = 0; d < nx; ++d) ts.inputs(ri, d) = table.rows[r][static_cast<std::size_t>(d)];
    for (Eigen::Index d = 0; d < nf; ++d) ts.outputs(ri, d) = table.rows[r][static_cast<std::size_t>(nx + d)];
  }
  ts.validate();
  return ts;
}

}  // namespace gpstab
