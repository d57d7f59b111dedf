#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "gpstab/gp_model.hpp"

namespace gpstab {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

// Shortest text that round-trips (printf %.17g).
std::string format_double(double v);

void write_csv(std::ostream& os, const CsvTable& table);
void write_csv(const std::filesystem::path& path, const CsvTable& table);
// Throws std::runtime_error on unreadable files, ragged rows or non-numeric cells.
CsvTable read_csv(const std::filesystem::path& path);

// Columns x_1..x_n, f_1..f_n.
CsvTable training_set_table(const TrainingSet& ts);
TrainingSet training_set_from_table(const CsvTable& table);

}  // namespace gpstab
