#pragma once

#include <filesystem>
#include <string>

#include "deepgep/model.hpp"

namespace deepgep {

/// Writes `dir/X0.csv` (d_0 rows x n columns), `dir/Y.csv` (one value per line)
/// and `dir/meta.json` (spec and seed streams). Numbers use the shortest
/// round-trip decimal form, '.' separator, '\n' line endings.
void write_dataset(const std::filesystem::path& dir, const Dataset& data, const NetworkSpec& spec);

struct LoadedDataset {
  Dataset data;
  NetworkSpec spec;
};

LoadedDataset read_dataset(const std::filesystem::path& dir);

std::string format_double(double v);
double parse_double(std::string_view text);

}  // namespace deepgep
