#include "deepgep/dataset_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <vector>

#include "deepgep/errors.hpp"

namespace deepgep {

namespace fs = std::filesystem;

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw std::runtime_error("format_double failed");
  return std::string(buf, ptr);
}

double parse_double(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\r' || text.back() == '\t'))
    text.remove_suffix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    throw std::invalid_argument("not a number: '" + std::string(text) + "'");
  return v;
}

namespace {

std::vector<std::vector<double>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      row.push_back(parse_double(std::string_view(line).substr(start, comma - start)));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

void write_dataset(const fs::path& dir, const Dataset& data, const NetworkSpec& spec) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "X0.csv");
    for (Eigen::Index i = 0; i < data.X0.rows(); ++i) {
      for (Eigen::Index mu = 0; mu < data.X0.cols(); ++mu) {
        if (mu) out << ',';
        out << format_double(data.X0(i, mu));
      }
      out << '\n';
    }
  }
  {
    std::ofstream out(dir / "Y.csv");
    for (Eigen::Index mu = 0; mu < data.Y.size(); ++mu) out << format_double(data.Y[mu]) << '\n';
  }
  nlohmann::json meta{{"spec", to_json(spec)},
                      {"n", data.n()},
                      {"master_seed", data.seed_record.master_seed},
                      {"streams", data.seed_record.streams}};
  std::ofstream out(dir / "meta.json");
  out << meta.dump(2) << '\n';
}

LoadedDataset read_dataset(const fs::path& dir) {
  std::ifstream meta_in(dir / "meta.json");
  if (!meta_in) throw std::runtime_error("cannot read " + (dir / "meta.json").string());
  nlohmann::json meta;
  meta_in >> meta;

  LoadedDataset out;
  out.spec = spec_from_json(meta.at("spec"));
  const int n = meta.at("n").get<int>();
  out.data.seed_record.master_seed = meta.value("master_seed", std::uint64_t{0});
  out.data.seed_record.streams = meta.value("streams", std::vector<std::string>{});

  const auto x_rows = read_csv(dir / "X0.csv");
  const auto y_rows = read_csv(dir / "Y.csv");
  const int d0 = out.spec.d(0);
  out.data.X0.resize(d0, n);
  out.data.Y.resize(n);
  if (n > 0) {
    if (static_cast<int>(x_rows.size()) != d0) throw std::runtime_error("X0.csv: expected d_0 rows");
    for (int i = 0; i < d0; ++i) {
      if (static_cast<int>(x_rows[static_cast<std::size_t>(i)].size()) != n)
        throw std::runtime_error("X0.csv: column count does not match n");
      for (int mu = 0; mu < n; ++mu) out.data.X0(i, mu) = x_rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(mu)];
    }
  }
  if (static_cast<int>(y_rows.size()) != n) throw std::runtime_error("Y.csv: length does not match n");
  for (int mu = 0; mu < n; ++mu) out.data.Y[mu] = y_rows[static_cast<std::size_t>(mu)].at(0);
  return out;
}

}  // namespace deepgep
