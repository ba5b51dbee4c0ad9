#include "bartr/heatmap.hpp"

#include <cstdio>
#include <fstream>
#include <numbers>

#include "bartr/error.hpp"
#include "bartr/stats.hpp"

namespace bartr {

std::vector<double> grid_heights(const WorkspaceSpec& spec) {
  spec.validate();
  std::vector<double> out;
  for (int k = 0; k < kGridHeights; ++k) out.push_back(spec.z_min + (spec.z_max - spec.z_min) * k / (kGridHeights - 1));
  return out;
}

std::vector<HeatmapSlice> heatmap_grid(const Field& field, const WorkspaceSpec& spec, int resolution,
                                       std::span<const double> heights) {
  spec.validate();
  if (resolution < 2) throw ValidationError("heatmap resolution must be >= 2, got " + std::to_string(resolution));
  if (heights.empty()) throw ValidationError("heatmap needs at least one height");
  std::vector<HeatmapSlice> out;
  for (double z : heights) {
    if (z < spec.z_min || z > spec.z_max) throw ValidationError("heatmap height " + std::to_string(z) + " is outside the workspace");
    HeatmapSlice s;
    s.height = z;
    for (int i = 0; i < resolution; ++i) {
      s.radii.push_back(spec.r_min + (spec.r_max - spec.r_min) * i / (resolution - 1));
      s.azimuths.push_back(std::numbers::pi * i / (resolution - 1));
    }
    std::vector<Point3> xs;
    xs.reserve(static_cast<std::size_t>(resolution) * resolution);
    for (double r : s.radii)
      for (double a : s.azimuths) xs.push_back(from_cylindrical(r, a, z));
    const Eigen::VectorXd v = field(xs);
    if (v.size() != static_cast<Eigen::Index>(xs.size())) throw NumericError("heatmap field returned the wrong size");
    s.values = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        v.data(), resolution, resolution);
    out.push_back(std::move(s));
  }
  return out;
}

std::string format_heatmap_csv(const HeatmapSlice& slice) {
  std::string out = "radius\\azimuth";
  char buf[64];
  for (double a : slice.azimuths) {
    std::snprintf(buf, sizeof buf, ",%.6f", a);
    out += buf;
  }
  out += '\n';
  for (std::size_t i = 0; i < slice.radii.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.6f", slice.radii[i]);
    out += buf;
    for (std::size_t j = 0; j < slice.azimuths.size(); ++j) {
      std::snprintf(buf, sizeof buf, ",%.6f", slice.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
      out += buf;
    }
    out += '\n';
  }
  return out;
}

namespace {

double cell(const std::string& s, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IngestError("heatmap cell '" + s + "' is not a number", line);
  }
}

}  // namespace

HeatmapSlice parse_heatmap_csv(std::istream& in, double height) {
  const auto t = parse_csv(in);
  if (t.header.size() < 3 || t.header[0] != "radius\\azimuth")
    throw IngestError("heatmap header must start with radius\\azimuth and list at least 2 azimuths", 1);
  if (t.rows.size() < 2) throw IngestError("heatmap needs at least 2 radius rows", 1);
  HeatmapSlice s;
  s.height = height;
  for (std::size_t j = 1; j < t.header.size(); ++j) s.azimuths.push_back(cell(t.header[j], 1));
  s.values.resize(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(s.azimuths.size()));
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    s.radii.push_back(cell(t.rows[i][0], t.lines[i]));
    for (std::size_t j = 1; j < t.rows[i].size(); ++j)
      s.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j - 1)) = cell(t.rows[i][j], t.lines[i]);
  }
  return s;
}

std::vector<std::filesystem::path> export_heatmap(const Field& field, const WorkspaceSpec& spec, int resolution,
                                                  std::span<const double> heights, const std::filesystem::path& dir,
                                                  const std::string& stem) {
  const auto slices = heatmap_grid(field, spec, resolution, heights);
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> paths;
  for (const auto& s : slices) {
    char name[96];
    std::snprintf(name, sizeof name, "_z%.2f.csv", s.height);
    const auto path = dir / (stem + name);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << format_heatmap_csv(s);
    paths.push_back(path);
  }
  return paths;
}

}  // namespace bartr
