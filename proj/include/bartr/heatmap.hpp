#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <istream>
#include <span>
#include <string>
#include <vector>

#include "bartr/nonuse.hpp"
#include "bartr/workspace.hpp"

namespace bartr {

/// Field values on an azimuth x radius lattice at one height.
struct HeatmapSlice {
  double height = 0.0;
  std::vector<double> radii;     // cm, rows
  std::vector<double> azimuths;  // rad, columns; 0 = left
  Eigen::MatrixXd values;        // radii x azimuths
};

/// The grid's target heights.
std::vector<double> grid_heights(const WorkspaceSpec& spec);

/// Evaluates `field` on `resolution` radii x `resolution` azimuths, edges
/// included, at each height. Throws ValidationError for resolution < 2.
std::vector<HeatmapSlice> heatmap_grid(const Field& field, const WorkspaceSpec& spec, int resolution,
                                       std::span<const double> heights);

/// Header row "radius\azimuth" then the azimuths; one row per radius.
std::string format_heatmap_csv(const HeatmapSlice& slice);
HeatmapSlice parse_heatmap_csv(std::istream& in, double height);

/// Writes one "<stem>_z<height>.csv" per slice and returns the paths in height order.
std::vector<std::filesystem::path> export_heatmap(const Field& field, const WorkspaceSpec& spec, int resolution,
                                                  std::span<const double> heights, const std::filesystem::path& dir,
                                                  const std::string& stem);

}  // namespace bartr
