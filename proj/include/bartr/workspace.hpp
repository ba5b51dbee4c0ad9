#pragma once

#include <cstdint>
#include <vector>

namespace bartr {

/// Location in the reaching workspace, in centimeters relative to the home
/// position center: x lateral (positive right), y anterior, z height above the table.
struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const Point3&, const Point3&) = default;
};

double distance(const Point3& a, const Point3& b);
double dot(const Point3& a, const Point3& b);
double norm(const Point3& p);
/// Planar distance from the home center.
double radius_of(const Point3& p);
/// Azimuth in radians, 0 at the participant's left, pi at the right.
double azimuth_of(const Point3& p);

/// Rounds each coordinate to the 0.01 cm serialization resolution.
Point3 quantize(const Point3& p);
/// Point from cylindrical coordinates (azimuth 0 = left, pi = right).
Point3 from_cylindrical(double radius, double azimuth, double height);

/// Annular half-cylinder in front of the participant.
struct WorkspaceSpec {
  double r_min = 10.0;
  double r_max = 30.0;
  double z_min = 0.0;
  double z_max = 40.0;

  /// Throws ValidationError naming the violated bound.
  void validate() const;
  friend bool operator==(const WorkspaceSpec&, const WorkspaceSpec&) = default;
};

// Grid layout: 5 radii x 5 azimuths x 4 heights.
inline constexpr int kGridRadii = 5;
inline constexpr int kGridAzimuths = 5;
inline constexpr int kGridHeights = 4;
inline constexpr int kGridSize = kGridRadii * kGridAzimuths * kGridHeights;

/// Membership slack, equal to the serialization resolution of coordinates.
inline constexpr double kMembershipTolerance = 0.01;

/// The 100 evenly spaced target locations, ordered radius-major, then azimuth,
/// then height. Coordinates are quantized to 0.01 cm.
std::vector<Point3> generate_grid(const WorkspaceSpec& spec);

/// Volume-uniform i.i.d. samples over the workspace.
std::vector<Point3> sample_uniform(const WorkspaceSpec& spec, std::size_t n, std::uint64_t seed);

bool contains(const WorkspaceSpec& spec, const Point3& p);

}  // namespace bartr
