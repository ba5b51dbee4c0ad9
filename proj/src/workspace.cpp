#include "bartr/workspace.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "bartr/error.hpp"
#include "bartr/random.hpp"

namespace bartr {

double distance(const Point3& a, const Point3& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  const double dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

double dot(const Point3& a, const Point3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

double norm(const Point3& p) { return std::sqrt(dot(p, p)); }

double radius_of(const Point3& p) { return std::hypot(p.x, p.y); }

double azimuth_of(const Point3& p) { return std::atan2(p.y, -p.x); }

Point3 quantize(const Point3& p) {
  // + 0.0 folds negative zero so serialized output never shows "-0.00".
  auto q = [](double v) { return std::round(v * 100.0) / 100.0 + 0.0; };
  return {q(p.x), q(p.y), q(p.z)};
}

Point3 from_cylindrical(double radius, double azimuth, double height) {
  return {-radius * std::cos(azimuth), radius * std::sin(azimuth), height};
}

void WorkspaceSpec::validate() const {
  auto finite = [](double v) { return std::isfinite(v); };
  if (!finite(r_min) || !finite(r_max) || !finite(z_min) || !finite(z_max)) {
    throw ValidationError("workspace bounds must be finite");
  }
  if (!(r_min > 0.0)) {
    throw ValidationError("workspace r_min must be > 0 (got " + std::to_string(r_min) + ")");
  }
  if (!(r_min < r_max)) {
    throw ValidationError("workspace r_min must be < r_max (got r_min=" + std::to_string(r_min) +
                          ", r_max=" + std::to_string(r_max) + ")");
  }
  if (!(z_min < z_max)) {
    throw ValidationError("workspace z_min must be < z_max (got z_min=" + std::to_string(z_min) +
                          ", z_max=" + std::to_string(z_max) + ")");
  }
}

std::vector<Point3> generate_grid(const WorkspaceSpec& spec) {
  spec.validate();
  std::vector<Point3> grid;
  grid.reserve(kGridSize);
  for (int i = 0; i < kGridRadii; ++i) {
    const double r = spec.r_min + (spec.r_max - spec.r_min) * i / (kGridRadii - 1);
    for (int j = 0; j < kGridAzimuths; ++j) {
      const double phi = std::numbers::pi * j / (kGridAzimuths - 1);
      for (int k = 0; k < kGridHeights; ++k) {
        const double z = spec.z_min + (spec.z_max - spec.z_min) * k / (kGridHeights - 1);
        grid.push_back(quantize(from_cylindrical(r, phi, z)));
      }
    }
  }
  return grid;
}

std::vector<Point3> sample_uniform(const WorkspaceSpec& spec, std::size_t n, std::uint64_t seed) {
  spec.validate();
  if (n == 0) throw ValidationError("sample_uniform: sample count must be >= 1");
  Rng rng(seed);
  const double r2_min = spec.r_min * spec.r_min;
  const double r2_max = spec.r_max * spec.r_max;
  std::vector<Point3> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    // Radial density proportional to r.
    const double r = std::sqrt(r2_min + rng.uniform() * (r2_max - r2_min));
    const double phi = std::numbers::pi * rng.uniform();
    const double z = rng.uniform(spec.z_min, spec.z_max);
    out.push_back(from_cylindrical(r, phi, z));
  }
  return out;
}

bool contains(const WorkspaceSpec& spec, const Point3& p) {
  if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) return false;
  const double r = radius_of(p);
  const double tol = kMembershipTolerance;
  return r >= spec.r_min - tol && r <= spec.r_max + tol && p.y >= -tol && p.z >= spec.z_min - tol &&
         p.z <= spec.z_max + tol;
}

}  // namespace bartr
