#include "visfit/heatmaps.hpp"

#include <cmath>

namespace visfit {

void PerspectiveCamera::validate() const {
  if (!(focal.x() > 0.0) || !(focal.y() > 0.0))
    throw ValidationError("camera.focal: must be positive, got (" + std::to_string(focal.x()) +
                          ", " + std::to_string(focal.y()) + ")");
  if (image_size.x() <= 0 || image_size.y() <= 0)
    throw ValidationError("camera.image_size: must be positive");
}

void HeatmapGrid::validate() const {
  if (bins < 2) throw ValidationError("grid.bins: must be >= 2, got " + std::to_string(bins));
  if (!(depth_half_range > 0.0))
    throw ValidationError("grid.depth_half_range: must be positive, got " +
                          std::to_string(depth_half_range));
}

Vec2 project(const PerspectiveCamera& camera, const Vec3& point) {
  if (!(point.z() > 1e-6))
    throw NumericalError("project: point behind camera (z=" + std::to_string(point.z()) + ")");
  return {camera.focal.x() * point.x() / point.z() + camera.principal.x(),
          camera.focal.y() * point.y() / point.z() + camera.principal.y()};
}

Coord3 to_grid(const PerspectiveCamera& camera, const HeatmapGrid& grid, const CropBox& crop,
               const Vec3& point, double root_depth) {
  if (!(crop.w > 0.0) || !(crop.h > 0.0))
    throw ValidationError("crop_box: degenerate (w=" + std::to_string(crop.w) +
                          ", h=" + std::to_string(crop.h) + ")");
  const Vec2 px = project(camera, point);
  const double d = static_cast<double>(grid.bins);
  Coord3 out;
  out.x = (px.x() - crop.x) / crop.w * d;
  out.y = (px.y() - crop.y) / crop.h * d;
  out.z = (point.z() - root_depth + grid.depth_half_range) / (2.0 * grid.depth_half_range) * d;
  return out;
}

Vec3 grid_to_camera(const PerspectiveCamera& camera, const HeatmapGrid& grid, const CropBox& crop,
                    const Coord3& coord, double root_depth) {
  const double d = static_cast<double>(grid.bins);
  const double px = coord.x / d * crop.w + crop.x;
  const double py = coord.y / d * crop.h + crop.y;
  const double z = coord.z / d * 2.0 * grid.depth_half_range - grid.depth_half_range + root_depth;
  return {(px - camera.principal.x()) * z / camera.focal.x(),
          (py - camera.principal.y()) * z / camera.focal.y(), z};
}

Mat3 to_grid_jacobian(const PerspectiveCamera& camera, const HeatmapGrid& grid,
                      const CropBox& crop, const Vec3& point) {
  if (!(point.z() > 1e-6))
    throw NumericalError("to_grid_jacobian: point behind camera");
  const double d = static_cast<double>(grid.bins);
  const double sx = d / crop.w;
  const double sy = d / crop.h;
  const double inv_z = 1.0 / point.z();
  Mat3 jac = Mat3::Zero();
  jac(0, 0) = sx * camera.focal.x() * inv_z;
  jac(0, 2) = -sx * camera.focal.x() * point.x() * inv_z * inv_z;
  jac(1, 1) = sy * camera.focal.y() * inv_z;
  jac(1, 2) = -sy * camera.focal.y() * point.y() * inv_z * inv_z;
  jac(2, 2) = d / (2.0 * grid.depth_half_range);
  return jac;
}

VecX encode_axis(double coord, int bins, double sigma) {
  if (!(sigma > 0.0)) throw ValidationError("encode_axis: sigma must be positive");
  VecX h = VecX::Zero(bins);
  const double first = 0.5;
  const double last = bins - 0.5;

  if (coord <= first) {
    h(0) = 1.0;
    return h;
  }
  if (coord >= last) {
    h(bins - 1) = 1.0;
    return h;
  }

  double m0 = 0.0, m1 = 0.0;
  for (int d = 0; d < bins; ++d) {
    const double p = d + 0.5;
    const double z = (p - coord) / sigma;
    h(d) = std::exp(-0.5 * z * z);
    m0 += h(d);
    m1 += h(d) * p;
  }
  const double mean = m1 / m0;
  // Boundary mass restoring the first moment, so expectation decoding is
  // exact for any coordinate within the bin-center span.
  if (mean > coord + 1e-12) {
    h(0) += m0 * (mean - coord) / (coord - first);
  } else if (mean < coord - 1e-12) {
    h(bins - 1) += m0 * (coord - mean) / (last - coord);
  }
  h /= h.sum();
  return h;
}

AxisHeatmaps encode_target(const Coord3& coord, const HeatmapGrid& grid, double sigma) {
  grid.validate();
  return {encode_axis(coord.x, grid.bins, sigma), encode_axis(coord.y, grid.bins, sigma),
          encode_axis(coord.z, grid.bins, sigma)};
}

double soft_argmax(const VecX& heatmap, double temperature) {
  const int bins = static_cast<int>(heatmap.size());
  if (bins == 0) throw ValidationError("soft_argmax: empty heatmap");
  if (!heatmap.allFinite()) throw ValidationError("soft_argmax: non-finite entries");
  if (!(temperature > 0.0)) throw ValidationError("soft_argmax: temperature must be positive");

  const double peak = heatmap.maxCoeff();
  if (!(peak > 0.0)) return bins / 2.0;

  // p_d proportional to (h_d / peak)^(1/T); zero and negative mass stays zero
  double norm = 0.0, acc = 0.0;
  const double inv_t = 1.0 / temperature;
  for (int d = 0; d < bins; ++d) {
    const double v = heatmap(d);
    if (!(v > 0.0)) continue;
    const double p = std::exp(inv_t * std::log(v / peak));
    norm += p;
    acc += p * (d + 0.5);
  }
  return acc / norm;
}

Coord3 soft_argmax3(const AxisHeatmaps& maps, double temperature) {
  return {soft_argmax(maps.hx, temperature), soft_argmax(maps.hy, temperature),
          soft_argmax(maps.hz, temperature)};
}

std::array<bool, 3> decode_visibility(const VisibilityTriplet& scores, double threshold) {
  return {scores.sx >= threshold, scores.sy >= threshold, scores.sz >= threshold};
}

Vec2 raster_pixel_to_grid(const HeatmapGrid& grid, int raster_width, int raster_height, double px,
                          double py) {
  const double d = static_cast<double>(grid.bins);
  return {px / raster_width * d, py / raster_height * d};
}

void FitObservations::validate(int n_joints, int n_vertices) const {
  camera.validate();
  grid.validate();
  if (!(crop.w > 0.0) || !(crop.h > 0.0)) throw ValidationError("crop_box: degenerate");
  auto check = [](const ElementObservations& obs, int n, const char* what) {
    if (obs.coords.rows() != n || obs.visibility.rows() != n)
      throw ValidationError(std::string(what) + ": expected " + std::to_string(n) +
                            " rows, got coords=" + std::to_string(obs.coords.rows()) +
                            " visibility=" + std::to_string(obs.visibility.rows()));
    if (!obs.coords.allFinite()) throw ValidationError(std::string(what) + ".coords: non-finite");
    if ((obs.visibility.array() < -1e-9).any() || (obs.visibility.array() > 1.0 + 1e-9).any())
      throw ValidationError(std::string(what) + ".visibility: outside [0,1]");
  };
  check(joints, n_joints, "joints");
  check(vertices, n_vertices, "vertices");
}

}  // namespace visfit
