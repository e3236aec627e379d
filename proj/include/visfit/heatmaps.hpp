#pragma once

#include <array>
#include <optional>

#include "visfit/types.hpp"

namespace visfit {

struct PerspectiveCamera {
  Vec2 focal = {500.0, 500.0};      // pixels
  Vec2 principal = {256.0, 256.0};  // pixels
  Eigen::Vector2i image_size = {512, 512};

  void validate() const;
};

/// Human bounding box in source-image pixels; the heatmap grid spans it.
struct CropBox {
  double x = 0.0;
  double y = 0.0;
  double w = 256.0;
  double h = 256.0;
};

struct HeatmapGrid {
  int bins = 64;                  // D
  double depth_half_range = 1.0;  // meters mapped to half the z axis

  void validate() const;
};

/// Continuous grid coordinates: x, y in [0, D) when inside the crop,
/// z in [0, D) when within the root-relative depth window. Values outside
/// those ranges are meaningful (truncation) and never clamped.
struct Coord3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

struct AxisHeatmaps {
  VecX hx, hy, hz;
};

/// Per-element visibility scores in [0,1]: sx/sy = inside frame along that
/// axis, sz = not occluded in depth.
struct VisibilityTriplet {
  double sx = 1.0;
  double sy = 1.0;
  double sz = 1.0;
};

/// Pinhole projection of a camera-space point (meters) to image pixels.
/// Throws NumericalError for points at or behind the camera plane.
Vec2 project(const PerspectiveCamera& camera, const Vec3& point);

/// Affine map of a camera-space point into grid coordinates: image pixels
/// to [0, D) across the crop box, root-relative depth to [0, D) across
/// [-depth_half_range, +depth_half_range] around root_depth.
Coord3 to_grid(const PerspectiveCamera& camera, const HeatmapGrid& grid, const CropBox& crop,
               const Vec3& point, double root_depth);

/// Inverse of to_grid.
Vec3 grid_to_camera(const PerspectiveCamera& camera, const HeatmapGrid& grid, const CropBox& crop,
                    const Coord3& coord, double root_depth);

/// d(grid x,y,z) / d(camera point). The z row is the depth affine alone;
/// root_depth is held fixed.
Mat3 to_grid_jacobian(const PerspectiveCamera& camera, const HeatmapGrid& grid,
                      const CropBox& crop, const Vec3& point);

/// One axis of a supervision target: a Gaussian over bin centers d+0.5 with
/// a first-moment-preserving boundary term, renormalized to sum 1, so that
/// expectation decoding recovers the coordinate exactly anywhere inside the
/// bin-center span. Coordinates beyond the span collapse to the boundary bin.
VecX encode_axis(double coord, int bins, double sigma);

AxisHeatmaps encode_target(const Coord3& coord, const HeatmapGrid& grid, double sigma);

/// Expectation of bin centers under the temperature-sharpened heatmap
/// (softmax over log-scores scaled by 1/temperature, i.e. p_d proportional
/// to h_d^(1/T)). T=1 reduces to plain normalization. A heatmap with no
/// positive mass, or all-equal entries, decodes to D/2.
double soft_argmax(const VecX& heatmap, double temperature);

Coord3 soft_argmax3(const AxisHeatmaps& maps, double temperature);

std::array<bool, 3> decode_visibility(const VisibilityTriplet& scores, double threshold);

/// Crop-raster pixel center to grid coordinates (x, y only).
Vec2 raster_pixel_to_grid(const HeatmapGrid& grid, int raster_width, int raster_height, double px,
                          double py);

/// Per-element observed coordinates (grid units) and visibility triplets.
struct ElementObservations {
  MatX3 coords;      // N x 3
  MatX3 visibility;  // N x 3 in [0,1]
};

/// The observation bundle a fitter consumes: what a heatmap+visibility
/// network would emit for one crop, plus the camera geometry to interpret it.
struct FitObservations {
  ElementObservations joints;
  ElementObservations vertices;
  PerspectiveCamera camera;
  CropBox crop;
  HeatmapGrid grid;
  std::optional<double> root_depth;

  void validate(int n_joints, int n_vertices) const;
};

}  // namespace visfit
