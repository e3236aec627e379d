#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "visfit/body_model.hpp"
#include "visfit/heatmaps.hpp"

namespace visfit {

/// Dense per-pixel body-part and chart-coordinate map over the crop.
/// part 0 means background (u = v = 0 there).
struct DenseUVMap {
  int width = 0;
  int height = 0;
  std::vector<int> part;  // row-major, y * width + x
  std::vector<double> u;
  std::vector<double> v;

  int index(int x, int y) const { return y * width + x; }
  void validate() const;
};

/// Mutually consistent pixel-to-vertex and vertex-to-pixel maps over the
/// human pixels of one dense UV map. Pixels are keyed row-major.
struct Correspondence {
  int width = 0;
  int height = 0;
  std::map<int, int> pixel_to_vertex;
  std::vector<std::vector<int>> vertex_to_pixel;  // ascending pixel order
};

/// Per-element in-frame labels: column 0 is sx (0 <= x < D), column 1 is sy.
Eigen::Matrix<int, Eigen::Dynamic, 2> truncation_labels(const MatX3& coords_grid, int bins);

struct Raster {
  int width = 0;
  int height = 0;
  MatX depth;              // camera-space depth of the nearest surface
  Eigen::MatrixXi face_id;  // -1 where uncovered

  bool covered(int x, int y) const { return face_id(y, x) >= 0; }
};

/// Z-buffer rasterization of the mesh projected into the crop at the given
/// square resolution. Affine barycentric depth; at equal depth (within 1e-9)
/// the lower face id wins. Screen-degenerate triangles are skipped.
Raster rasterize_zbuffer(const MatX3& vertices_cam, const FaceMatrix& faces,
                         const PerspectiveCamera& camera, const CropBox& crop, int resolution);

/// A vertex is depth-visible iff some covered pixel's winning face contains
/// it and the vertex depth is within eps_z of the buffer depth there.
/// eps_z = 1e-4 x the scene depth range.
std::vector<std::uint8_t> occlusion_labels_from_raster(const MatX3& vertices_cam,
                                                       const FaceMatrix& faces,
                                                       const Raster& raster);

/// Nearest-UV correspondence within each part chart: every human pixel maps
/// to the same-part vertex minimizing the UV distance, ties to the lowest
/// vertex id. Throws when the map references a part the model lacks.
Correspondence pixel_to_vertex(const DenseUVMap& iuv, const BodyModel& model);

/// sz(v) = 1 iff at least one pixel maps to v.
std::vector<std::uint8_t> occlusion_labels_from_uv(const Correspondence& corr, int n_vertices);

/// Renders a synthetic dense UV map from the posed mesh: per covered pixel,
/// the winning face's part and barycentrically interpolated chart UV.
/// Faces straddling parts take the majority part and the UV of the nearest
/// same-part corner.
DenseUVMap synth_iuv(const MatX3& vertices_cam, const FaceMatrix& faces, const BodyModel& model,
                     const PerspectiveCamera& camera, const CropBox& crop, int resolution);

/// Joint-level depth visibility: a joint is visible iff at least `fraction`
/// of the vertices that assign it maximal skinning weight are visible.
std::vector<std::uint8_t> joint_occlusion_labels(const BodyModel& model,
                                                 const std::vector<std::uint8_t>& vertex_sz,
                                                 double fraction = 0.2);

}  // namespace visfit
