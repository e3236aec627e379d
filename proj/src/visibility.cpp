#include "visfit/visibility.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace visfit {

void DenseUVMap::validate() const {
  if (width <= 0 || height <= 0)
    throw ValidationError("iuv: non-positive dimensions " + std::to_string(width) + "x" +
                          std::to_string(height));
  const size_t n = static_cast<size_t>(width) * height;
  if (part.size() != n || u.size() != n || v.size() != n)
    throw ValidationError("iuv: channel sizes disagree with " + std::to_string(width) + "x" +
                          std::to_string(height));
  for (size_t i = 0; i < n; ++i) {
    if (part[i] < 0) throw ValidationError("iuv: negative part id at pixel " + std::to_string(i));
    if (part[i] == 0 && (u[i] != 0.0 || v[i] != 0.0))
      throw ValidationError("iuv: background pixel " + std::to_string(i) + " has nonzero UV");
    if (u[i] < -1e-9 || u[i] > 1 + 1e-9 || v[i] < -1e-9 || v[i] > 1 + 1e-9)
      throw ValidationError("iuv: UV outside [0,1] at pixel " + std::to_string(i));
  }
}

Eigen::Matrix<int, Eigen::Dynamic, 2> truncation_labels(const MatX3& coords_grid, int bins) {
  Eigen::Matrix<int, Eigen::Dynamic, 2> labels(coords_grid.rows(), 2);
  const double d = static_cast<double>(bins);
  for (int i = 0; i < coords_grid.rows(); ++i) {
    labels(i, 0) = (coords_grid(i, 0) >= 0.0 && coords_grid(i, 0) < d) ? 1 : 0;
    labels(i, 1) = (coords_grid(i, 1) >= 0.0 && coords_grid(i, 1) < d) ? 1 : 0;
  }
  return labels;
}

namespace {

struct ScreenVertex {
  double x, y, z;
};

// Projects every vertex into raster coordinates of the crop.
std::vector<ScreenVertex> project_to_raster(const MatX3& vertices_cam,
                                            const PerspectiveCamera& camera, const CropBox& crop,
                                            int resolution) {
  if (resolution <= 0) throw ValidationError("rasterize: non-positive resolution");
  if (!(crop.w > 0.0) || !(crop.h > 0.0)) throw ValidationError("rasterize: degenerate crop box");
  std::vector<ScreenVertex> out(vertices_cam.rows());
  for (int i = 0; i < vertices_cam.rows(); ++i) {
    const Vec3 p = vertices_cam.row(i).transpose();
    if (!(p.z() > 1e-6))
      throw NumericalError("rasterize: vertex " + std::to_string(i) + " behind camera");
    const Vec2 px = project(camera, p);
    out[i] = {(px.x() - crop.x) / crop.w * resolution, (px.y() - crop.y) / crop.h * resolution,
              p.z()};
  }
  return out;
}

struct Bary {
  double l0, l1, l2;
  bool inside;
};

Bary barycentric(const ScreenVertex& a, const ScreenVertex& b, const ScreenVertex& c, double px,
                 double py, double area) {
  const double w0 = ((b.x - px) * (c.y - py) - (c.x - px) * (b.y - py)) / area;
  const double w1 = ((c.x - px) * (a.y - py) - (a.x - px) * (c.y - py)) / area;
  const double w2 = 1.0 - w0 - w1;
  return {w0, w1, w2, w0 >= 0.0 && w1 >= 0.0 && w2 >= 0.0};
}

double signed_area(const ScreenVertex& a, const ScreenVertex& b, const ScreenVertex& c) {
  return (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
}

}  // namespace

Raster rasterize_zbuffer(const MatX3& vertices_cam, const FaceMatrix& faces,
                         const PerspectiveCamera& camera, const CropBox& crop, int resolution) {
  const auto screen = project_to_raster(vertices_cam, camera, crop, resolution);

  Raster raster;
  raster.width = resolution;
  raster.height = resolution;
  raster.depth = MatX::Constant(resolution, resolution, std::numeric_limits<double>::infinity());
  raster.face_id = Eigen::MatrixXi::Constant(resolution, resolution, -1);

  for (int f = 0; f < faces.rows(); ++f) {
    const ScreenVertex& a = screen[faces(f, 0)];
    const ScreenVertex& b = screen[faces(f, 1)];
    const ScreenVertex& c = screen[faces(f, 2)];
    const double area = signed_area(a, b, c);
    if (std::abs(area) < 1e-12) continue;  // degenerate in screen space

    const int x_lo = std::max(0, static_cast<int>(std::floor(std::min({a.x, b.x, c.x}) - 0.5)));
    const int x_hi =
        std::min(resolution - 1, static_cast<int>(std::ceil(std::max({a.x, b.x, c.x}) + 0.5)));
    const int y_lo = std::max(0, static_cast<int>(std::floor(std::min({a.y, b.y, c.y}) - 0.5)));
    const int y_hi =
        std::min(resolution - 1, static_cast<int>(std::ceil(std::max({a.y, b.y, c.y}) + 0.5)));

    for (int y = y_lo; y <= y_hi; ++y) {
      for (int x = x_lo; x <= x_hi; ++x) {
        const Bary bc = barycentric(a, b, c, x + 0.5, y + 0.5, area);
        if (!bc.inside) continue;
        const double z = bc.l0 * a.z + bc.l1 * b.z + bc.l2 * c.z;
        // strict improvement beyond the tie band keeps the lower face id
        if (z < raster.depth(y, x) - 1e-9) {
          raster.depth(y, x) = z;
          raster.face_id(y, x) = f;
        }
      }
    }
  }
  return raster;
}

std::vector<std::uint8_t> occlusion_labels_from_raster(const MatX3& vertices_cam,
                                                       const FaceMatrix& faces,
                                                       const Raster& raster) {
  const int nv = static_cast<int>(vertices_cam.rows());
  std::vector<std::uint8_t> visible(nv, 0);
  const double z_min = vertices_cam.col(2).minCoeff();
  const double z_max = vertices_cam.col(2).maxCoeff();
  const double eps_z = std::max(1e-4 * (z_max - z_min), 1e-9);

  for (int y = 0; y < raster.height; ++y) {
    for (int x = 0; x < raster.width; ++x) {
      const int f = raster.face_id(y, x);
      if (f < 0) continue;
      const double buffer_depth = raster.depth(y, x);
      for (int e = 0; e < 3; ++e) {
        const int vid = faces(f, e);
        if (vertices_cam(vid, 2) <= buffer_depth + eps_z) visible[vid] = 1;
      }
    }
  }
  return visible;
}

Correspondence pixel_to_vertex(const DenseUVMap& iuv, const BodyModel& model) {
  iuv.validate();
  const int nv = model.n_vertices();

  // vertex ids bucketed by part, ascending within each bucket
  std::vector<std::vector<int>> by_part(model.n_parts() + 1);
  for (int i = 0; i < nv; ++i) by_part[model.part_labels(i)].push_back(i);

  Correspondence corr;
  corr.width = iuv.width;
  corr.height = iuv.height;
  corr.vertex_to_pixel.resize(nv);

  const int n_pixels = iuv.width * iuv.height;
  for (int p = 0; p < n_pixels; ++p) {
    const int part = iuv.part[p];
    if (part == 0) continue;
    if (part >= static_cast<int>(by_part.size()) || by_part[part].empty())
      throw ValidationError("iuv: part " + std::to_string(part) +
                            " not present in model part_labels");
    int best = -1;
    double best_dist = std::numeric_limits<double>::infinity();
    for (const int vid : by_part[part]) {
      const double du = model.vertex_uv(vid, 0) - iuv.u[p];
      const double dv = model.vertex_uv(vid, 1) - iuv.v[p];
      const double dist = du * du + dv * dv;
      if (dist < best_dist) {
        best_dist = dist;
        best = vid;
      }
    }
    corr.pixel_to_vertex.emplace(p, best);
    corr.vertex_to_pixel[best].push_back(p);
  }
  return corr;
}

std::vector<std::uint8_t> occlusion_labels_from_uv(const Correspondence& corr, int n_vertices) {
  if (static_cast<int>(corr.vertex_to_pixel.size()) != n_vertices)
    throw ValidationError("correspondence: vertex count " +
                          std::to_string(corr.vertex_to_pixel.size()) + ", expected " +
                          std::to_string(n_vertices));
  std::vector<std::uint8_t> sz(n_vertices, 0);
  for (int v = 0; v < n_vertices; ++v) sz[v] = corr.vertex_to_pixel[v].empty() ? 0 : 1;
  return sz;
}

DenseUVMap synth_iuv(const MatX3& vertices_cam, const FaceMatrix& faces, const BodyModel& model,
                     const PerspectiveCamera& camera, const CropBox& crop, int resolution) {
  const Raster raster = rasterize_zbuffer(vertices_cam, faces, camera, crop, resolution);
  const auto screen = project_to_raster(vertices_cam, camera, crop, resolution);

  DenseUVMap iuv;
  iuv.width = resolution;
  iuv.height = resolution;
  iuv.part.assign(static_cast<size_t>(resolution) * resolution, 0);
  iuv.u.assign(static_cast<size_t>(resolution) * resolution, 0.0);
  iuv.v.assign(static_cast<size_t>(resolution) * resolution, 0.0);

  for (int y = 0; y < resolution; ++y) {
    for (int x = 0; x < resolution; ++x) {
      const int f = raster.face_id(y, x);
      if (f < 0) continue;
      const int i0 = faces(f, 0), i1 = faces(f, 1), i2 = faces(f, 2);
      const int p0 = model.part_labels(i0), p1 = model.part_labels(i1),
                p2 = model.part_labels(i2);
      const int idx = iuv.index(x, y);

      if (p0 == p1 && p1 == p2) {
        const double area = signed_area(screen[i0], screen[i1], screen[i2]);
        const Bary bc = barycentric(screen[i0], screen[i1], screen[i2], x + 0.5, y + 0.5, area);
        iuv.part[idx] = p0;
        iuv.u[idx] = std::clamp(bc.l0 * model.vertex_uv(i0, 0) + bc.l1 * model.vertex_uv(i1, 0) +
                                    bc.l2 * model.vertex_uv(i2, 0),
                                0.0, 1.0);
        iuv.v[idx] = std::clamp(bc.l0 * model.vertex_uv(i0, 1) + bc.l1 * model.vertex_uv(i1, 1) +
                                    bc.l2 * model.vertex_uv(i2, 1),
                                0.0, 1.0);
      } else {
        // straddling face: majority part (ties to the smaller id), UV of the
        // nearest same-part corner in screen space
        int majority = std::min({p0, p1, p2});
        if (p0 == p1 || p0 == p2) majority = p0;
        else if (p1 == p2) majority = p1;
        int best = -1;
        double best_dist = std::numeric_limits<double>::infinity();
        for (int e = 0; e < 3; ++e) {
          const int vid = faces(f, e);
          if (model.part_labels(vid) != majority) continue;
          const double dx = screen[vid].x - (x + 0.5);
          const double dy = screen[vid].y - (y + 0.5);
          const double dist = dx * dx + dy * dy;
          if (dist < best_dist) {
            best_dist = dist;
            best = vid;
          }
        }
        iuv.part[idx] = majority;
        iuv.u[idx] = model.vertex_uv(best, 0);
        iuv.v[idx] = model.vertex_uv(best, 1);
      }
    }
  }
  return iuv;
}

std::vector<std::uint8_t> joint_occlusion_labels(const BodyModel& model,
                                                 const std::vector<std::uint8_t>& vertex_sz,
                                                 double fraction) {
  const int nk = model.n_kin_joints();
  if (static_cast<int>(vertex_sz.size()) != model.n_vertices())
    throw ValidationError("joint_occlusion_labels: vertex label count mismatch");
  std::vector<int> total(nk, 0), seen(nk, 0);
  for (int i = 0; i < model.n_vertices(); ++i) {
    Eigen::Index owner = 0;
    model.skin_weights.row(i).maxCoeff(&owner);
    total[owner] += 1;
    seen[owner] += vertex_sz[i];
  }
  std::vector<std::uint8_t> sz(nk, 0);
  for (int k = 0; k < nk; ++k)
    sz[k] = (total[k] > 0 && seen[k] >= fraction * total[k]) ? 1 : 0;
  return sz;
}

}  // namespace visfit
