#include "visfit/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "visfit/rng.hpp"

namespace visfit {

void SyntheticProblemSpec::validate() const {
  if (fraction_occluded < 0.0 || fraction_occluded > 1.0)
    throw ValidationError("synth: fraction_occluded outside [0,1]");
  if (crop_shift_fraction < 0.0 || crop_shift_fraction > 1.0)
    throw ValidationError("synth: crop_shift_fraction outside [0,1]");
  if (!(pose_noise_scale >= 0.0)) throw ValidationError("synth: negative pose_noise_scale");
  if (!(observation_noise >= 0.0)) throw ValidationError("synth: negative observation_noise");
  if (iuv_resolution < 8) throw ValidationError("synth: iuv_resolution too small");
}

GMMPrior make_test_prior(int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  VecX weights(2);
  weights << 0.7, 0.3;
  MatX means(2, dim);
  for (int i = 0; i < 2; ++i)
    for (int d = 0; d < dim; ++d) means(i, d) = 0.25 * normal_unit(rng);
  std::vector<MatX> covs;
  for (int i = 0; i < 2; ++i) {
    MatX a(dim, dim);
    for (int r = 0; r < dim; ++r)
      for (int c = 0; c < dim; ++c) a(r, c) = 0.05 * normal_unit(rng);
    MatX cov = a * a.transpose();
    cov += 0.04 * MatX::Identity(dim, dim);
    covs.push_back(cov);
  }
  return GMMPrior(weights, means, covs);
}

SyntheticProblem make_synthetic_problem(const SyntheticProblemSpec& spec, const BodyModel& model,
                                        const GMMPrior* prior) {
  spec.validate();
  std::mt19937_64 rng(spec.seed * 0x2545f4914f6cdd1dULL + 0x1234abcdULL);

  const int nk = model.n_kin_joints();
  const int nv = model.n_vertices();
  const int nj = model.n_out_joints();

  // ground-truth parameters
  MatX3 theta = MatX3::Zero(nk, 3);
  if (prior && prior->dim() == 3 * (nk - 1)) {
    const double pick = uniform_unit(rng);
    Eigen::Index comp = 0;
    double cum = 0.0;
    for (int i = 0; i < prior->n_components(); ++i) {
      cum += prior->weights()(i);
      if (pick <= cum) {
        comp = i;
        break;
      }
    }
    const Eigen::LLT<MatX> llt(prior->covariances()[comp]);
    VecX z(prior->dim());
    for (int d = 0; d < prior->dim(); ++d) z(d) = normal_unit(rng);
    const VecX sample = prior->means().row(comp).transpose() + MatX(llt.matrixL()) * z;
    for (int k = 1; k < nk; ++k)
      for (int c = 0; c < 3; ++c)
        theta(k, c) = std::clamp(sample(3 * (k - 1) + c) * spec.pose_noise_scale / 0.3, -0.8, 0.8);
  } else {
    for (int k = 1; k < nk; ++k)
      for (int c = 0; c < 3; ++c)
        theta(k, c) = std::clamp(spec.pose_noise_scale * normal_unit(rng), -0.8, 0.8);
  }
  // mild global rotation about the vertical axis
  theta.row(0) = Vec3(0.05 * normal_unit(rng), 0.4 * normal_unit(rng), 0.05 * normal_unit(rng))
                     .transpose();

  VecX beta(model.n_shape());
  for (int b = 0; b < model.n_shape(); ++b) beta(b) = std::clamp(0.7 * normal_unit(rng), -2.0, 2.0);

  PoseParams pose;
  pose.theta = theta;
  ShapeParams shape;
  shape.beta = beta;
  const PosedBody posed = forward(model, pose, shape);

  const Vec3 translation(uniform_range(rng, -0.1, 0.1), uniform_range(rng, -0.1, 0.1),
                         uniform_range(rng, 3.5, 4.5));

  PerspectiveCamera camera;  // defaults: f=500, 512^2 image, centered principal

  // crop: square box around the projected body plus margin, optionally shifted
  MatX3 vertices_cam = posed.vertices.rowwise() + translation.transpose();
  double px_min = 1e30, px_max = -1e30, py_min = 1e30, py_max = -1e30;
  for (int i = 0; i < nv; ++i) {
    const Vec2 px = project(camera, vertices_cam.row(i).transpose());
    px_min = std::min(px_min, px.x());
    px_max = std::max(px_max, px.x());
    py_min = std::min(py_min, px.y());
    py_max = std::max(py_max, px.y());
  }
  const double side = 1.2 * std::max(px_max - px_min, py_max - py_min);
  CropBox crop;
  crop.w = side;
  crop.h = side;
  crop.x = 0.5 * (px_min + px_max) - 0.5 * side;
  crop.y = 0.5 * (py_min + py_max) - 0.5 * side;
  if (spec.crop_shift_fraction > 0.0) {
    crop.x += side * spec.crop_shift_fraction * (2.0 * uniform_unit(rng) - 1.0);
    crop.y += side * spec.crop_shift_fraction * (2.0 * uniform_unit(rng) - 1.0);
  }

  HeatmapGrid grid;

  SyntheticProblem out;
  out.gt_theta = theta;
  out.gt_beta = beta;
  out.gt_translation = translation;
  out.gt_posed = posed;

  // dense UV map and the true pseudo-labels it implies
  out.iuv = synth_iuv(vertices_cam, model.faces, model, camera, crop, spec.iuv_resolution);
  const Correspondence corr = pixel_to_vertex(out.iuv, model);
  out.true_vertex_sz = occlusion_labels_from_uv(corr, nv);
  out.true_joint_sz = joint_occlusion_labels(model, out.true_vertex_sz);

  // exact observations in grid units
  const double root_depth = translation.z();
  auto observe = [&](const MatX3& rows_rr) {
    MatX3 coords(rows_rr.rows(), 3);
    for (int i = 0; i < rows_rr.rows(); ++i) {
      const Vec3 cam = rows_rr.row(i).transpose() + translation;
      const Coord3 g = to_grid(camera, grid, crop, cam, root_depth);
      coords.row(i) << g.x, g.y, g.z;
    }
    return coords;
  };
  out.obs.joints.coords = observe(posed.joints_out);
  out.obs.vertices.coords = observe(posed.vertices);
  out.obs.joints.visibility = MatX3::Ones(nj, 3);
  out.obs.vertices.visibility = MatX3::Ones(nv, 3);
  out.obs.camera = camera;
  out.obs.crop = crop;
  out.obs.grid = grid;
  out.obs.root_depth = root_depth;

  if (spec.observation_noise > 0.0) {
    for (int i = 0; i < nj; ++i)
      for (int c = 0; c < 3; ++c)
        out.obs.joints.coords(i, c) += spec.observation_noise * normal_unit(rng);
    for (int i = 0; i < nv; ++i)
      for (int c = 0; c < 3; ++c)
        out.obs.vertices.coords(i, c) += spec.observation_noise * normal_unit(rng);
  }

  // corruption protocol: the occluded share of vertices loses its whole
  // visibility triplet and its observations turn to loud garbage
  const int n_corrupt = static_cast<int>(std::floor(spec.fraction_occluded * nv));
  if (n_corrupt > 0) {
    std::vector<int> order(nv);
    std::iota(order.begin(), order.end(), 0);
    for (int i = nv - 1; i > 0; --i) {
      const int j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
      std::swap(order[i], order[j]);
    }
    const double d = static_cast<double>(grid.bins);
    for (int q = 0; q < n_corrupt; ++q) {
      const int vid = order[q];
      out.obs.vertices.visibility.row(vid).setZero();
      for (int c = 0; c < 3; ++c)
        out.obs.vertices.coords(vid, c) += uniform_range(rng, -d, d);
    }
  }
  return out;
}

}  // namespace visfit
