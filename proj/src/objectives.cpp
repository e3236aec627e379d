#include "visfit/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>

namespace visfit {

namespace {

constexpr double kWeightFloor = 1e-12;
constexpr double kBceClamp = 1e-7;

double sign_of(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

void LossWeights::validate() const {
  for (const double w : {joint, vert, r_joint, norm, edge, vis, depth, uv, smpl, smpl_vert,
                         smpl_joint, prior}) {
    if (!(w >= 0.0) || !std::isfinite(w))
      throw ValidationError("loss weights: must be finite and non-negative");
  }
}

GMMPrior::GMMPrior(VecX weights, MatX means, std::vector<MatX> covariances)
    : weights_(std::move(weights)), means_(std::move(means)), covariances_(std::move(covariances)) {
  const int k = static_cast<int>(weights_.size());
  if (k == 0) throw ValidationError("prior: no components");
  if (means_.rows() != k || static_cast<int>(covariances_.size()) != k)
    throw ValidationError("prior: component count mismatch (weights " + std::to_string(k) +
                          ", means " + std::to_string(means_.rows()) + ", covariances " +
                          std::to_string(covariances_.size()) + ")");
  if (std::abs(weights_.sum() - 1.0) > 1e-9)
    throw ValidationError("prior: weights sum to " + std::to_string(weights_.sum()) +
                          ", expected 1 within 1e-9");
  const int d = dim();
  cholesky_.resize(k);
  log_norm_.resize(k);
  for (int i = 0; i < k; ++i) {
    if (!(weights_(i) > 0.0))
      throw ValidationError("prior: component " + std::to_string(i) + " has non-positive weight");
    if (covariances_[i].rows() != d || covariances_[i].cols() != d)
      throw ValidationError("prior: covariance " + std::to_string(i) + " has wrong shape");
    if (!covariances_[i].isApprox(covariances_[i].transpose(), 1e-9))
      throw ValidationError("prior: covariance " + std::to_string(i) + " not symmetric");
    cholesky_[i].compute(covariances_[i]);
    if (cholesky_[i].info() != Eigen::Success)
      throw ValidationError("prior: covariance " + std::to_string(i) +
                            " not positive definite (Cholesky failed)");
    double log_det = 0.0;
    const auto& l = cholesky_[i].matrixL();
    for (int r = 0; r < d; ++r) log_det += 2.0 * std::log(l(r, r));
    log_norm_(i) = std::log(weights_(i)) -
                   0.5 * (d * std::log(2.0 * std::numbers::pi) + log_det);
  }
}

double GMMPrior::nll(const VecX& theta_body, VecX* grad) const {
  if (theta_body.size() != dim())
    throw ValidationError("prior: theta dimension " + std::to_string(theta_body.size()) +
                          ", expected " + std::to_string(dim()));
  const int k = n_components();
  VecX log_terms(k);
  MatX whitened_grads(k, dim());  // Sigma^-1 (theta - mu) per component
  for (int i = 0; i < k; ++i) {
    const VecX diff = theta_body - means_.row(i).transpose();
    const VecX solved = cholesky_[i].solve(diff);
    log_terms(i) = log_norm_(i) - 0.5 * diff.dot(solved);
    whitened_grads.row(i) = solved.transpose();
  }
  const double m = log_terms.maxCoeff();
  const double lse = m + std::log((log_terms.array() - m).exp().sum());
  if (grad) {
    const VecX resp = (log_terms.array() - lse).exp();
    *grad = whitened_grads.transpose() * resp;
  }
  return -lse;
}

double l1_coord_loss(const MatX3& pred, const MatX3& target, const MatX3* weights,
                     MatX3* grad_pred, bool* all_zero_weights) {
  if (pred.rows() != target.rows())
    throw ValidationError("l1_coord_loss: pred " + std::to_string(pred.rows()) + " rows, target " +
                          std::to_string(target.rows()));
  if (weights && weights->rows() != pred.rows())
    throw ValidationError("l1_coord_loss: weights row count mismatch");
  if (all_zero_weights) *all_zero_weights = false;
  if (grad_pred) grad_pred->setZero(pred.rows(), 3);
  if (pred.rows() == 0) return 0.0;

  double denom;
  if (weights) {
    denom = weights->sum();
    if (denom <= kWeightFloor) {
      if (all_zero_weights) *all_zero_weights = true;
      return 0.0;
    }
  } else {
    denom = static_cast<double>(pred.size());
  }

  double acc = 0.0;
  for (int i = 0; i < pred.rows(); ++i) {
    for (int c = 0; c < 3; ++c) {
      const double w = weights ? (*weights)(i, c) : 1.0;
      if (w == 0.0) continue;
      const double diff = pred(i, c) - target(i, c);
      acc += w * std::abs(diff);
      if (grad_pred) (*grad_pred)(i, c) = w * sign_of(diff) / denom;
    }
  }
  return acc / denom;
}

double regressed_joint_loss(const MatX3& vertices, const MatX& regressor, const MatX3& j_target,
                            MatX3* grad_vertices) {
  const MatX3 regressed = regress_joints(vertices, regressor);
  MatX3 grad_joints;
  const double loss =
      l1_coord_loss(regressed, j_target, nullptr, grad_vertices ? &grad_joints : nullptr);
  if (grad_vertices) *grad_vertices = regressor.transpose() * grad_joints;
  return loss;
}

double normal_loss(const MatX3& vertices, const FaceMatrix& faces, const MatX3& target_normals,
                   MatX3* grad_vertices, bool* degenerate_flag) {
  if (target_normals.rows() != faces.rows())
    throw ValidationError("normal_loss: one target normal per face required");
  if (grad_vertices) grad_vertices->setZero(vertices.rows(), 3);
  if (degenerate_flag) *degenerate_flag = false;

  double acc = 0.0;
  for (int f = 0; f < faces.rows(); ++f) {
    const Vec3 n = target_normals.row(f).transpose();
    for (int e = 0; e < 3; ++e) {
      const int i = faces(f, e);
      const int j = faces(f, (e + 1) % 3);
      const Vec3 u = (vertices.row(i) - vertices.row(j)).transpose();
      const double len = u.norm();
      if (len < 1e-9) {
        if (degenerate_flag) *degenerate_flag = true;
        continue;
      }
      const double proj = u.dot(n) / len;
      acc += std::abs(proj);
      if (grad_vertices) {
        const Vec3 d_du = (n - (u.dot(n) / (len * len)) * u) / len;
        const Vec3 g = sign_of(proj) * d_du;
        grad_vertices->row(i) += g.transpose();
        grad_vertices->row(j) -= g.transpose();
      }
    }
  }
  return acc;
}

double edge_loss(const MatX3& vertices, const MatX3& target_vertices, const FaceMatrix& faces,
                 MatX3* grad_vertices) {
  if (vertices.rows() != target_vertices.rows())
    throw ValidationError("edge_loss: vertex count mismatch");
  if (grad_vertices) grad_vertices->setZero(vertices.rows(), 3);

  double acc = 0.0;
  for (int f = 0; f < faces.rows(); ++f) {
    for (int e = 0; e < 3; ++e) {
      const int i = faces(f, e);
      const int j = faces(f, (e + 1) % 3);
      const Vec3 u = (vertices.row(i) - vertices.row(j)).transpose();
      const double len = u.norm();
      const double target_len = (target_vertices.row(i) - target_vertices.row(j)).norm();
      const double diff = len - target_len;
      acc += std::abs(diff);
      if (grad_vertices && len > 1e-12) {
        const Vec3 g = sign_of(diff) * (u / len);
        grad_vertices->row(i) += g.transpose();
        grad_vertices->row(j) -= g.transpose();
      }
    }
  }
  return acc;
}

double visibility_bce(const MatX3& pred, const MatX3& target, MatX3* grad_pred) {
  if (pred.rows() != target.rows()) throw ValidationError("visibility_bce: row count mismatch");
  if (grad_pred) grad_pred->setZero(pred.rows(), 3);
  if (pred.size() == 0) return 0.0;

  const double count = static_cast<double>(pred.size());
  double acc = 0.0;
  for (int i = 0; i < pred.rows(); ++i) {
    for (int c = 0; c < 3; ++c) {
      const double p = std::clamp(pred(i, c), kBceClamp, 1.0 - kBceClamp);
      const double t = target(i, c);
      acc += -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
      if (grad_pred) {
        const bool clamped = pred(i, c) < kBceClamp || pred(i, c) > 1.0 - kBceClamp;
        (*grad_pred)(i, c) = clamped ? 0.0 : (-t / p + (1.0 - t) / (1.0 - p)) / count;
      }
    }
  }
  return acc / count;
}

double depth_ordering_loss(const MatX3& coords_grid, const VecX& sz,
                           const Eigen::VectorXi& part_labels, int bins, MatX3* grad_coords) {
  const int n = static_cast<int>(coords_grid.rows());
  if (sz.size() != n || part_labels.size() != n)
    throw ValidationError("depth_ordering_loss: input sizes disagree");
  if (grad_coords) grad_coords->setZero(n, 3);

  // bucket vertices by discrete pixel, row-major key, ascending vertex id
  std::map<long, std::vector<int>> pixels;
  for (int i = 0; i < n; ++i) {
    const double x = coords_grid(i, 0);
    const double y = coords_grid(i, 1);
    if (x < 0.0 || x >= bins || y < 0.0 || y >= bins) continue;
    const long key = static_cast<long>(std::floor(y)) * bins + static_cast<long>(std::floor(x));
    pixels[key].push_back(i);
  }

  double acc = 0.0;
  for (const auto& [key, verts] : pixels) {
    (void)key;
    if (verts.size() < 2) continue;

    // front part: part of the highest-sz vertex (first max wins)
    int front_vertex = verts[0];
    for (const int v : verts)
      if (sz(v) > sz(front_vertex)) front_vertex = v;
    const int front_part = part_labels(front_vertex);

    double front_max = -std::numeric_limits<double>::infinity();
    double back_min = std::numeric_limits<double>::infinity();
    int front_arg = -1, back_arg = -1;
    for (const int v : verts) {
      if (part_labels(v) == front_part) {
        if (coords_grid(v, 2) > front_max) {
          front_max = coords_grid(v, 2);
          front_arg = v;
        }
      } else if (coords_grid(v, 2) < back_min) {
        back_min = coords_grid(v, 2);
        back_arg = v;
      }
    }
    if (back_arg < 0) continue;  // single part at this pixel

    const double violation = front_max - back_min;
    if (violation > 0.0) {
      acc += violation;
      if (grad_coords) {
        (*grad_coords)(front_arg, 2) += 1.0;
        (*grad_coords)(back_arg, 2) -= 1.0;
      }
    }
  }
  return acc;
}

double uv_correspondence_loss(const MatX3& coords_grid, const VecX& sz, const Correspondence& corr,
                              const HeatmapGrid& grid, MatX3* grad_coords) {
  const int n = static_cast<int>(coords_grid.rows());
  if (sz.size() != n) throw ValidationError("uv_correspondence_loss: sz size mismatch");
  if (static_cast<int>(corr.vertex_to_pixel.size()) != n)
    throw ValidationError("uv_correspondence_loss: correspondence vertex count mismatch");
  if (grad_coords) grad_coords->setZero(n, 3);

  double acc = 0.0;
  for (int v = 0; v < n; ++v) {
    const auto& mapped = corr.vertex_to_pixel[v];
    if (mapped.empty() || sz(v) == 0.0) continue;
    Vec2 centroid = Vec2::Zero();
    for (const int p : mapped) {
      const int px = p % corr.width;
      const int py = p / corr.width;
      centroid += raster_pixel_to_grid(grid, corr.width, corr.height, px + 0.5, py + 0.5);
    }
    centroid /= static_cast<double>(mapped.size());
    for (int c = 0; c < 2; ++c) {
      const double diff = coords_grid(v, c) - centroid(c);
      acc += sz(v) * std::abs(diff);
      if (grad_coords) (*grad_coords)(v, c) = sz(v) * sign_of(diff);
    }
  }
  return acc;
}

double smpl_param_loss(const MatX3& theta, const VecX& beta, const MatX3& theta_target,
                       const VecX& beta_target, MatX3* grad_theta, VecX* grad_beta) {
  if (theta.rows() != theta_target.rows() || beta.size() != beta_target.size())
    throw ValidationError("smpl_param_loss: parameter shape mismatch");
  double acc = 0.0;
  if (grad_theta) grad_theta->setZero(theta.rows(), 3);
  if (grad_beta) grad_beta->setZero(beta.size());
  for (int k = 0; k < theta.rows(); ++k)
    for (int c = 0; c < 3; ++c) {
      const double diff = theta(k, c) - theta_target(k, c);
      acc += std::abs(diff);
      if (grad_theta) (*grad_theta)(k, c) = sign_of(diff);
    }
  for (int b = 0; b < beta.size(); ++b) {
    const double diff = beta(b) - beta_target(b);
    acc += std::abs(diff);
    if (grad_beta) (*grad_beta)(b) = sign_of(diff);
  }
  return acc;
}

double gmm_nll(const VecX& theta_body, const GMMPrior& prior, VecX* grad) {
  return prior.nll(theta_body, grad);
}

double total_fit_objective(const BodyModel& model, const PoseParams& pose,
                           const ShapeParams& shape, const Vec3& translation,
                           const FitObservations& obs, const LossWeights& weights,
                           const GMMPrior* prior, FitTermBreakdown* breakdown,
                           FitObjectiveGrads* grads, bool override_visibility_with_ones) {
  weights.validate();
  const int nv = model.n_vertices();
  const int nj = model.n_out_joints();
  obs.validate(nj, nv);

  const LbsCache cache = forward_cached(model, pose, shape);
  // The optimized translation supplies the live root depth, so the model's
  // z-grid coordinates stay root-relative exactly like the observations.
  const double root_depth = translation.z();

  FitTermBreakdown bd;

  // grid coordinates of the posed elements
  auto to_grid_rows = [&](const MatX3& rows_rr) {
    MatX3 out(rows_rr.rows(), 3);
    for (int i = 0; i < rows_rr.rows(); ++i) {
      const Vec3 cam = rows_rr.row(i).transpose() + translation;
      const Coord3 g = to_grid(obs.camera, obs.grid, obs.crop, cam, root_depth);
      out.row(i) << g.x, g.y, g.z;
    }
    return out;
  };
  const MatX3 vert_grid = to_grid_rows(cache.posed.vertices);
  const MatX3 joint_grid = to_grid_rows(cache.posed.joints_out);

  const MatX3 ones_v = MatX3::Ones(nv, 3);
  const MatX3 ones_j = MatX3::Ones(nj, 3);
  const MatX3& wv = override_visibility_with_ones ? ones_v : obs.vertices.visibility;
  const MatX3& wj = override_visibility_with_ones ? ones_j : obs.joints.visibility;

  MatX3 grad_vert_grid, grad_joint_grid;
  bd.smpl_vert = l1_coord_loss(vert_grid, obs.vertices.coords, &wv,
                               grads ? &grad_vert_grid : nullptr, &bd.vert_weights_all_zero);
  bd.smpl_joint = l1_coord_loss(joint_grid, obs.joints.coords, &wj,
                                grads ? &grad_joint_grid : nullptr, &bd.joint_weights_all_zero);

  // prior over the body pose, root rotation excluded
  VecX theta_body;
  VecX grad_prior_body;
  if (prior && weights.prior > 0.0) {
    const int nk = model.n_kin_joints();
    theta_body.resize(3 * (nk - 1));
    for (int k = 1; k < nk; ++k) theta_body.segment<3>(3 * (k - 1)) = pose.theta.row(k).transpose();
    bd.prior = prior->nll(theta_body, grads ? &grad_prior_body : nullptr);
  }

  // optional shape regularizer: posed edges vs shape-blended template edges
  MatX3 grad_edge_posed;
  VecX grad_edge_beta;
  if (weights.edge > 0.0) {
    MatX3* gp = grads ? &grad_edge_posed : nullptr;
    bd.edge = edge_loss(cache.posed.vertices, cache.shaped, model.faces, gp);
    if (grads) {
      // target edge lengths also move with beta through the shape dirs
      grad_edge_beta.setZero(model.n_shape());
      for (int f = 0; f < model.faces.rows(); ++f) {
        for (int e = 0; e < 3; ++e) {
          const int i = model.faces(f, e);
          const int j = model.faces(f, (e + 1) % 3);
          const Vec3 u = (cache.posed.vertices.row(i) - cache.posed.vertices.row(j)).transpose();
          const Vec3 ut = (cache.shaped.row(i) - cache.shaped.row(j)).transpose();
          const double len = u.norm();
          const double target_len = ut.norm();
          if (target_len < 1e-12) continue;
          const double s = (len - target_len) > 0.0 ? 1.0 : ((len - target_len) < 0.0 ? -1.0 : 0.0);
          const Vec3 ut_hat = ut / target_len;
          for (int b = 0; b < model.n_shape(); ++b) {
            const Vec3 dt =
                (model.shape_dirs[b].row(i) - model.shape_dirs[b].row(j)).transpose();
            grad_edge_beta(b) += -s * ut_hat.dot(dt);
          }
        }
      }
    }
  }

  bd.total = weights.smpl_vert * bd.smpl_vert + weights.smpl_joint * bd.smpl_joint +
             weights.prior * bd.prior + weights.edge * bd.edge;
  if (breakdown) *breakdown = bd;

  if (grads) {
    // pull grid-space gradients back to root-relative coordinates and t
    MatX3 vert_adjoint = MatX3::Zero(nv, 3);
    Vec3 t_grad = Vec3::Zero();

    auto accumulate = [&](const MatX3& rows_rr, const MatX3& grad_grid, double weight,
                          MatX3* adjoint_rows) {
      for (int i = 0; i < rows_rr.rows(); ++i) {
        const Vec3 g = weight * grad_grid.row(i).transpose();
        if (g.isZero(0.0)) continue;
        const Vec3 cam = rows_rr.row(i).transpose() + translation;
        const Mat3 jac = to_grid_jacobian(obs.camera, obs.grid, obs.crop, cam);
        adjoint_rows->row(i) += (jac.transpose() * g).transpose();
        // z-grid is root-relative, so only the projection rows reach t
        Vec3 g_xy = g;
        g_xy.z() = 0.0;
        t_grad += jac.transpose() * g_xy;
      }
    };

    MatX3 joint_adjoint = MatX3::Zero(nj, 3);
    accumulate(cache.posed.vertices, grad_vert_grid, weights.smpl_vert, &vert_adjoint);
    accumulate(cache.posed.joints_out, grad_joint_grid, weights.smpl_joint, &joint_adjoint);
    vert_adjoint += model.joint_regressor_W.transpose() * joint_adjoint;

    if (weights.edge > 0.0) vert_adjoint += weights.edge * grad_edge_posed;

    grads->theta.setZero(model.n_kin_joints(), 3);
    grads->beta.setZero(model.n_shape());
    lbs_pullback(model, cache, vert_adjoint, &grads->theta, &grads->beta);
    grads->translation = t_grad;

    if (prior && weights.prior > 0.0) {
      for (int k = 1; k < model.n_kin_joints(); ++k)
        grads->theta.row(k) += weights.prior * grad_prior_body.segment<3>(3 * (k - 1)).transpose();
    }
    if (weights.edge > 0.0) grads->beta += weights.edge * grad_edge_beta;
  }

  if (!std::isfinite(bd.total)) {
    std::string term = "total";
    if (!std::isfinite(bd.smpl_vert)) term = "smpl_vert";
    else if (!std::isfinite(bd.smpl_joint)) term = "smpl_joint";
    else if (!std::isfinite(bd.prior)) term = "prior";
    else if (!std::isfinite(bd.edge)) term = "edge";
    throw NumericalError("fit objective: non-finite term '" + term + "'");
  }
  return bd.total;
}

}  // namespace visfit
