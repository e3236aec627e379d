#include "visfit/body_model.hpp"

#include <cmath>
#include <numbers>
#include <set>
#include <sstream>
#include <vector>

namespace visfit {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::string shape_str(long rows, long cols) {
  std::ostringstream os;
  os << rows << "x" << cols;
  return os.str();
}

}  // namespace

int BodyModel::n_parts() const {
  return part_labels.size() > 0 ? part_labels.maxCoeff() : 0;
}

double BodyModel::body_height() const {
  if (template_vertices.rows() == 0) return 0.0;
  return template_vertices.col(1).maxCoeff() - template_vertices.col(1).minCoeff();
}

void BodyModel::validate() const {
  const int nv = n_vertices();
  const int nk = n_kin_joints();

  if (nv == 0) throw ValidationError("template_vertices: empty");
  if (nk == 0) throw ValidationError("kin_parents: empty");

  if (kin_regressor.rows() != nk || kin_regressor.cols() != nv)
    throw ValidationError("kin_regressor: expected " + shape_str(nk, nv) +
                          ", got " + shape_str(kin_regressor.rows(), kin_regressor.cols()));
  if (skin_weights.rows() != nv || skin_weights.cols() != nk)
    throw ValidationError("skin_weights: expected " + shape_str(nv, nk) +
                          ", got " + shape_str(skin_weights.rows(), skin_weights.cols()));
  if (joint_regressor_W.cols() != nv)
    throw ValidationError("joint_regressor_W: expected N_J x " + std::to_string(nv) +
                          ", got " + shape_str(joint_regressor_W.rows(), joint_regressor_W.cols()));
  if (part_labels.size() != nv)
    throw ValidationError("part_labels: expected " + std::to_string(nv) +
                          " entries, got " + std::to_string(part_labels.size()));
  if (vertex_uv.rows() != nv)
    throw ValidationError("vertex_uv: expected " + std::to_string(nv) +
                          " rows, got " + std::to_string(vertex_uv.rows()));
  for (const auto& dir : shape_dirs) {
    if (dir.rows() != nv)
      throw ValidationError("shape_dirs: direction with " + std::to_string(dir.rows()) +
                            " rows, expected " + std::to_string(nv));
  }
  if (!pose_dirs.empty()) {
    if (static_cast<int>(pose_dirs.size()) != 9 * (nk - 1))
      throw ValidationError("pose_dirs: expected " + std::to_string(9 * (nk - 1)) +
                            " directions, got " + std::to_string(pose_dirs.size()));
    for (const auto& dir : pose_dirs)
      if (dir.rows() != nv) throw ValidationError("pose_dirs: direction row count mismatch");
  }

  // skin weights: convex rows
  for (int i = 0; i < nv; ++i) {
    double row_sum = 0.0;
    for (int k = 0; k < nk; ++k) {
      const double w = skin_weights(i, k);
      if (w < -1e-12)
        throw ValidationError("skin_weights[" + std::to_string(i) + "][" + std::to_string(k) +
                              "]: negative weight " + std::to_string(w));
      row_sum += w;
    }
    if (std::abs(row_sum - 1.0) > 1e-6)
      throw ValidationError("skin_weights[" + std::to_string(i) + "]: row sums to " +
                            std::to_string(row_sum) + ", expected 1 within 1e-6");
  }

  // joint regressor: convex combination rows
  for (int j = 0; j < joint_regressor_W.rows(); ++j) {
    const double row_sum = joint_regressor_W.row(j).sum();
    if (std::abs(row_sum - 1.0) > 1e-5)
      throw ValidationError("joint_regressor_W[" + std::to_string(j) + "]: row sums to " +
                            std::to_string(row_sum) + ", expected 1 within 1e-5");
  }

  // kinematic tree: exactly one root (index 0), no cycles
  if (kin_parents(0) != -1)
    throw ValidationError("kin_parents[0]: expected root sentinel -1, got " +
                          std::to_string(kin_parents(0)));
  for (int k = 1; k < nk; ++k) {
    const int p = kin_parents(k);
    if (p == -1)
      throw ValidationError("kin_parents[" + std::to_string(k) + "]: second root");
    if (p < 0 || p >= nk)
      throw ValidationError("kin_parents[" + std::to_string(k) + "]: parent " +
                            std::to_string(p) + " out of range");
    if (p >= k)
      throw ValidationError("kin_parents[" + std::to_string(k) + "]: parent " +
                            std::to_string(p) + " not topologically ordered (cycle risk)");
  }

  // faces: valid indices, edge-manifold (every undirected edge in <= 2 faces)
  std::set<std::pair<int, int>> seen_twice;
  std::set<std::pair<int, int>> seen_once;
  for (int f = 0; f < faces.rows(); ++f) {
    for (int e = 0; e < 3; ++e) {
      const int a = faces(f, e);
      const int b = faces(f, (e + 1) % 3);
      if (a < 0 || a >= nv || b < 0 || b >= nv)
        throw ValidationError("faces[" + std::to_string(f) + "]: vertex index out of range");
      if (a == b)
        throw ValidationError("faces[" + std::to_string(f) + "]: repeated vertex " +
                              std::to_string(a));
      const auto key = std::minmax(a, b);
      if (seen_twice.count(key))
        throw ValidationError("faces[" + std::to_string(f) + "]: edge (" + std::to_string(key.first) +
                              "," + std::to_string(key.second) + ") used by more than two faces");
      if (seen_once.count(key)) {
        seen_once.erase(key);
        seen_twice.insert(key);
      } else {
        seen_once.insert(key);
      }
    }
  }

  // part labels and UVs
  for (int i = 0; i < nv; ++i) {
    if (part_labels(i) < 1)
      throw ValidationError("part_labels[" + std::to_string(i) + "]: value " +
                            std::to_string(part_labels(i)) + " below 1");
    if (vertex_uv(i, 0) < -1e-9 || vertex_uv(i, 0) > 1 + 1e-9 || vertex_uv(i, 1) < -1e-9 ||
        vertex_uv(i, 1) > 1 + 1e-9)
      throw ValidationError("vertex_uv[" + std::to_string(i) + "]: outside [0,1]^2");
  }
}

PoseParams PoseParams::zeros(int n_kin_joints) {
  PoseParams p;
  p.theta = MatX3::Zero(n_kin_joints, 3);
  return p;
}

Vec3 canonicalize_axis_angle(const Vec3& axis_angle) {
  const double n = axis_angle.norm();
  if (n < kTwoPi) return axis_angle;
  const double wrapped = std::fmod(n, kTwoPi);
  return axis_angle * (wrapped / n);
}

PoseParams PoseParams::canonicalized() const {
  PoseParams out;
  out.theta = theta;
  for (int k = 0; k < theta.rows(); ++k)
    out.theta.row(k) = canonicalize_axis_angle(theta.row(k)).transpose();
  return out;
}

ShapeParams ShapeParams::zeros(int n_shape) {
  ShapeParams s;
  s.beta = VecX::Zero(n_shape);
  return s;
}

Mat3 rodrigues(const Vec3& axis_angle) {
  const double angle = axis_angle.norm();
  const Mat3 k = skew(axis_angle);
  double a, b;  // R = I + a*K + b*K^2, K unnormalized
  if (angle < 1e-4) {
    const double t2 = angle * angle;
    a = 1.0 - t2 / 6.0;
    b = 0.5 - t2 / 24.0;
  } else {
    a = std::sin(angle) / angle;
    b = (1.0 - std::cos(angle)) / (angle * angle);
  }
  return Mat3::Identity() + a * k + b * (k * k);
}

std::array<Mat3, 3> rodrigues_jacobian(const Vec3& axis_angle) {
  std::array<Mat3, 3> jac;
  const double angle = axis_angle.norm();
  if (angle < 1e-7) {
    for (int i = 0; i < 3; ++i) jac[i] = skew(Vec3::Unit(i));
    return jac;
  }
  // Gallego & Yezzi closed form for the unnormalized axis-angle derivative.
  const Mat3 rot = rodrigues(axis_angle);
  const double n2 = angle * angle;
  for (int i = 0; i < 3; ++i) {
    const Vec3 e = Vec3::Unit(i);
    const Vec3 cross_term = axis_angle.cross((Mat3::Identity() - rot) * e);
    jac[i] = ((axis_angle(i) * skew(axis_angle) + skew(cross_term)) / n2) * rot;
  }
  return jac;
}

LbsCache forward_cached(const BodyModel& model, const PoseParams& pose,
                        const ShapeParams& shape) {
  const int nv = model.n_vertices();
  const int nk = model.n_kin_joints();

  if (pose.theta.rows() != nk)
    throw ValidationError("pose: expected " + std::to_string(nk) + "x3 theta, got " +
                          shape_str(pose.theta.rows(), pose.theta.cols()));
  if (shape.beta.size() != model.n_shape())
    throw ValidationError("shape: expected " + std::to_string(model.n_shape()) +
                          " beta coefficients, got " + std::to_string(shape.beta.size()));

  LbsCache c;
  c.shaped = model.template_vertices;
  for (int b = 0; b < model.n_shape(); ++b) c.shaped += shape.beta(b) * model.shape_dirs[b];

  // Rest joints come from the shape-blended template, before pose blending.
  c.rest_joints = model.kin_regressor * c.shaped;

  c.local_rot.resize(nk);
  c.local_rot_jac.resize(nk);
  for (int k = 0; k < nk; ++k) {
    const Vec3 aa = pose.theta.row(k).transpose();
    c.local_rot[k] = rodrigues(aa);
    c.local_rot_jac[k] = rodrigues_jacobian(aa);
  }

  c.skinned_template = c.shaped;
  if (!model.pose_dirs.empty()) {
    for (int k = 1; k < nk; ++k) {
      const Mat3 delta = c.local_rot[k] - Mat3::Identity();
      for (int m = 0; m < 9; ++m) {
        const double coeff = delta(m / 3, m % 3);
        if (coeff != 0.0) c.skinned_template += coeff * model.pose_dirs[9 * (k - 1) + m];
      }
    }
  }

  c.world_rot.resize(nk);
  c.world_pos.resize(nk);
  c.world_rot[0] = c.local_rot[0];
  c.world_pos[0] = c.rest_joints.row(0).transpose();
  for (int k = 1; k < nk; ++k) {
    const int p = model.kin_parents(k);
    c.world_rot[k] = c.world_rot[p] * c.local_rot[k];
    c.world_pos[k] = c.world_pos[p] +
                     c.world_rot[p] * (c.rest_joints.row(k) - c.rest_joints.row(p)).transpose();
  }

  const Vec3 root = c.world_pos[0];
  c.posed.vertices.resize(nv, 3);
  for (int i = 0; i < nv; ++i) {
    Vec3 v = Vec3::Zero();
    const Vec3 t = c.skinned_template.row(i).transpose();
    for (int k = 0; k < nk; ++k) {
      const double w = model.skin_weights(i, k);
      if (w == 0.0) continue;
      v += w * (c.world_rot[k] * (t - c.rest_joints.row(k).transpose()) + c.world_pos[k]);
    }
    c.posed.vertices.row(i) = (v - root).transpose();
  }

  c.posed.joints_kin.resize(nk, 3);
  for (int k = 0; k < nk; ++k) c.posed.joints_kin.row(k) = (c.world_pos[k] - root).transpose();
  c.posed.joints_out = model.joint_regressor_W * c.posed.vertices;
  return c;
}

PosedBody forward(const BodyModel& model, const PoseParams& pose, const ShapeParams& shape) {
  return forward_cached(model, pose, shape).posed;
}

void lbs_pullback(const BodyModel& model, const LbsCache& cache, const MatX3& vertex_adjoint,
                  MatX3* theta_grad, VecX* beta_grad) {
  const int nv = model.n_vertices();
  const int nk = model.n_kin_joints();
  if (vertex_adjoint.rows() != nv)
    throw ValidationError("vertex_adjoint: expected " + std::to_string(nv) + " rows, got " +
                          std::to_string(vertex_adjoint.rows()));

  // Per-joint accumulators: b_k = sum_i w_ik adj_i,
  // A_k = sum_i w_ik adj_i (t_i - j_k)^T.
  std::vector<Vec3> bk(nk, Vec3::Zero());
  std::vector<Mat3> ak(nk, Mat3::Zero());
  for (int i = 0; i < nv; ++i) {
    const Vec3 adj = vertex_adjoint.row(i).transpose();
    if (adj.isZero(0.0)) continue;
    const Vec3 t = cache.skinned_template.row(i).transpose();
    for (int k = 0; k < nk; ++k) {
      const double w = model.skin_weights(i, k);
      if (w == 0.0) continue;
      bk[k] += w * adj;
      ak[k] += (w * adj) * (t - cache.rest_joints.row(k).transpose()).transpose();
    }
  }

  std::vector<std::vector<int>> children(nk);
  for (int k = 1; k < nk; ++k) children[model.kin_parents(k)].push_back(k);

  if (theta_grad) {
    theta_grad->setZero(nk, 3);
    // u_i = sum_k w_ik Rw_k^T adj_i, needed by the pose-blend hook below.
    MatX3 u;
    if (!model.pose_dirs.empty()) {
      u.setZero(nv, 3);
      for (int i = 0; i < nv; ++i) {
        const Vec3 adj = vertex_adjoint.row(i).transpose();
        if (adj.isZero(0.0)) continue;
        Vec3 ui = Vec3::Zero();
        for (int k = 0; k < nk; ++k) {
          const double w = model.skin_weights(i, k);
          if (w == 0.0) continue;
          ui += w * (cache.world_rot[k].transpose() * adj);
        }
        u.row(i) = ui.transpose();
      }
    }

    // dRw_k, dpw_k propagated over the subtree of each perturbed joint.
    std::vector<Mat3> drw(nk);
    std::vector<Vec3> dpw(nk);
    for (int j = 0; j < nk; ++j) {
      for (int comp = 0; comp < 3; ++comp) {
        const Mat3 local_jac = cache.local_rot_jac[j][comp];
        drw[j] = (j == 0) ? local_jac : Mat3(cache.world_rot[model.kin_parents(j)] * local_jac);
        dpw[j] = Vec3::Zero();
        double acc = ak[j].cwiseProduct(drw[j]).sum();

        // depth-first over descendants; parents precede children in index order
        std::vector<int> stack(children[j].rbegin(), children[j].rend());
        while (!stack.empty()) {
          const int k = stack.back();
          stack.pop_back();
          const int p = model.kin_parents(k);
          drw[k] = drw[p] * cache.local_rot[k];
          dpw[k] = dpw[p] +
                   drw[p] * (cache.rest_joints.row(k) - cache.rest_joints.row(p)).transpose();
          acc += ak[k].cwiseProduct(drw[k]).sum() + bk[k].dot(dpw[k]);
          for (auto it = children[k].rbegin(); it != children[k].rend(); ++it)
            stack.push_back(*it);
        }

        if (!model.pose_dirs.empty() && j >= 1) {
          // skinned template moves with vec(R_j - I)
          for (int m = 0; m < 9; ++m) {
            const double dcoeff = local_jac(m / 3, m % 3);
            if (dcoeff == 0.0) continue;
            acc += dcoeff * u.cwiseProduct(model.pose_dirs[9 * (j - 1) + m]).sum();
          }
        }
        (*theta_grad)(j, comp) += acc;
      }
    }
  }

  if (beta_grad) {
    const int nb = model.n_shape();
    beta_grad->setZero(nb);

    // u_i = sum_k w_ik Rw_k^T adj_i; s = sum_i adj_i
    MatX3 u = MatX3::Zero(nv, 3);
    Vec3 s = Vec3::Zero();
    for (int i = 0; i < nv; ++i) {
      const Vec3 adj = vertex_adjoint.row(i).transpose();
      s += adj;
      if (adj.isZero(0.0)) continue;
      Vec3 ui = Vec3::Zero();
      for (int k = 0; k < nk; ++k) {
        const double w = model.skin_weights(i, k);
        if (w == 0.0) continue;
        ui += w * (cache.world_rot[k].transpose() * adj);
      }
      u.row(i) = ui.transpose();
    }

    std::vector<Vec3> dpw(nk);
    for (int b = 0; b < nb; ++b) {
      const MatX3 dj = model.kin_regressor * model.shape_dirs[b];  // N_K x 3
      dpw[0] = dj.row(0).transpose();
      double acc = u.cwiseProduct(model.shape_dirs[b]).sum();
      acc -= s.dot(dj.row(0).transpose());  // root-relative subtraction
      for (int k = 0; k < nk; ++k) {
        if (k > 0) {
          const int p = model.kin_parents(k);
          dpw[k] = dpw[p] + cache.world_rot[p] * (dj.row(k) - dj.row(p)).transpose();
        }
        acc -= (cache.world_rot[k].transpose() * bk[k]).dot(dj.row(k).transpose());
        acc += bk[k].dot(dpw[k]);
      }
      (*beta_grad)(b) += acc;
    }
  }
}

MatX3 regress_joints(const MatX3& vertices, const MatX& regressor) {
  if (regressor.cols() != vertices.rows())
    throw ValidationError("regress_joints: regressor expects " + std::to_string(regressor.cols()) +
                          " vertices, got " + std::to_string(vertices.rows()));
  return regressor * vertices;
}

}  // namespace visfit
