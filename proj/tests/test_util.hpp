#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "visfit/body_model.hpp"
#include "visfit/rng.hpp"
#include "visfit/types.hpp"

namespace testutil {

using visfit::FaceMatrix;
using visfit::Mat3;
using visfit::MatX;
using visfit::MatX3;
using visfit::Vec3;
using visfit::VecX;

// --- independent oracles -----------------------------------------------

// Rotation matrix via quaternion composition, an algebraic route disjoint
// from the Rodrigues series.
inline Mat3 quaternion_rotation(const Vec3& axis_angle) {
  const double angle = axis_angle.norm();
  double w, x, y, z;
  if (angle < 1e-12) {
    w = 1.0;
    x = y = z = 0.0;
  } else {
    const Vec3 axis = axis_angle / angle;
    w = std::cos(angle / 2.0);
    x = std::sin(angle / 2.0) * axis.x();
    y = std::sin(angle / 2.0) * axis.y();
    z = std::sin(angle / 2.0) * axis.z();
  }
  Mat3 rot;
  rot << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return rot;
}

// Naive linear-blend-skinning oracle: explicit per-joint 4x4 transforms,
// one vertex at a time, no batching and no shared state with the library.
inline MatX3 naive_lbs(const visfit::BodyModel& model, const MatX3& theta, const VecX& beta) {
  const int nv = model.n_vertices();
  const int nk = model.n_kin_joints();

  MatX3 shaped = model.template_vertices;
  for (int b = 0; b < model.n_shape(); ++b) shaped += beta(b) * model.shape_dirs[b];
  const MatX3 rest_joints = model.kin_regressor * shaped;

  std::vector<Eigen::Matrix4d> world(nk);
  for (int k = 0; k < nk; ++k) {
    Eigen::Matrix4d local = Eigen::Matrix4d::Identity();
    local.topLeftCorner<3, 3>() = quaternion_rotation(theta.row(k).transpose());
    if (k == 0) {
      local.topRightCorner<3, 1>() = rest_joints.row(0).transpose();
      world[k] = local;
    } else {
      const int p = model.kin_parents(k);
      local.topRightCorner<3, 1>() = (rest_joints.row(k) - rest_joints.row(p)).transpose();
      world[k] = world[p] * local;
    }
  }

  const Vec3 root = world[0].topRightCorner<3, 1>();
  MatX3 out(nv, 3);
  for (int i = 0; i < nv; ++i) {
    Eigen::Vector4d acc = Eigen::Vector4d::Zero();
    for (int k = 0; k < nk; ++k) {
      const double w = model.skin_weights(i, k);
      if (w == 0.0) continue;
      Eigen::Matrix4d skin = world[k];
      // fold in the inverse rest translation of joint k
      skin.topRightCorner<3, 1>() -=
          skin.topLeftCorner<3, 3>() * rest_joints.row(k).transpose();
      Eigen::Vector4d hom;
      hom << shaped.row(i).transpose(), 1.0;
      acc += w * (skin * hom);
    }
    out.row(i) = (acc.head<3>() - root).transpose();
  }
  return out;
}

// Plain double-loop matrix product.
inline MatX3 naive_matmul(const MatX& w, const MatX3& v) {
  MatX3 out = MatX3::Zero(w.rows(), 3);
  for (int j = 0; j < w.rows(); ++j)
    for (int i = 0; i < w.cols(); ++i)
      for (int c = 0; c < 3; ++c) out(j, c) += w(j, i) * v(i, c);
  return out;
}

// --- finite differences -------------------------------------------------

struct FdReport {
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
  bool ok = true;
  std::string detail;
};

// Central finite differences against an analytic gradient, h = 1e-5,
// tolerances rtol 1e-3 / atol 1e-6 per the gradient contract.
inline FdReport check_gradient(const std::function<double(const VecX&)>& f, const VecX& x,
                               const VecX& analytic, double h = 1e-5, double rtol = 1e-3,
                               double atol = 1e-6) {
  FdReport report;
  VecX probe = x;
  for (int i = 0; i < x.size(); ++i) {
    probe(i) = x(i) + h;
    const double up = f(probe);
    probe(i) = x(i) - h;
    const double down = f(probe);
    probe(i) = x(i);
    const double fd = (up - down) / (2.0 * h);
    const double err = std::abs(analytic(i) - fd);
    const double tol = atol + rtol * std::abs(fd);
    report.max_abs_err = std::max(report.max_abs_err, err);
    if (std::abs(fd) > 1e-12)
      report.max_rel_err = std::max(report.max_rel_err, err / std::abs(fd));
    if (err > tol) {
      report.ok = false;
      std::ostringstream os;
      os << "component " << i << ": analytic " << analytic(i) << " vs fd " << fd << " (err "
         << err << ", tol " << tol << ")";
      report.detail = os.str();
      return report;
    }
  }
  return report;
}

inline VecX flatten_rows(const MatX3& m) {
  VecX v(m.size());
  for (int i = 0; i < m.rows(); ++i) v.segment<3>(3 * i) = m.row(i).transpose();
  return v;
}

inline MatX3 unflatten_rows(const VecX& v) {
  MatX3 m(v.size() / 3, 3);
  for (int i = 0; i < m.rows(); ++i) m.row(i) = v.segment<3>(3 * i).transpose();
  return m;
}

// --- misc helpers --------------------------------------------------------

inline MatX3 random_points(std::mt19937_64& rng, int n, double scale) {
  MatX3 m(n, 3);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) m(i, c) = scale * visfit::normal_unit(rng);
  return m;
}

// Minimal OBJ reader used as the round-trip reference.
inline std::pair<MatX3, FaceMatrix> read_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_obj: cannot open " + path);
  std::vector<Vec3> verts;
  std::vector<Eigen::Vector3i> faces;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream is(line);
    std::string tag;
    is >> tag;
    if (tag == "v") {
      Vec3 v;
      is >> v.x() >> v.y() >> v.z();
      verts.push_back(v);
    } else if (tag == "f") {
      Eigen::Vector3i f;
      is >> f.x() >> f.y() >> f.z();
      faces.push_back(f - Eigen::Vector3i::Ones());
    }
  }
  MatX3 v(static_cast<long>(verts.size()), 3);
  for (size_t i = 0; i < verts.size(); ++i) v.row(static_cast<long>(i)) = verts[i].transpose();
  FaceMatrix f(static_cast<long>(faces.size()), 3);
  for (size_t i = 0; i < faces.size(); ++i) f.row(static_cast<long>(i)) = faces[i].transpose();
  return {v, f};
}

}  // namespace testutil
