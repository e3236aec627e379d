#pragma once

#include <array>
#include <vector>

#include "visfit/types.hpp"

namespace visfit {

/// Parametric articulated body: a template mesh deformed by linear shape
/// blendshapes, posed by axis-angle rotations over a kinematic tree, and
/// skinned with convex per-vertex weights. Immutable after construction;
/// all posing operations are pure functions over it.
struct BodyModel {
  MatX3 template_vertices;           // N_V x 3, meters, rest pose
  std::vector<MatX3> shape_dirs;     // N_beta entries, each N_V x 3
  FaceMatrix faces;                  // N_F x 3, CCW winding
  Eigen::VectorXi kin_parents;       // N_K, parent index, root sentinel -1
  MatX kin_regressor;                // N_K x N_V, rest joints from vertices
  MatX skin_weights;                 // N_V x N_K, convex rows
  MatX joint_regressor_W;            // N_J x N_V, output joints from vertices
  Eigen::VectorXi part_labels;       // N_V, values in [1, n_parts]
  MatX2 vertex_uv;                   // N_V x 2, (u,v) in [0,1]^2 per part chart
  std::vector<MatX3> pose_dirs;      // optional pose blendshapes, 9*(N_K-1)
                                     // entries when present, else empty

  int n_vertices() const { return static_cast<int>(template_vertices.rows()); }
  int n_faces() const { return static_cast<int>(faces.rows()); }
  int n_kin_joints() const { return static_cast<int>(kin_parents.size()); }
  int n_out_joints() const { return static_cast<int>(joint_regressor_W.rows()); }
  int n_shape() const { return static_cast<int>(shape_dirs.size()); }
  int n_parts() const;

  /// Checks every structural invariant; throws ValidationError with a
  /// field-qualified message on the first violation.
  void validate() const;

  /// Height of the rest template (vertical bounding-box extent), meters.
  double body_height() const;
};

struct PoseParams {
  MatX3 theta;  // N_K x 3 axis-angle, radians

  static PoseParams zeros(int n_kin_joints);
  /// Wraps every joint's axis-angle norm into [0, 2*pi), preserving the
  /// rotation. Applied when poses enter from external input.
  PoseParams canonicalized() const;
};

struct ShapeParams {
  VecX beta;  // N_beta PCA coefficients

  static ShapeParams zeros(int n_shape);
};

struct PosedBody {
  MatX3 vertices;    // N_V x 3, root-relative meters
  MatX3 joints_kin;  // N_K x 3, root-relative meters
  MatX3 joints_out;  // N_J x 3, root-relative meters
};

/// Axis-angle to rotation matrix. Zero vector maps to identity; any finite
/// input yields an orthonormal matrix with determinant +1.
Mat3 rodrigues(const Vec3& axis_angle);

/// Derivative of rodrigues(v) with respect to each component of v.
std::array<Mat3, 3> rodrigues_jacobian(const Vec3& axis_angle);

Vec3 canonicalize_axis_angle(const Vec3& axis_angle);

/// Intermediate state of one forward pass, retained so gradients of
/// downstream losses can be pulled back through the skinning chain.
struct LbsCache {
  MatX3 shaped;              // shape-blended template (pre pose blend)
  MatX3 skinned_template;    // template fed to skinning (incl. pose blend)
  MatX3 rest_joints;         // N_K x 3
  std::vector<Mat3> local_rot;               // N_K
  std::vector<std::array<Mat3, 3>> local_rot_jac;  // N_K
  std::vector<Mat3> world_rot;               // N_K
  std::vector<Vec3> world_pos;               // N_K
  PosedBody posed;
};

LbsCache forward_cached(const BodyModel& model, const PoseParams& pose,
                        const ShapeParams& shape);

/// Shape-blend, pose, and skin the model. Output is root-relative (the root
/// kinematic joint sits at the origin).
PosedBody forward(const BodyModel& model, const PoseParams& pose,
                  const ShapeParams& shape);

/// Reverse accumulation through skinning: given dL/d(root-relative vertices),
/// accumulates dL/dtheta and dL/dbeta. Pass null to skip either output.
void lbs_pullback(const BodyModel& model, const LbsCache& cache,
                  const MatX3& vertex_adjoint, MatX3* theta_grad,
                  VecX* beta_grad);

/// W * V, the predefined convex regression from vertices to output joints.
MatX3 regress_joints(const MatX3& vertices, const MatX& regressor);

}  // namespace visfit
