#pragma once

#include <optional>
#include <vector>

#include "visfit/body_model.hpp"
#include "visfit/heatmaps.hpp"
#include "visfit/visibility.hpp"

namespace visfit {

/// One non-negative multiplier per loss term.
struct LossWeights {
  double joint = 1.0;
  double vert = 1.0;
  double r_joint = 1.0;
  double norm = 0.1;
  double edge = 0.1;
  double vis = 1.0;
  double depth = 0.1;
  double uv = 1.0;
  double smpl = 1.0;
  double smpl_vert = 1.0;
  double smpl_joint = 1.0;
  double prior = 1e-3;

  void validate() const;
};

/// Gaussian mixture over body pose (root rotation excluded), loaded from
/// file. Covariances are factored once; evaluation is log-sum-exp stable.
class GMMPrior {
 public:
  GMMPrior() = default;
  GMMPrior(VecX weights, MatX means, std::vector<MatX> covariances);

  int n_components() const { return static_cast<int>(weights_.size()); }
  int dim() const { return static_cast<int>(means_.cols()); }
  const VecX& weights() const { return weights_; }
  const MatX& means() const { return means_; }
  const std::vector<MatX>& covariances() const { return covariances_; }

  /// -log sum_k w_k N(theta; mu_k, Sigma_k); optional gradient wrt theta.
  double nll(const VecX& theta_body, VecX* grad = nullptr) const;

 private:
  VecX weights_;
  MatX means_;                 // K x dim
  std::vector<MatX> covariances_;
  std::vector<Eigen::LLT<MatX>> cholesky_;
  VecX log_norm_;              // log w_k - 0.5 log det(2 pi Sigma_k)
};

/// Weighted mean absolute difference. Without weights this is the plain mean
/// over all N*3 entries; with weights it is sum(w |d|) / max(sum w, eps).
/// All-zero weights return 0 and set the optional flag.
double l1_coord_loss(const MatX3& pred, const MatX3& target, const MatX3* weights = nullptr,
                     MatX3* grad_pred = nullptr, bool* all_zero_weights = nullptr);

double regressed_joint_loss(const MatX3& vertices, const MatX& regressor, const MatX3& j_target,
                            MatX3* grad_vertices = nullptr);

/// Sum over faces and their three edges of |<normalized edge, target normal>|.
/// Edges shorter than 1e-9 contribute zero and raise the degenerate flag.
double normal_loss(const MatX3& vertices, const FaceMatrix& faces, const MatX3& target_normals,
                   MatX3* grad_vertices = nullptr, bool* degenerate_flag = nullptr);

/// Sum over faces and edges of | |edge| - |target edge| |.
double edge_loss(const MatX3& vertices, const MatX3& target_vertices, const FaceMatrix& faces,
                 MatX3* grad_vertices = nullptr);

/// Mean binary cross entropy; predictions clamped to [1e-7, 1 - 1e-7].
double visibility_bce(const MatX3& pred, const MatX3& target, MatX3* grad_pred = nullptr);

/// Depth ordering penalty: for each discrete grid pixel holding vertices of
/// more than one part, the part of the highest-sz vertex must lie entirely
/// in front of the rest; the violation ReLU(max_front z - min_back z) is
/// summed over pixels in row-major pixel order.
double depth_ordering_loss(const MatX3& coords_grid, const VecX& sz,
                           const Eigen::VectorXi& part_labels, int bins,
                           MatX3* grad_coords = nullptr);

/// sum_v sz(v) * L1(v_xy - centroid of its mapped pixels), pixel centroids
/// expressed in grid units.
double uv_correspondence_loss(const MatX3& coords_grid, const VecX& sz, const Correspondence& corr,
                              const HeatmapGrid& grid, MatX3* grad_coords = nullptr);

/// |theta - theta*|_1 + |beta - beta*|_1 (plain sums, not means).
double smpl_param_loss(const MatX3& theta, const VecX& beta, const MatX3& theta_target,
                       const VecX& beta_target, MatX3* grad_theta = nullptr,
                       VecX* grad_beta = nullptr);

double gmm_nll(const VecX& theta_body, const GMMPrior& prior, VecX* grad = nullptr);

struct FitTermBreakdown {
  double smpl_vert = 0.0;
  double smpl_joint = 0.0;
  double prior = 0.0;
  double edge = 0.0;
  double total = 0.0;
  bool vert_weights_all_zero = false;
  bool joint_weights_all_zero = false;
};

struct FitObjectiveGrads {
  MatX3 theta;
  VecX beta;
  Vec3 translation;
};

/// The test-time fitting objective: visibility-weighted L1 on vertex and
/// joint grid coordinates, the pose prior, and an optional edge regularizer
/// against the shape-blended template (active when weights.edge > 0).
/// `override_visibility_with_ones` evaluates the ablation objective that
/// ignores the observed visibility.
double total_fit_objective(const BodyModel& model, const PoseParams& pose,
                           const ShapeParams& shape, const Vec3& translation,
                           const FitObservations& obs, const LossWeights& weights,
                           const GMMPrior* prior, FitTermBreakdown* breakdown = nullptr,
                           FitObjectiveGrads* grads = nullptr,
                           bool override_visibility_with_ones = false);

}  // namespace visfit
