#pragma once

#include <vector>

#include "visfit/types.hpp"

namespace visfit {

struct SimilarityTransform {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }
};

/// Mean per-joint position error after root alignment (both clouds
/// translated so the root joint coincides). The root residual is identically
/// zero and excluded from the mean. Inputs and output in millimeters.
double mpjpe(const MatX3& pred, const MatX3& gt, int root_index = 0);

/// Similarity transform (s, R, t) minimizing sum |s R p_i + t - g_i|^2,
/// det(R) = +1 enforced. Throws NumericalError for collinear or degenerate
/// configurations (fewer than 3 points or rank-deficient spread).
SimilarityTransform procrustes_align(const MatX3& pred, const MatX3& gt);

/// mpjpe after the optimal similarity alignment (same element convention).
double pa_mpjpe(const MatX3& pred, const MatX3& gt, int root_index = 0);

/// Mean per-vertex error after aligning the given root positions.
double mpve(const MatX3& pred_vertices, const MatX3& gt_vertices, const Vec3& pred_root,
            const Vec3& gt_root);

/// Per-axis fraction of matching binary labels (columns: x, y, z);
/// continuous scores are thresholded at 0.5.
Vec3 visibility_accuracy(const MatX3& pred_labels, const MatX3& gt_labels);

struct MetricsReport {
  double mpjpe_mm = 0.0;
  double pa_mpjpe_mm = 0.0;
  double mpve_mm = 0.0;
  std::vector<double> per_example_mpjpe;
  std::vector<double> per_example_pa_mpjpe;
  std::vector<double> per_example_mpve;
  Vec3 visibility_acc = Vec3::Zero();  // x-truncation, y-truncation, z-occlusion
  bool has_visibility = false;
};

struct EvalExample {
  MatX3 pred_joints;  // mm
  MatX3 gt_joints;
  MatX3 pred_vertices;
  MatX3 gt_vertices;
  MatX3 pred_visibility;  // optional, 0 rows when absent
  MatX3 gt_visibility;
};

MetricsReport evaluate_examples(const std::vector<EvalExample>& examples, int root_index = 0);

}  // namespace visfit
