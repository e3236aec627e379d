#include "visfit/evaluation.hpp"

#include <cmath>

namespace visfit {

namespace {

double mean_distance_excluding(const MatX3& a, const MatX3& b, int excluded) {
  double acc = 0.0;
  int count = 0;
  for (int i = 0; i < a.rows(); ++i) {
    if (i == excluded) continue;
    acc += (a.row(i) - b.row(i)).norm();
    ++count;
  }
  return count > 0 ? acc / count : 0.0;
}

}  // namespace

double mpjpe(const MatX3& pred, const MatX3& gt, int root_index) {
  if (pred.rows() != gt.rows())
    throw ValidationError("mpjpe: joint count mismatch (" + std::to_string(pred.rows()) + " vs " +
                          std::to_string(gt.rows()) + ")");
  if (root_index < 0 || root_index >= pred.rows())
    throw ValidationError("mpjpe: root index out of range");
  MatX3 p = pred.rowwise() - pred.row(root_index);
  MatX3 g = gt.rowwise() - gt.row(root_index);
  return mean_distance_excluding(p, g, root_index);
}

SimilarityTransform procrustes_align(const MatX3& pred, const MatX3& gt) {
  const int n = static_cast<int>(pred.rows());
  if (n != gt.rows()) throw ValidationError("procrustes_align: point count mismatch");
  if (n < 3) throw NumericalError("procrustes_align: need at least 3 points, got " +
                                  std::to_string(n));

  const Vec3 pred_centroid = pred.colwise().mean().transpose();
  const Vec3 gt_centroid = gt.colwise().mean().transpose();
  const MatX3 pc = pred.rowwise() - pred_centroid.transpose();
  const MatX3 gc = gt.rowwise() - gt_centroid.transpose();

  const double pred_var = pc.squaredNorm();
  if (pred_var < 1e-18) throw NumericalError("procrustes_align: degenerate (coincident points)");

  const Mat3 cross = pc.transpose() * gc;  // sum p_c g_c^T
  Eigen::JacobiSVD<Mat3> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const VecX singular = svd.singularValues();
  // rank < 2 means the configuration is collinear: rotation underdetermined
  if (singular(1) < 1e-12 * std::max(singular(0), 1.0))
    throw NumericalError("procrustes_align: collinear or degenerate configuration");

  Mat3 d = Mat3::Identity();
  if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  const Mat3 rotation = svd.matrixV() * d * svd.matrixU().transpose();
  const double scale = (singular(0) + singular(1) + d(2, 2) * singular(2)) / pred_var;

  SimilarityTransform t;
  t.scale = scale;
  t.rotation = rotation;
  t.translation = gt_centroid - scale * (rotation * pred_centroid);
  return t;
}

double pa_mpjpe(const MatX3& pred, const MatX3& gt, int root_index) {
  if (pred.rows() != gt.rows()) throw ValidationError("pa_mpjpe: joint count mismatch");
  const SimilarityTransform t = procrustes_align(pred, gt);
  MatX3 aligned(pred.rows(), 3);
  for (int i = 0; i < pred.rows(); ++i)
    aligned.row(i) = t.apply(pred.row(i).transpose()).transpose();
  return mean_distance_excluding(aligned, gt, root_index);
}

double mpve(const MatX3& pred_vertices, const MatX3& gt_vertices, const Vec3& pred_root,
            const Vec3& gt_root) {
  if (pred_vertices.rows() != gt_vertices.rows())
    throw ValidationError("mpve: vertex count mismatch");
  MatX3 p = pred_vertices.rowwise() - pred_root.transpose();
  MatX3 g = gt_vertices.rowwise() - gt_root.transpose();
  return mean_distance_excluding(p, g, -1);
}

Vec3 visibility_accuracy(const MatX3& pred_labels, const MatX3& gt_labels) {
  if (pred_labels.rows() != gt_labels.rows())
    throw ValidationError("visibility_accuracy: row count mismatch");
  if (pred_labels.rows() == 0) return Vec3::Zero();
  Vec3 acc = Vec3::Zero();
  for (int c = 0; c < 3; ++c) {
    int match = 0;
    for (int i = 0; i < pred_labels.rows(); ++i) {
      const bool p = pred_labels(i, c) >= 0.5;
      const bool g = gt_labels(i, c) >= 0.5;
      if (p == g) ++match;
    }
    acc(c) = static_cast<double>(match) / pred_labels.rows();
  }
  return acc;
}

MetricsReport evaluate_examples(const std::vector<EvalExample>& examples, int root_index) {
  MetricsReport report;
  Vec3 vis_acc = Vec3::Zero();
  int vis_count = 0;
  for (const auto& ex : examples) {
    const double e_mpjpe = mpjpe(ex.pred_joints, ex.gt_joints, root_index);
    const double e_pa = pa_mpjpe(ex.pred_joints, ex.gt_joints, root_index);
    const Vec3 pred_root = ex.pred_joints.row(root_index).transpose();
    const Vec3 gt_root = ex.gt_joints.row(root_index).transpose();
    const double e_mpve = mpve(ex.pred_vertices, ex.gt_vertices, pred_root, gt_root);
    report.per_example_mpjpe.push_back(e_mpjpe);
    report.per_example_pa_mpjpe.push_back(e_pa);
    report.per_example_mpve.push_back(e_mpve);
    if (ex.pred_visibility.rows() > 0) {
      vis_acc += visibility_accuracy(ex.pred_visibility, ex.gt_visibility);
      ++vis_count;
    }
  }
  const auto mean = [](const std::vector<double>& v) {
    double acc = 0.0;
    for (const double x : v) acc += x;
    return v.empty() ? 0.0 : acc / v.size();
  };
  report.mpjpe_mm = mean(report.per_example_mpjpe);
  report.pa_mpjpe_mm = mean(report.per_example_pa_mpjpe);
  report.mpve_mm = mean(report.per_example_mpve);
  if (vis_count > 0) {
    report.visibility_acc = vis_acc / vis_count;
    report.has_visibility = true;
  }
  return report;
}

}  // namespace visfit
