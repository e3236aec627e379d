#include "visfit/fitter.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "visfit/log.hpp"

namespace visfit {

void FitProblem::validate() const {
  if (!model) throw ValidationError("fit problem: model reference missing");
  obs.validate(model->n_out_joints(), model->n_vertices());
}

void FitConfig::validate() const {
  if (max_iters < 1) throw ValidationError("fit config: max_iters must be >= 1");
  if (!(learning_rate > 0.0)) throw ValidationError("fit config: learning_rate must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    throw ValidationError("fit config: adam betas must lie in [0,1)");
  if (!(adam_eps > 0.0)) throw ValidationError("fit config: adam_eps must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0))
    throw ValidationError("fit config: lr_decay must lie in (0,1]");
  if (rel_window < 1) throw ValidationError("fit config: rel_window must be >= 1");
  if (!(beta_clamp > 0.0)) throw ValidationError("fit config: beta_clamp must be positive");
  weights.validate();
}

namespace {

bool joint_visible(const MatX3& visibility, int i) {
  return visibility(i, 0) >= 0.5 && visibility(i, 1) >= 0.5 && visibility(i, 2) >= 0.5;
}

Vec3 axis_angle_from_rotation(const Mat3& rot) {
  const Eigen::AngleAxisd aa(rot);
  return aa.angle() * aa.axis();
}

double component_median(std::vector<double> values) {
  const size_t n = values.size();
  std::nth_element(values.begin(), values.begin() + n / 2, values.end());
  const double hi = values[n / 2];
  if (n % 2 == 1) return hi;
  std::nth_element(values.begin(), values.begin() + n / 2 - 1, values.end());
  return 0.5 * (values[n / 2 - 1] + hi);
}

}  // namespace

InitParams init_params(const FitProblem& problem) {
  problem.validate();
  const BodyModel& model = *problem.model;
  const FitObservations& obs = problem.obs;

  InitParams init;
  init.theta = MatX3::Zero(model.n_kin_joints(), 3);
  init.beta = VecX::Zero(model.n_shape());

  if (problem.prior) {
    Eigen::Index heaviest = 0;
    problem.prior->weights().maxCoeff(&heaviest);
    const VecX mean = problem.prior->means().row(heaviest).transpose();
    const int body_joints = std::min<int>(model.n_kin_joints() - 1,
                                          static_cast<int>(mean.size()) / 3);
    for (int k = 0; k < body_joints; ++k)
      init.theta.row(k + 1) = mean.segment<3>(3 * k).transpose();
  }

  // Back-project visible observed joints into camera space.
  double root_depth = obs.root_depth.value_or(0.0);
  const PosedBody rest = forward(model, PoseParams::zeros(model.n_kin_joints()),
                                 ShapeParams::zeros(model.n_shape()));
  std::vector<int> visible;
  for (int i = 0; i < model.n_out_joints(); ++i)
    if (joint_visible(obs.joints.visibility, i)) visible.push_back(i);

  if (!obs.root_depth.has_value()) {
    // Scale heuristic: match the pixel spread of the observations against
    // the metric spread of the rest joints, frontal view assumed.
    double obs_rms = 0.0, rest_rms = 0.0;
    Vec2 obs_mean = Vec2::Zero();
    Vec2 rest_mean = Vec2::Zero();
    for (const int i : visible) {
      obs_mean += Vec2(obs.joints.coords(i, 0), obs.joints.coords(i, 1));
      rest_mean += Vec2(rest.joints_out(i, 0), rest.joints_out(i, 1));
    }
    if (visible.size() >= 2) {
      obs_mean /= static_cast<double>(visible.size());
      rest_mean /= static_cast<double>(visible.size());
      for (const int i : visible) {
        const Vec2 og = Vec2(obs.joints.coords(i, 0), obs.joints.coords(i, 1)) - obs_mean;
        // grid -> pixels
        const Vec2 op(og.x() / obs.grid.bins * obs.crop.w, og.y() / obs.grid.bins * obs.crop.h);
        obs_rms += op.squaredNorm();
        rest_rms += (Vec2(rest.joints_out(i, 0), rest.joints_out(i, 1)) - rest_mean).squaredNorm();
      }
      obs_rms = std::sqrt(obs_rms / visible.size());
      rest_rms = std::sqrt(rest_rms / visible.size());
    }
    root_depth = (obs_rms > 1e-6) ? obs.camera.focal.x() * rest_rms / obs_rms : 3.0;
    log::debug("init_params: estimated root depth ", root_depth);
  }

  MatX3 obs_cam(static_cast<long>(visible.size()), 3);
  MatX3 rest_pts(static_cast<long>(visible.size()), 3);
  for (size_t q = 0; q < visible.size(); ++q) {
    const int i = visible[q];
    const Coord3 c{obs.joints.coords(i, 0), obs.joints.coords(i, 1), obs.joints.coords(i, 2)};
    obs_cam.row(static_cast<long>(q)) =
        grid_to_camera(obs.camera, obs.grid, obs.crop, c, root_depth).transpose();
    rest_pts.row(static_cast<long>(q)) = rest.joints_out.row(i);
  }

  Mat3 rot = Mat3::Identity();
  if (visible.size() >= 3) {
    const Vec3 rest_centroid = rest_pts.colwise().mean().transpose();
    const Vec3 obs_centroid = obs_cam.colwise().mean().transpose();
    Mat3 cross = Mat3::Zero();
    for (int q = 0; q < rest_pts.rows(); ++q)
      cross += (rest_pts.row(q).transpose() - rest_centroid) *
               (obs_cam.row(q) - obs_centroid.transpose());
    Eigen::JacobiSVD<Mat3> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 d = Mat3::Identity();
    d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0 ? -1.0 : 1.0;
    rot = svd.matrixV() * d * svd.matrixU().transpose();
    init.theta.row(0) = axis_angle_from_rotation(rot).transpose();
  } else {
    init.low_confidence = true;
    log::warn("init_params: fewer than 3 visible joints, identity rotation fallback");
  }

  if (!visible.empty()) {
    std::vector<double> dx, dy, dz;
    for (int q = 0; q < obs_cam.rows(); ++q) {
      const Vec3 offset = obs_cam.row(q).transpose() - rot * rest_pts.row(q).transpose();
      dx.push_back(offset.x());
      dy.push_back(offset.y());
      dz.push_back(offset.z());
    }
    init.translation = Vec3(component_median(dx), component_median(dy), component_median(dz));
  } else {
    init.low_confidence = true;
    init.translation = Vec3(0.0, 0.0, root_depth);
  }
  return init;
}

double fit_objective(const FitProblem& problem, const FitConfig& config, const MatX3& theta,
                     const VecX& beta, const Vec3& translation, FitObjectiveGrads* grads,
                     FitTermBreakdown* breakdown) {
  PoseParams pose;
  pose.theta = theta;
  ShapeParams shape;
  shape.beta = beta;
  return total_fit_objective(*problem.model, pose, shape, translation, problem.obs,
                             config.weights, problem.prior, breakdown, grads,
                             /*override_visibility_with_ones=*/!config.use_visibility);
}

FitResult fit(const FitProblem& problem, const FitConfig& config) {
  problem.validate();
  config.validate();
  const BodyModel& model = *problem.model;
  const int nk = model.n_kin_joints();
  const int nb = model.n_shape();
  const int n_params = 3 * nk + nb + 3;

  const InitParams init = init_params(problem);
  MatX3 theta = init.theta;
  VecX beta = init.beta;
  Vec3 translation = init.translation;

  FitResult result;
  result.low_confidence_init = init.low_confidence;

  VecX m = VecX::Zero(n_params);
  VecX v = VecX::Zero(n_params);
  double lr = config.learning_rate;

  auto pack = [&](const MatX3& th, const VecX& be, const Vec3& tr) {
    VecX p(n_params);
    for (int k = 0; k < nk; ++k) p.segment<3>(3 * k) = th.row(k).transpose();
    p.segment(3 * nk, nb) = be;
    p.segment<3>(3 * nk + nb) = tr;
    return p;
  };
  auto unpack = [&](const VecX& p, MatX3& th, VecX& be, Vec3& tr) {
    for (int k = 0; k < nk; ++k) th.row(k) = p.segment<3>(3 * k).transpose();
    be = p.segment(3 * nk, nb);
    tr = p.segment<3>(3 * nk + nb);
  };

  VecX params = pack(theta, beta, translation);
  std::vector<double> totals;
  totals.reserve(config.max_iters + 1);

  int iter = 0;
  for (; iter < config.max_iters; ++iter) {
    FitObjectiveGrads grads;
    FitTermBreakdown bd;
    const double objective =
        fit_objective(problem, config, theta, beta, translation, &grads, &bd);
    result.trace.push_back({iter, bd.total, bd.smpl_vert, bd.smpl_joint, bd.prior, bd.edge});
    totals.push_back(objective);

    // convergence: relative decrease over the window
    if (iter >= config.rel_window) {
      const double prev = totals[iter - config.rel_window];
      const double rel = (prev - objective) / std::max(std::abs(prev), 1e-12);
      if (rel < config.rel_tol) {
        result.converged = true;
        break;
      }
    }

    VecX grad = pack(grads.theta, grads.beta, grads.translation);
    if (config.freeze_translation) grad.segment<3>(3 * nk + nb).setZero();

    const double b1t = std::pow(config.adam_beta1, iter + 1);
    const double b2t = std::pow(config.adam_beta2, iter + 1);
    m = config.adam_beta1 * m + (1.0 - config.adam_beta1) * grad;
    v = config.adam_beta2 * v + (1.0 - config.adam_beta2) * grad.cwiseProduct(grad);
    for (int p = 0; p < n_params; ++p) {
      const double m_hat = m(p) / (1.0 - b1t);
      const double v_hat = v(p) / (1.0 - b2t);
      params(p) -= lr * m_hat / (std::sqrt(v_hat) + config.adam_eps);
    }
    lr *= config.lr_decay;

    unpack(params, theta, beta, translation);
    for (int b = 0; b < nb; ++b)
      beta(b) = std::clamp(beta(b), -config.beta_clamp, config.beta_clamp);
    params = pack(theta, beta, translation);
  }

  FitTermBreakdown bd;
  const double final_objective =
      fit_objective(problem, config, theta, beta, translation, nullptr, &bd);
  if (result.trace.empty() || result.trace.back().iter != iter)
    result.trace.push_back({iter, bd.total, bd.smpl_vert, bd.smpl_joint, bd.prior, bd.edge});

  PoseParams canonical;
  canonical.theta = theta;
  result.theta = canonical.canonicalized().theta;
  result.beta = beta;
  result.translation = translation;
  result.final_objective = final_objective;
  result.iterations = iter;
  return result;
}

}  // namespace visfit
