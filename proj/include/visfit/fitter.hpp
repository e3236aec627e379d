#pragma once

#include <cstdint>
#include <vector>

#include "visfit/objectives.hpp"

namespace visfit {

struct FitProblem {
  const BodyModel* model = nullptr;
  const GMMPrior* prior = nullptr;  // optional
  FitObservations obs;

  void validate() const;
};

struct FitConfig {
  int max_iters = 100;
  double learning_rate = 0.05;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double lr_decay = 1.0;      // per-iteration learning-rate multiplier
  double rel_tol = 1e-6;      // relative objective decrease over rel_window
  int rel_window = 5;
  double beta_clamp = 5.0;
  bool freeze_translation = false;
  bool use_visibility = true;  // false fits with uniform weights (ablation)
  LossWeights weights = [] {
    LossWeights w;
    w.edge = 0.0;  // shape regularizer off by default at test time
    return w;
  }();
  std::uint64_t seed = 0;

  void validate() const;
};

struct FitIterTrace {
  int iter = 0;
  double total = 0.0;
  double smpl_vert = 0.0;
  double smpl_joint = 0.0;
  double prior = 0.0;
  double edge = 0.0;
};

struct FitResult {
  MatX3 theta;
  VecX beta;
  Vec3 translation = Vec3::Zero();
  double final_objective = 0.0;
  int iterations = 0;
  bool converged = false;
  bool low_confidence_init = false;
  std::vector<FitIterTrace> trace;  // objective before each step, plus final
};

struct InitParams {
  MatX3 theta;
  VecX beta;
  Vec3 translation = Vec3::Zero();
  bool low_confidence = false;
};

/// Deterministic initialization: body pose from the prior's heaviest
/// component (zeros without a prior), global rotation by rigid (Kabsch)
/// alignment of the visible observed joints to the rest pose, translation
/// from the per-component median offset. Fewer than 3 visible joints fall
/// back to identity rotation and set the low-confidence flag.
InitParams init_params(const FitProblem& problem);

/// Adam descent on the total fit objective over (theta, beta, translation).
/// Deterministic given the problem and config.
FitResult fit(const FitProblem& problem, const FitConfig& config);

/// Objective and analytic gradient at explicit parameters; exposed so the
/// finite-difference contract can be checked against the exact quantity the
/// optimizer descends.
double fit_objective(const FitProblem& problem, const FitConfig& config, const MatX3& theta,
                     const VecX& beta, const Vec3& translation, FitObjectiveGrads* grads = nullptr,
                     FitTermBreakdown* breakdown = nullptr);

}  // namespace visfit
