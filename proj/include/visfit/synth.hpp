#pragma once

#include <cstdint>

#include "visfit/fitter.hpp"
#include "visfit/visibility.hpp"

namespace visfit {

/// Controls one synthetic fitting problem: a seeded pose/shape sample posed
/// in front of the camera, rendered to a dense UV map, and observed in grid
/// coordinates. fraction_occluded marks that share of vertices invisible
/// (whole triplet zero) and replaces their observations with large noise;
/// crop_shift_fraction jitters the crop box like bounding-box augmentation.
struct SyntheticProblemSpec {
  std::uint64_t seed = 0;
  double pose_noise_scale = 0.3;   // radians, body joints
  double fraction_occluded = 0.0;  // in [0,1]
  double crop_shift_fraction = 0.0;
  double observation_noise = 0.0;  // grid units, visible elements
  int iuv_resolution = 256;

  void validate() const;
};

struct SyntheticProblem {
  FitObservations obs;
  DenseUVMap iuv;
  MatX3 gt_theta;
  VecX gt_beta;
  Vec3 gt_translation = Vec3::Zero();
  PosedBody gt_posed;  // root-relative meters
  std::vector<std::uint8_t> true_vertex_sz;  // UV-derived, before corruption
  std::vector<std::uint8_t> true_joint_sz;
};

SyntheticProblem make_synthetic_problem(const SyntheticProblemSpec& spec, const BodyModel& model,
                                        const GMMPrior* prior);

/// Two-component synthetic pose prior for tests and bundled problem sets.
GMMPrior make_test_prior(int dim, std::uint64_t seed);

}  // namespace visfit
