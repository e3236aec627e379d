#pragma once

#include <cstdint>

#include "visfit/body_model.hpp"

namespace visfit {

/// Builds a deterministic articulated capsule person: 16 kinematic joints,
/// 20 output joints, 6 body parts, ~200 vertices at n_subdiv=0 (each
/// subdivision level splits every triangle in four). The seed perturbs
/// vertex positions slightly so distinct seeds give distinct geometry;
/// identical arguments always produce bit-identical models.
BodyModel make_mini_model(int n_subdiv, std::uint64_t seed);

}  // namespace visfit
