#pragma once

#include <string>
#include <vector>

#include "visfit/fitter.hpp"
#include "visfit/visibility.hpp"

namespace visfit {

BodyModel load_body_model(const std::string& path);
void save_body_model(const BodyModel& model, const std::string& path);

FitObservations load_observations(const std::string& path);
void save_observations(const FitObservations& obs, const std::string& path);

GMMPrior load_prior(const std::string& path);
void save_prior(const GMMPrior& prior, const std::string& path);

/// FitConfig from JSON; absent keys keep their defaults.
FitConfig load_fit_config(const std::string& path, FitConfig base = {});

void save_fit_result(const FitResult& result, const FitConfig& config,
                     const std::string& path);
FitResult load_fit_result(const std::string& path);

/// 3-channel 8-bit PNG, R = part id, G = round(255 u), B = round(255 v).
/// save_iuv optionally writes a float sidecar (path + ".json") that load_iuv
/// prefers when present, making the round trip lossless.
void save_iuv(const DenseUVMap& iuv, const std::string& png_path, bool with_sidecar = true);
DenseUVMap load_iuv(const std::string& png_path);

struct VisibilityLabelsFile {
  MatX3 joints;    // binary triplets
  MatX3 vertices;
  Correspondence correspondence;
};

void save_labels(const VisibilityLabelsFile& labels, const std::string& path);
VisibilityLabelsFile load_labels(const std::string& path);

struct SynthGroundTruth {
  MatX3 theta;
  VecX beta;
  Vec3 translation = Vec3::Zero();
  MatX3 joints_mm;    // root-relative
  MatX3 vertices_mm;
  double body_height_mm = 0.0;
  std::vector<std::uint8_t> vertex_sz;
  std::vector<std::uint8_t> joint_sz;
};

void save_ground_truth(const SynthGroundTruth& gt, const std::string& path);
SynthGroundTruth load_ground_truth(const std::string& path);

/// Plain OBJ: `v x y z` lines (6 decimals) then 1-indexed `f i j k` lines,
/// LF endings. Refuses to write an empty mesh.
void export_obj(const MatX3& vertices, const FaceMatrix& faces, const std::string& path);

}  // namespace visfit
