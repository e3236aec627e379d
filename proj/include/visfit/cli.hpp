#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace visfit::cli {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNumerical = 3;

struct FitCommand {
  std::string model_path;
  std::string obs_path;
  std::string prior_path;   // empty = no prior
  std::string config_path;  // empty = defaults
  std::string out_dir = ".";
  std::optional<int> max_iters;
  std::optional<double> learning_rate;
  std::optional<std::uint64_t> seed;
  std::optional<bool> use_visibility;
  std::optional<bool> freeze_translation;
};
int run_fit(const FitCommand& cmd);

struct SynthCommand {
  std::string out_dir;
  std::uint64_t seed = 0;
  int count = 1;
  int jobs = 1;
  double pose_noise = 0.3;
  double occlusion = 0.0;
  double crop_shift = 0.0;
  double obs_noise = 0.0;
  int subdiv = 0;
  std::uint64_t model_seed = 42;
  bool with_prior = true;
};
int run_synth(const SynthCommand& cmd);

struct PseudoGtCommand {
  std::string model_path;
  std::string iuv_path;
  std::string obs_path;     // supplies camera, crop box, and grid
  std::string params_path;  // any JSON with theta/beta/translation
  std::string out_path;
};
int run_pseudo_gt(const PseudoGtCommand& cmd);

struct EvalCommand {
  std::string model_path;
  std::string pred_path;  // fit result JSON
  std::string gt_path;    // synth ground truth JSON
  std::string out_path;
  std::string csv_path;         // optional
  std::string pred_labels_path;  // optional
  std::string gt_labels_path;    // optional
};
int run_eval(const EvalCommand& cmd);

struct ExportObjCommand {
  std::string model_path;
  std::string params_path;  // empty = rest pose
  std::string out_path;
};
int run_export_obj(const ExportObjCommand& cmd);

}  // namespace visfit::cli
