#include "visfit/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>
#include <vector>

#include <json.hpp>

#include "visfit/evaluation.hpp"
#include "visfit/io.hpp"
#include "visfit/log.hpp"
#include "visfit/mini_model.hpp"
#include "visfit/synth.hpp"

namespace visfit::cli {

namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

void emit_error(const std::string& code, const std::string& message) {
  const Json j = {{"error_code", code}, {"message", message}};
  std::cerr << j.dump() << "\n";
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const ValidationError& e) {
    emit_error("validation_error", e.what());
    return kExitValidation;
  } catch (const NumericalError& e) {
    emit_error("numerical_error", e.what());
    return kExitNumerical;
  } catch (const std::exception& e) {
    emit_error("internal_error", e.what());
    return kExitNumerical;
  }
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw ValidationError(what + ": no path given");
  if (!fs::exists(path)) throw ValidationError(what + ": file not found: " + path);
}

struct ParamsFile {
  MatX3 theta;
  VecX beta;
  Vec3 translation;
};

// Accepts any JSON carrying theta/beta/translation (fit results and
// synthetic ground truth both qualify).
ParamsFile load_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open file: " + path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": invalid JSON (" + e.what() + ")");
  }
  for (const char* key : {"theta", "beta", "translation"})
    if (!j.contains(key)) throw ValidationError(path + ": missing key '" + std::string(key) + "'");
  ParamsFile p;
  const auto& theta = j.at("theta");
  p.theta.resize(static_cast<long>(theta.size()), 3);
  for (size_t k = 0; k < theta.size(); ++k)
    for (int c = 0; c < 3; ++c) p.theta(static_cast<long>(k), c) = theta[k][c].get<double>();
  const auto& beta = j.at("beta");
  p.beta.resize(static_cast<long>(beta.size()));
  for (size_t b = 0; b < beta.size(); ++b) p.beta(static_cast<long>(b)) = beta[b].get<double>();
  const auto& t = j.at("translation");
  p.translation = Vec3(t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>());
  return p;
}

PosedBody pose_model(const BodyModel& model, const ParamsFile& params) {
  PoseParams pose;
  pose.theta = params.theta;
  ShapeParams shape;
  shape.beta = params.beta;
  return forward(model, pose.canonicalized(), shape);
}

}  // namespace

int run_fit(const FitCommand& cmd) {
  return guarded([&] {
    require_file(cmd.model_path, "--model");
    require_file(cmd.obs_path, "--obs");
    if (!cmd.config_path.empty()) require_file(cmd.config_path, "--config");
    if (!cmd.prior_path.empty()) require_file(cmd.prior_path, "--prior");
    fs::create_directories(cmd.out_dir);

    const BodyModel model = load_body_model(cmd.model_path);
    FitProblem problem;
    problem.model = &model;
    problem.obs = load_observations(cmd.obs_path);
    GMMPrior prior;
    if (!cmd.prior_path.empty()) {
      prior = load_prior(cmd.prior_path);
      problem.prior = &prior;
    }

    FitConfig config;
    if (!cmd.config_path.empty()) config = load_fit_config(cmd.config_path, config);
    if (cmd.max_iters) config.max_iters = *cmd.max_iters;
    if (cmd.learning_rate) config.learning_rate = *cmd.learning_rate;
    if (cmd.seed) config.seed = *cmd.seed;
    if (cmd.use_visibility) config.use_visibility = *cmd.use_visibility;
    if (cmd.freeze_translation) config.freeze_translation = *cmd.freeze_translation;
    config.validate();

    const FitResult result = fit(problem, config);
    const std::string result_path = (fs::path(cmd.out_dir) / "fit_result.json").string();
    save_fit_result(result, config, result_path);

    PoseParams pose;
    pose.theta = result.theta;
    ShapeParams shape;
    shape.beta = result.beta;
    const PosedBody posed = forward(model, pose, shape);
    const MatX3 cam_vertices = posed.vertices.rowwise() + result.translation.transpose();
    export_obj(cam_vertices, model.faces, (fs::path(cmd.out_dir) / "fitted.obj").string());
    log::info("fit: wrote ", result_path, " (objective ", result.final_objective, ", ",
              result.iterations, " iterations)");
    return kExitOk;
  });
}

int run_synth(const SynthCommand& cmd) {
  return guarded([&] {
    if (cmd.out_dir.empty()) throw ValidationError("--out: no path given");
    if (cmd.count < 1) throw ValidationError("--count: must be >= 1");
    if (cmd.jobs < 1) throw ValidationError("--jobs: must be >= 1");
    fs::create_directories(cmd.out_dir);

    const BodyModel model = make_mini_model(cmd.subdiv, cmd.model_seed);
    save_body_model(model, (fs::path(cmd.out_dir) / "model.json").string());

    GMMPrior prior;
    const GMMPrior* prior_ptr = nullptr;
    if (cmd.with_prior) {
      prior = make_test_prior(3 * (model.n_kin_joints() - 1), cmd.model_seed);
      save_prior(prior, (fs::path(cmd.out_dir) / "prior.json").string());
      prior_ptr = &prior;
    }

    // provenance echo of every resolved setting
    Json echo;
    echo["seed"] = cmd.seed;
    echo["count"] = cmd.count;
    echo["pose_noise"] = cmd.pose_noise;
    echo["occlusion"] = cmd.occlusion;
    echo["crop_shift"] = cmd.crop_shift;
    echo["obs_noise"] = cmd.obs_noise;
    echo["subdiv"] = cmd.subdiv;
    echo["model_seed"] = cmd.model_seed;
    echo["with_prior"] = cmd.with_prior;
    {
      std::ofstream out(fs::path(cmd.out_dir) / "synth_config.json", std::ios::binary);
      out << echo.dump(1, '\t') << "\n";
    }

    std::vector<std::string> failures(cmd.count);
    auto worker = [&](int begin, int step) {
      for (int i = begin; i < cmd.count; i += step) {
        try {
          SyntheticProblemSpec spec;
          spec.seed = cmd.seed + static_cast<std::uint64_t>(i);
          spec.pose_noise_scale = cmd.pose_noise;
          spec.fraction_occluded = cmd.occlusion;
          spec.crop_shift_fraction = cmd.crop_shift;
          spec.observation_noise = cmd.obs_noise;
          const SyntheticProblem problem = make_synthetic_problem(spec, model, prior_ptr);

          char name[32];
          std::snprintf(name, sizeof(name), "problem_%03d", i);
          const fs::path dir = fs::path(cmd.out_dir) / name;
          fs::create_directories(dir);
          save_observations(problem.obs, (dir / "observations.json").string());
          save_iuv(problem.iuv, (dir / "iuv.png").string());

          SynthGroundTruth gt;
          gt.theta = problem.gt_theta;
          gt.beta = problem.gt_beta;
          gt.translation = problem.gt_translation;
          gt.joints_mm = 1000.0 * problem.gt_posed.joints_out;
          gt.vertices_mm = 1000.0 * problem.gt_posed.vertices;
          gt.body_height_mm = 1000.0 * model.body_height();
          gt.vertex_sz = problem.true_vertex_sz;
          gt.joint_sz = problem.true_joint_sz;
          save_ground_truth(gt, (dir / "gt.json").string());
        } catch (const std::exception& e) {
          failures[i] = e.what();
        }
      }
    };

    if (cmd.jobs == 1) {
      worker(0, 1);
    } else {
      std::vector<std::thread> pool;
      for (int t = 0; t < cmd.jobs; ++t) pool.emplace_back(worker, t, cmd.jobs);
      for (auto& th : pool) th.join();
    }
    for (int i = 0; i < cmd.count; ++i)
      if (!failures[i].empty())
        throw ValidationError("problem " + std::to_string(i) + ": " + failures[i]);
    log::info("synth: wrote ", cmd.count, " problem(s) under ", cmd.out_dir);
    return kExitOk;
  });
}

int run_pseudo_gt(const PseudoGtCommand& cmd) {
  return guarded([&] {
    require_file(cmd.model_path, "--model");
    require_file(cmd.iuv_path, "--iuv");
    require_file(cmd.obs_path, "--obs");
    require_file(cmd.params_path, "--params");
    if (cmd.out_path.empty()) throw ValidationError("--out: no path given");

    const BodyModel model = load_body_model(cmd.model_path);
    const DenseUVMap iuv = load_iuv(cmd.iuv_path);
    const FitObservations obs = load_observations(cmd.obs_path);
    const ParamsFile params = load_params(cmd.params_path);
    const PosedBody posed = pose_model(model, params);

    const double root_depth = params.translation.z();
    auto grid_coords = [&](const MatX3& rows_rr) {
      MatX3 out(rows_rr.rows(), 3);
      for (int i = 0; i < rows_rr.rows(); ++i) {
        const Vec3 cam = rows_rr.row(i).transpose() + params.translation;
        const Coord3 g = to_grid(obs.camera, obs.grid, obs.crop, cam, root_depth);
        out.row(i) << g.x, g.y, g.z;
      }
      return out;
    };
    const MatX3 vert_grid = grid_coords(posed.vertices);
    const MatX3 joint_grid = grid_coords(posed.joints_out);
    const auto vert_trunc = truncation_labels(vert_grid, obs.grid.bins);
    const auto joint_trunc = truncation_labels(joint_grid, obs.grid.bins);

    const Correspondence corr = pixel_to_vertex(iuv, model);
    const auto vertex_sz = occlusion_labels_from_uv(corr, model.n_vertices());
    const auto joint_sz = joint_occlusion_labels(model, vertex_sz);

    VisibilityLabelsFile labels;
    labels.vertices.resize(model.n_vertices(), 3);
    for (int i = 0; i < model.n_vertices(); ++i)
      labels.vertices.row(i) << vert_trunc(i, 0), vert_trunc(i, 1), vertex_sz[i];
    labels.joints.resize(model.n_out_joints(), 3);
    for (int i = 0; i < model.n_out_joints(); ++i) {
      // joint occlusion follows the kinematic convention where defined
      const double sz = i < static_cast<int>(joint_sz.size()) ? joint_sz[i] : 1.0;
      labels.joints.row(i) << joint_trunc(i, 0), joint_trunc(i, 1), sz;
    }
    labels.correspondence = corr;
    save_labels(labels, cmd.out_path);
    log::info("pseudo-gt: wrote ", cmd.out_path);
    return kExitOk;
  });
}

int run_eval(const EvalCommand& cmd) {
  return guarded([&] {
    require_file(cmd.model_path, "--model");
    require_file(cmd.pred_path, "--pred");
    require_file(cmd.gt_path, "--gt");
    if (cmd.out_path.empty()) throw ValidationError("--out: no path given");

    const BodyModel model = load_body_model(cmd.model_path);
    const ParamsFile pred = load_params(cmd.pred_path);
    const SynthGroundTruth gt = load_ground_truth(cmd.gt_path);
    const PosedBody posed = pose_model(model, pred);

    EvalExample example;
    example.pred_joints = 1000.0 * posed.joints_out;
    example.gt_joints = gt.joints_mm;
    example.pred_vertices = 1000.0 * posed.vertices;
    example.gt_vertices = gt.vertices_mm;
    if (!cmd.pred_labels_path.empty() && !cmd.gt_labels_path.empty()) {
      require_file(cmd.pred_labels_path, "--pred-labels");
      require_file(cmd.gt_labels_path, "--gt-labels");
      example.pred_visibility = load_labels(cmd.pred_labels_path).vertices;
      example.gt_visibility = load_labels(cmd.gt_labels_path).vertices;
    }

    const MetricsReport report = evaluate_examples({example});
    Json j;
    j["mpjpe_mm"] = report.mpjpe_mm;
    j["pa_mpjpe_mm"] = report.pa_mpjpe_mm;
    j["mpve_mm"] = report.mpve_mm;
    j["per_example"] = Json::array();
    for (size_t i = 0; i < report.per_example_mpjpe.size(); ++i)
      j["per_example"].push_back({{"mpjpe_mm", report.per_example_mpjpe[i]},
                                  {"pa_mpjpe_mm", report.per_example_pa_mpjpe[i]},
                                  {"mpve_mm", report.per_example_mpve[i]}});
    if (report.has_visibility)
      j["visibility_accuracy"] = {report.visibility_acc.x(), report.visibility_acc.y(),
                                  report.visibility_acc.z()};
    std::ofstream out(cmd.out_path, std::ios::binary);
    if (!out) throw ValidationError("cannot write file: " + cmd.out_path);
    out << j.dump(1, '\t') << "\n";

    if (!cmd.csv_path.empty()) {
      std::ofstream csv(cmd.csv_path, std::ios::binary);
      if (!csv) throw ValidationError("cannot write file: " + cmd.csv_path);
      csv << "example,mpjpe_mm,pa_mpjpe_mm,mpve_mm\n";
      for (size_t i = 0; i < report.per_example_mpjpe.size(); ++i)
        csv << i << "," << report.per_example_mpjpe[i] << "," << report.per_example_pa_mpjpe[i]
            << "," << report.per_example_mpve[i] << "\n";
    }
    log::info("eval: wrote ", cmd.out_path);
    return kExitOk;
  });
}

int run_export_obj(const ExportObjCommand& cmd) {
  return guarded([&] {
    require_file(cmd.model_path, "--model");
    if (cmd.out_path.empty()) throw ValidationError("--out: no path given");
    const BodyModel model = load_body_model(cmd.model_path);
    MatX3 vertices = model.template_vertices;
    if (!cmd.params_path.empty()) {
      require_file(cmd.params_path, "--params");
      const ParamsFile params = load_params(cmd.params_path);
      vertices = pose_model(model, params).vertices;
    }
    export_obj(vertices, model.faces, cmd.out_path);
    log::info("export-obj: wrote ", cmd.out_path);
    return kExitOk;
  });
}

}  // namespace visfit::cli
