#include <CLI11.hpp>

#include "visfit/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"visfit: visibility-aware dense body estimation toolkit"};
  app.require_subcommand(1);

  visfit::cli::FitCommand fit_cmd;
  auto* fit = app.add_subcommand("fit", "optimize body parameters against observations");
  fit->add_option("--model", fit_cmd.model_path, "body model JSON")->required();
  fit->add_option("--obs", fit_cmd.obs_path, "observation JSON")->required();
  fit->add_option("--prior", fit_cmd.prior_path, "pose prior JSON");
  fit->add_option("--config", fit_cmd.config_path, "fit config JSON");
  fit->add_option("--out", fit_cmd.out_dir, "output directory");
  int max_iters = -1;
  double lr = -1.0;
  std::uint64_t seed = 0;
  bool seed_set = false, no_vis = false, freeze_t = false;
  fit->add_option("--max-iters", max_iters, "iteration budget");
  fit->add_option("--lr", lr, "learning rate");
  fit->add_option("--seed", seed, "seed recorded into the result")->each([&](const std::string&) {
    seed_set = true;
  });
  fit->add_flag("--no-visibility", no_vis, "fit with uniform weights");
  fit->add_flag("--freeze-translation", freeze_t, "keep the initial translation");

  visfit::cli::SynthCommand synth_cmd;
  auto* synth = app.add_subcommand("synth", "generate synthetic fitting problems");
  synth->add_option("--out", synth_cmd.out_dir, "output directory")->required();
  synth->add_option("--seed", synth_cmd.seed, "base seed")->required();
  synth->add_option("--count", synth_cmd.count, "number of problems");
  synth->add_option("--jobs", synth_cmd.jobs, "parallel workers");
  synth->add_option("--pose-noise", synth_cmd.pose_noise, "body pose scale, radians");
  synth->add_option("--occlusion", synth_cmd.occlusion, "fraction of corrupted vertices");
  synth->add_option("--crop-shift", synth_cmd.crop_shift, "crop jitter fraction");
  synth->add_option("--obs-noise", synth_cmd.obs_noise, "observation noise, grid units");
  synth->add_option("--subdiv", synth_cmd.subdiv, "mini model subdivision level");
  synth->add_option("--model-seed", synth_cmd.model_seed, "mini model seed");
  synth->add_flag("!--no-prior", synth_cmd.with_prior, "skip the pose prior");

  visfit::cli::PseudoGtCommand pgt_cmd;
  auto* pgt = app.add_subcommand("pseudo-gt", "derive visibility labels from a dense UV map");
  pgt->add_option("--model", pgt_cmd.model_path, "body model JSON")->required();
  pgt->add_option("--iuv", pgt_cmd.iuv_path, "IUV PNG")->required();
  pgt->add_option("--obs", pgt_cmd.obs_path, "observation JSON (camera/crop/grid)")->required();
  pgt->add_option("--params", pgt_cmd.params_path, "posed parameters JSON")->required();
  pgt->add_option("--out", pgt_cmd.out_path, "labels JSON")->required();

  visfit::cli::EvalCommand eval_cmd;
  auto* eval = app.add_subcommand("eval", "score a fit against ground truth");
  eval->add_option("--model", eval_cmd.model_path, "body model JSON")->required();
  eval->add_option("--pred", eval_cmd.pred_path, "fit result JSON")->required();
  eval->add_option("--gt", eval_cmd.gt_path, "ground truth JSON")->required();
  eval->add_option("--out", eval_cmd.out_path, "metrics JSON")->required();
  eval->add_option("--csv", eval_cmd.csv_path, "per-example CSV");
  eval->add_option("--pred-labels", eval_cmd.pred_labels_path, "predicted labels JSON");
  eval->add_option("--gt-labels", eval_cmd.gt_labels_path, "ground-truth labels JSON");

  visfit::cli::ExportObjCommand obj_cmd;
  auto* obj = app.add_subcommand("export-obj", "write the (posed) mesh as OBJ");
  obj->add_option("--model", obj_cmd.model_path, "body model JSON")->required();
  obj->add_option("--params", obj_cmd.params_path, "parameters JSON (rest pose if omitted)");
  obj->add_option("--out", obj_cmd.out_path, "OBJ path")->required();

  CLI11_PARSE(app, argc, argv);

  if (fit->parsed()) {
    if (max_iters > 0) fit_cmd.max_iters = max_iters;
    if (lr > 0.0) fit_cmd.learning_rate = lr;
    if (seed_set) fit_cmd.seed = seed;
    if (no_vis) fit_cmd.use_visibility = false;
    if (freeze_t) fit_cmd.freeze_translation = true;
    return visfit::cli::run_fit(fit_cmd);
  }
  if (synth->parsed()) return visfit::cli::run_synth(synth_cmd);
  if (pgt->parsed()) return visfit::cli::run_pseudo_gt(pgt_cmd);
  if (eval->parsed()) return visfit::cli::run_eval(eval_cmd);
  if (obj->parsed()) return visfit::cli::run_export_obj(obj_cmd);
  return 1;
}
