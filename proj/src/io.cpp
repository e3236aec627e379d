#include "visfit/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace visfit {

namespace {

using Json = nlohmann::ordered_json;

Json parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open file: " + path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": invalid JSON (" + e.what() + ")");
  }
}

void write_file(const Json& j, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write file: " + path);
  out << j.dump(1, '\t') << "\n";
  if (!out) throw ValidationError("write failed: " + path);
}

const Json& field(const Json& j, const std::string& path, const std::string& key) {
  if (!j.contains(key)) throw ValidationError(path + ": missing key '" + key + "'");
  return j.at(key);
}

Json matrix_to_json(const MatX& m) {
  Json rows = Json::array();
  for (int i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(i, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

MatX json_to_matrix(const Json& j, const std::string& where, int expect_cols = -1) {
  if (!j.is_array()) throw ValidationError(where + ": expected an array of rows");
  const int rows = static_cast<int>(j.size());
  int cols = expect_cols;
  if (rows > 0) {
    if (!j[0].is_array()) throw ValidationError(where + "[0]: expected a row array");
    cols = static_cast<int>(j[0].size());
    if (expect_cols >= 0 && cols != expect_cols)
      throw ValidationError(where + ": expected " + std::to_string(expect_cols) +
                            " columns, got " + std::to_string(cols));
  }
  MatX m(rows, std::max(cols, 0));
  for (int i = 0; i < rows; ++i) {
    if (static_cast<int>(j[i].size()) != cols)
      throw ValidationError(where + "[" + std::to_string(i) + "]: ragged row");
    for (int c = 0; c < cols; ++c) {
      if (!j[i][c].is_number())
        throw ValidationError(where + "[" + std::to_string(i) + "][" + std::to_string(c) +
                              "]: not a number");
      m(i, c) = j[i][c].get<double>();
    }
  }
  return m;
}

VecX json_to_vector(const Json& j, const std::string& where) {
  if (!j.is_array()) throw ValidationError(where + ": expected an array");
  VecX v(j.size());
  for (size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number())
      throw ValidationError(where + "[" + std::to_string(i) + "]: not a number");
    v(static_cast<long>(i)) = j[i].get<double>();
  }
  return v;
}

Json vector_to_json(const VecX& v) {
  Json out = Json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

}  // namespace

BodyModel load_body_model(const std::string& path) {
  const Json j = parse_file(path);
  BodyModel model;
  model.template_vertices = json_to_matrix(field(j, path, "template_vertices"), path + ":template_vertices", 3);
  const int nv = model.n_vertices();

  // shape_dirs come as [vertex][axis][beta]
  const Json& sd = field(j, path, "shape_dirs");
  if (!sd.is_array() || static_cast<int>(sd.size()) != nv)
    throw ValidationError(path + ":shape_dirs: expected " + std::to_string(nv) + " vertex entries");
  int n_beta = 0;
  if (nv > 0) {
    if (!sd[0].is_array() || sd[0].size() != 3)
      throw ValidationError(path + ":shape_dirs[0]: expected 3 axis entries");
    n_beta = static_cast<int>(sd[0][0].size());
  }
  model.shape_dirs.assign(n_beta, MatX3::Zero(nv, 3));
  for (int i = 0; i < nv; ++i)
    for (int c = 0; c < 3; ++c) {
      const Json& cell = sd[i][c];
      if (static_cast<int>(cell.size()) != n_beta)
        throw ValidationError(path + ":shape_dirs[" + std::to_string(i) + "]: ragged beta axis");
      for (int b = 0; b < n_beta; ++b) model.shape_dirs[b](i, c) = cell[b].get<double>();
    }

  const MatX faces_d = json_to_matrix(field(j, path, "faces"), path + ":faces", 3);
  model.faces = faces_d.cast<int>();
  const VecX parents = json_to_vector(field(j, path, "kin_parents"), path + ":kin_parents");
  model.kin_parents = parents.cast<int>();
  model.kin_regressor = json_to_matrix(field(j, path, "kin_regressor"), path + ":kin_regressor");
  model.skin_weights = json_to_matrix(field(j, path, "skin_weights"), path + ":skin_weights");
  model.joint_regressor_W =
      json_to_matrix(field(j, path, "joint_regressor_W"), path + ":joint_regressor_W");
  const VecX labels = json_to_vector(field(j, path, "part_labels"), path + ":part_labels");
  model.part_labels = labels.cast<int>();
  model.vertex_uv = json_to_matrix(field(j, path, "vertex_uv"), path + ":vertex_uv", 2);

  if (j.contains("pose_dirs") && !j.at("pose_dirs").empty()) {
    const Json& pd = j.at("pose_dirs");
    const int n_dirs = static_cast<int>(pd[0][0].size());
    model.pose_dirs.assign(n_dirs, MatX3::Zero(nv, 3));
    for (int i = 0; i < nv; ++i)
      for (int c = 0; c < 3; ++c)
        for (int d = 0; d < n_dirs; ++d) model.pose_dirs[d](i, c) = pd[i][c][d].get<double>();
  }

  try {
    model.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
  return model;
}

void save_body_model(const BodyModel& model, const std::string& path) {
  Json j;
  j["template_vertices"] = matrix_to_json(model.template_vertices);
  Json sd = Json::array();
  for (int i = 0; i < model.n_vertices(); ++i) {
    Json per_axis = Json::array();
    for (int c = 0; c < 3; ++c) {
      Json per_beta = Json::array();
      for (const auto& dir : model.shape_dirs) per_beta.push_back(dir(i, c));
      per_axis.push_back(std::move(per_beta));
    }
    sd.push_back(std::move(per_axis));
  }
  j["shape_dirs"] = std::move(sd);
  j["faces"] = matrix_to_json(model.faces.cast<double>());
  j["kin_parents"] = vector_to_json(model.kin_parents.cast<double>());
  j["kin_regressor"] = matrix_to_json(model.kin_regressor);
  j["skin_weights"] = matrix_to_json(model.skin_weights);
  j["joint_regressor_W"] = matrix_to_json(model.joint_regressor_W);
  j["part_labels"] = vector_to_json(model.part_labels.cast<double>());
  j["vertex_uv"] = matrix_to_json(model.vertex_uv);
  if (!model.pose_dirs.empty()) {
    Json pd = Json::array();
    for (int i = 0; i < model.n_vertices(); ++i) {
      Json per_axis = Json::array();
      for (int c = 0; c < 3; ++c) {
        Json per_dir = Json::array();
        for (const auto& dir : model.pose_dirs) per_dir.push_back(dir(i, c));
        per_axis.push_back(std::move(per_dir));
      }
      pd.push_back(std::move(per_axis));
    }
    j["pose_dirs"] = std::move(pd);
  }
  write_file(j, path);
}

namespace {

Json camera_to_json(const PerspectiveCamera& camera) {
  Json j;
  j["focal"] = {camera.focal.x(), camera.focal.y()};
  j["principal"] = {camera.principal.x(), camera.principal.y()};
  j["image_size"] = {camera.image_size.x(), camera.image_size.y()};
  return j;
}

PerspectiveCamera camera_from_json(const Json& j, const std::string& path) {
  PerspectiveCamera camera;
  const Json& focal = field(j, path, "focal");
  const Json& principal = field(j, path, "principal");
  const Json& size = field(j, path, "image_size");
  camera.focal = {focal.at(0).get<double>(), focal.at(1).get<double>()};
  camera.principal = {principal.at(0).get<double>(), principal.at(1).get<double>()};
  camera.image_size = {size.at(0).get<int>(), size.at(1).get<int>()};
  camera.validate();
  return camera;
}

}  // namespace

FitObservations load_observations(const std::string& path) {
  const Json j = parse_file(path);
  FitObservations obs;
  obs.camera = camera_from_json(field(j, path, "camera"), path + ":camera");
  const Json& crop = field(j, path, "crop_box");
  obs.crop.x = field(crop, path + ":crop_box", "x").get<double>();
  obs.crop.y = field(crop, path + ":crop_box", "y").get<double>();
  obs.crop.w = field(crop, path + ":crop_box", "w").get<double>();
  obs.crop.h = field(crop, path + ":crop_box", "h").get<double>();
  const Json& grid = field(j, path, "grid");
  obs.grid.bins = field(grid, path + ":grid", "bins").get<int>();
  obs.grid.depth_half_range = field(grid, path + ":grid", "depth_half_range").get<double>();
  obs.grid.validate();
  if (j.contains("root_depth")) obs.root_depth = j.at("root_depth").get<double>();
  for (const auto& [key, target] :
       {std::pair<const char*, ElementObservations*>{"joints", &obs.joints},
        {"vertices", &obs.vertices}}) {
    const Json& block = field(j, path, key);
    target->coords = json_to_matrix(field(block, path + ":" + key, "coords"),
                                    path + ":" + key + ".coords", 3);
    target->visibility = json_to_matrix(field(block, path + ":" + key, "visibility"),
                                        path + ":" + key + ".visibility", 3);
  }
  return obs;
}

void save_observations(const FitObservations& obs, const std::string& path) {
  Json j;
  j["camera"] = camera_to_json(obs.camera);
  j["crop_box"] = {{"x", obs.crop.x}, {"y", obs.crop.y}, {"w", obs.crop.w}, {"h", obs.crop.h}};
  j["grid"] = {{"bins", obs.grid.bins}, {"depth_half_range", obs.grid.depth_half_range}};
  if (obs.root_depth) j["root_depth"] = *obs.root_depth;
  j["joints"] = {{"coords", matrix_to_json(obs.joints.coords)},
                 {"visibility", matrix_to_json(obs.joints.visibility)}};
  j["vertices"] = {{"coords", matrix_to_json(obs.vertices.coords)},
                   {"visibility", matrix_to_json(obs.vertices.visibility)}};
  write_file(j, path);
}

GMMPrior load_prior(const std::string& path) {
  const Json j = parse_file(path);
  const VecX weights = json_to_vector(field(j, path, "weights"), path + ":weights");
  const MatX means = json_to_matrix(field(j, path, "means"), path + ":means");
  const Json& covs_json = field(j, path, "covariances");
  std::vector<MatX> covs;
  for (size_t k = 0; k < covs_json.size(); ++k)
    covs.push_back(json_to_matrix(covs_json[k], path + ":covariances[" + std::to_string(k) + "]"));
  try {
    return GMMPrior(weights, means, covs);
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

void save_prior(const GMMPrior& prior, const std::string& path) {
  Json j;
  j["weights"] = vector_to_json(prior.weights());
  j["means"] = matrix_to_json(prior.means());
  Json covs = Json::array();
  for (const auto& cov : prior.covariances()) covs.push_back(matrix_to_json(cov));
  j["covariances"] = std::move(covs);
  write_file(j, path);
}

FitConfig load_fit_config(const std::string& path, FitConfig base) {
  const Json j = parse_file(path);
  FitConfig c = base;
  auto get = [&](const char* key, auto& slot) {
    if (j.contains(key)) slot = j.at(key).get<std::decay_t<decltype(slot)>>();
  };
  get("max_iters", c.max_iters);
  get("learning_rate", c.learning_rate);
  get("adam_beta1", c.adam_beta1);
  get("adam_beta2", c.adam_beta2);
  get("adam_eps", c.adam_eps);
  get("lr_decay", c.lr_decay);
  get("rel_tol", c.rel_tol);
  get("rel_window", c.rel_window);
  get("beta_clamp", c.beta_clamp);
  get("freeze_translation", c.freeze_translation);
  get("use_visibility", c.use_visibility);
  get("seed", c.seed);
  if (j.contains("weights")) {
    const Json& w = j.at("weights");
    auto getw = [&](const char* key, double& slot) {
      if (w.contains(key)) slot = w.at(key).get<double>();
    };
    getw("joint", c.weights.joint);
    getw("vert", c.weights.vert);
    getw("r_joint", c.weights.r_joint);
    getw("norm", c.weights.norm);
    getw("edge", c.weights.edge);
    getw("vis", c.weights.vis);
    getw("depth", c.weights.depth);
    getw("uv", c.weights.uv);
    getw("smpl", c.weights.smpl);
    getw("smpl_vert", c.weights.smpl_vert);
    getw("smpl_joint", c.weights.smpl_joint);
    getw("prior", c.weights.prior);
  }
  c.validate();
  return c;
}

namespace {

Json config_to_json(const FitConfig& c) {
  Json j;
  j["max_iters"] = c.max_iters;
  j["learning_rate"] = c.learning_rate;
  j["adam_beta1"] = c.adam_beta1;
  j["adam_beta2"] = c.adam_beta2;
  j["adam_eps"] = c.adam_eps;
  j["lr_decay"] = c.lr_decay;
  j["rel_tol"] = c.rel_tol;
  j["rel_window"] = c.rel_window;
  j["beta_clamp"] = c.beta_clamp;
  j["freeze_translation"] = c.freeze_translation;
  j["use_visibility"] = c.use_visibility;
  j["seed"] = c.seed;
  j["weights"] = {{"joint", c.weights.joint},         {"vert", c.weights.vert},
                  {"r_joint", c.weights.r_joint},     {"norm", c.weights.norm},
                  {"edge", c.weights.edge},           {"vis", c.weights.vis},
                  {"depth", c.weights.depth},         {"uv", c.weights.uv},
                  {"smpl", c.weights.smpl},           {"smpl_vert", c.weights.smpl_vert},
                  {"smpl_joint", c.weights.smpl_joint}, {"prior", c.weights.prior}};
  return j;
}

}  // namespace

void save_fit_result(const FitResult& result, const FitConfig& config, const std::string& path) {
  Json j;
  j["theta"] = matrix_to_json(result.theta);
  j["beta"] = vector_to_json(result.beta);
  j["translation"] = {result.translation.x(), result.translation.y(), result.translation.z()};
  j["final_objective"] = result.final_objective;
  j["iterations"] = result.iterations;
  j["converged"] = result.converged;
  j["low_confidence_init"] = result.low_confidence_init;
  Json trace = Json::array();
  for (const auto& t : result.trace) {
    trace.push_back({{"iter", t.iter},
                     {"total", t.total},
                     {"smpl_vert", t.smpl_vert},
                     {"smpl_joint", t.smpl_joint},
                     {"prior", t.prior},
                     {"edge", t.edge}});
  }
  j["trace"] = std::move(trace);
  j["config"] = config_to_json(config);
  write_file(j, path);
}

FitResult load_fit_result(const std::string& path) {
  const Json j = parse_file(path);
  FitResult r;
  r.theta = json_to_matrix(field(j, path, "theta"), path + ":theta", 3);
  r.beta = json_to_vector(field(j, path, "beta"), path + ":beta");
  const Json& t = field(j, path, "translation");
  r.translation = Vec3(t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>());
  r.final_objective = field(j, path, "final_objective").get<double>();
  r.iterations = field(j, path, "iterations").get<int>();
  r.converged = field(j, path, "converged").get<bool>();
  if (j.contains("low_confidence_init")) r.low_confidence_init = j.at("low_confidence_init").get<bool>();
  if (j.contains("trace")) {
    for (const auto& e : j.at("trace")) {
      FitIterTrace it;
      it.iter = e.at("iter").get<int>();
      it.total = e.at("total").get<double>();
      it.smpl_vert = e.value("smpl_vert", 0.0);
      it.smpl_joint = e.value("smpl_joint", 0.0);
      it.prior = e.value("prior", 0.0);
      it.edge = e.value("edge", 0.0);
      r.trace.push_back(it);
    }
  }
  return r;
}

void save_iuv(const DenseUVMap& iuv, const std::string& png_path, bool with_sidecar) {
  iuv.validate();
  cv::Mat image(iuv.height, iuv.width, CV_8UC3);
  for (int y = 0; y < iuv.height; ++y) {
    for (int x = 0; x < iuv.width; ++x) {
      const int idx = iuv.index(x, y);
      if (iuv.part[idx] > 255)
        throw ValidationError("iuv: part id " + std::to_string(iuv.part[idx]) +
                              " does not fit 8 bits");
      auto& px = image.at<cv::Vec3b>(y, x);
      px[2] = static_cast<unsigned char>(iuv.part[idx]);                       // R
      px[1] = static_cast<unsigned char>(std::lround(255.0 * iuv.u[idx]));     // G
      px[0] = static_cast<unsigned char>(std::lround(255.0 * iuv.v[idx]));     // B
    }
  }
  if (!cv::imwrite(png_path, image))
    throw ValidationError("cannot write PNG: " + png_path);
  if (with_sidecar) {
    Json j;
    j["width"] = iuv.width;
    j["height"] = iuv.height;
    j["part"] = iuv.part;
    j["u"] = iuv.u;
    j["v"] = iuv.v;
    write_file(j, png_path + ".json");
  }
}

DenseUVMap load_iuv(const std::string& png_path) {
  const std::string sidecar = png_path + ".json";
  if (std::filesystem::exists(sidecar)) {
    const Json j = parse_file(sidecar);
    DenseUVMap iuv;
    iuv.width = field(j, sidecar, "width").get<int>();
    iuv.height = field(j, sidecar, "height").get<int>();
    iuv.part = field(j, sidecar, "part").get<std::vector<int>>();
    iuv.u = field(j, sidecar, "u").get<std::vector<double>>();
    iuv.v = field(j, sidecar, "v").get<std::vector<double>>();
    iuv.validate();
    return iuv;
  }
  const cv::Mat image = cv::imread(png_path, cv::IMREAD_COLOR);
  if (image.empty()) throw ValidationError("cannot read PNG: " + png_path);
  DenseUVMap iuv;
  iuv.width = image.cols;
  iuv.height = image.rows;
  const size_t n = static_cast<size_t>(image.cols) * image.rows;
  iuv.part.resize(n);
  iuv.u.resize(n);
  iuv.v.resize(n);
  for (int y = 0; y < image.rows; ++y) {
    for (int x = 0; x < image.cols; ++x) {
      const auto& px = image.at<cv::Vec3b>(y, x);
      const int idx = iuv.index(x, y);
      iuv.part[idx] = px[2];
      iuv.u[idx] = iuv.part[idx] == 0 ? 0.0 : px[1] / 255.0;
      iuv.v[idx] = iuv.part[idx] == 0 ? 0.0 : px[0] / 255.0;
    }
  }
  iuv.validate();
  return iuv;
}

void save_labels(const VisibilityLabelsFile& labels, const std::string& path) {
  Json j;
  j["joints"] = {{"visibility", matrix_to_json(labels.joints)}};
  j["vertices"] = {{"visibility", matrix_to_json(labels.vertices)}};
  Json corr;
  corr["width"] = labels.correspondence.width;
  corr["height"] = labels.correspondence.height;
  Json p2v = Json::array();
  for (const auto& [pixel, vertex] : labels.correspondence.pixel_to_vertex)
    p2v.push_back({pixel, vertex});
  corr["pixel_to_vertex"] = std::move(p2v);
  Json v2p = Json::array();
  for (const auto& pixels : labels.correspondence.vertex_to_pixel) v2p.push_back(pixels);
  corr["vertex_to_pixel"] = std::move(v2p);
  j["correspondence"] = std::move(corr);
  write_file(j, path);
}

VisibilityLabelsFile load_labels(const std::string& path) {
  const Json j = parse_file(path);
  VisibilityLabelsFile labels;
  labels.joints = json_to_matrix(field(field(j, path, "joints"), path + ":joints", "visibility"),
                                 path + ":joints.visibility", 3);
  labels.vertices =
      json_to_matrix(field(field(j, path, "vertices"), path + ":vertices", "visibility"),
                     path + ":vertices.visibility", 3);
  const Json& corr = field(j, path, "correspondence");
  labels.correspondence.width = field(corr, path, "width").get<int>();
  labels.correspondence.height = field(corr, path, "height").get<int>();
  for (const auto& pair : field(corr, path, "pixel_to_vertex"))
    labels.correspondence.pixel_to_vertex.emplace(pair.at(0).get<int>(), pair.at(1).get<int>());
  for (const auto& pixels : field(corr, path, "vertex_to_pixel"))
    labels.correspondence.vertex_to_pixel.push_back(pixels.get<std::vector<int>>());
  return labels;
}

void save_ground_truth(const SynthGroundTruth& gt, const std::string& path) {
  Json j;
  j["theta"] = matrix_to_json(gt.theta);
  j["beta"] = vector_to_json(gt.beta);
  j["translation"] = {gt.translation.x(), gt.translation.y(), gt.translation.z()};
  j["joints_mm"] = matrix_to_json(gt.joints_mm);
  j["vertices_mm"] = matrix_to_json(gt.vertices_mm);
  j["body_height_mm"] = gt.body_height_mm;
  j["true_visibility"] = {{"vertex_sz", gt.vertex_sz}, {"joint_sz", gt.joint_sz}};
  write_file(j, path);
}

SynthGroundTruth load_ground_truth(const std::string& path) {
  const Json j = parse_file(path);
  SynthGroundTruth gt;
  gt.theta = json_to_matrix(field(j, path, "theta"), path + ":theta", 3);
  gt.beta = json_to_vector(field(j, path, "beta"), path + ":beta");
  const Json& t = field(j, path, "translation");
  gt.translation = Vec3(t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>());
  gt.joints_mm = json_to_matrix(field(j, path, "joints_mm"), path + ":joints_mm", 3);
  gt.vertices_mm = json_to_matrix(field(j, path, "vertices_mm"), path + ":vertices_mm", 3);
  gt.body_height_mm = field(j, path, "body_height_mm").get<double>();
  if (j.contains("true_visibility")) {
    const Json& tv = j.at("true_visibility");
    gt.vertex_sz = tv.at("vertex_sz").get<std::vector<std::uint8_t>>();
    gt.joint_sz = tv.at("joint_sz").get<std::vector<std::uint8_t>>();
  }
  return gt;
}

void export_obj(const MatX3& vertices, const FaceMatrix& faces, const std::string& path) {
  if (vertices.rows() == 0) throw ValidationError("export_obj: empty mesh, nothing written");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write file: " + path);
  char line[128];
  for (int i = 0; i < vertices.rows(); ++i) {
    std::snprintf(line, sizeof(line), "v %.6f %.6f %.6f\n", vertices(i, 0), vertices(i, 1),
                  vertices(i, 2));
    out << line;
  }
  for (int f = 0; f < faces.rows(); ++f) {
    std::snprintf(line, sizeof(line), "f %d %d %d\n", faces(f, 0) + 1, faces(f, 1) + 1,
                  faces(f, 2) + 1);
    out << line;
  }
  if (!out) throw ValidationError("write failed: " + path);
}

}  // namespace visfit
