#include "visfit/mini_model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <vector>

#include "visfit/rng.hpp"

namespace visfit {

namespace {

constexpr int kRingSegments = 6;  // vertices per ring (plus one seam duplicate)

struct TubeSpec {
  int part;
  Vec3 start;
  Vec3 end;
  double radius;
  int stations;
  std::vector<int> chain;        // joint ids along the tube, root end first
  std::vector<double> anchors;   // station fraction of each chain joint
};

double smoothstep(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

struct MeshBuilder {
  std::vector<Vec3> vertices;
  std::vector<Eigen::Vector3i> faces;
  std::vector<Eigen::Vector2d> uv;
  std::vector<int> part;
  std::vector<std::map<int, double>> weights;  // joint -> weight per vertex

  int add_vertex(const Vec3& p, double u, double v, int part_label,
                 std::map<int, double> w) {
    vertices.push_back(p);
    uv.emplace_back(u, v);
    part.push_back(part_label);
    weights.push_back(std::move(w));
    return static_cast<int>(vertices.size()) - 1;
  }
};

std::map<int, double> chain_weights(const TubeSpec& tube, double frac) {
  const auto& chain = tube.chain;
  const auto& anchors = tube.anchors;
  if (frac <= anchors.front()) return {{chain.front(), 1.0}};
  if (frac >= anchors.back()) return {{chain.back(), 1.0}};
  for (size_t q = 0; q + 1 < anchors.size(); ++q) {
    if (frac <= anchors[q + 1]) {
      const double t = (frac - anchors[q]) / (anchors[q + 1] - anchors[q]);
      const double w = smoothstep(t);
      if (w <= 0.0) return {{chain[q], 1.0}};
      if (w >= 1.0) return {{chain[q + 1], 1.0}};
      return {{chain[q], 1.0 - w}, {chain[q + 1], w}};
    }
  }
  return {{chain.back(), 1.0}};
}

void build_tube(const TubeSpec& tube, std::mt19937_64& rng, MeshBuilder& mesh) {
  const int m = kRingSegments;
  const int s_count = tube.stations;
  const Vec3 axis = (tube.end - tube.start).normalized();

  // stable orthonormal frame around the axis
  Vec3 ref = std::abs(axis.y()) < 0.9 ? Vec3(0, 1, 0) : Vec3(1, 0, 0);
  const Vec3 n1 = (ref - ref.dot(axis) * axis).normalized();
  const Vec3 n2 = axis.cross(n1);

  std::vector<std::vector<int>> rings(s_count);
  for (int t = 0; t < s_count; ++t) {
    const double frac = static_cast<double>(t) / (s_count - 1);
    const Vec3 center = tube.start + frac * (tube.end - tube.start);
    const double v_coord = 0.08 + 0.84 * frac;
    auto w = chain_weights(tube, frac);
    std::vector<double> radius_jitter(m);
    for (int c = 0; c < m; ++c)
      radius_jitter[c] = 1.0 + 0.02 * (2.0 * uniform_unit(rng) - 1.0);
    for (int c = 0; c <= m; ++c) {
      const double phi = 2.0 * std::numbers::pi * (c % m) / m;
      const double r = tube.radius * radius_jitter[c % m];
      const Vec3 p = center + r * (std::cos(phi) * n1 + std::sin(phi) * n2);
      rings[t].push_back(mesh.add_vertex(p, static_cast<double>(c) / m, v_coord, tube.part, w));
    }
  }

  const double cap = 0.6 * tube.radius;
  const int pole_lo = mesh.add_vertex(tube.start - cap * axis, 0.5, 0.0, tube.part,
                                      chain_weights(tube, 0.0));
  const int pole_hi = mesh.add_vertex(tube.end + cap * axis, 0.5, 1.0, tube.part,
                                      chain_weights(tube, 1.0));

  for (int t = 0; t + 1 < s_count; ++t) {
    for (int c = 0; c < m; ++c) {
      const int a = rings[t][c];
      const int b = rings[t][c + 1];
      const int cc = rings[t + 1][c + 1];
      const int d = rings[t + 1][c];
      mesh.faces.emplace_back(a, cc, b);
      mesh.faces.emplace_back(a, d, cc);
    }
  }
  for (int c = 0; c < m; ++c) {
    mesh.faces.emplace_back(pole_lo, rings[0][c], rings[0][c + 1]);
    mesh.faces.emplace_back(pole_hi, rings[s_count - 1][c + 1], rings[s_count - 1][c]);
  }
}

void subdivide(MeshBuilder& mesh) {
  std::map<std::pair<int, int>, int> midpoint;
  auto mid = [&](int a, int b) {
    const auto key = std::minmax(a, b);
    auto it = midpoint.find(key);
    if (it != midpoint.end()) return it->second;
    std::map<int, double> w;
    for (const auto& [j, val] : mesh.weights[a]) w[j] += 0.5 * val;
    for (const auto& [j, val] : mesh.weights[b]) w[j] += 0.5 * val;
    const int idx = mesh.add_vertex(0.5 * (mesh.vertices[a] + mesh.vertices[b]),
                                    0.5 * (mesh.uv[a].x() + mesh.uv[b].x()),
                                    0.5 * (mesh.uv[a].y() + mesh.uv[b].y()),
                                    mesh.part[a], std::move(w));
    midpoint.emplace(key, idx);
    return idx;
  };

  std::vector<Eigen::Vector3i> out;
  out.reserve(mesh.faces.size() * 4);
  for (const auto& f : mesh.faces) {
    const int ab = mid(f[0], f[1]);
    const int bc = mid(f[1], f[2]);
    const int ca = mid(f[2], f[0]);
    out.emplace_back(f[0], ab, ca);
    out.emplace_back(f[1], bc, ab);
    out.emplace_back(f[2], ca, bc);
    out.emplace_back(ab, bc, ca);
  }
  mesh.faces = std::move(out);
}

MatX nearest_k_regressor(const std::vector<Vec3>& targets, const MatX3& verts, int k) {
  MatX reg = MatX::Zero(static_cast<long>(targets.size()), verts.rows());
  for (size_t j = 0; j < targets.size(); ++j) {
    std::vector<std::pair<double, int>> dist(verts.rows());
    for (int i = 0; i < verts.rows(); ++i)
      dist[i] = {(verts.row(i).transpose() - targets[j]).squaredNorm(), i};
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    for (int q = 0; q < k; ++q) reg(static_cast<long>(j), dist[q].second) = 1.0 / k;
  }
  return reg;
}

}  // namespace

BodyModel make_mini_model(int n_subdiv, std::uint64_t seed) {
  if (n_subdiv < 0) throw ValidationError("make_mini_model: n_subdiv must be >= 0");

  // 16-joint skeleton, y-up T pose
  const std::vector<Vec3> joints = {
      {0.00, 1.00, 0.0},   // 0 pelvis
      {0.00, 1.15, 0.0},   // 1 spine
      {0.00, 1.35, 0.0},   // 2 chest
      {0.00, 1.62, 0.0},   // 3 head
      {0.18, 1.48, 0.0},   // 4 l_shoulder
      {0.45, 1.48, 0.0},   // 5 l_elbow
      {0.70, 1.48, 0.0},   // 6 l_wrist
      {-0.18, 1.48, 0.0},  // 7 r_shoulder
      {-0.45, 1.48, 0.0},  // 8 r_elbow
      {-0.70, 1.48, 0.0},  // 9 r_wrist
      {0.10, 0.92, 0.0},   // 10 l_hip
      {0.11, 0.50, 0.0},   // 11 l_knee
      {0.12, 0.08, 0.0},   // 12 l_ankle
      {-0.10, 0.92, 0.0},  // 13 r_hip
      {-0.11, 0.50, 0.0},  // 14 r_knee
      {-0.12, 0.08, 0.0},  // 15 r_ankle
  };
  const std::vector<int> parents = {-1, 0, 1, 2, 2, 4, 5, 2, 7, 8, 0, 10, 11, 0, 13, 14};
  const int nk = static_cast<int>(joints.size());

  const std::vector<TubeSpec> tubes = {
      {1, {0.00, 0.86, 0.0}, {0.00, 1.46, 0.0}, 0.150, 5, {0, 1, 2}, {0.15, 0.50, 0.85}},
      {2, {0.00, 1.50, 0.0}, {0.00, 1.80, 0.0}, 0.095, 3, {2, 3}, {-0.30, 0.40}},
      {3, {0.16, 1.48, 0.0}, {0.74, 1.48, 0.0}, 0.047, 5, {4, 5, 6}, {0.03, 0.50, 0.93}},
      {4, {-0.16, 1.48, 0.0}, {-0.74, 1.48, 0.0}, 0.047, 5, {7, 8, 9}, {0.03, 0.50, 0.93}},
      {5, {0.11, 0.92, 0.0}, {0.11, 0.02, 0.0}, 0.068, 5, {10, 11, 12}, {0.00, 0.47, 0.93}},
      {6, {-0.11, 0.92, 0.0}, {-0.11, 0.02, 0.0}, 0.068, 5, {13, 14, 15}, {0.00, 0.47, 0.93}},
  };

  std::mt19937_64 rng(seed ^ 0x5eedc0deULL);
  MeshBuilder mesh;
  for (const auto& tube : tubes) build_tube(tube, rng, mesh);
  for (int level = 0; level < n_subdiv; ++level) subdivide(mesh);

  const int nv = static_cast<int>(mesh.vertices.size());
  BodyModel model;
  model.template_vertices.resize(nv, 3);
  model.vertex_uv.resize(nv, 2);
  model.part_labels.resize(nv);
  model.skin_weights = MatX::Zero(nv, nk);
  for (int i = 0; i < nv; ++i) {
    model.template_vertices.row(i) = mesh.vertices[i].transpose();
    model.vertex_uv.row(i) = mesh.uv[i].transpose();
    model.part_labels(i) = mesh.part[i];
    for (const auto& [j, w] : mesh.weights[i]) model.skin_weights(i, j) = w;
  }
  model.faces.resize(static_cast<long>(mesh.faces.size()), 3);
  for (size_t f = 0; f < mesh.faces.size(); ++f)
    model.faces.row(static_cast<long>(f)) = mesh.faces[f].transpose();

  model.kin_parents.resize(nk);
  for (int k = 0; k < nk; ++k) model.kin_parents(k) = parents[k];
  model.kin_regressor = nearest_k_regressor(joints, model.template_vertices, 8);

  std::vector<Vec3> out_targets = joints;
  out_targets.push_back({0.00, 1.84, 0.0});   // 16 head top
  out_targets.push_back({0.77, 1.48, 0.0});   // 17 l_hand
  out_targets.push_back({-0.77, 1.48, 0.0});  // 18 r_hand
  out_targets.push_back({0.00, 1.25, 0.0});   // 19 mid spine
  model.joint_regressor_W = nearest_k_regressor(out_targets, model.template_vertices, 8);

  // four shape directions: height, bulk, arm length, leg length
  model.shape_dirs.assign(4, MatX3::Zero(nv, 3));
  for (int i = 0; i < nv; ++i) {
    const Vec3 p = model.template_vertices.row(i).transpose();
    model.shape_dirs[0].row(i) = Vec3(0.0, 0.12 * (p.y() - 1.0), 0.0).transpose();
    model.shape_dirs[1].row(i) = Vec3(0.08 * p.x(), 0.0, 0.08 * p.z()).transpose();
    const double arm = std::max(0.0, std::abs(p.x()) - 0.16);
    model.shape_dirs[2].row(i) =
        Vec3(0.15 * arm * (p.x() >= 0.0 ? 1.0 : -1.0), 0.0, 0.0).transpose();
    model.shape_dirs[3].row(i) = Vec3(0.0, 0.15 * std::min(0.0, p.y() - 0.92), 0.0).transpose();
  }

  model.validate();
  return model;
}

}  // namespace visfit
