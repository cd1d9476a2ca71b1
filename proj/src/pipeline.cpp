#include "graspforge/pipeline.hpp"

#include "graspforge/error.hpp"
#include "json_util.hpp"

#include <cstdio>

namespace graspforge {

std::string config_hash(const nlohmann::json& config) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : config.dump()) h = (h ^ c) * 0x100000001B3ULL;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

HeatmapStack render_projected(std::span<const Vec3> points, const CameraIntrinsics& camera, const HeatmapConfig& cfg) {
  std::vector<Vec2> uv;
  uv.reserve(points.size());
  for (const auto& p : points) {
    // a point behind the camera gets an empty channel
    if (p.z() <= 1e-6)
      uv.emplace_back(-1e6, -1e6);
    else
      uv.push_back(project_pinhole(p, camera) * kImageToHeatmap);
  }
  return corrupt(render_gaussian(uv, cfg), cfg);
}

template <class T>
void optional_read(const nlohmann::json& j, const char* path, const char* key, T& out) {
  if (j.contains(key)) out = detail::read<T>(j, path, key);
}

}  // namespace

HeatmapStack render_hand_heatmaps(const Scenario& s, const HeatmapConfig& cfg) {
  const auto kp = forward_kinematics(s.hand_pose, HandModel(s.shape));
  return render_projected(kp, s.camera, cfg);
}

HeatmapStack render_object_heatmaps(const Scenario& s, const HeatmapConfig& cfg) {
  const auto local = bbox_keypoints_27(s.object_mesh());
  std::vector<Vec3> world;
  for (const auto& p : local) world.push_back(s.object_pose.apply(p));
  return render_projected(world, s.camera, cfg);
}

nlohmann::json to_json(const HeatmapConfig& cfg) {
  return {{"sigma", cfg.sigma},
          {"noise_sigma", cfg.corruption.noise_sigma},
          {"dropout", cfg.corruption.dropout},
          {"jitter_sigma", cfg.corruption.jitter_sigma},
          {"seed", cfg.seed}};
}

HeatmapConfig heatmap_config_from_json(const nlohmann::json& j) {
  detail::expect_object(j, "heatmaps", {"sigma", "noise_sigma", "dropout", "jitter_sigma", "seed"});
  HeatmapConfig c;
  optional_read(j, "heatmaps", "sigma", c.sigma);
  optional_read(j, "heatmaps", "noise_sigma", c.corruption.noise_sigma);
  optional_read(j, "heatmaps", "dropout", c.corruption.dropout);
  optional_read(j, "heatmaps", "jitter_sigma", c.corruption.jitter_sigma);
  optional_read(j, "heatmaps", "seed", c.seed);
  c.validate();
  return c;
}

void GeneratorConfig::validate() const {
  if (kind != "pf-ode" && kind != "perturbation")
    throw InvalidParameter("generator must be 'pf-ode' or 'perturbation', got '" + kind + "'");
  if (n < 1) throw InvalidParameter("need at least one candidate");
  schedule.validate();
  if (!(hand_t_f > schedule.eps_time && hand_t_f <= 1.0 && object_t_f > schedule.eps_time && object_t_f <= 1.0))
    throw InvalidParameter("t_f must lie in (eps_time, 1]");
  if (hand_sigma0 < 0.0 || object_rotation_sigma0 < 0.0 || object_translation_sigma0 < 0.0)
    throw InvalidParameter("prior spreads must be nonnegative");
  if (!(tolerances.atol > 0.0 && tolerances.rtol > 0.0)) throw InvalidParameter("ODE tolerances must be positive");
}

nlohmann::json GeneratorConfig::to_json() const {
  return {{"kind", kind},
          {"n", n},
          {"hand_t_f", hand_t_f},
          {"object_t_f", object_t_f},
          {"sigma_min", schedule.sigma_min},
          {"sigma_max", schedule.sigma_max},
          {"eps_time", schedule.eps_time},
          {"atol", tolerances.atol},
          {"rtol", tolerances.rtol},
          {"hand_sigma0", hand_sigma0},
          {"object_rotation_sigma0", object_rotation_sigma0},
          {"object_translation_sigma0", object_translation_sigma0},
          {"perturbation",
           {{"rotation_sigma", perturbation.rotation_sigma},
            {"translation_sigma", perturbation.translation_sigma},
            {"include_reference", perturbation.include_reference}}}};
}

GeneratorConfig GeneratorConfig::from_json(const nlohmann::json& j) {
  detail::expect_object(j, "generator",
                        {"kind", "n", "hand_t_f", "object_t_f", "sigma_min", "sigma_max", "eps_time", "atol", "rtol",
                         "hand_sigma0", "object_rotation_sigma0", "object_translation_sigma0", "perturbation"});
  GeneratorConfig c;
  const char* p = "generator";
  optional_read(j, p, "kind", c.kind);
  optional_read(j, p, "n", c.n);
  optional_read(j, p, "hand_t_f", c.hand_t_f);
  optional_read(j, p, "object_t_f", c.object_t_f);
  optional_read(j, p, "sigma_min", c.schedule.sigma_min);
  optional_read(j, p, "sigma_max", c.schedule.sigma_max);
  optional_read(j, p, "eps_time", c.schedule.eps_time);
  optional_read(j, p, "atol", c.tolerances.atol);
  optional_read(j, p, "rtol", c.tolerances.rtol);
  optional_read(j, p, "hand_sigma0", c.hand_sigma0);
  optional_read(j, p, "object_rotation_sigma0", c.object_rotation_sigma0);
  optional_read(j, p, "object_translation_sigma0", c.object_translation_sigma0);
  if (j.contains("perturbation")) {
    const auto& q = j["perturbation"];
    detail::expect_object(q, "generator.perturbation", {"rotation_sigma", "translation_sigma", "include_reference"});
    optional_read(q, "generator.perturbation", "rotation_sigma", c.perturbation.rotation_sigma);
    optional_read(q, "generator.perturbation", "translation_sigma", c.perturbation.translation_sigma);
    optional_read(q, "generator.perturbation", "include_reference", c.perturbation.include_reference);
  }
  c.validate();
  return c;
}

CandidateSet generate_candidates(const Scenario& s, Entity entity, const GeneratorConfig& cfg, std::uint64_t seed,
                                 int threads) {
  cfg.validate();
  if (cfg.kind == "perturbation")
    return entity == Entity::Hand ? perturb_hand(s.hand_pose, cfg.perturbation, cfg.n, seed)
                                  : perturb_object(s.object_pose, cfg.perturbation, cfg.n, seed);
  SampleOptions opt;
  opt.n = cfg.n;
  opt.schedule = cfg.schedule;
  opt.tolerances = cfg.tolerances;
  opt.threads = threads;
  Eigen::VectorXd mu, sigma0;
  if (entity == Entity::Hand) {
    opt.t_f = cfg.hand_t_f;
    mu = flatten(to_candidate(s.hand_pose));
    sigma0 = Eigen::VectorXd::Constant(mu.size(), cfg.hand_sigma0);
  } else {
    opt.t_f = cfg.object_t_f;
    mu = flatten(to_candidate(s.object_pose));
    sigma0.resize(9);
    sigma0 << Eigen::VectorXd::Constant(6, cfg.object_rotation_sigma0),
        Eigen::VectorXd::Constant(3, cfg.object_translation_sigma0);
  }
  const nlohmann::json description = {{"family", "gaussian"}, {"centre", "scenario pose"},
                                      {"sigma0", std::vector<double>(sigma0.data(), sigma0.data() + sigma0.size())}};
  return sample_candidates(entity, gaussian_score(mu, sigma0, cfg.schedule), seed, opt, description);
}

nlohmann::json to_json(const MetricsConfig& cfg) {
  return {{"contact_threshold", cfg.contact_threshold},
          {"max_model_points", cfg.max_model_points},
          {"add_fraction", cfg.add_fraction},
          {"pa_mode", cfg.pa_mode == AlignMode::Similarity ? "similarity" : "rigid"}};
}

MetricsConfig metrics_config_from_json(const nlohmann::json& j) {
  detail::expect_object(j, "metrics", {"contact_threshold", "max_model_points", "add_fraction", "pa_mode"});
  MetricsConfig c;
  optional_read(j, "metrics", "contact_threshold", c.contact_threshold);
  optional_read(j, "metrics", "max_model_points", c.max_model_points);
  optional_read(j, "metrics", "add_fraction", c.add_fraction);
  if (j.contains("pa_mode")) {
    const auto mode = detail::read<std::string>(j, "metrics", "pa_mode");
    if (mode != "similarity" && mode != "rigid") throw SchemaError("metrics.pa_mode must be similarity or rigid");
    c.pa_mode = mode == "rigid" ? AlignMode::Rigid : AlignMode::Similarity;
  }
  if (!(c.contact_threshold >= 0.0) || c.max_model_points < 1 || !(c.add_fraction > 0.0))
    throw SchemaError("metrics config out of range");
  return c;
}

MetricsRow evaluate_prediction(const Scenario& s, const HandPose& hand, const RigidPose& object,
                               const MetricsConfig& metrics, const SolverConfig& solver, const std::string& name) {
  const HandModel model(s.shape);
  const TriMesh pred_mesh = skin_mesh(hand, model);
  HandGeometry pred{forward_kinematics(hand, model), pred_mesh.vertices};
  HandGeometry gt{forward_kinematics(s.hand_pose, model), skin_mesh(s.hand_pose, model).vertices};
  const TriMesh mesh = s.object_mesh();
  const MeshSdf sdf(mesh);
  MetricsRow row;
  row.name = name;
  row.pose = pose_errors(pred, gt, object, s.object_pose, mesh, s.symmetry, s.camera, metrics);
  const auto contact = contact_and_penetration(pred_mesh, sdf, object, metrics.contact_threshold);
  row.physics.cp = contact.contact ? 100.0 : 0.0;
  row.physics.pd = 1000.0 * contact.penetration;
  row.physics.equilibrium = stability_proxy(model, hand, sdf, object, s.gravity, solver);
  return row;
}

nlohmann::json to_json(const MetricsRow& row) {
  return {{"name", row.name}, {"pose", to_json(row.pose)}, {"physics", to_json(row.physics)}};
}

nlohmann::json PipelineConfig::to_json() const {
  return {{"heatmaps", graspforge::to_json(heatmaps)},
          {"generator", generator.to_json()},
          {"aggregation", aggregation.to_json()},
          {"metrics", graspforge::to_json(metrics)},
          {"eval_solver", eval_solver.to_json()}};
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
  detail::expect_object(j, "", {"heatmaps", "generator", "aggregation", "metrics", "eval_solver"});
  PipelineConfig c;
  if (j.contains("heatmaps")) c.heatmaps = heatmap_config_from_json(j["heatmaps"]);
  if (j.contains("generator")) c.generator = GeneratorConfig::from_json(j["generator"]);
  if (j.contains("aggregation")) c.aggregation = AggregationConfig::from_json(j["aggregation"]);
  if (j.contains("metrics")) c.metrics = metrics_config_from_json(j["metrics"]);
  if (j.contains("eval_solver")) c.eval_solver = SolverConfig::from_json(j["eval_solver"]);
  return c;
}

PipelineResult run_pipeline(const Scenario& s, std::uint64_t seed, const PipelineConfig& cfg, int threads) {
  PipelineResult r;
  HeatmapConfig hm = cfg.heatmaps;
  hm.seed = substream_seed(seed, "hand-heatmaps");
  r.hand_heatmaps = render_hand_heatmaps(s, hm);
  hm.seed = substream_seed(seed, "object-heatmaps");
  r.object_heatmaps = render_object_heatmaps(s, hm);
  r.hand_candidates = generate_candidates(s, Entity::Hand, cfg.generator, substream_seed(seed, "hand-candidates"), threads);
  r.object_candidates =
      generate_candidates(s, Entity::Object, cfg.generator, substream_seed(seed, "object-candidates"), threads);
  AggregationConfig agg = cfg.aggregation;
  agg.threads = threads;
  r.aggregation = aggregate_full(s, r.hand_candidates, r.object_candidates, r.hand_heatmaps, r.object_heatmaps, agg);
  r.metrics = evaluate_prediction(s, r.aggregation.hand, r.aggregation.object, cfg.metrics, cfg.eval_solver, s.name);
  return r;
}

}  // namespace graspforge
