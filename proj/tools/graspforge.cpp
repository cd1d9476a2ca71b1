// graspforge command-line front end.

#include "graspforge/aggregate.hpp"
#include "graspforge/error.hpp"
#include "graspforge/heatmap.hpp"
#include "graspforge/metrics.hpp"
#include "graspforge/parallel.hpp"
#include "graspforge/pipeline.hpp"
#include "graspforge/sample.hpp"
#include "graspforge/scenario.hpp"
#include "graspforge/solve.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using namespace graspforge;

namespace {

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

void stamp(nlohmann::json& j, std::uint64_t seed, const nlohmann::json& config) {
  j["seed"] = seed;
  j["config"] = config;
  j["config_hash"] = config_hash(config);
}

/// Command-line overrides for defaults spread over the modules.
struct Overrides {
  std::optional<double> lr, mu, tau, sigma_min, sigma_max, hand_t_f, object_t_f;
  std::optional<int> phase1, phase2, nv, n, hand_k, object_t_k, object_r_k, hand_phys_k, object_phys_k, pa_phase1,
      pa_phase2;
  std::optional<std::string> generator;

  void add_solver(CLI::App* app) {
    app->add_option("--lr", lr, "Adam learning rate");
    app->add_option("--phase1", phase1, "phase-1 steps");
    app->add_option("--phase2", phase2, "phase-2 steps");
    app->add_option("--mu", mu, "friction coefficient");
    app->add_option("--nv", nv, "friction cone vectors");
  }
  void add_generator(CLI::App* app) {
    app->add_option("--n", n, "candidates per entity");
    app->add_option("--generator", generator, "pf-ode or perturbation");
    app->add_option("--sigma-min", sigma_min, "noise schedule sigma_min");
    app->add_option("--sigma-max", sigma_max, "noise schedule sigma_max");
    app->add_option("--hand-t-f", hand_t_f, "PF-ODE start time for hands");
    app->add_option("--object-t-f", object_t_f, "PF-ODE start time for objects");
  }
  void add_aggregation(CLI::App* app) {
    app->add_option("--hand-k", hand_k, "visual top-K per hand joint");
    app->add_option("--object-t-k", object_t_k, "visual top-K, object translation");
    app->add_option("--object-r-k", object_r_k, "visual top-K, object rotation");
    app->add_option("--hand-phys-k", hand_phys_k, "physics top-K, hand");
    app->add_option("--object-phys-k", object_phys_k, "physics top-K, object");
    app->add_option("--pa-phase1", pa_phase1, "phase-1 steps per hand candidate");
    app->add_option("--pa-phase2", pa_phase2, "phase-2 steps per hand candidate");
  }
  void add_metrics(CLI::App* app) { app->add_option("--tau", tau, "contact threshold in meters"); }

  void apply(SolverConfig& s) const {
    if (lr) s.learning_rate = *lr;
    if (phase1) s.phase1_steps = *phase1;
    if (phase2) s.phase2_steps = *phase2;
    if (mu) s.mu = *mu;
    if (nv) s.cone_count = *nv;
  }
  void apply(GeneratorConfig& g) const {
    if (n) g.n = *n;
    if (generator) g.kind = *generator;
    if (sigma_min) g.schedule.sigma_min = *sigma_min;
    if (sigma_max) g.schedule.sigma_max = *sigma_max;
    if (hand_t_f) g.hand_t_f = *hand_t_f;
    if (object_t_f) g.object_t_f = *object_t_f;
    g.validate();
  }
  void apply(AggregationConfig& a) const {
    if (hand_k) a.hand_k = *hand_k;
    if (object_t_k) a.object_t_k = *object_t_k;
    if (object_r_k) a.object_r_k = *object_r_k;
    if (hand_phys_k) a.hand_phys_k = *hand_phys_k;
    if (object_phys_k) a.object_phys_k = *object_phys_k;
    if (pa_phase1) a.hand_solver.phase1_steps = *pa_phase1;
    if (pa_phase2) a.hand_solver.phase2_steps = *pa_phase2;
    if (mu) a.hand_solver.mu = a.object_solver.mu = *mu;
    if (nv) a.hand_solver.cone_count = a.object_solver.cone_count = *nv;
    a.validate();
  }
  void apply(MetricsConfig& m) const {
    if (tau) m.contact_threshold = *tau;
  }
};

CorruptionSpec parse_corruption(const std::string& spec) {
  CorruptionSpec c;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw InvalidParameter("corruption entry '" + item + "' is not key=value");
    const std::string key = item.substr(0, eq);
    double value = 0.0;
    try {
      value = std::stod(item.substr(eq + 1));
    } catch (const std::exception&) {
      throw InvalidParameter("corruption value in '" + item + "' is not a number");
    }
    if (key == "noise")
      c.noise_sigma = value;
    else if (key == "dropout")
      c.dropout = value;
    else if (key == "jitter")
      c.jitter_sigma = value;
    else
      throw InvalidParameter("unknown corruption '" + key + "' (noise, dropout, jitter)");
  }
  return c;
}

// Anchors, forces (blue) and gravity (yellow) projected into the image.
std::string forces_svg(const Scenario& s, const SolveReport& report) {
  const CameraIntrinsics& k = s.camera;
  const double scale = 0.04;  // meters drawn per unit force
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << k.width << "\" height=\"" << k.height << "\">\n"
      << "<defs><marker id=\"tip\" viewBox=\"0 0 6 6\" refX=\"5\" refY=\"3\" markerWidth=\"5\" markerHeight=\"5\" "
         "orient=\"auto\"><path d=\"M0,0 L6,3 L0,6 z\" fill=\"context-stroke\"/></marker></defs>\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  const auto draw_mesh = [&](const TriMesh& mesh, const char* colour) {
    out << "<g stroke=\"" << colour << "\" stroke-width=\"0.3\" fill=\"none\">\n";
    for (const auto& f : mesh.faces) {
      out << "<path d=\"";
      for (int i = 0; i < 3; ++i) {
        const Vec3& p = mesh.vertices[f[i]];
        if (p.z() <= 1e-6) continue;
        const Vec2 uv = project_pinhole(p, k);
        out << (i == 0 ? 'M' : 'L') << uv.x() << ',' << uv.y() << ' ';
      }
      out << "z\"/>\n";
    }
    out << "</g>\n";
  };
  draw_mesh(transformed(s.object_mesh(), s.object_pose), "#999999");
  draw_mesh(skin_mesh(s.hand_pose, HandModel(s.shape)), "#e0b090");
  const auto arrow = [&](const Vec3& from, const Vec3& to, const char* colour, double width) {
    if (from.z() <= 1e-6 || to.z() <= 1e-6) return;
    const Vec2 a = project_pinhole(from, k), b = project_pinhole(to, k);
    out << "<line x1=\"" << a.x() << "\" y1=\"" << a.y() << "\" x2=\"" << b.x() << "\" y2=\"" << b.y()
        << "\" stroke=\"" << colour << "\" stroke-width=\"" << width << "\" marker-end=\"url(#tip)\"/>\n";
  };
  for (std::size_t i = 0; i < report.field.size(); ++i) {
    const auto& f = report.field[i];
    if (f.position.z() <= 1e-6) continue;
    const Vec2 uv = project_pinhole(f.position, k);
    out << "<circle cx=\"" << uv.x() << "\" cy=\"" << uv.y() << "\" r=\"1.5\" fill=\""
        << (report.frozen[i] ? "#bbbbbb" : "#d03030") << "\"/>\n";
    if (f.force.norm() > 1e-9) arrow(f.position, f.position + scale * f.force, "#1f4fd0", 1.2);
  }
  const Vec3 c = s.object_pose.apply(centroid(s.object_mesh()));
  arrow(c, c + scale * s.gravity.vector(), "#e0c000", 1.6);
  out << "</svg>\n";
  return out.str();
}

nlohmann::json solve_config_json(const SolverConfig& cfg, const Gravity& g) {
  return {{"solver", cfg.to_json()},
          {"gravity", {{"direction", {g.direction.x(), g.direction.y(), g.direction.z()}}, {"magnitude", g.magnitude}}}};
}

const HeatmapStack& pick_stack(const std::vector<HeatmapStack>& stacks, int channels, const std::string& path) {
  for (const auto& s : stacks)
    if (s.channels == channels) return s;
  throw SchemaError("'" + path + "' holds no " + std::to_string(channels) + "-channel heatmap stack");
}

nlohmann::json metrics_json(const MetricsRow& row, std::uint64_t seed, const nlohmann::json& config) {
  nlohmann::json j = {{"schema", kMetricsSchema}, {"samples", nlohmann::json::array({to_json(row)})}};
  const MetricsRow rows[] = {row};
  j["mean"] = to_json(average(rows));
  stamp(j, seed, config);
  return j;
}

std::string metrics_csv(const MetricsRow& row) {
  std::ostringstream out;
  const MetricsRow rows[] = {row};
  write_csv(out, rows);
  return out.str();
}

int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::Usage: return 2;
    case ErrorCategory::Schema: return 3;
    case ErrorCategory::Numeric: return 4;
    case ErrorCategory::Io: return 5;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"graspforge: pseudo-force labels, candidate aggregation and pose metrics"};
  app.require_subcommand(1);
  app.fallthrough();  // global options may follow the subcommand
  int threads = default_threads();
  app.add_option("--threads", threads, "worker threads (default: GRASPFORGE_THREADS or 1)")
      ->check(CLI::PositiveNumber);

  // scenario gen
  auto* scenario_cmd = app.add_subcommand("scenario", "synthetic scenarios");
  scenario_cmd->require_subcommand(1);
  auto* gen = scenario_cmd->add_subcommand("gen", "build a canonical scenario");
  std::string template_id;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  bool no_jitter = false;
  double depth = 0.45;
  gen->add_option("--template", template_id, "pinch-sphere, tripod-sphere, wrap-cylinder, palm-box, hover-no-contact")
      ->required();
  gen->add_option("--seed", gen_seed, "seed for the placement jitter");
  gen->add_option("-o,--output", gen_out, "output directory")->required();
  gen->add_flag("--no-jitter", no_jitter, "keep the base placement");
  gen->add_option("--depth", depth, "object depth in meters");

  // solve-forces
  auto* solve_cmd = app.add_subcommand("solve-forces", "two-phase pseudo-force solve");
  std::string solve_in, solve_out, solve_svg, solve_config;
  Overrides solve_ov;
  solve_cmd->add_option("-i,--input", solve_in, "scenario.json")->required();
  solve_cmd->add_option("-o,--output", solve_out, "report.json")->required();
  solve_cmd->add_option("--svg", solve_svg, "write a force diagram");
  solve_cmd->add_option("--config", solve_config, "solver config JSON");
  solve_ov.add_solver(solve_cmd);

  // gen-candidates
  auto* cand_cmd = app.add_subcommand("gen-candidates", "sample pose candidates");
  std::string cand_in, cand_out, cand_entity, cand_config;
  std::optional<double> cand_tf;
  std::optional<std::uint64_t> cand_seed;
  Overrides cand_ov;
  cand_cmd->add_option("-i,--input", cand_in, "scenario.json")->required();
  cand_cmd->add_option("--entity", cand_entity, "hand or object")->required()->check(CLI::IsMember({"hand", "object"}));
  cand_cmd->add_option("--t-f", cand_tf, "PF-ODE start time (default 0.55 hand, 0.65 object)");
  cand_cmd->add_option("--seed", cand_seed, "seed (default: scenario seed)");
  cand_cmd->add_option("-o,--output", cand_out, "candidates.json")->required();
  cand_cmd->add_option("--config", cand_config, "generator config JSON");
  cand_ov.add_generator(cand_cmd);

  // heatmaps
  auto* hm_cmd = app.add_subcommand("heatmaps", "render reference heatmaps");
  std::string hm_in, hm_out, hm_corrupt, hm_svg;
  double hm_sigma = 2.0;
  std::optional<std::uint64_t> hm_seed;
  hm_cmd->add_option("-i,--input", hm_in, "scenario.json")->required();
  hm_cmd->add_option("-o,--output", hm_out, "heatmaps.bin")->required();
  hm_cmd->add_option("--corrupt", hm_corrupt, "e.g. noise=0.05,dropout=0.1,jitter=1");
  hm_cmd->add_option("--sigma", hm_sigma, "Gaussian sigma in heatmap pixels");
  hm_cmd->add_option("--seed", hm_seed, "corruption seed (default: scenario seed)");
  hm_cmd->add_option("--svg", hm_svg, "SVG path prefix");

  // aggregate
  auto* agg_cmd = app.add_subcommand("aggregate", "visual and physics aggregation");
  std::string agg_in, agg_hand, agg_object, agg_heatmaps, agg_out, agg_config;
  bool no_physics = false;
  std::optional<std::uint64_t> agg_seed;
  Overrides agg_ov;
  agg_cmd->add_option("-i,--input", agg_in, "scenario.json")->required();
  agg_cmd->add_option("--hand-candidates", agg_hand, "hand candidates.json")->required();
  agg_cmd->add_option("--object-candidates", agg_object, "object candidates.json")->required();
  agg_cmd->add_option("--heatmaps", agg_heatmaps, "heatmaps.bin")->required();
  agg_cmd->add_option("-o,--output", agg_out, "aggregation.json")->required();
  agg_cmd->add_option("--config", agg_config, "aggregation config JSON");
  agg_cmd->add_option("--seed", agg_seed, "seed recorded in the report (default: scenario seed)");
  agg_cmd->add_flag("--no-physics", no_physics, "visual aggregation only");
  agg_ov.add_aggregation(agg_cmd);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "pose and physics metrics");
  std::string eval_pred, eval_scenario, eval_out, eval_csv, eval_config;
  Overrides eval_ov;
  eval_cmd->add_option("--pred", eval_pred, "aggregation.json")->required();
  eval_cmd->add_option("--scenario", eval_scenario, "scenario.json")->required();
  eval_cmd->add_option("-o,--output", eval_out, "metrics.json")->required();
  eval_cmd->add_option("--csv", eval_csv, "metrics.csv");
  eval_cmd->add_option("--config", eval_config, "metrics config JSON");
  eval_ov.add_metrics(eval_cmd);
  eval_ov.add_solver(eval_cmd);

  // pipeline
  auto* pipe_cmd = app.add_subcommand("pipeline", "every stage end to end");
  std::string pipe_in, pipe_out, pipe_config, pipe_corrupt;
  std::optional<std::uint64_t> pipe_seed;
  bool pipe_no_physics = false;
  Overrides pipe_ov;
  pipe_cmd->add_option("-i,--input", pipe_in, "scenario.json")->required();
  pipe_cmd->add_option("--seed", pipe_seed, "pipeline seed (default: scenario seed)");
  pipe_cmd->add_option("-o,--output", pipe_out, "output directory")->required();
  pipe_cmd->add_option("--config", pipe_config, "pipeline config JSON");
  pipe_cmd->add_option("--corrupt", pipe_corrupt, "heatmap corruption, e.g. noise=0.05");
  pipe_cmd->add_flag("--no-physics", pipe_no_physics, "visual aggregation only");
  pipe_ov.add_solver(pipe_cmd);
  pipe_ov.add_generator(pipe_cmd);
  pipe_ov.add_aggregation(pipe_cmd);
  pipe_ov.add_metrics(pipe_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) {
      TemplateOverrides ov;
      ov.jitter = !no_jitter;
      ov.depth = depth;
      const Scenario s = build_canonical(template_id, gen_seed, ov);
      const fs::path dir(gen_out);
      fs::create_directories(dir);
      nlohmann::json j = s.to_json();
      stamp(j, gen_seed, {{"template", template_id}, {"jitter", ov.jitter}, {"depth", ov.depth}});
      write_json(dir / "scenario.json", j);
      save_obj(transformed(s.object_mesh(), s.object_pose), dir / "object.obj");
      save_obj(skin_mesh(s.hand_pose, HandModel(s.shape)), dir / "hand.obj");
      std::cout << "wrote " << (dir / "scenario.json").string() << '\n';
    } else if (*solve_cmd) {
      const Scenario s = load_scenario(solve_in);
      SolverConfig cfg = solve_config.empty() ? SolverConfig{} : SolverConfig::from_json(read_json(solve_config));
      solve_ov.apply(cfg);
      cfg.validate();
      const TriMesh mesh = s.object_mesh();
      const SolveReport report =
          solve_pseudo_forces(HandModel(s.shape), s.hand_pose, MeshSdf(mesh), s.object_pose, s.gravity, cfg);
      nlohmann::json j = report.to_json();
      j["schema"] = kSolveReportSchema;
      j["scenario"] = s.name;
      stamp(j, s.seed, solve_config_json(cfg, s.gravity));
      write_json(solve_out, j);
      if (!solve_svg.empty()) write_text(solve_svg, forces_svg(s, report));
      std::cout << "L_force " << report.residuals.force << "  L_torque " << report.residuals.torque
                << "  converged " << (report.converged ? "yes" : "no") << '\n';
    } else if (*cand_cmd) {
      const Scenario s = load_scenario(cand_in);
      GeneratorConfig cfg = cand_config.empty() ? GeneratorConfig{} : GeneratorConfig::from_json(read_json(cand_config));
      cand_ov.apply(cfg);
      const Entity entity = entity_from_string(cand_entity);
      if (cand_tf) (entity == Entity::Hand ? cfg.hand_t_f : cfg.object_t_f) = *cand_tf;
      cfg.validate();
      const std::uint64_t seed = cand_seed.value_or(s.seed);
      const CandidateSet set = generate_candidates(s, entity, cfg, seed, threads);
      nlohmann::json j = set.to_json();
      stamp(j, seed, cfg.to_json());
      write_json(cand_out, j);
      std::cout << "wrote " << set.size() << ' ' << cand_entity << " candidates\n";
    } else if (*hm_cmd) {
      const Scenario s = load_scenario(hm_in);
      HeatmapConfig cfg;
      cfg.sigma = hm_sigma;
      if (!hm_corrupt.empty()) cfg.corruption = parse_corruption(hm_corrupt);
      const std::uint64_t seed = hm_seed.value_or(s.seed);
      cfg.seed = substream_seed(seed, "hand-heatmaps");
      const HeatmapStack hand = render_hand_heatmaps(s, cfg);
      cfg.seed = substream_seed(seed, "object-heatmaps");
      const HeatmapStack object = render_object_heatmaps(s, cfg);
      const HeatmapStack stacks[] = {hand, object};
      if (fs::path(hm_out).has_parent_path()) fs::create_directories(fs::path(hm_out).parent_path());
      save_heatmaps(hm_out, stacks);
      if (!hm_svg.empty()) {
        std::ostringstream a, b;
        write_heatmap_svg(a, hand);
        write_heatmap_svg(b, object);
        write_text(hm_svg + "_hand.svg", a.str());
        write_text(hm_svg + "_object.svg", b.str());
      }
      std::cout << "wrote " << hm_out << '\n';
    } else if (*agg_cmd) {
      const Scenario s = load_scenario(agg_in);
      AggregationConfig cfg =
          agg_config.empty() ? AggregationConfig{} : AggregationConfig::from_json(read_json(agg_config));
      agg_ov.apply(cfg);
      if (no_physics) cfg.physics = false;
      cfg.threads = threads;
      const auto stacks = load_heatmaps(agg_heatmaps);
      const AggregationReport rep =
          aggregate_full(s, load_candidates(agg_hand), load_candidates(agg_object), pick_stack(stacks, 21, agg_heatmaps),
                         pick_stack(stacks, 27, agg_heatmaps), cfg);
      nlohmann::json j = rep.to_json();
      stamp(j, agg_seed.value_or(s.seed), cfg.to_json());
      write_json(agg_out, j);
      std::cout << "wrote " << agg_out << '\n';
    } else if (*eval_cmd) {
      const Scenario s = load_scenario(eval_scenario);
      const nlohmann::json pred = read_json(eval_pred);
      const AggregatedPoses poses = read_aggregated_poses(pred);
      MetricsConfig mcfg = eval_config.empty() ? MetricsConfig{} : metrics_config_from_json(read_json(eval_config));
      eval_ov.apply(mcfg);
      SolverConfig scfg;
      eval_ov.apply(scfg);
      scfg.validate();
      const MetricsRow row = evaluate_prediction(s, poses.hand, poses.object, mcfg, scfg, s.name);
      const std::uint64_t seed = pred.contains("seed") ? pred["seed"].get<std::uint64_t>() : s.seed;
      write_json(eval_out, metrics_json(row, seed, {{"metrics", to_json(mcfg)}, {"eval_solver", scfg.to_json()}}));
      if (!eval_csv.empty()) write_text(eval_csv, metrics_csv(row));
      std::cout << "MJE " << row.pose.mje << " mm  OCE " << row.pose.oce << " mm\n";
    } else if (*pipe_cmd) {
      const Scenario s = load_scenario(pipe_in);
      PipelineConfig cfg = pipe_config.empty() ? PipelineConfig{} : PipelineConfig::from_json(read_json(pipe_config));
      pipe_ov.apply(cfg.eval_solver);
      pipe_ov.apply(cfg.generator);
      pipe_ov.apply(cfg.aggregation);
      pipe_ov.apply(cfg.metrics);
      if (!pipe_corrupt.empty()) cfg.heatmaps.corruption = parse_corruption(pipe_corrupt);
      if (pipe_no_physics) cfg.aggregation.physics = false;
      cfg.eval_solver.validate();
      const std::uint64_t seed = pipe_seed.value_or(s.seed);
      const PipelineResult r = run_pipeline(s, seed, cfg, threads);
      const nlohmann::json config = cfg.to_json();
      const fs::path dir(pipe_out);
      fs::create_directories(dir);
      const HeatmapStack stacks[] = {r.hand_heatmaps, r.object_heatmaps};
      save_heatmaps(dir / "heatmaps.bin", stacks);
      for (const auto* set : {&r.hand_candidates, &r.object_candidates}) {
        nlohmann::json j = set->to_json();
        stamp(j, seed, config);
        write_json(dir / (to_string(set->entity) + "_candidates.json"), j);
      }
      nlohmann::json agg = r.aggregation.to_json();
      stamp(agg, seed, config);
      write_json(dir / "aggregation.json", agg);
      write_json(dir / "metrics.json", metrics_json(r.metrics, seed, config));
      write_text(dir / "metrics.csv", metrics_csv(r.metrics));
      std::cout << "MJE " << r.metrics.pose.mje << " mm  OCE " << r.metrics.pose.oce << " mm  wrote "
                << dir.string() << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.category());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: SchemaError: " << e.what() << '\n';
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: IoError: " << e.what() << '\n';
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
