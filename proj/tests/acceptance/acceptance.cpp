// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any selected criterion fails.
//
//   acceptance [--only N]... [--cli path/to/graspforge] [--work dir]

#include "graspforge/aggregate.hpp"
#include "graspforge/error.hpp"
#include "graspforge/metrics.hpp"
#include "graspforge/physics.hpp"
#include "graspforge/pipeline.hpp"
#include "graspforge/sample.hpp"
#include "graspforge/scenario.hpp"
#include "graspforge/solve.hpp"

#include <CLI11.hpp>
#include <Eigen/Geometry>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

using namespace graspforge;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

struct Options {
  std::string cli;
  fs::path work = fs::temp_directory_path() / "graspforge_acceptance";
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Vec3 gaussian_vec(std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  return {n(rng), n(rng), n(rng)};
}

double uniform(std::mt19937_64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  return Eigen::Quaterniond(n(rng), n(rng), n(rng), n(rng)).normalized().toRotationMatrix();
}

// Stable descending sort, NaN last: the reference every selection is held to.
std::vector<int> brute_top_k(const std::vector<double>& s, int k) {
  std::vector<int> idx(s.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (std::isnan(s[a]) || std::isnan(s[b])) return !std::isnan(s[a]) && std::isnan(s[b]);
    return s[a] > s[b];
  });
  idx.resize(static_cast<std::size_t>(std::clamp<int>(k, 0, static_cast<int>(s.size()))));
  return idx;
}

// 1. Friction cone geometry.
Outcome friction_cone(const Options&) {
  std::mt19937_64 rng(1);
  double angle_err = 0.0, violation = 0.0;
  for (double mu : {0.5, 1.0, 2.0}) {
    const FrictionConeBasis b = cone_basis(mu, 12);
    for (const auto& v : b.vectors)
      angle_err = std::max(angle_err, std::abs(std::atan2(v.head<2>().norm(), v.z()) - std::atan(mu)));
    for (int trial = 0; trial < 2000; ++trial) {
      ForceCoefficients c;
      c.w.resize(4, 12);
      c.s.resize(4);
      for (int k = 0; k < 4; ++k) {
        // Sparse or dense rows: a random face of the simplex.
        double total = 0.0;
        for (int j = 0; j < 12; ++j) {
          c.w(k, j) = rng() % 3 == 0 ? 0.0 : -std::log(uniform(rng, 1e-12, 1.0));
          total += c.w(k, j);
        }
        if (total == 0.0) c.w(k, static_cast<int>(rng() % 12)) = total = 1.0;
        c.w.row(k) /= total;
        c.s(k) = uniform(rng, 0.0, 5.0);
      }
      c.validate();
      for (const auto& f : local_forces(c, b)) violation = std::max(violation, f.head<2>().norm() - mu * f.z());
    }
  }
  return {angle_err <= 1e-12 && violation <= 1e-9,
          fmt("max basis angle error %.2e rad, max cone violation %.2e", angle_err, std::max(violation, 0.0))};
}

// 2. Analytic gradients against central differences.
double gradient_error(const ReparamVars& vars, const ForceProblem& p, const ObjectiveWeights& w) {
  const double h = 1e-5;
  const ObjectiveValue v = evaluate_objective(vars, p, w);
  double err = 0.0, scale = 1e-8;
  const auto central = [&](auto bump) {
    ReparamVars a = vars, b = vars;
    bump(a, h);
    bump(b, -h);
    return (evaluate_objective(a, p, w, false).value - evaluate_objective(b, p, w, false).value) / (2 * h);
  };
  for (Eigen::Index i = 0; i < vars.w_tilde.size(); ++i) {
    const double fd = central([&](ReparamVars& x, double d) { x.w_tilde(i) += d; });
    err = std::max(err, std::abs(v.grad_w(i) - fd));
    scale = std::max(scale, std::abs(fd));
  }
  for (Eigen::Index k = 0; k < vars.s_tilde.size(); ++k) {
    if (vars.frozen[k]) continue;
    const double fd = central([&](ReparamVars& x, double d) { x.s_tilde(k) += d; });
    err = std::max(err, std::abs(v.grad_s(k) - fd));
    scale = std::max(scale, std::abs(fd));
  }
  return err / scale;
}

Outcome gradients(const Options&) {
  std::mt19937_64 rng(2);
  const ObjectiveWeights terms[] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  std::array<double, 3> worst{};
  int states = 0;
  while (states < 100) {
    ForceProblem p;
    p.anchors.resize(kNumAnchors);
    for (auto& a : p.anchors) {
      a.position = gaussian_vec(rng, 0.04);
      a.frame = random_rotation(rng);
      p.contact.distances.push_back(uniform(rng, -0.004, 0.008));
    }
    p.contact.center_of_mass = gaussian_vec(rng, 0.01);
    p.gravity = Gravity{gaussian_vec(rng).normalized(), 1.0};
    ReparamVars v = init_coefficients(p.contact);
    if (v.active_count() == 0) continue;
    for (Eigen::Index i = 0; i < v.w_tilde.size(); ++i) v.w_tilde(i) = uniform(rng, -2, 2);
    for (int k = 0; k < kNumAnchors; ++k)
      if (!v.frozen[k]) v.s_tilde(k) = uniform(rng, 0.05, 1.0) * (rng() % 2 ? 1 : -1);
    for (int t = 0; t < 3; ++t) worst[t] = std::max(worst[t], gradient_error(v, p, terms[t]));
    ++states;
  }
  const double m = *std::max_element(worst.begin(), worst.end());
  return {m < 1e-4, fmt("max relative error over 100 states: force %.2e, torque %.2e, contact2 %.2e", worst[0],
                        worst[1], worst[2])};
}

// 3. Pseudo-force solver with the default schedule.
Outcome solver(const Options&) {
  const SolverConfig cfg;
  double worst_force = 0.0, worst_torque = 0.0;
  bool ok = true;
  for (const char* id : {"pinch-sphere", "tripod-sphere"})
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const Scenario s = build_canonical(id, seed);
      const MeshSdf sdf(s.object_mesh());
      const SolveReport r = solve_pseudo_forces(HandModel(s.shape), s.hand_pose, sdf, s.object_pose, s.gravity, cfg);
      worst_force = std::max(worst_force, r.residuals.force);
      worst_torque = std::max(worst_torque, r.residuals.torque);
    }
  ok = worst_force <= 1e-2 && worst_torque <= 1e-2;
  bool frozen = false;
  try {
    const Scenario h = build_canonical("hover-no-contact", 0);
    solve_pseudo_forces(HandModel(h.shape), h.hand_pose, MeshSdf(h.object_mesh()), h.object_pose, h.gravity, cfg);
  } catch (const AllAnchorsFrozen&) {
    frozen = true;
  }
  return {ok && frozen, fmt("pinch+tripod seeds 0-4 (lr %.0e, %d+%d steps): max L_force %.2e, max L_torque %.2e; "
                            "hover %s",
                            cfg.learning_rate, cfg.phase1_steps, cfg.phase2_steps, worst_force, worst_torque,
                            frozen ? "AllAnchorsFrozen" : "did not freeze")};
}

// 4. PF-ODE against closed forms.
Outcome pf_ode(const Options&) {
  const NoiseSchedule s;
  std::mt19937_64 rng(4);
  double worst = 0.0;
  for (double tf : {0.55, 0.65}) {
    for (int i = 0; i < 100; ++i) {
      const int dim = 1 + static_cast<int>(rng() % 9);
      Eigen::VectorXd mu(dim), x0(dim);
      for (int k = 0; k < dim; ++k) {
        mu(k) = uniform(rng, -2, 2);
        x0(k) = mu(k) + sigma(tf, s) * std::normal_distribution<double>()(rng);
      }
      const ScoreField delta = gaussian_score(mu, Eigen::VectorXd::Zero(1), s);
      const Eigen::VectorXd x = pf_ode_solve(x0, tf, s.eps_time, delta, s);
      const Eigen::VectorXd expect = mu + (x0 - mu) * sigma(s.eps_time, s) / sigma(tf, s);
      worst = std::max(worst, (x - expect).cwiseAbs().maxCoeff());
    }
  }
  // Sample mean under a Gaussian prior, started from the full-noise prior.
  Eigen::VectorXd mu(3);
  mu << 0.5, -1.0, 2.0;
  const auto xs = pf_ode_sample(1000, 3, 1.0, gaussian_score(mu, Eigen::VectorXd::Constant(1, 0.2), s), s, 44);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(3), sq = Eigen::VectorXd::Zero(3);
  for (const auto& x : xs) mean += x;
  mean /= 1000.0;
  for (const auto& x : xs) sq += (x - mean).cwiseAbs2();
  double z = 0.0;
  for (int k = 0; k < 3; ++k) z = std::max(z, std::abs(mean(k) - mu(k)) / std::sqrt(sq(k) / 999.0 / 1000.0));
  return {worst <= 1e-3 && z <= 3.0,
          fmt("delta prior max error %.2e over 200 starts (t_f 0.55, 0.65); Gaussian prior mean off by %.2f SE", worst, z)};
}

// 5. Aggregation improves on the candidates.
Outcome aggregation(const Options&) {
  const char* templates[] = {"pinch-sphere", "tripod-sphere", "wrap-cylinder", "palm-box"};
  double cand_mje = 0, cand_oce = 0, final_mje = 0, final_oce = 0, va_mje = 0, va_oce = 0, eq_full = 0, eq_va = 0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    const Scenario s = build_canonical(templates[t % 4], static_cast<std::uint64_t>(t));
    const HandModel model(s.shape);
    const auto gt_kp = forward_kinematics(s.hand_pose, model);
    const Vec3 centre = bounds(s.object_mesh()).center();
    const CandidateSet hand = perturb_hand(s.hand_pose, {}, 100, substream_seed(t, "acceptance-hand"));
    const CandidateSet object = perturb_object(s.object_pose, {}, 100, substream_seed(t, "acceptance-object"));
    double cm = 0, co = 0;
    for (const auto& c : hand.hand) {
      const auto kp = forward_kinematics(to_hand_pose(c, s.hand_pose.translation), model);
      double e = 0;
      for (int k = 0; k < kNumKeypoints; ++k) e += (kp[k] - gt_kp[k]).norm();
      cm += 1000.0 * e / kNumKeypoints;
    }
    for (const auto& c : object.object)
      co += 1000.0 * (to_rigid_pose(c).apply(centre) - s.object_pose.apply(centre)).norm();
    cand_mje += cm / 100.0;
    cand_oce += co / 100.0;

    const AggregationReport rep =
        aggregate_full(s, hand, object, render_hand_heatmaps(s), render_object_heatmaps(s), AggregationConfig{});
    const MetricsRow full = evaluate_prediction(s, rep.hand, rep.object);
    const MetricsRow va = evaluate_prediction(s, rep.hand_visual.pose, rep.object_visual.pose);
    final_mje += full.pose.mje;
    final_oce += full.pose.oce;
    va_mje += va.pose.mje;
    va_oce += va.pose.oce;
    eq_full += full.physics.equilibrium;
    eq_va += va.physics.equilibrium;
  }
  for (double* v : {&cand_mje, &cand_oce, &final_mje, &final_oce, &va_mje, &va_oce, &eq_full, &eq_va}) *v /= trials;
  const bool ok = final_mje <= 0.8 * cand_mje && final_oce <= 0.8 * cand_oce && eq_full <= eq_va;
  return {ok, fmt("100 trials: MJE %.2f vs candidates %.2f mm (ratio %.2f), OCE %.2f vs %.2f mm (ratio %.2f), "
                  "equilibrium VA+PA %.3g vs VA %.3g (VA alone: MJE %.2f, OCE %.2f mm)",
                  final_mje, cand_mje, final_mje / cand_mje, final_oce, cand_oce, final_oce / cand_oce, eq_full, eq_va,
                  va_mje, va_oce)};
}

// 6. Every selection equals a brute-force sort.
Outcome selection(const Options&) {
  std::mt19937_64 rng(6);
  int mismatches = 0, sets = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 120);
    std::vector<double> s(static_cast<std::size_t>(n));
    const int levels = trial % 2 ? 4 : 1000;  // half the vectors are tie-heavy
    for (auto& x : s) x = static_cast<double>(rng() % levels) / 7.0;
    if (trial % 11 == 0) s[rng() % n] = std::nan("");
    const int k = static_cast<int>(rng() % (n + 5));
    mismatches += top_k(s, k) != brute_top_k(s, k);
    ++sets;
  }

  const auto check = [&](const std::vector<int>& got, const std::vector<double>& scores, int k) {
    mismatches += got != brute_top_k(scores, k);
    ++sets;
  };
  const char* templates[] = {"pinch-sphere", "tripod-sphere", "wrap-cylinder", "palm-box"};
  for (int t = 0; t < 4; ++t) {
    const Scenario s = build_canonical(templates[t], 60 + t);
    const HandModel model(s.shape);
    HeatmapConfig noisy;
    noisy.corruption.noise_sigma = 0.05;
    noisy.seed = static_cast<std::uint64_t>(t);
    const HeatmapStack hh = render_hand_heatmaps(s, noisy), oh = render_object_heatmaps(s, noisy);
    const CandidateSet hand = perturb_hand(s.hand_pose, {}, 100, 600 + t);
    const CandidateSet object = perturb_object(s.object_pose, {}, 100, 700 + t);
    const AggregationConfig cfg;
    const AggregationReport rep = aggregate_full(s, hand, object, hh, oh, cfg);

    // Hand levels: rebuild each level's inputs from the lower levels' results.
    std::vector<HandPose> cands;
    for (const auto& c : hand.hand) cands.push_back(to_hand_pose(c, s.hand_pose.translation));
    for (int l = 0; l < 4; ++l) {
      std::vector<double> summed(cands.size(), 0.0);
      for (const auto& sel : rep.hand_visual.levels[l]) {
        std::vector<double> scores;
        for (std::size_t i = 0; i < cands.size(); ++i) {
          scores.push_back(visual_score_hand(cands[i], sel.joint, hh, s.camera, model));
          summed[i] += scores.back();
        }
        check(sel.selected, scores, cfg.hand_k);
      }
      if (l == 3) check(rep.hand_visual.k4, summed, cfg.hand_k);
      for (const auto& sel : rep.hand_visual.levels[l])
        for (auto& c : cands) c.theta[sel.joint] = sel.value;
    }

    // Object translation, then rotation with the aggregated translation.
    const auto kp27 = bbox_keypoints_27(s.object_mesh());
    std::vector<double> ts, rs;
    for (const auto& c : object.object) {
      const RigidPose p = to_rigid_pose(c);
      ts.push_back(visual_score_object(p, oh, s.camera, kp27));
      rs.push_back(visual_score_object({p.rotation, rep.object_visual.pose.translation}, oh, s.camera, kp27));
    }
    check(rep.object_visual.k_t, ts, cfg.object_t_k);
    check(rep.object_visual.k_r, rs, cfg.object_r_k);

    // Physics: scores recomputed from scratch.
    const MeshSdf sdf(s.object_mesh());
    std::vector<double> hp;
    for (int i : rep.hand_visual.k4) {
      HandPose p = rep.hand_visual.pose;
      for (int j : joint_hierarchy().levels[3]) p.theta[j] = rep.hand_visual.before_last[i].theta[j];
      try {
        const SolveReport r = solve_pseudo_forces(model, p, sdf, rep.object_visual.pose, s.gravity, cfg.hand_solver);
        hp.push_back(-r.residuals.force * r.residuals.contact);
      } catch (const AllAnchorsFrozen&) {
        hp.push_back(-std::numeric_limits<double>::infinity());
      }
    }
    std::vector<int> expect_hand;
    for (int a : brute_top_k(hp, cfg.hand_phys_k))
      if (std::isfinite(hp[a])) expect_hand.push_back(rep.hand_visual.k4[a]);
    mismatches += rep.hand_physics.selected != expect_hand;
    ++sets;

    const GlobalForceField field =
        solve_pseudo_forces(model, rep.hand, sdf, rep.object_visual.pose, s.gravity, cfg.object_solver).field;
    const Vec3 c = centroid(sdf.mesh());
    std::vector<double> op;
    for (const auto& tr : rep.object_visual.translations)
      for (const auto& rot : rep.object_visual.rotations) {
        const RigidPose pose{rot, tr};
        ContactState contact;
        contact.center_of_mass = pose.apply(c);
        for (const auto& f : field) contact.distances.push_back(sdf.query(pose.apply_inverse(f.position)).distance);
        op.push_back(-torque_residual(field, contact.center_of_mass) * contact_residual(field, contact));
      }
    check(rep.object_physics.selected, op, cfg.object_phys_k);
  }
  return {mismatches == 0, fmt("%d of %d selections differ from the brute-force sort", mismatches, sets)};
}

// 7. Metric identities.
Outcome metrics(const Options&) {
  std::mt19937_64 rng(7);
  const HandModel model;
  const CameraIntrinsics camera;
  const auto hand_at = [&](double spread) {
    HandPose p;
    for (auto& t : p.theta) t = RotationAA(gaussian_vec(rng, spread));
    p.translation = Vec3(0, 0, 0.45) + gaussian_vec(rng, 0.02);
    return HandGeometry{forward_kinematics(p, model), skin_mesh(p, model).vertices};
  };
  const auto object_at = [&] { return RigidPose{random_rotation(rng), Vec3(0, 0, 0.5) + gaussian_vec(rng, 0.03)}; };
  std::vector<std::string> failures;

  const PrimitiveSpec cyl{PrimitiveKind::Cylinder, {0.03, 0.1}, 2};
  const TriMesh cmesh = make_primitive(cyl);
  const SymmetrySpec csym = SymmetrySpec::for_primitive(cyl);
  const HandGeometry h0 = hand_at(0.3);
  const RigidPose o0 = object_at();
  const PoseErrors zero = pose_errors(h0, h0, o0, o0, cmesh, csym, camera);
  for (double v : {zero.mje, zero.pa_mje, zero.mme, zero.oce, zero.mce, zero.smce, zero.add, zero.adds, zero.rep})
    if (v != 0.0) failures.push_back("nonzero error for pred = GT");
  if (zero.add_rate != 100.0 || zero.adds_rate != 100.0) failures.push_back("rate below 100% for pred = GT");

  int order_violations = 0;
  for (int i = 0; i < 1000; ++i) {
    const PoseErrors e = pose_errors(h0, h0, object_at(), object_at(), cmesh, csym, camera);
    order_violations += !(e.adds <= e.add) || !(e.smce <= e.mce);
  }
  if (order_violations) failures.push_back(fmt("%d ordering violations", order_violations));

  const PrimitiveSpec box{PrimitiveKind::Box, {0.08, 0.05, 0.03}, 0};
  const RigidPose gt = object_at();
  const RigidPose flipped{gt.rotation * Mat3(Vec3(-1, -1, 1).asDiagonal()), gt.translation};
  const PoseErrors sym = pose_errors(h0, h0, flipped, gt, make_primitive(box), SymmetrySpec::for_primitive(box), camera);
  if (!(sym.smce < 1e-9 && sym.mce > 0.0)) failures.push_back("symmetric box");

  const MeshSdf cube(make_primitive({PrimitiveKind::Box, {0.1, 0.1, 0.1}, 0}));
  const RigidPose at{Mat3::Identity(), Vec3(0, 0, 0.5)};
  const TriMesh ball = transformed(make_primitive({PrimitiveKind::Sphere, {0.02}, 4}),
                                   {Mat3::Identity(), at.translation + Vec3(0.05 + 0.02 - 0.005, 0, 0)});
  const double pd = 1000.0 * contact_and_penetration(ball, cube, at).penetration;
  if (std::abs(pd - 5.0) > 0.5) failures.push_back(fmt("PD %.3f mm", pd));

  const Scenario hover = build_canonical("hover-no-contact", 0);
  const MetricsRow row = evaluate_prediction(hover, hover.hand_pose, hover.object_pose);
  if (row.physics.cp != 0.0 || row.physics.pd != 0.0) failures.push_back("hover reports contact");

  std::string detail = fmt("ordering held on 1000 poses; symmetric box SMCE %.1e, MCE %.1f mm; PD %.3f mm; "
                           "hover CP %.0f%%, PD %.1f mm",
                           sym.smce, sym.mce, pd, row.physics.cp, row.physics.pd);
  for (const auto& f : failures) detail += "; FAILED: " + f;
  return {failures.empty(), detail};
}

// 8. Signed distance accuracy on the unit sphere.
Outcome sdf_accuracy(const Options&) {
  const MeshSdf sdf(make_primitive({PrimitiveKind::Sphere, {1.0}, 4}));
  std::mt19937_64 rng(8);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const Vec3 p = gaussian_vec(rng).normalized() * uniform(rng, 0.0, 2.0);
    worst = std::max(worst, std::abs(sdf.query(p).distance - (p.norm() - 1.0)));
  }
  int wrong = 0;
  for (int i = 0; i < 1000; ++i) {
    const Vec3 dir = gaussian_vec(rng).normalized();
    const double delta = uniform(rng, 1e-3, 0.5);
    wrong += !(sdf.query((1.0 - delta) * dir).distance < 0.0) + !(sdf.query((1.0 + delta) * dir).distance > 0.0);
  }
  return {worst < 1e-3 && wrong == 0,
          fmt("max |error| %.2e over 10k points (bound 1e-3); %d sign errors over 1k pairs", worst, wrong)};
}

// 9. Identical CLI pipeline output at 1 and 8 threads.
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism(const Options& opt) {
  if (opt.cli.empty()) return {false, "no --cli given"};
  fs::remove_all(opt.work);
  fs::create_directories(opt.work);
  const auto run = [&](const std::string& args) {
    const std::string cmd = "\"" + opt.cli + "\" " + args + " > \"" + (opt.work / "log.txt").string() + "\" 2>&1";
    return std::system(cmd.c_str());
  };
  const std::string scene = (opt.work / "scene").string();
  if (run("scenario gen --template pinch-sphere --seed 21 -o \"" + scene + "\"") != 0)
    return {false, "scenario gen failed"};
  const char* runs[] = {"t1a", "t1b", "t8a", "t8b"};
  for (const char* r : runs) {
    const std::string threads = r[1] == '1' ? "1" : "8";
    if (run("--threads " + threads + " pipeline -i \"" + scene + "/scenario.json\" --seed 5 -o \"" +
            (opt.work / r).string() + "\"") != 0)
      return {false, std::string("pipeline run ") + r + " failed: " + slurp(opt.work / "log.txt")};
  }
  int differing = 0;
  for (const char* f : {"metrics.json", "aggregation.json"}) {
    const std::string ref = slurp(opt.work / runs[0] / f);
    if (ref.empty()) return {false, std::string("empty ") + f};
    for (const char* r : runs) differing += slurp(opt.work / r / f) != ref;
  }
  return {differing == 0, fmt("4 pipeline runs (threads 1, 1, 8, 8): %d differing files", differing)};
}

// 10. Omega fixtures and the freeze rule.
Outcome omega_freeze(const Options&) {
  double worst = 0.0;
  for (long double d : {-2.0L, -1.0L, 0.0L, 0.375L, 0.75L, 2.0L}) {
    const long double ref = 1.0L / ((1.0L + std::exp(-16.0L * (d + 1.0L))) * (1.0L + std::exp(-16.0L * (d - 0.75L))));
    worst = std::max(worst, static_cast<double>(std::abs(omega(static_cast<double>(d)) - ref) / ref));
  }
  const SolverConfig cfg;
  ContactState sweep;
  for (int i = 0; i <= 4000; ++i) sweep.distances.push_back(-0.02 + 0.05 * i / 4000.0);
  const ReparamVars v = init_coefficients(sweep, cfg);
  int wrong = 0, frozen = 0;
  for (std::size_t k = 0; k < sweep.distances.size(); ++k) {
    const bool expect = cfg.omega(sweep.distances[k]) < cfg.freeze_threshold;
    frozen += v.frozen[k] != 0;
    wrong += (v.frozen[k] != 0) != expect;
    wrong += v.s_tilde(static_cast<Eigen::Index>(k)) != (expect ? 0.0 : cfg.init_scale);
  }
  return {worst <= 1e-12 && wrong == 0,
          fmt("fixture max relative error %.2e; freeze rule disagreements %d over 4001 distances (%d frozen)", worst,
              wrong, frozen)};
}

struct Criterion {
  int id;
  const char* name;
  double limit_s;
  std::function<Outcome(const Options&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::vector<int> only;
  Options opt;
  std::string work;
  app.add_option("--only", only, "criterion numbers to run (default: all)");
  app.add_option("--cli", opt.cli, "graspforge binary for the determinism check");
  app.add_option("--work", work, "scratch directory");
  CLI11_PARSE(app, argc, argv);
  if (!work.empty()) opt.work = work;

  const std::vector<Criterion> all{
      {1, "friction cone geometry", 1, friction_cone},
      {2, "gradient correctness", 30, gradients},
      {3, "pseudo-force solver", 60, solver},
      {4, "PF-ODE fidelity", 60, pf_ode},
      {5, "aggregation improves accuracy", 600, aggregation},
      {6, "selection oracles", 10, selection},
      {7, "metric identities", 60, metrics},
      {8, "SDF accuracy", 30, sdf_accuracy},
      {9, "pipeline determinism", 120, determinism},
      {10, "omega and initialization", 1, omega_freeze},
  };
  int failed = 0;
  for (const auto& c : all) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run(opt);
    } catch (const std::exception& e) {
      o = {false, std::string("threw ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.limit_s) {
      o.pass = false;
      o.detail += fmt("; over the %.0f s budget", c.limit_s);
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << fmt("  %2d %-30s ", c.id, c.name) << o.detail
              << fmt(" [%.2f s]", secs) << std::endl;
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
