#include "graspforge/solve.hpp"

#include "graspforge/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace graspforge {

void adam_step(Eigen::VectorXd& x, AdamState& state, const Eigen::VectorXd& gradient, const AdamConfig& cfg) {
  if (gradient.size() != x.size()) throw DimensionMismatch("gradient and variables differ in size");
  if (!gradient.allFinite()) throw NonFiniteGradient("gradient has a NaN or infinite entry");
  if (state.m.size() != x.size()) {
    state.m = Eigen::VectorXd::Zero(x.size());
    state.v = Eigen::VectorXd::Zero(x.size());
    state.step = 0;
  }
  ++state.step;
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * gradient;
  state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * gradient.cwiseAbs2();
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  if (cfg.weight_decay != 0.0) x *= 1.0 - cfg.learning_rate * cfg.weight_decay;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double mhat = state.m(i) / c1;
    const double vhat = state.v(i) / c2;
    x(i) -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
  }
}

void SolverConfig::validate() const {
  if (!(learning_rate > 0.0)) throw InvalidParameter("learning rate must be positive");
  if (phase1_steps < 0 || phase2_steps < 0) throw InvalidParameter("step counts must be nonnegative");
  if (phase1_steps + phase2_steps == 0) throw InvalidParameter("solver needs at least one step");
  if (weight_force < 0.0 || weight_torque < 0.0 || weight_contact2 < 0.0)
    throw InvalidParameter("objective weights must be nonnegative");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw InvalidParameter("Adam betas in [0,1)");
  if (!(epsilon > 0.0)) throw InvalidParameter("Adam epsilon must be positive");
  if (!(init_scale > 0.0)) throw InvalidParameter("initial scale must be positive");
  if (log_interval < 1 || convergence_window < 1) throw InvalidParameter("intervals must be positive");
  if (!(omega.unit_scale > 0.0)) throw InvalidParameter("omega unit scale must be positive");
  cone_basis(mu, cone_count);
}

AdamConfig SolverConfig::adam() const { return {learning_rate, beta1, beta2, epsilon, weight_decay}; }

nlohmann::json SolverConfig::to_json() const {
  return {{"learning_rate", learning_rate},
          {"phase1_steps", phase1_steps},
          {"phase2_steps", phase2_steps},
          {"weight_force", weight_force},
          {"weight_torque", weight_torque},
          {"weight_contact2", weight_contact2},
          {"beta1", beta1},
          {"beta2", beta2},
          {"epsilon", epsilon},
          {"weight_decay", weight_decay},
          {"mu", mu},
          {"cone_count", cone_count},
          {"init_scale", init_scale},
          {"freeze_threshold", freeze_threshold},
          {"omega", {{"unit_scale", omega.unit_scale}, {"sign", omega.sign}, {"offset", omega.offset}}},
          {"log_interval", log_interval},
          {"convergence_window", convergence_window},
          {"convergence_tolerance", convergence_tolerance}};
}

SolverConfig SolverConfig::from_json(const nlohmann::json& j) {
  SolverConfig c;
  if (!j.is_object()) throw SchemaError("solver config must be an object");
  const auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  for (const auto& [key, value] : j.items()) {
    static const char* known[] = {"learning_rate", "phase1_steps", "phase2_steps", "weight_force",
                                  "weight_torque", "weight_contact2", "beta1", "beta2", "epsilon",
                                  "weight_decay", "mu", "cone_count", "init_scale", "freeze_threshold",
                                  "omega", "log_interval", "convergence_window", "convergence_tolerance"};
    if (std::none_of(std::begin(known), std::end(known), [&](const char* k) { return key == k; }))
      throw SchemaError("unknown solver field '" + key + "'");
    (void)value;
  }
  try {
    get("learning_rate", c.learning_rate);
    get("phase1_steps", c.phase1_steps);
    get("phase2_steps", c.phase2_steps);
    get("weight_force", c.weight_force);
    get("weight_torque", c.weight_torque);
    get("weight_contact2", c.weight_contact2);
    get("beta1", c.beta1);
    get("beta2", c.beta2);
    get("epsilon", c.epsilon);
    get("weight_decay", c.weight_decay);
    get("mu", c.mu);
    get("cone_count", c.cone_count);
    get("init_scale", c.init_scale);
    get("freeze_threshold", c.freeze_threshold);
    get("log_interval", c.log_interval);
    get("convergence_window", c.convergence_window);
    get("convergence_tolerance", c.convergence_tolerance);
    if (j.contains("omega")) {
      const auto& o = j.at("omega");
      for (const auto& [key, value] : o.items()) {
        (void)value;
        if (key != "unit_scale" && key != "sign" && key != "offset")
          throw SchemaError("unknown omega field '" + key + "'");
      }
      if (o.contains("unit_scale")) c.omega.unit_scale = o.at("unit_scale").get<double>();
      if (o.contains("sign")) c.omega.sign = o.at("sign").get<double>();
      if (o.contains("offset")) c.omega.offset = o.at("offset").get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("solver config: ") + e.what());
  }
  c.validate();
  return c;
}

ForceCoefficients ReparamVars::coefficients() const {
  ForceCoefficients c;
  c.w.resize(w_tilde.rows(), w_tilde.cols());
  for (Eigen::Index k = 0; k < w_tilde.rows(); ++k) {
    const double mx = w_tilde.row(k).maxCoeff();
    const Eigen::RowVectorXd e = (w_tilde.row(k).array() - mx).exp().matrix();
    c.w.row(k) = e / e.sum();
  }
  c.s = s_tilde.cwiseAbs();
  for (Eigen::Index k = 0; k < c.s.size(); ++k)
    if (frozen[static_cast<std::size_t>(k)]) c.s(k) = 0.0;
  return c;
}

int ReparamVars::active_count() const {
  return static_cast<int>(std::count(frozen.begin(), frozen.end(), std::uint8_t{0}));
}

ReparamVars init_coefficients(const ContactState& contact, const SolverConfig& cfg) {
  const auto k = static_cast<Eigen::Index>(contact.distances.size());
  ReparamVars v;
  v.w_tilde = Eigen::MatrixXd::Constant(k, cfg.cone_count, 1.0 / cfg.cone_count);
  v.s_tilde = Eigen::VectorXd::Zero(k);
  v.frozen.assign(contact.distances.size(), 0);
  for (Eigen::Index i = 0; i < k; ++i) {
    if (cfg.omega(contact.distances[static_cast<std::size_t>(i)]) < cfg.freeze_threshold)
      v.frozen[static_cast<std::size_t>(i)] = 1;
    else
      v.s_tilde(i) = cfg.init_scale;
  }
  return v;
}

ObjectiveValue evaluate_objective(const ReparamVars& vars, const ForceProblem& problem,
                                  const ObjectiveWeights& weights, bool with_gradient) {
  const Eigen::Index k_count = vars.w_tilde.rows();
  const int nv = problem.basis.count;
  if (vars.w_tilde.cols() != nv || vars.s_tilde.size() != k_count ||
      static_cast<Eigen::Index>(vars.frozen.size()) != k_count ||
      static_cast<Eigen::Index>(problem.anchors.size()) != k_count ||
      static_cast<Eigen::Index>(problem.contact.distances.size()) != k_count)
    throw DimensionMismatch("solver variables do not match the problem");

  const ForceCoefficients coef = vars.coefficients();
  std::vector<Vec3> u(static_cast<std::size_t>(k_count));
  for (Eigen::Index k = 0; k < k_count; ++k) {
    Vec3 sum = Vec3::Zero();
    for (int j = 0; j < nv; ++j) sum += coef.w(k, j) * problem.basis.vectors[j];
    u[k] = sum;
  }
  Vec3 e = problem.gravity.vector();
  Vec3 tau = Vec3::Zero();
  std::vector<Vec3> r(static_cast<std::size_t>(k_count));
  std::vector<Vec3> force(static_cast<std::size_t>(k_count));
  double contact = 0.0;
  for (Eigen::Index k = 0; k < k_count; ++k) {
    force[k] = coef.s(k) * (problem.anchors[k].frame * u[k]);
    r[k] = problem.anchors[k].position - problem.contact.center_of_mass;
    e += force[k];
    tau += force[k].cross(r[k]);
    contact += force[k].norm() * std::abs(problem.contact.distances[k]);
  }

  ObjectiveValue out;
  out.terms.force = e.squaredNorm();
  out.terms.torque = tau.squaredNorm();
  out.terms.contact = contact;

  // contact2 over the unfrozen anchors, in the log domain
  std::vector<double> log_w(static_cast<std::size_t>(k_count), 0.0);
  double max_log = -std::numeric_limits<double>::infinity();
  double s2 = 0.0;
  for (Eigen::Index k = 0; k < k_count; ++k) {
    if (vars.frozen[k]) continue;
    log_w[k] = problem.omega.log(problem.contact.distances[k]);
    max_log = std::max(max_log, log_w[k]);
    s2 += coef.s(k) * coef.s(k);
  }
  std::vector<double> ell(static_cast<std::size_t>(k_count), 0.0);
  double norm_w = 0.0;
  if (std::isfinite(max_log)) {
    double acc = 0.0;
    for (Eigen::Index k = 0; k < k_count; ++k)
      if (!vars.frozen[k]) acc += std::exp(2.0 * (log_w[k] - max_log));
    norm_w = std::exp(max_log + 0.5 * std::log(acc));
    const double log_s = 0.5 * std::log(s2);
    for (Eigen::Index k = 0; k < k_count; ++k) {
      if (vars.frozen[k]) continue;
      ell[k] = log_w[k] + log_s - std::log(coef.s(k) * norm_w + kContact2Epsilon);
      out.terms.contact2 += ell[k] * ell[k];
    }
  }
  out.value = weights.force * out.terms.force + weights.torque * out.terms.torque +
              (weights.contact2 != 0.0 ? weights.contact2 * out.terms.contact2 : 0.0);
  if (!with_gradient) return out;

  out.grad_w = Eigen::MatrixXd::Zero(k_count, nv);
  out.grad_s = Eigen::VectorXd::Zero(k_count);
  Eigen::VectorXd grad_scale = Eigen::VectorXd::Zero(k_count);  // d value / d s
  for (Eigen::Index k = 0; k < k_count; ++k) {
    const Vec3 g_force = weights.force * 2.0 * e + weights.torque * 2.0 * r[k].cross(tau);
    const Vec3 g_local = problem.anchors[k].frame.transpose() * g_force;
    grad_scale(k) = g_local.dot(u[k]);
    Eigen::RowVectorXd g_w(nv);
    for (int j = 0; j < nv; ++j) g_w(j) = coef.s(k) * g_local.dot(problem.basis.vectors[j]);
    const double mean = coef.w.row(k).dot(g_w);
    for (int j = 0; j < nv; ++j) out.grad_w(k, j) = coef.w(k, j) * (g_w(j) - mean);
  }
  if (weights.contact2 != 0.0 && s2 > 0.0) {
    const double ell_sum = std::accumulate(ell.begin(), ell.end(), 0.0);
    for (Eigen::Index i = 0; i < k_count; ++i) {
      if (vars.frozen[i]) continue;
      const double d = 2.0 * coef.s(i) / s2 * ell_sum - 2.0 * ell[i] * norm_w / (coef.s(i) * norm_w + kContact2Epsilon);
      grad_scale(i) += weights.contact2 * d;
    }
  }
  for (Eigen::Index k = 0; k < k_count; ++k) {
    if (vars.frozen[k] || vars.s_tilde(k) == 0.0) continue;
    out.grad_s(k) = (vars.s_tilde(k) > 0.0 ? 1.0 : -1.0) * grad_scale(k);
  }
  return out;
}

namespace {

Eigen::VectorXd pack(const ReparamVars& v) {
  const Eigen::Index n = v.w_tilde.size();
  Eigen::VectorXd x(n + v.s_tilde.size());
  for (Eigen::Index k = 0; k < v.w_tilde.rows(); ++k)
    for (Eigen::Index j = 0; j < v.w_tilde.cols(); ++j) x(k * v.w_tilde.cols() + j) = v.w_tilde(k, j);
  x.tail(v.s_tilde.size()) = v.s_tilde;
  return x;
}

void unpack(const Eigen::VectorXd& x, ReparamVars& v) {
  for (Eigen::Index k = 0; k < v.w_tilde.rows(); ++k)
    for (Eigen::Index j = 0; j < v.w_tilde.cols(); ++j) v.w_tilde(k, j) = x(k * v.w_tilde.cols() + j);
  v.s_tilde = x.tail(v.s_tilde.size());
}

TraceEntry entry(int step, const ObjectiveValue& o) {
  return {step, o.terms.force, o.terms.torque, o.terms.contact2, o.value};
}

PhaseResult run_phase(ReparamVars& vars, const ForceProblem& problem, const SolverConfig& cfg, int steps,
                      const ObjectiveWeights& weights, bool update_scales) {
  cfg.validate();
  if (vars.active_count() == 0) throw AllAnchorsFrozen("no anchor is close enough to the object");
  for (std::size_t k = 0; k < vars.frozen.size(); ++k)
    if (vars.frozen[k]) vars.s_tilde(static_cast<Eigen::Index>(k)) = 0.0;

  PhaseResult result;
  result.steps = steps;
  result.objective.reserve(static_cast<std::size_t>(steps));
  const AdamConfig adam = cfg.adam();
  AdamState state;
  Eigen::VectorXd x = pack(vars);
  const Eigen::Index n_w = vars.w_tilde.size();

  ObjectiveValue o = evaluate_objective(vars, problem, weights);
  result.trace.push_back(entry(0, o));
  result.min_equilibrium = o.terms.force + 30.0 * o.terms.torque;
  for (int step = 1; step <= steps; ++step) {
    Eigen::VectorXd g(x.size());
    for (Eigen::Index k = 0; k < o.grad_w.rows(); ++k)
      for (Eigen::Index j = 0; j < o.grad_w.cols(); ++j) g(k * o.grad_w.cols() + j) = o.grad_w(k, j);
    g.tail(o.grad_s.size()) = update_scales ? o.grad_s : Eigen::VectorXd::Zero(o.grad_s.size());
    for (std::size_t k = 0; k < vars.frozen.size(); ++k)
      if (vars.frozen[k]) g(n_w + static_cast<Eigen::Index>(k)) = 0.0;
    adam_step(x, state, g, adam);
    unpack(x, vars);
    o = evaluate_objective(vars, problem, weights);
    result.objective.push_back(o.value);
    result.min_equilibrium = std::min(result.min_equilibrium, o.terms.force + 30.0 * o.terms.torque);
    if (step % cfg.log_interval == 0 || step == steps) result.trace.push_back(entry(step, o));
  }
  return result;
}

}  // namespace

PhaseResult solve_phase1(ReparamVars& vars, const ForceProblem& problem, const SolverConfig& cfg) {
  return run_phase(vars, problem, cfg, cfg.phase1_steps, {1.0, 0.0, 0.0}, false);
}

PhaseResult solve_phase2(ReparamVars& vars, const ForceProblem& problem, const SolverConfig& cfg) {
  return run_phase(vars, problem, cfg, cfg.phase2_steps,
                   {cfg.weight_force, cfg.weight_torque, cfg.weight_contact2}, true);
}

bool plateaued(const std::vector<double>& objective, int window, double tolerance) {
  const auto n = static_cast<std::ptrdiff_t>(objective.size());
  if (window < 1 || n < 2 * window) return false;
  const auto mean = [&](std::ptrdiff_t begin) {
    return std::accumulate(objective.begin() + begin, objective.begin() + begin + window, 0.0) / window;
  };
  return mean(n - 2 * window) - mean(n - window) < tolerance;
}

SolveReport solve_forces(const ForceProblem& problem, const SolverConfig& cfg) {
  cfg.validate();
  ReparamVars vars = init_coefficients(problem.contact, cfg);
  const PhaseResult p1 = solve_phase1(vars, problem, cfg);
  SolveReport report;
  report.phase1_trace = p1.trace;
  report.phase1_steps = p1.steps;
  report.min_equilibrium = p1.min_equilibrium;
  const std::vector<double>* last = &p1.objective;
  PhaseResult p2;
  if (cfg.phase2_steps > 0) {
    p2 = solve_phase2(vars, problem, cfg);
    report.phase2_trace = p2.trace;
    report.phase2_steps = p2.steps;
    report.min_equilibrium = std::min(report.min_equilibrium, p2.min_equilibrium);
    last = &p2.objective;
  }
  report.plateaued = plateaued(*last, cfg.convergence_window, cfg.convergence_tolerance);
  const int budget = cfg.phase2_steps > 0 ? cfg.phase2_steps : cfg.phase1_steps;
  report.converged = report.plateaued || static_cast<int>(last->size()) == budget;
  report.coefficients = vars.coefficients();
  report.frozen = vars.frozen;
  report.field = global_forces(local_forces(report.coefficients, problem.basis), problem.anchors);
  const std::vector<double> s(report.coefficients.s.data(), report.coefficients.s.data() + report.coefficients.s.size());
  std::vector<std::uint8_t> active(vars.frozen.size());
  for (std::size_t k = 0; k < active.size(); ++k) active[k] = vars.frozen[k] ? 0 : 1;
  report.residuals = evaluate_residuals(report.field, s, problem.contact, problem.gravity, problem.omega, active);
  return report;
}

ForceProblem make_force_problem(const HandModel& model, const HandPose& pose, const MeshSdf& object,
                                const RigidPose& object_pose, const Gravity& gravity, const SolverConfig& cfg) {
  ForceProblem p;
  p.anchors = anchor_states(skin_mesh(pose, model), model.anchors());
  p.contact.distances.reserve(p.anchors.size());
  for (const auto& a : p.anchors) p.contact.distances.push_back(object.query(object_pose.apply_inverse(a.position)).distance);
  p.contact.center_of_mass = object_pose.apply(centroid(object.mesh()));
  p.gravity = gravity;
  p.basis = cone_basis(cfg.mu, cfg.cone_count);
  p.omega = cfg.omega;
  return p;
}

SolveReport solve_pseudo_forces(const HandModel& model, const HandPose& pose, const MeshSdf& object,
                                const RigidPose& object_pose, const Gravity& gravity, const SolverConfig& cfg) {
  cfg.validate();
  return solve_forces(make_force_problem(model, pose, object, object_pose, gravity, cfg), cfg);
}

namespace {

nlohmann::json vec_json(const Vec3& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }

nlohmann::json trace_json(const std::vector<TraceEntry>& trace) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& t : trace)
    out.push_back({{"step", t.step},
                   {"force", t.force},
                   {"torque", t.torque},
                   {"contact2", t.contact2},
                   {"objective", t.objective}});
  return out;
}

}  // namespace

nlohmann::json SolveReport::to_json() const {
  nlohmann::json w = nlohmann::json::array();
  for (Eigen::Index k = 0; k < coefficients.w.rows(); ++k) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < coefficients.w.cols(); ++j) row.push_back(coefficients.w(k, j));
    w.push_back(row);
  }
  nlohmann::json s = nlohmann::json::array();
  for (Eigen::Index k = 0; k < coefficients.s.size(); ++k) s.push_back(coefficients.s(k));
  nlohmann::json forces = nlohmann::json::array();
  for (const auto& f : field) forces.push_back({{"position", vec_json(f.position)}, {"force", vec_json(f.force)}});
  nlohmann::json frozen_json = nlohmann::json::array();
  for (auto f : frozen) frozen_json.push_back(f != 0);
  return {{"coefficients", {{"w", w}, {"s", s}}},
          {"frozen", frozen_json},
          {"field", forces},
          {"residuals",
           {{"force", residuals.force},
            {"torque", residuals.torque},
            {"contact", residuals.contact},
            {"contact2", residuals.contact2}}},
          {"min_equilibrium", min_equilibrium},
          {"converged", converged},
          {"plateaued", plateaued},
          {"steps", {{"phase1", phase1_steps}, {"phase2", phase2_steps}}},
          {"trace", {{"phase1", trace_json(phase1_trace)}, {"phase2", trace_json(phase2_trace)}}}};
}

}  // namespace graspforge
