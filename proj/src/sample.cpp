#include "graspforge/sample.hpp"

#include "graspforge/error.hpp"
#include "graspforge/parallel.hpp"

#include <boost/numeric/odeint.hpp>

#include <cmath>
#include <fstream>
#include <limits>
#include <random>

namespace graspforge {

namespace odeint = boost::numeric::odeint;

void NoiseSchedule::validate() const {
  if (!(sigma_min > 0.0 && sigma_min < sigma_max)) throw InvalidParameter("need 0 < sigma_min < sigma_max");
  if (!(eps_time > 0.0 && eps_time < 1.0)) throw InvalidParameter("eps_time must lie in (0, 1)");
}

double sigma(double t, const NoiseSchedule& s) {
  if (!(t >= 0.0 && t <= 1.0)) throw OutOfRange("t = " + std::to_string(t) + " is outside [0, 1]");
  return s.sigma_min * std::pow(s.sigma_max / s.sigma_min, t);
}

ScoreField gaussian_score(Eigen::VectorXd mu, Eigen::VectorXd sigma0, const NoiseSchedule& s) {
  if (sigma0.size() == 1 && mu.size() != 1) sigma0 = Eigen::VectorXd::Constant(mu.size(), sigma0(0));
  if (sigma0.size() != mu.size()) throw InvalidParameter("gaussian prior: sigma0 and mu differ in size");
  if ((sigma0.array() < 0.0).any()) throw InvalidParameter("gaussian prior: negative sigma0");
  const Eigen::ArrayXd var0 = sigma0.array().square();
  return [mu = std::move(mu), var0, s](const Eigen::VectorXd& x, double t) -> Eigen::VectorXd {
    const double st = sigma(t, s);
    return (-(x - mu).array() / (var0 + st * st)).matrix();
  };
}

ScoreField mixture_score(std::vector<MixtureComponent> components, const NoiseSchedule& s) {
  if (components.empty()) throw InvalidParameter("mixture needs at least one component");
  const auto dim = components.front().mean.size();
  for (const auto& c : components) {
    if (c.mean.size() != dim) throw InvalidParameter("mixture means differ in size");
    if (!(c.weight > 0.0) || c.sigma0 < 0.0) throw InvalidParameter("mixture weights must be positive");
  }
  return [components = std::move(components), s](const Eigen::VectorXd& x, double t) -> Eigen::VectorXd {
    const double st = sigma(t, s);
    const std::size_t k = components.size();
    std::vector<double> log_r(k);
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < k; ++i) {
      const double var = components[i].sigma0 * components[i].sigma0 + st * st;
      log_r[i] = std::log(components[i].weight) - 0.5 * static_cast<double>(x.size()) * std::log(var) -
                 0.5 * (x - components[i].mean).squaredNorm() / var;
      best = std::max(best, log_r[i]);
    }
    double total = 0.0;
    for (double& l : log_r) total += (l = std::exp(l - best));
    Eigen::VectorXd out = Eigen::VectorXd::Zero(x.size());
    for (std::size_t i = 0; i < k; ++i) {
      const double var = components[i].sigma0 * components[i].sigma0 + st * st;
      out -= (log_r[i] / total) * (x - components[i].mean) / var;
    }
    return out;
  };
}

Eigen::VectorXd pf_ode_solve(const Eigen::VectorXd& x_start, double t_start, double t_end, const ScoreField& score,
                             const NoiseSchedule& schedule, const OdeTolerances& tol) {
  schedule.validate();
  if (!(t_start > t_end && t_end >= schedule.eps_time && t_start <= 1.0))
    throw OutOfRange("need 1 >= t_start > t_end >= eps_time");
  if (!x_start.allFinite()) throw NonFiniteState("start state is not finite");
  using State = std::vector<double>;
  const double log_ratio = std::log(schedule.sigma_max / schedule.sigma_min);
  const auto n = x_start.size();

  // sigma * dsigma/dt = sigma^2 log(sigma_max / sigma_min)
  const auto rhs = [&](const State& x, State& dxdt, double t) {
    const Eigen::Map<const Eigen::VectorXd> xv(x.data(), n);
    const Eigen::VectorXd g = score(xv, std::clamp(t, 0.0, 1.0));
    if (g.size() != n) throw DimensionMismatch("score field returned a vector of the wrong size");
    if (!g.allFinite()) throw NonFiniteState("score is not finite at t = " + std::to_string(t));
    const double st = sigma(std::clamp(t, 0.0, 1.0), schedule);
    const double rate = -st * st * log_ratio;
    dxdt.resize(x.size());
    for (Eigen::Index i = 0; i < n; ++i) dxdt[i] = rate * g(i);
  };

  State x(x_start.data(), x_start.data() + n);
  auto stepper = odeint::make_controlled(tol.atol, tol.rtol, odeint::runge_kutta_dopri5<State>());
  double t = t_start;
  double dt = -std::min(1e-3, t_start - t_end);
  std::size_t failures = 0;
  // A remainder this small is rounding left over from the last step.
  const double done = 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t_end));
  while (t - t_end > done) {
    if (t + dt < t_end) dt = t_end - t;
    if (std::abs(dt) <= 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t)))
      throw StepSizeUnderflow("step size collapsed at t = " + std::to_string(t));
    if (stepper.try_step(rhs, x, t, dt) == odeint::success) {
      failures = 0;
      for (double v : x)
        if (!std::isfinite(v)) throw NonFiniteState("state is not finite at t = " + std::to_string(t));
    } else if (++failures > tol.max_failed_steps) {
      throw StepSizeUnderflow("no accepted step after " + std::to_string(failures) + " tries");
    }
  }
  return Eigen::Map<const Eigen::VectorXd>(x.data(), n);
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t substream_seed(std::uint64_t seed, std::string_view stream, std::uint64_t index) {
  std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a of the stream name
  for (unsigned char c : stream) h = (h ^ c) * 0x100000001B3ULL;
  return splitmix64(splitmix64(seed ^ h) + index);
}

std::vector<Eigen::VectorXd> pf_ode_sample(int n, int dim, double t_f, const ScoreField& score,
                                           const NoiseSchedule& schedule, std::uint64_t seed,
                                           const OdeTolerances& tol, int threads) {
  if (n < 1) throw InvalidParameter("need at least one candidate");
  if (dim < 1) throw InvalidParameter("dimension must be positive");
  const double sf = sigma(t_f, schedule);
  std::vector<Eigen::VectorXd> out(static_cast<std::size_t>(n));
  parallel_for(out.size(), threads, [&](std::size_t i) {
    std::mt19937_64 rng(substream_seed(seed, "pf-ode", i));
    std::normal_distribution<double> normal(0.0, sf);
    Eigen::VectorXd x(dim);
    for (int d = 0; d < dim; ++d) x(d) = normal(rng);
    out[i] = pf_ode_solve(x, t_f, schedule.eps_time, score, schedule, tol);
  });
  return out;
}

std::string to_string(Entity e) { return e == Entity::Hand ? "hand" : "object"; }

Entity entity_from_string(const std::string& name) {
  if (name == "hand") return Entity::Hand;
  if (name == "object") return Entity::Object;
  throw InvalidParameter("unknown entity '" + name + "' (expected hand or object)");
}

Eigen::VectorXd flatten(const HandCandidate& c) {
  Eigen::VectorXd x(6 * kNumJoints);
  for (int j = 0; j < kNumJoints; ++j) x.segment<6>(6 * j) << c[j].col0, c[j].col1;
  return x;
}

Eigen::VectorXd flatten(const ObjectCandidate& c) {
  Eigen::VectorXd x(9);
  x << c.rotation.col0, c.rotation.col1, c.translation;
  return x;
}

HandCandidate hand_candidate_from(const Eigen::VectorXd& x) {
  if (x.size() != 6 * kNumJoints) throw DimensionMismatch("hand candidate needs 96 values");
  HandCandidate c;
  for (int j = 0; j < kNumJoints; ++j) {
    c[j].col0 = x.segment<3>(6 * j);
    c[j].col1 = x.segment<3>(6 * j + 3);
  }
  return c;
}

ObjectCandidate object_candidate_from(const Eigen::VectorXd& x) {
  if (x.size() != 9) throw DimensionMismatch("object candidate needs 9 values");
  return {{x.segment<3>(0), x.segment<3>(3)}, x.segment<3>(6)};
}

HandCandidate to_candidate(const HandPose& pose) {
  HandCandidate c;
  for (int j = 0; j < kNumJoints; ++j) c[j] = matrix_to_rot6d(aa_to_matrix(pose.theta[j]));
  return c;
}

ObjectCandidate to_candidate(const RigidPose& pose) { return {matrix_to_rot6d(pose.rotation), pose.translation}; }

HandPose to_hand_pose(const HandCandidate& c, const Vec3& translation) {
  HandPose p;
  for (int j = 0; j < kNumJoints; ++j) p.theta[j] = matrix_to_aa(rot6d_to_matrix(c[j]));
  p.translation = translation;
  return p;
}

RigidPose to_rigid_pose(const ObjectCandidate& c) { return {rot6d_to_matrix(c.rotation), c.translation}; }

void CandidateSet::validate() const {
  if (size() == 0) throw InvalidParameter("candidate set is empty");
  if (entity == Entity::Hand ? !object.empty() : !hand.empty())
    throw InvalidParameter("candidate set mixes hand and object entries");
  if (entity == Entity::Hand) {
    for (const auto& c : hand)
      if (!flatten(c).allFinite()) throw InvalidParameter("hand candidate is not finite");
  } else {
    for (const auto& c : object)
      if (!flatten(c).allFinite()) throw InvalidParameter("object candidate is not finite");
  }
}

namespace {

nlohmann::json rot6d_json(const Rotation6D& r) {
  return {r.col0.x(), r.col0.y(), r.col0.z(), r.col1.x(), r.col1.y(), r.col1.z()};
}

Rotation6D rot6d_from(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 6) throw SchemaError("'" + where + "' must hold 6 numbers");
  std::array<double, 6> v{};
  for (int i = 0; i < 6; ++i) {
    if (!j[i].is_number()) throw SchemaError("'" + where + "' must be numeric");
    v[i] = j[i].get<double>();
  }
  return {Vec3(v[0], v[1], v[2]), Vec3(v[3], v[4], v[5])};
}

Vec3 vec3_from(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw SchemaError("'" + where + "' must hold 3 numbers");
  Vec3 v;
  for (int i = 0; i < 3; ++i) {
    if (!j[i].is_number()) throw SchemaError("'" + where + "' must be numeric");
    v(i) = j[i].get<double>();
  }
  return v;
}

}  // namespace

nlohmann::json CandidateSet::to_json() const {
  nlohmann::json list = nlohmann::json::array();
  if (entity == Entity::Hand) {
    for (const auto& c : hand) {
      nlohmann::json joints = nlohmann::json::array();
      for (const auto& r : c) joints.push_back(rot6d_json(r));
      list.push_back({{"rot6d", joints}});
    }
  } else {
    for (const auto& c : object)
      list.push_back({{"rot6d", rot6d_json(c.rotation)},
                      {"translation", {c.translation.x(), c.translation.y(), c.translation.z()}}});
  }
  return {{"schema", kCandidatesSchema},
          {"entity", to_string(entity)},
          {"seed", seed},
          {"provenance", provenance},
          {"candidates", list}};
}

CandidateSet CandidateSet::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw SchemaError("candidate file must be a JSON object");
  for (const char* key : {"schema", "entity", "seed", "provenance", "candidates"})
    if (!j.contains(key)) throw SchemaError(std::string("missing field '") + key + "'");
  for (const auto& item : j.items())
    if (item.key() != "schema" && item.key() != "entity" && item.key() != "seed" && item.key() != "provenance" &&
        item.key() != "candidates" && item.key() != "config" && item.key() != "config_hash")
      throw SchemaError("unknown field '" + item.key() + "'");
  if (!j["schema"].is_string()) throw SchemaError("field 'schema' has the wrong type");
  if (j["schema"] != kCandidatesSchema)
    throw VersionError(std::string("expected schema '") + kCandidatesSchema + "', found '" +
                       j["schema"].get<std::string>() + "'");
  CandidateSet s;
  try {
    s.entity = entity_from_string(j["entity"].get<std::string>());
    s.seed = j["seed"].get<std::uint64_t>();
  } catch (const nlohmann::json::exception&) {
    throw SchemaError("fields 'entity' and 'seed' must be a string and an unsigned integer");
  } catch (const InvalidParameter& e) {
    throw SchemaError(e.what());
  }
  s.provenance = j["provenance"];
  const auto& list = j["candidates"];
  if (!list.is_array()) throw SchemaError("field 'candidates' must be an array");
  for (std::size_t i = 0; i < list.size(); ++i) {
    const std::string where = "candidates[" + std::to_string(i) + "]";
    const auto& c = list[i];
    if (!c.is_object() || !c.contains("rot6d")) throw SchemaError("missing field '" + where + ".rot6d'");
    if (s.entity == Entity::Hand) {
      if (c.size() != 1) throw SchemaError("unknown field in '" + where + "'");
      const auto& joints = c["rot6d"];
      if (!joints.is_array() || joints.size() != kNumJoints)
        throw SchemaError("'" + where + ".rot6d' must hold 16 joints");
      HandCandidate h;
      for (int k = 0; k < kNumJoints; ++k) h[k] = rot6d_from(joints[k], where + ".rot6d");
      s.hand.push_back(h);
    } else {
      if (!c.contains("translation")) throw SchemaError("missing field '" + where + ".translation'");
      if (c.size() != 2) throw SchemaError("unknown field in '" + where + "'");
      s.object.push_back({rot6d_from(c["rot6d"], where + ".rot6d"), vec3_from(c["translation"], where + ".translation")});
    }
  }
  try {
    s.validate();
  } catch (const InvalidParameter& e) {
    throw SchemaError(e.what());
  }
  return s;
}

CandidateSet load_candidates(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open candidates '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return CandidateSet::from_json(j);
}

void save_candidates(const CandidateSet& set, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write candidates '" + path.string() + "'");
  out << set.to_json().dump(2) << '\n';
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

CandidateSet sample_candidates(Entity entity, const ScoreField& score, std::uint64_t seed, const SampleOptions& opt,
                               const nlohmann::json& score_description) {
  const int dim = entity == Entity::Hand ? 6 * kNumJoints : 9;
  const auto xs = pf_ode_sample(opt.n, dim, opt.t_f, score, opt.schedule, seed, opt.tolerances, opt.threads);
  CandidateSet s;
  s.entity = entity;
  s.seed = seed;
  for (const auto& x : xs) {
    if (entity == Entity::Hand)
      s.hand.push_back(hand_candidate_from(x));
    else
      s.object.push_back(object_candidate_from(x));
  }
  s.provenance = {{"generator", "pf-ode"},
                  {"n", opt.n},
                  {"t_f", opt.t_f},
                  {"schedule",
                   {{"sigma_min", opt.schedule.sigma_min},
                    {"sigma_max", opt.schedule.sigma_max},
                    {"eps_time", opt.schedule.eps_time}}},
                  {"atol", opt.tolerances.atol},
                  {"rtol", opt.tolerances.rtol},
                  {"score", score_description}};
  return s;
}

namespace {

Mat3 perturbed(const Mat3& r, double sigma, std::mt19937_64& rng) {
  if (sigma == 0.0) return r;
  std::normal_distribution<double> normal(0.0, sigma);
  const Vec3 delta(normal(rng), normal(rng), normal(rng));
  return r * aa_to_matrix(RotationAA(delta));
}

nlohmann::json perturbation_provenance(const PerturbationSpec& spec, int n) {
  return {{"generator", "perturbation"},
          {"n", n},
          {"rotation_sigma", spec.rotation_sigma},
          {"translation_sigma", spec.translation_sigma},
          {"include_reference", spec.include_reference}};
}

void check_spec(const PerturbationSpec& spec, int n) {
  if (n < 1) throw InvalidParameter("need at least one candidate");
  if (spec.rotation_sigma < 0.0 || spec.translation_sigma < 0.0)
    throw InvalidParameter("perturbation sigmas must be nonnegative");
}

}  // namespace

CandidateSet perturb_hand(const HandPose& reference, const PerturbationSpec& spec, int n, std::uint64_t seed) {
  check_spec(spec, n);
  CandidateSet s;
  s.entity = Entity::Hand;
  s.seed = seed;
  s.provenance = perturbation_provenance(spec, n);
  const HandCandidate ref = to_candidate(reference);
  for (int i = 0; i < n; ++i) {
    if (i == 0 && spec.include_reference) {
      s.hand.push_back(ref);
      continue;
    }
    std::mt19937_64 rng(substream_seed(seed, "perturb-hand", static_cast<std::uint64_t>(i)));
    HandCandidate c;
    for (int j = 0; j < kNumJoints; ++j)
      c[j] = matrix_to_rot6d(perturbed(aa_to_matrix(reference.theta[j]), spec.rotation_sigma, rng));
    s.hand.push_back(c);
  }
  return s;
}

CandidateSet perturb_object(const RigidPose& reference, const PerturbationSpec& spec, int n, std::uint64_t seed) {
  check_spec(spec, n);
  CandidateSet s;
  s.entity = Entity::Object;
  s.seed = seed;
  s.provenance = perturbation_provenance(spec, n);
  for (int i = 0; i < n; ++i) {
    if (i == 0 && spec.include_reference) {
      s.object.push_back(to_candidate(reference));
      continue;
    }
    std::mt19937_64 rng(substream_seed(seed, "perturb-object", static_cast<std::uint64_t>(i)));
    const Mat3 r = perturbed(reference.rotation, spec.rotation_sigma, rng);
    std::normal_distribution<double> normal(0.0, spec.translation_sigma);
    Vec3 t = reference.translation;
    if (spec.translation_sigma > 0.0) t += Vec3(normal(rng), normal(rng), normal(rng));
    s.object.push_back({matrix_to_rot6d(r), t});
  }
  return s;
}

}  // namespace graspforge
