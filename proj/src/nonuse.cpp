#include "bartr/nonuse.hpp"

#include <cmath>
#include <cstdio>

#include "bartr/error.hpp"
#include "bartr/random.hpp"

namespace bartr {

Eigen::VectorXd ParticipantModel::affected_choice(std::span<const Point3> xs) const {
  Eigen::VectorXd right = choice.predict(xs);
  if (affected == Side::Right) return right;
  return (1.0 - right.array()).matrix();
}

Eigen::VectorXd NormativeModel::choice_probability(Side side, std::span<const Point3> xs) const {
  Eigen::VectorXd right = choice.predict(xs);
  if (side == Side::Right) return right;
  return (1.0 - right.array()).matrix();
}

Dataset choice_dataset(std::span<const SessionLog> spontaneous) {
  Dataset d;
  for (const auto& log : spontaneous) {
    if (log.phase != Phase::Spontaneous) throw ValidationError("choice data must come from spontaneous sessions");
    for (const auto& t : log.trials) {
      if (t.hand == Hand::None) continue;
      d.inputs.push_back(t.target);
      d.labels.push_back(t.hand == Hand::Right ? 1 : -1);
    }
  }
  return d;
}

Dataset success_dataset(const SessionLog& constrained) {
  if (constrained.phase != Phase::Constrained) throw ValidationError("success data must come from a constrained session");
  Dataset d;
  for (const auto& t : constrained.trials) {
    d.inputs.push_back(t.target);
    d.labels.push_back(t.success ? 1 : -1);
  }
  return d;
}

Dataset time_dataset(std::span<const SessionLog> logs, Side side) {
  Dataset d;
  for (const auto& log : logs) {
    for (const auto& t : log.trials) {
      if (!t.success || t.hand != hand_of(side)) continue;
      d.inputs.push_back(t.target);
      d.targets.push_back(*t.reach_time);
    }
  }
  return d;
}

namespace {

void require_points(const Dataset& d, const std::string& what) {
  if (d.size() < 2)
    throw ValidationError(what + " needs at least 2 trials, got " + std::to_string(d.size()));
}

}  // namespace

ParticipantModel fit_participant_model(const std::string& id, Side affected, const SessionLog& spontaneous,
                                       const SessionLog& constrained, const ModelKernels& kernels,
                                       std::uint64_t seed, const OptimizerOptions& options) {
  ParticipantModel pm;
  pm.id = id;
  pm.affected = affected;

  const SessionLog spont[] = {spontaneous};
  Dataset choice = choice_dataset(spont);
  require_points(choice, "choice model");
  std::tie(pm.choice, pm.choice_fit) =
      fit_classifier(std::move(choice.inputs), std::move(choice.labels), kernels.choice, derive_seed(seed, "choice"),
                     options);

  Dataset success = success_dataset(constrained);
  require_points(success, "success model");
  std::tie(pm.success, pm.success_fit) = fit_classifier(std::move(success.inputs), std::move(success.labels),
                                                        kernels.success, derive_seed(seed, "success"), options);

  const SessionLog both[] = {spontaneous, constrained};
  Dataset time = time_dataset(both, affected);
  require_points(time, "affected-arm time model");
  std::tie(pm.time, pm.time_fit) =
      fit_regressor(std::move(time.inputs), std::move(time.targets), kernels.time, derive_seed(seed, "time"), options);
  return pm;
}

NormativeModel fit_normative_model(std::span<const SessionLog> logs, const ModelKernels& kernels,
                                   std::uint64_t seed, const OptimizerOptions& options) {
  return fit_normative_model(logs, NormativeKernels{kernels.choice, kernels.time, kernels.time}, seed, options);
}

NormativeModel fit_normative_model(std::span<const SessionLog> logs, const NormativeKernels& kernels,
                                   std::uint64_t seed, const OptimizerOptions& options) {
  if (logs.empty()) throw ValidationError("normative model needs at least one neurotypical session");
  std::vector<SessionLog> spontaneous;
  for (const auto& log : logs)
    if (log.phase == Phase::Spontaneous) spontaneous.push_back(log);

  NormativeModel nm;
  Dataset choice = choice_dataset(spontaneous);
  require_points(choice, "normative choice model");
  std::tie(nm.choice, nm.choice_fit) = fit_classifier(std::move(choice.inputs), std::move(choice.labels),
                                                      kernels.choice, derive_seed(seed, "normative-choice"), options);
  Dataset left = time_dataset(logs, Side::Left);
  require_points(left, "normative left-arm time model");
  std::tie(nm.left_time, nm.left_fit) = fit_regressor(std::move(left.inputs), std::move(left.targets), kernels.left_time,
                                                      derive_seed(seed, "normative-left"), options);
  Dataset right = time_dataset(logs, Side::Right);
  require_points(right, "normative right-arm time model");
  std::tie(nm.right_time, nm.right_fit) = fit_regressor(std::move(right.inputs), std::move(right.targets),
                                                        kernels.right_time, derive_seed(seed, "normative-right"), options);
  return nm;
}

ScoreFields model_fields(const ParticipantModel& pm, const NormativeModel& nm) {
  const ParticipantModel* p = &pm;
  const NormativeModel* n = &nm;
  const Side side = pm.affected;
  return {[p](std::span<const Point3> xs) { return p->success.predict(xs); },
          [p](std::span<const Point3> xs) { return p->affected_choice(xs); },
          [n, side](std::span<const Point3> xs) { return n->choice_probability(side, xs); },
          [p](std::span<const Point3> xs) { return p->time.predict(xs).mean; },
          [n, side](std::span<const Point3> xs) { return n->time(side).predict(xs).mean; }};
}

namespace {

Field pointwise(std::function<double(const Point3&)> f) {
  return [f = std::move(f)](std::span<const Point3> xs) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(xs.size()));
    for (std::size_t i = 0; i < xs.size(); ++i) out(static_cast<Eigen::Index>(i)) = f(xs[i]);
    return out;
  };
}

}  // namespace

ScoreFields ground_truth_score_fields(const BehaviorModel& participant, const BehaviorModel& normative) {
  if (!participant.affected) throw ValidationError("participant behavior model needs an affected side");
  const Side side = *participant.affected;
  const BehaviorFields p = ground_truth_fields(participant);
  const BehaviorFields n = ground_truth_fields(normative);
  const auto side_prob = [side](std::function<double(const Point3&)> right) {
    return [side, right = std::move(right)](const Point3& x) {
      return side == Side::Right ? right(x) : 1.0 - right(x);
    };
  };
  return {pointwise(p.success), pointwise(side_prob(p.choice_right)), pointwise(side_prob(n.choice_right)),
          pointwise(p.time), pointwise(n.time)};
}

namespace {

void require_inside(const WorkspaceSpec& spec, const Point3& x) {
  if (!contains(spec, x)) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "point (%.2f, %.2f, %.2f) lies outside the workspace", x.x, x.y, x.z);
    throw ValidationError(buf);
  }
}

double single(const Field& f, const Point3& x) {
  const Point3 xs[] = {x};
  return f(xs)(0);
}

}  // namespace

double c_bartr(const ScoreFields& f, const Point3& x, const WorkspaceSpec& spec) {
  require_inside(spec, x);
  return single(f.success, x);
}

double c_bartr(const ParticipantModel& pm, const Point3& x, const WorkspaceSpec& spec) {
  require_inside(spec, x);
  const Point3 xs[] = {x};
  return pm.success.predict(xs)(0);
}

double s_bartr(const ScoreFields& f, const Point3& x, const WorkspaceSpec& spec) {
  require_inside(spec, x);
  return single(f.participant_choice, x) * single(f.normative_choice, x) *
         (single(f.normative_time, x) - single(f.participant_time, x));
}

double s_bartr(const ParticipantModel& pm, const NormativeModel& nm, const Point3& x, const WorkspaceSpec& spec) {
  return s_bartr(model_fields(pm, nm), x, spec);
}

NonuseScore nu_bartr(const ScoreFields& f, const WorkspaceSpec& spec, std::size_t n, std::uint64_t seed,
                     const std::string& participant) {
  const auto xs = sample_uniform(spec, n, seed);
  const Eigen::VectorXd c = f.success(xs);
  const Eigen::VectorXd pp = f.participant_choice(xs);
  const Eigen::VectorXd pn = f.normative_choice(xs);
  const Eigen::VectorXd tp = f.participant_time(xs);
  const Eigen::VectorXd tn = f.normative_time(xs);

  double c_sum = 0.0, s_sum = 0.0;
  Eigen::VectorXd diff(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < diff.size(); ++i) {
    const double s = pp(i) * pn(i) * (tn(i) - tp(i));
    if (!std::isfinite(c(i)) || !std::isfinite(s)) {
      const auto& x = xs[static_cast<std::size_t>(i)];
      char buf[160];
      std::snprintf(buf, sizeof buf, "non-finite nonuse term at sample %ld (%.3f, %.3f, %.3f)",
                    static_cast<long>(i), x.x, x.y, x.z);
      throw NumericError(buf);
    }
    c_sum += c(i);
    s_sum += s;
    diff(i) = c(i) - s;
  }
  NonuseScore score;
  score.participant = participant;
  score.n = n;
  score.seed = seed;
  const double dn = static_cast<double>(n);
  score.c_mean = c_sum / dn;
  score.s_mean = s_sum / dn;
  score.nu_bartr = score.c_mean - score.s_mean;
  if (n > 1) {
    const double mean = diff.mean();
    double ss = 0.0;
    for (Eigen::Index i = 0; i < diff.size(); ++i) ss += (diff(i) - mean) * (diff(i) - mean);
    score.mc_se = std::sqrt(ss / (dn - 1.0) / dn);
  }
  return score;
}

NonuseScore nu_bartr(const ParticipantModel& pm, const NormativeModel& nm, const WorkspaceSpec& spec, std::size_t n,
                     std::uint64_t seed) {
  return nu_bartr(model_fields(pm, nm), spec, n, seed, pm.id);
}

nlohmann::ordered_json to_json(const NonuseScore& score) {
  nlohmann::ordered_json j;
  j["participant"] = score.participant;
  j["nu_bartr"] = score.nu_bartr;
  j["c_mean"] = score.c_mean;
  j["s_mean"] = score.s_mean;
  j["n"] = score.n;
  j["seed"] = score.seed;
  j["mc_se"] = score.mc_se;
  return j;
}

double raw_c_bartr(const SessionLog& constrained) {
  if (constrained.phase != Phase::Constrained) throw ValidationError("raw cBARTR needs a constrained session");
  if (constrained.trials.empty()) throw ValidationError("raw cBARTR of an empty session");
  std::size_t ok = 0;
  for (const auto& t : constrained.trials) ok += t.success ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(constrained.trials.size());
}

NormativeSummary summarize_normative(std::span<const SessionLog> spontaneous) {
  if (spontaneous.empty()) throw ValidationError("normative summary needs at least one session");
  NormativeSummary out;
  double left_n = 0, right_n = 0, left_t = 0, right_t = 0;
  for (const auto& log : spontaneous) {
    if (log.phase != Phase::Spontaneous) throw ValidationError("normative summary uses spontaneous sessions only");
    for (const auto& t : log.trials) {
      if (!t.success) continue;
      if (t.hand == Hand::Left) {
        left_n += 1;
        left_t += *t.reach_time;
      } else {
        right_n += 1;
        right_t += *t.reach_time;
      }
    }
  }
  const double sessions = static_cast<double>(spontaneous.size());
  out.left_count = left_n / sessions;
  out.right_count = right_n / sessions;
  out.left_time = left_n > 0 ? left_t / left_n : 0.0;
  out.right_time = right_n > 0 ? right_t / right_n : 0.0;
  return out;
}

double raw_s_bartr(double participant_count, double normative_count, double normative_time,
                   double participant_time) {
  if (!(normative_count > 0.0)) throw DegenerateError("normative side count is zero");
  if (participant_count <= 0.0) return 0.0;
  return std::min(participant_count / normative_count, 1.0) * std::min(normative_time - participant_time, 0.0);
}

double raw_s_bartr(const SessionLog& spontaneous, const NormativeSummary& normative, Side affected) {
  if (spontaneous.phase != Phase::Spontaneous) throw ValidationError("raw sBARTR needs a spontaneous session");
  if (spontaneous.trials.empty()) throw ValidationError("raw sBARTR of an empty session");
  double count = 0.0, time = 0.0;
  for (const auto& t : spontaneous.trials) {
    if (!t.success || t.hand != hand_of(affected)) continue;
    count += 1.0;
    time += *t.reach_time;
  }
  return raw_s_bartr(count, normative.count(affected), normative.time(affected), count > 0 ? time / count : 0.0);
}

}  // namespace bartr
