#include "bartr/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "bartr/error.hpp"
#include "bartr/log.hpp"
#include "bartr/random.hpp"

namespace bartr {

namespace fs = std::filesystem;

namespace {

std::vector<fs::path> path_list(const nlohmann::json& j, const char* key, const fs::path& base) {
  std::vector<fs::path> out;
  if (!j.contains(key)) return out;
  if (!j.at(key).is_array()) throw ValidationError(std::string("config: '") + key + "' must be an array of paths");
  for (const auto& p : j.at(key)) {
    if (!p.is_string()) throw ValidationError(std::string("config: '") + key + "' entries must be strings");
    fs::path path = p.get<std::string>();
    out.push_back(path.is_relative() && !base.empty() ? base / path : path);
  }
  return out;
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  static const char* known[] = {"workspace",  "normative_logs", "participant_logs", "affected", "kernel_selection",
                                "kernel",     "mc_samples",     "seed",             "output_dir", "threads"};
  for (const auto& [key, value] : j.items())
    if (std::find(std::begin(known), std::end(known), key) == std::end(known))
      throw ValidationError("config: unknown key '" + key + "'");

  PipelineConfig c;
  try {
    if (j.contains("workspace")) {
      const auto& w = j.at("workspace");
      c.workspace.r_min = w.value("r_min", c.workspace.r_min);
      c.workspace.r_max = w.value("r_max", c.workspace.r_max);
      c.workspace.z_min = w.value("z_min", c.workspace.z_min);
      c.workspace.z_max = w.value("z_max", c.workspace.z_max);
    }
    c.normative_logs = path_list(j, "normative_logs", base_dir);
    c.participant_logs = path_list(j, "participant_logs", base_dir);
    if (j.contains("affected"))
      for (const auto& [who, side] : j.at("affected").items()) c.affected[who] = parse_side(side.get<std::string>());
    c.kernel_selection = j.value("kernel_selection", c.kernel_selection);
    c.kernel = j.value("kernel", c.kernel);
    if (j.contains("mc_samples")) {
      const auto& m = j.at("mc_samples");
      if (!m.is_number_integer() || m.get<long long>() < 0) throw ValidationError("config: mc_samples must be a positive integer");
      c.mc_samples = m.get<std::size_t>();
    }
    if (j.contains("seed")) {
      const auto& s = j.at("seed");
      if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0))
        throw ValidationError("config: seed must be a non-negative integer");
      c.seed = s.get<std::uint64_t>();
    }
    if (j.contains("output_dir")) {
      fs::path out = j.at("output_dir").get<std::string>();
      c.output_dir = out.is_relative() && !base_dir.empty() ? base_dir / out : out;
    }
    c.threads = j.value("threads", c.threads);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("config " + path.string() + ": " + e.what());
  }
  return from_json(j, path.parent_path());
}

nlohmann::ordered_json PipelineConfig::to_json() const {
  nlohmann::ordered_json j;
  j["workspace"] = {{"r_min", workspace.r_min}, {"r_max", workspace.r_max}, {"z_min", workspace.z_min},
                    {"z_max", workspace.z_max}};
  auto paths = [](const std::vector<fs::path>& v) {
    nlohmann::ordered_json a = nlohmann::ordered_json::array();
    for (const auto& p : v) a.push_back(p.generic_string());
    return a;
  };
  j["normative_logs"] = paths(normative_logs);
  j["participant_logs"] = paths(participant_logs);
  nlohmann::ordered_json aff = nlohmann::ordered_json::object();
  for (const auto& [who, side] : affected) aff[who] = std::string(side_name(side));
  j["affected"] = aff;
  j["kernel_selection"] = kernel_selection;
  j["kernel"] = kernel;
  j["mc_samples"] = mc_samples;
  j["seed"] = seed;
  return j;
}

void PipelineConfig::validate() const {
  workspace.validate();
  if (mc_samples < kMinPipelineSamples)
    throw ValidationError("mc_samples must be >= " + std::to_string(kMinPipelineSamples) + ", got " +
                          std::to_string(mc_samples));
  if (normative_logs.empty()) throw ValidationError("config lists no normative logs");
  if (participant_logs.empty()) throw ValidationError("config lists no participant logs");
  for (const auto* list : {&normative_logs, &participant_logs})
    for (const auto& p : *list)
      if (!fs::exists(p)) throw ValidationError("log path does not exist: " + p.string());
  if (!kernel_selection) parse_kernel(kernel);
}

std::vector<fs::path> expand_log_paths(const std::vector<fs::path>& paths) {
  std::vector<fs::path> out;
  for (const auto& p : paths) {
    if (!fs::is_directory(p)) {
      out.push_back(p);
      continue;
    }
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(p))
      if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    out.insert(out.end(), files.begin(), files.end());
  }
  return out;
}

bool PipelineReport::all_failed() const {
  return std::none_of(sessions.begin(), sessions.end(), [](const SessionResult& s) { return !s.failed; });
}

namespace {

struct SessionInput {
  std::string participant;
  int session = 0;
  std::optional<SessionLog> spontaneous;
  std::optional<SessionLog> constrained;
};

const char* error_kind(const std::exception& e) {
  if (dynamic_cast<const NumericError*>(&e)) return "numeric";
  return "validation";
}

CandidateKernel choose(const Dataset& data, TaskKind task, std::uint64_t seed, std::vector<KernelScore>& table) {
  auto sel = select_kernel(data, task, seed);
  table.insert(table.end(), sel.table.begin(), sel.table.end());
  return sel.chosen;
}

void process_session(const PipelineConfig& cfg, const SessionInput& in, const NormativeModel& nm,
                     const std::optional<NormativeSummary>& summary, SessionResult& out) {
  out.participant = in.participant;
  out.session = in.session;
  out.seed = derive_seed(cfg.seed, in.participant + "/" + std::to_string(in.session));
  try {
    const auto it = cfg.affected.find(in.participant);
    if (it == cfg.affected.end()) throw ValidationError("no affected side configured for " + in.participant);
    out.affected = it->second;
    if (!in.spontaneous) throw ValidationError("session has no spontaneous-phase log");
    if (!in.constrained) throw ValidationError("session has no constrained-phase log");

    ModelKernels mk{parse_kernel(cfg.kernel), parse_kernel(cfg.kernel), parse_kernel(cfg.kernel)};
    out.choice_kernel = out.success_kernel = out.time_kernel = cfg.kernel;
    if (cfg.kernel_selection) {
      const SessionLog spont[] = {*in.spontaneous};
      const SessionLog both[] = {*in.spontaneous, *in.constrained};
      const auto c = choose(choice_dataset(spont), TaskKind::SideClassifier, derive_seed(out.seed, "select-choice"),
                            out.selection);
      const auto s = choose(success_dataset(*in.constrained), TaskKind::SuccessClassifier,
                            derive_seed(out.seed, "select-success"), out.selection);
      const auto t = choose(time_dataset(both, *out.affected), TaskKind::TimeRegressor,
                            derive_seed(out.seed, "select-time"), out.selection);
      mk = {c.expr, s.expr, t.expr};
      out.choice_kernel = c.name;
      out.success_kernel = s.name;
      out.time_kernel = t.name;
    }

    const auto pm = fit_participant_model(in.participant, *out.affected, *in.spontaneous, *in.constrained, mk,
                                          derive_seed(out.seed, "fit"));
    out.choice_fit = pm.choice_fit;
    out.success_fit = pm.success_fit;
    out.time_fit = pm.time_fit;
    out.score = nu_bartr(pm, nm, cfg.workspace, cfg.mc_samples, derive_seed(out.seed, "mc"));
    out.raw_c = raw_c_bartr(*in.constrained);
    if (summary) {
      try {
        out.raw_s = raw_s_bartr(*in.spontaneous, *summary, *out.affected);
      } catch (const DegenerateError& e) {
        warn(in.participant + " session " + std::to_string(in.session) + ": raw sBARTR skipped: " + e.what());
      }
    }
  } catch (const std::exception& e) {
    out.failed = true;
    out.error = e.what();
    out.error_kind = error_kind(e);
  }
}

}  // namespace

PipelineReport run_pipeline(const PipelineConfig& cfg) {
  cfg.validate();
  PipelineReport report;
  report.config = cfg;

  // Normative model. Any failure here leaves nothing to score against.
  std::vector<SessionLog> normative;
  for (const auto& p : expand_log_paths(cfg.normative_logs)) normative.push_back(ingest(p));
  if (normative.empty()) throw ValidationError("no normative logs found");
  report.normative.sessions = normative.size();
  std::vector<SessionLog> normative_spont;
  for (const auto& l : normative)
    if (l.phase == Phase::Spontaneous) normative_spont.push_back(l);

  const auto kernel = parse_kernel(cfg.kernel);
  NormativeKernels nk{kernel, kernel, kernel};
  report.normative.choice_kernel = report.normative.left_kernel = report.normative.right_kernel = cfg.kernel;
  if (cfg.kernel_selection) {
    auto& table = report.normative.selection;
    const auto c = choose(choice_dataset(normative_spont), TaskKind::SideClassifier,
                          derive_seed(cfg.seed, "normative-select-choice"), table);
    const auto l = choose(time_dataset(normative, Side::Left), TaskKind::TimeRegressor,
                          derive_seed(cfg.seed, "normative-select-left"), table);
    const auto r = choose(time_dataset(normative, Side::Right), TaskKind::TimeRegressor,
                          derive_seed(cfg.seed, "normative-select-right"), table);
    nk = {c.expr, l.expr, r.expr};
    report.normative.choice_kernel = c.name;
    report.normative.left_kernel = l.name;
    report.normative.right_kernel = r.name;
  }
  const auto nm = fit_normative_model(normative, nk, derive_seed(cfg.seed, "normative"));
  report.normative.choice_fit = nm.choice_fit;
  report.normative.left_fit = nm.left_fit;
  report.normative.right_fit = nm.right_fit;
  std::optional<NormativeSummary> summary;
  if (!normative_spont.empty()) {
    summary = summarize_normative(normative_spont);
    report.normative.summary = *summary;
  }

  // Participant logs, grouped by (participant, session). Unreadable files are
  // recorded and skipped.
  std::map<std::pair<std::string, int>, SessionInput> inputs;
  for (const auto& p : expand_log_paths(cfg.participant_logs)) {
    try {
      auto log = ingest(p);
      auto& slot = inputs[{log.participant, log.session}];
      slot.participant = log.participant;
      slot.session = log.session;
      auto& phase = log.phase == Phase::Spontaneous ? slot.spontaneous : slot.constrained;
      if (phase) throw ValidationError("duplicate " + std::string(phase_name(log.phase)) + " log for " +
                                       log.participant + " session " + std::to_string(log.session));
      phase = std::move(log);
    } catch (const Error& e) {
      report.ingest_errors.emplace_back(p.generic_string(), e.what());
    }
  }

  std::vector<const SessionInput*> work;
  for (const auto& [key, in] : inputs) work.push_back(&in);
  report.sessions.resize(work.size());
  unsigned threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(work.size(), 1)));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < work.size(); i = next++) process_session(cfg, *work[i], nm, summary, report.sessions[i]);
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  // Session matrix and reliability.
  std::vector<std::string> participants;
  for (const auto& s : report.sessions) {
    if (participants.empty() || participants.back() != s.participant) participants.push_back(s.participant);
    if (std::find(report.session_ids.begin(), report.session_ids.end(), s.session) == report.session_ids.end())
      report.session_ids.push_back(s.session);
  }
  std::sort(report.session_ids.begin(), report.session_ids.end());
  report.matrix.participants = participants;
  report.matrix.scores.assign(participants.size(), std::vector<std::optional<double>>(report.session_ids.size()));
  for (const auto& s : report.sessions) {
    if (s.failed) continue;
    const auto row = static_cast<std::size_t>(std::find(participants.begin(), participants.end(), s.participant) -
                                              participants.begin());
    const auto col = static_cast<std::size_t>(
        std::find(report.session_ids.begin(), report.session_ids.end(), s.session) - report.session_ids.begin());
    report.matrix.scores[row][col] = s.score.nu_bartr;
  }
  try {
    report.icc = icc_1k(report.matrix);
  } catch (const Error& e) {
    report.icc_error = e.what();
  }
  return report;
}

namespace {

nlohmann::ordered_json fit_json(const FitReport& f) {
  return {{"nlml", f.nlml}, {"iterations", f.iterations}, {"restarts", f.restarts_used}, {"converged", f.converged},
          {"degenerate_labels", f.degenerate_labels}};
}

std::string fmt(double v) {
  if (!std::isfinite(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string selection_rows(const std::string& prefix, const std::vector<KernelScore>& table) {
  const std::string csv = scores_to_csv(table);
  std::istringstream in(csv);
  std::string line, out;
  std::getline(in, line);  // header
  while (std::getline(in, line)) out += prefix + line + "\n";
  return out;
}

}  // namespace

nlohmann::ordered_json PipelineReport::to_json() const {
  nlohmann::ordered_json j;
  j["config"] = config.to_json();

  auto& n = j["normative"];
  n["sessions"] = normative.sessions;
  n["seed"] = derive_seed(config.seed, "normative");
  n["kernels"] = {{"choice", normative.choice_kernel}, {"left_time", normative.left_kernel},
                  {"right_time", normative.right_kernel}};
  n["fits"] = {{"choice", fit_json(normative.choice_fit)}, {"left_time", fit_json(normative.left_fit)},
               {"right_time", fit_json(normative.right_fit)}};
  n["summary"] = {{"left_count", normative.summary.left_count}, {"right_count", normative.summary.right_count},
                  {"left_time", normative.summary.left_time}, {"right_time", normative.summary.right_time}};

  auto& list = j["sessions"] = nlohmann::ordered_json::array();
  for (const auto& s : sessions) {
    nlohmann::ordered_json e;
    e["participant"] = s.participant;
    e["session"] = s.session;
    e["affected"] = s.affected ? nlohmann::ordered_json(std::string(side_name(*s.affected))) : nullptr;
    e["status"] = s.failed ? "failed" : "ok";
    e["seed"] = s.seed;
    if (s.failed) {
      e["error_kind"] = s.error_kind;
      e["error"] = s.error;
    } else {
      e["seeds"] = {{"fit", derive_seed(s.seed, "fit")}, {"mc", derive_seed(s.seed, "mc")}};
      e["kernels"] = {{"choice", s.choice_kernel}, {"success", s.success_kernel}, {"time", s.time_kernel}};
      e["fits"] = {{"choice", fit_json(s.choice_fit)}, {"success", fit_json(s.success_fit)},
                   {"time", fit_json(s.time_fit)}};
      e["score"] = bartr::to_json(s.score);
      e["raw_c_bartr"] = s.raw_c;
      e["raw_s_bartr"] = s.raw_s ? nlohmann::ordered_json(*s.raw_s) : nullptr;
      e["raw_nu_bartr"] = s.raw_s ? nlohmann::ordered_json(s.raw_c - *s.raw_s) : nullptr;
    }
    list.push_back(std::move(e));
  }

  auto& errs = j["ingest_errors"] = nlohmann::ordered_json::array();
  for (const auto& [path, msg] : ingest_errors) errs.push_back({{"path", path}, {"error", msg}});

  auto& rel = j["reliability"];
  if (icc) {
    rel["icc_1k"] = icc->icc;
    rel["f"] = std::isfinite(icc->f) ? nlohmann::ordered_json(icc->f) : nlohmann::ordered_json("inf");
    rel["p"] = icc->p;
    rel["participants"] = icc->n;
    rel["sessions"] = icc->k;
    rel["dropped"] = icc->dropped;
  } else {
    rel["error"] = icc_error;
  }
  std::size_t failed = 0;
  for (const auto& s : sessions) failed += s.failed ? 1 : 0;
  j["summary"] = {{"sessions", sessions.size()}, {"failed", failed}, {"ingest_errors", ingest_errors.size()}};
  return j;
}

std::string PipelineReport::sessions_csv() const {
  std::string out =
      "participant,session,affected,status,nu_bartr,c_mean,s_mean,mc_se,raw_c_bartr,raw_s_bartr,raw_nu_bartr,"
      "choice_kernel,success_kernel,time_kernel\n";
  for (const auto& s : sessions) {
    out += s.participant + "," + std::to_string(s.session) + "," +
           (s.affected ? std::string(side_name(*s.affected)) : std::string()) + "," + (s.failed ? "failed" : "ok");
    if (s.failed) {
      out += ",,,,,,,,,,\n";
      continue;
    }
    out += "," + fmt(s.score.nu_bartr) + "," + fmt(s.score.c_mean) + "," + fmt(s.score.s_mean) + "," +
           fmt(s.score.mc_se) + "," + fmt(s.raw_c) + "," + (s.raw_s ? fmt(*s.raw_s) : "") + "," +
           (s.raw_s ? fmt(s.raw_c - *s.raw_s) : "") + "," + s.choice_kernel + "," + s.success_kernel + "," +
           s.time_kernel + "\n";
  }
  return out;
}

std::string PipelineReport::matrix_csv() const {
  std::string out = "participant";
  for (int id : session_ids) out += ",s" + std::to_string(id);
  out += "\n";
  for (std::size_t i = 0; i < matrix.participants.size(); ++i) {
    out += matrix.participants[i];
    for (const auto& v : matrix.scores[i]) out += "," + (v ? fmt(*v) : std::string());
    out += "\n";
  }
  return out;
}

void PipelineReport::write(const fs::path& dir) const {
  fs::create_directories(dir);
  auto put = [&](const char* name, const std::string& text) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + (dir / name).string());
    out << text;
  };
  put("report.json", to_json().dump(2) + "\n");
  put("sessions.csv", sessions_csv());
  put("score_matrix.csv", matrix_csv());
  if (config.kernel_selection) {
    std::string sel = "participant,session," + std::string(kScoreCsvHeader) + "\n";
    sel += selection_rows("normative,0,", normative.selection);
    for (const auto& s : sessions)
      sel += selection_rows(s.participant + "," + std::to_string(s.session) + ",", s.selection);
    put("selection.csv", sel);
  }
}

}  // namespace bartr
