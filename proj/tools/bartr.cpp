// bartr: simulate sessions, select kernels, score nonuse and run the clinical statistics.
//
// Every verb reads an optional TOML config (--config) whose [verb] section
// supplies defaults for that verb's flags; flags given on the command line win.
// Exit codes: 0 ok, 2 validation, 3 numeric, 4 every session failed.

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bartr/error.hpp"
#include "bartr/heatmap.hpp"
#include "bartr/model_selection.hpp"
#include "bartr/nonuse.hpp"
#include "bartr/pipeline.hpp"
#include "bartr/random.hpp"
#include "bartr/simulate.hpp"
#include "bartr/stats.hpp"

namespace fs = std::filesystem;
using namespace bartr;
using json = nlohmann::ordered_json;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitTotalFailure = 4;

void emit(const json& j, const std::string& out) {
  const std::string text = j.dump(2) + "\n";
  if (out.empty() || out == "-") {
    std::cout << text;
    return;
  }
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  std::ofstream f(out, std::ios::binary);
  if (!f) throw ValidationError("cannot write " + out);
  f << text;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot write " + path.string());
  f << text;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  return in;
}

json nullable(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

// ---- simulate -------------------------------------------------------------

struct SimulateArgs {
  std::string preset = "post-stroke";
  std::string participant = "sim";
  int session = 1;
  std::string phase = "both";
  std::string affected;
  std::optional<double> gamma, beta0, kappa, v, tau0, beta_z, sigma_t;
  std::uint64_t seed = 0;
  std::string out = ".";
  bool trace = false;
};

int run_simulate(const SimulateArgs& a) {
  BehaviorModel bm;
  if (a.preset == "neurotypical")
    bm = neurotypical_preset();
  else if (a.preset == "post-stroke")
    bm = post_stroke_preset(a.gamma.value_or(2.0), Side::Left);
  else
    throw ValidationError("unknown preset '" + a.preset + "' (neurotypical, post-stroke)");
  if (!a.affected.empty()) {
    if (a.affected == "none")
      bm.affected.reset();
    else
      bm.affected = parse_side(a.affected);
  }
  if (a.gamma) bm.gamma = *a.gamma;
  if (a.beta0) bm.beta0 = *a.beta0;
  if (a.kappa) bm.kappa = *a.kappa;
  if (a.v) bm.v = *a.v;
  if (a.tau0) bm.tau0 = *a.tau0;
  if (a.beta_z) bm.beta_z = *a.beta_z;
  if (a.sigma_t) bm.sigma_t = *a.sigma_t;
  bm.validate();

  std::vector<Phase> phases;
  if (a.phase == "both")
    phases = {Phase::Spontaneous, Phase::Constrained};
  else
    phases = {parse_phase(a.phase)};

  json files = json::array();
  for (Phase ph : phases) {
    const auto seed = derive_seed(a.seed, std::string(phase_name(ph)));
    SessionTrace trace;
    const auto log = run_session(bm, ph, {}, seed, {a.participant, a.session}, a.trace ? &trace : nullptr);
    const std::string stem = a.participant + "_s" + std::to_string(a.session) + "_" + std::string(phase_name(ph));
    const fs::path path = fs::path(a.out) / (stem + ".jsonl");
    write_text(path, format_session_log(log));
    files.push_back(path.generic_string());
    if (a.trace) {
      std::string text;
      for (const auto& d : trace.datagrams) text += std::to_string(d.t_ms) + " " + d.bytes;
      const fs::path tpath = fs::path(a.out) / (stem + ".trace");
      write_text(tpath, text);
      files.push_back(tpath.generic_string());
    }
  }
  emit(json{{"files", files}}, "-");
  return 0;
}

// ---- select-kernels -------------------------------------------------------

struct SelectArgs {
  std::string spontaneous, constrained, affected = "left";
  std::uint64_t seed = 0;
  std::string format = "csv";
  std::string out;
};

int run_select(const SelectArgs& a) {
  const Side side = parse_side(a.affected);
  std::vector<SessionLog> logs;
  std::vector<KernelScore> rows;
  json chosen;
  auto pick = [&](const Dataset& d, TaskKind task) {
    const auto sel = select_kernel(d, task, derive_seed(a.seed, std::string(task_name(task))));
    rows.insert(rows.end(), sel.table.begin(), sel.table.end());
    chosen[std::string(task_name(task))] = sel.chosen.name;
  };
  if (!a.spontaneous.empty()) {
    const SessionLog spont[] = {ingest(a.spontaneous)};
    pick(choice_dataset(spont), TaskKind::SideClassifier);
    logs.push_back(spont[0]);
  }
  if (!a.constrained.empty()) {
    logs.push_back(ingest(a.constrained));
    pick(success_dataset(logs.back()), TaskKind::SuccessClassifier);
  }
  if (logs.empty()) throw ValidationError("select-kernels needs --spontaneous and/or --constrained");
  pick(time_dataset(logs, side), TaskKind::TimeRegressor);

  std::string table;
  if (a.format == "csv")
    table = scores_to_csv(rows);
  else if (a.format == "markdown")
    table = scores_to_markdown(rows);
  else
    throw ValidationError("unknown format '" + a.format + "' (csv, markdown)");
  if (a.out.empty()) {
    std::cout << table;
  } else {
    write_text(a.out, table);
  }
  std::cerr << json{{"chosen", chosen}}.dump() << "\n";
  return 0;
}

// ---- score ----------------------------------------------------------------

struct ScoreArgs {
  std::string pipeline;
  std::vector<std::string> normative, logs, affected;
  std::string kernel;
  bool no_selection = false;
  std::size_t mc_samples = 0;
  std::uint64_t seed = 0;
  std::string output_dir;
  unsigned threads = 0;
};

int run_score(const ScoreArgs& a, const CLI::App& cmd) {
  PipelineConfig cfg = a.pipeline.empty() ? PipelineConfig{} : PipelineConfig::load(a.pipeline);
  if (cmd.count("--normative")) cfg.normative_logs.assign(a.normative.begin(), a.normative.end());
  if (cmd.count("--logs")) cfg.participant_logs.assign(a.logs.begin(), a.logs.end());
  for (const auto& kv : a.affected) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ValidationError("--affected expects participant=side, got '" + kv + "'");
    cfg.affected[kv.substr(0, eq)] = parse_side(kv.substr(eq + 1));
  }
  if (cmd.count("--kernel")) cfg.kernel = a.kernel;
  if (cmd.count("--no-selection")) cfg.kernel_selection = !a.no_selection;
  if (cmd.count("--mc-samples")) cfg.mc_samples = a.mc_samples;
  cfg.seed = a.seed;
  if (cmd.count("--output-dir")) cfg.output_dir = a.output_dir;
  if (cmd.count("--threads")) cfg.threads = a.threads;

  const auto report = run_pipeline(cfg);
  report.write(cfg.output_dir);
  std::size_t ok = 0;
  for (const auto& s : report.sessions) ok += s.failed ? 0 : 1;
  std::cout << json{{"report", (cfg.output_dir / "report.json").generic_string()},
                    {"sessions", report.sessions.size()},
                    {"scored", ok}}
                   .dump(2)
            << "\n";
  return report.all_failed() ? kExitTotalFailure : 0;
}

// ---- stats ----------------------------------------------------------------

struct StatsArgs {
  std::string matrix, pairs, items, out;
  bool exact = false;
};

int run_stats(const StatsArgs& a) {
  json j;
  if (a.matrix.empty() && a.pairs.empty() && a.items.empty())
    throw ValidationError("stats needs --matrix, --pairs or --items");
  if (!a.matrix.empty()) {
    auto in = open_in(a.matrix);
    const auto m = parse_score_matrix_csv(in);
    const auto icc = icc_1k(m);
    j["icc_1k"] = {{"icc", icc.icc}, {"f", nullable(icc.f)}, {"p", icc.p}, {"msb", icc.msb},
                   {"msw", icc.msw},  {"participants", icc.n}, {"sessions", icc.k}, {"dropped", icc.dropped}};
    // Pearson between every pair of sessions over participants scored in both.
    json pairs = json::array();
    std::size_t k = 0;
    for (const auto& row : m.scores) k = std::max(k, row.size());
    for (std::size_t s = 0; s < k; ++s)
      for (std::size_t t = s + 1; t < k; ++t) {
        std::vector<double> x, y;
        for (const auto& row : m.scores)
          if (s < row.size() && t < row.size() && row[s] && row[t]) {
            x.push_back(*row[s]);
            y.push_back(*row[t]);
          }
        json e{{"a", s + 1}, {"b", t + 1}, {"n", x.size()}};
        try {
          const auto c = pearson(x, y, a.exact);
          e["r"] = c.r;
          e["p"] = c.p;
          e["exact"] = c.exact;
        } catch (const Error& err) {
          e["error"] = err.what();
        }
        pairs.push_back(e);
      }
    j["pearson"] = pairs;
  }
  if (!a.pairs.empty()) {
    const auto t = read_csv(a.pairs);
    const auto xc = t.column("x"), yc = t.column("y");
    std::vector<double> x, y;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      try {
        x.push_back(std::stod(t.rows[i][xc]));
        y.push_back(std::stod(t.rows[i][yc]));
      } catch (const std::exception&) {
        throw IngestError("x and y must be numbers", t.lines[i]);
      }
    }
    const auto s = spearman(x, y, a.exact);
    j["spearman"] = {{"rho", s.r}, {"p", s.p}, {"n", s.n}, {"exact", s.exact}};
  }
  if (!a.items.empty()) {
    const auto t = read_csv(a.items);
    std::vector<std::size_t> cols;
    for (std::size_t c = 0; c < t.header.size(); ++c)
      if (t.header[c] != "subject") cols.push_back(c);
    Eigen::MatrixXd m(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < t.rows.size(); ++i)
      for (std::size_t c = 0; c < cols.size(); ++c) {
        try {
          m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = std::stod(t.rows[i][cols[c]]);
        } catch (const std::exception&) {
          throw IngestError("item scores must be numbers", t.lines[i]);
        }
      }
    j["cronbach_alpha"] = cronbach_alpha(m);
  }
  emit(j, a.out);
  return 0;
}

// ---- sus / aaut -----------------------------------------------------------

struct SusArgs {
  std::string input, out;
  double threshold = kSusThreshold;
};

int run_sus(const SusArgs& a) {
  auto in = open_in(a.input);
  const auto responses = parse_sus_csv(in);
  if (responses.empty()) throw ValidationError("SUS file has no responses");
  json scores = json::array();
  std::vector<double> values;
  for (const auto& r : responses) {
    values.push_back(score_sus(r));
    scores.push_back(values.back());
  }
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  json j{{"scores", scores}, {"mean", mean}, {"threshold", a.threshold}};
  try {
    const auto w = wilcoxon_signed_rank(values, a.threshold);
    j["wilcoxon"] = {{"w", w.w}, {"p", w.p}, {"n", w.n}, {"zeros_dropped", w.zeros_dropped}, {"exact", w.exact}};
  } catch (const DegenerateError& e) {
    j["wilcoxon"] = {{"error", e.what()}};
  }
  emit(j, a.out);
  return 0;
}

struct AautArgs {
  std::vector<std::string> inputs;
  std::string out;
};

int run_aaut(const AautArgs& a) {
  json list = json::array();
  for (const auto& path : a.inputs) {
    auto in = open_in(path);
    const auto rec = parse_aaut_csv(in);
    list.push_back({{"file", fs::path(path).filename().generic_string()}, {"nonuse", score_aaut(rec)}});
  }
  emit(json{{"records", list}}, a.out);
  return 0;
}

// ---- heatmap --------------------------------------------------------------

struct HeatmapArgs {
  std::string spontaneous, constrained, affected = "left", kernel = "rbf+N1", out = "heatmaps";
  std::vector<std::string> normative;
  std::string field = "all";
  int resolution = 21;
  std::uint64_t seed = 0;
};

int run_heatmap(const HeatmapArgs& a) {
  const WorkspaceSpec spec;
  const auto heights = grid_heights(spec);
  const auto k = parse_kernel(a.kernel);
  const ModelKernels mk{k, k, k};
  json files = json::array();
  auto dump = [&](const Field& f, const std::string& stem) {
    for (const auto& p : export_heatmap(f, spec, a.resolution, heights, a.out, stem)) files.push_back(p.generic_string());
  };
  const bool all = a.field == "all";
  if (!a.normative.empty()) {
    std::vector<SessionLog> logs;
    for (const auto& p : expand_log_paths({a.normative.begin(), a.normative.end()})) logs.push_back(ingest(p));
    const auto nm = fit_normative_model(logs, mk, derive_seed(a.seed, "normative"));
    if (all || a.field == "choice")
      dump([&](std::span<const Point3> xs) { return nm.choice.predict(xs); }, "normative_choice_right");
    if (all || a.field == "time") {
      dump([&](std::span<const Point3> xs) { return nm.left_time.predict(xs).mean; }, "normative_time_left");
      dump([&](std::span<const Point3> xs) { return nm.right_time.predict(xs).mean; }, "normative_time_right");
    }
  }
  if (!a.spontaneous.empty() || !a.constrained.empty()) {
    if (a.spontaneous.empty() || a.constrained.empty())
      throw ValidationError("participant heatmaps need both --spontaneous and --constrained");
    const auto sp = ingest(a.spontaneous);
    const auto co = ingest(a.constrained);
    const auto pm = fit_participant_model(sp.participant, parse_side(a.affected), sp, co, mk, derive_seed(a.seed, "fit"));
    const std::string who = sp.participant + "_s" + std::to_string(sp.session);
    if (all || a.field == "choice")
      dump([&](std::span<const Point3> xs) { return pm.choice.predict(xs); }, who + "_choice_right");
    if (all || a.field == "success")
      dump([&](std::span<const Point3> xs) { return pm.success.predict(xs); }, who + "_success");
    if (all || a.field == "time") dump([&](std::span<const Point3> xs) { return pm.time.predict(xs).mean; }, who + "_time");
  }
  if (files.empty()) throw ValidationError("heatmap needs --normative or participant logs, and a known --field");
  emit(json{{"files", files}}, "-");
  return 0;
}

// CLI11 only reads the config when --config precedes the verb, so it is hoisted.
// Returned in the reversed order App::parse expects.
std::vector<std::string> hoist_config(int argc, char** argv) {
  std::vector<std::string> config, rest;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) {
      config.push_back(a);
      config.push_back(argv[++i]);
    } else if (a.rfind("--config=", 0) == 0) {
      config.push_back(a);
    } else {
      rest.push_back(a);
    }
  }
  config.insert(config.end(), rest.begin(), rest.end());
  std::reverse(config.begin(), config.end());
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robot reaching-test nonuse toolkit"};
  app.name("bartr");
  app.set_config("--config", "", "TOML config; [verb] sections hold flag defaults");
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Simulate spontaneous and constrained session logs");
  c_sim->add_option("--preset", sim.preset, "neurotypical or post-stroke")->capture_default_str();
  c_sim->add_option("--participant", sim.participant)->capture_default_str();
  c_sim->add_option("--session", sim.session)->capture_default_str();
  c_sim->add_option("--phase", sim.phase, "spontaneous, constrained or both")->capture_default_str();
  c_sim->add_option("--affected", sim.affected, "left, right or none");
  c_sim->add_option("--gamma", sim.gamma, "nonuse severity");
  c_sim->add_option("--beta0", sim.beta0, "handedness bias (log-odds)");
  c_sim->add_option("--kappa", sim.kappa, "lateral preference");
  c_sim->add_option("--v", sim.v, "reach speed (cm/s)");
  c_sim->add_option("--tau0", sim.tau0, "reaction time (s)");
  c_sim->add_option("--beta-z", sim.beta_z, "height cost (s/cm)");
  c_sim->add_option("--sigma-t", sim.sigma_t, "reach time noise (s)");
  c_sim->add_option("--seed", sim.seed)->required();
  c_sim->add_option("--out", sim.out, "output directory")->capture_default_str();
  c_sim->add_flag("--trace", sim.trace, "also write the datagram trace");

  SelectArgs sel;
  auto* c_sel = app.add_subcommand("select-kernels", "Cross-validate the 15 candidate kernels per task");
  c_sel->add_option("--spontaneous", sel.spontaneous, "spontaneous-phase log");
  c_sel->add_option("--constrained", sel.constrained, "constrained-phase log");
  c_sel->add_option("--affected", sel.affected)->capture_default_str();
  c_sel->add_option("--seed", sel.seed)->capture_default_str();
  c_sel->add_option("--format", sel.format, "csv or markdown")->capture_default_str();
  c_sel->add_option("--out", sel.out, "table file (default stdout)");

  ScoreArgs sc;
  auto* c_sc = app.add_subcommand("score", "Fit models and score nonuse for a cohort");
  c_sc->add_option("--pipeline", sc.pipeline, "JSON pipeline config");
  c_sc->add_option("--normative", sc.normative, "neurotypical logs or directories");
  c_sc->add_option("--logs", sc.logs, "participant logs or directories");
  c_sc->add_option("--affected", sc.affected, "participant=left|right");
  c_sc->add_option("--kernel", sc.kernel, "kernel used when selection is off");
  c_sc->add_flag("--no-selection", sc.no_selection, "skip cross-validated kernel selection");
  c_sc->add_option("--mc-samples", sc.mc_samples);
  c_sc->add_option("--seed", sc.seed)->required();
  c_sc->add_option("--output-dir", sc.output_dir);
  c_sc->add_option("--threads", sc.threads);

  StatsArgs st;
  auto* c_st = app.add_subcommand("stats", "ICC, correlations and internal consistency");
  c_st->add_option("--matrix", st.matrix, "score matrix CSV (participant, then sessions)");
  c_st->add_option("--pairs", st.pairs, "CSV with columns x,y for Spearman");
  c_st->add_option("--items", st.items, "subjects x items CSV for Cronbach's alpha");
  c_st->add_flag("--exact", st.exact, "exhaustive permutation p-values (n <= 10)");
  c_st->add_option("--out", st.out, "JSON file (default stdout)");

  SusArgs su;
  auto* c_su = app.add_subcommand("sus", "Score SUS responses and test against a threshold");
  c_su->add_option("--input", su.input, "CSV with columns item1..item10")->required();
  c_su->add_option("--threshold", su.threshold)->capture_default_str();
  c_su->add_option("--out", su.out, "JSON file (default stdout)");

  AautArgs aa;
  auto* c_aa = app.add_subcommand("aaut", "Score AAUT amount-of-use records");
  c_aa->add_option("--input", aa.inputs, "CSV with columns spontaneous,constrained[,qom]")->required();
  c_aa->add_option("--out", aa.out, "JSON file (default stdout)");

  HeatmapArgs hm;
  auto* c_hm = app.add_subcommand("heatmap", "Export fitted fields as azimuth x radius CSV grids");
  c_hm->add_option("--normative", hm.normative, "neurotypical logs or directories");
  c_hm->add_option("--spontaneous", hm.spontaneous);
  c_hm->add_option("--constrained", hm.constrained);
  c_hm->add_option("--affected", hm.affected)->capture_default_str();
  c_hm->add_option("--kernel", hm.kernel)->capture_default_str();
  c_hm->add_option("--field", hm.field, "choice, success, time or all")->capture_default_str();
  c_hm->add_option("--resolution", hm.resolution)->capture_default_str();
  c_hm->add_option("--seed", hm.seed)->capture_default_str();
  c_hm->add_option("--out", hm.out, "output directory")->capture_default_str();

  try {
    auto args = hoist_config(argc, argv);
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*c_sim) return run_simulate(sim);
    if (*c_sel) return run_select(sel);
    if (*c_sc) return run_score(sc, *c_sc);
    if (*c_st) return run_stats(st);
    if (*c_su) return run_sus(su);
    if (*c_aa) return run_aaut(aa);
    if (*c_hm) return run_heatmap(hm);
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitValidation;
}
