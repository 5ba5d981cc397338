#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pricesim/config.hpp"
#include "pricesim/errors.hpp"
#include "pricesim/harness.hpp"
#include "pricesim/instance_io.hpp"
#include "pricesim/report_io.hpp"

namespace pricesim::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

namespace fs = std::filesystem;

/// Worker count: PRICESIM_JOBS wins over --jobs, which defaults to the core count.
inline int resolve_jobs(std::optional<int> flag) {
  if (const char* env = std::getenv("PRICESIM_JOBS"); env && *env) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) throw ConfigError("PRICESIM_JOBS", "must be a positive integer");
    return static_cast<int>(v);
  }
  if (flag) {
    if (*flag < 1) throw ConfigError("--jobs", "must be at least 1");
    return *flag;
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

struct ConfigSource {
  std::string config_path;
  std::string preset;

  ExperimentConfig load() const {
    if (!config_path.empty() && !preset.empty()) throw ConfigError("--config", "give either --config or --preset");
    if (!config_path.empty()) return load_config(config_path);
    return experiment_preset(preset.empty() ? "logit10" : preset);
  }
};

inline std::string trace_file_name(int rep) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "trace_rep%03d.csv", rep);
  return buf;
}

struct RunRequest {
  ConfigSource source;
  std::string instance_path;
  std::string policy = "all";
  std::optional<long> T;
  std::optional<int> reps;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::string out;
};

/// Applies scalar overrides. Checkpoints beyond a shortened horizon are dropped;
/// the horizon itself is always reported.
inline void apply_overrides(ExperimentConfig& cfg, const RunRequest& req) {
  if (req.T) {
    if (*req.T < 1) throw ConfigError("--T", "must be at least 1");
    cfg.run.T = *req.T;
    std::vector<long> kept;
    for (long c : cfg.run.checkpoints)
      if (c <= cfg.run.T) kept.push_back(c);
    if (kept.empty() || kept.back() != cfg.run.T) kept.push_back(cfg.run.T);
    cfg.run.checkpoints = kept;
  }
  if (req.reps) {
    if (*req.reps < 1) throw ConfigError("--reps", "must be at least 1");
    cfg.run.replications = *req.reps;
  }
  if (req.seed) cfg.run.seed = *req.seed;
  if (!req.out.empty()) cfg.run.output = req.out;
  if (cfg.run.checkpoints.empty()) cfg.run.checkpoints = {cfg.run.T};
}

inline int cmd_generate(const ConfigSource& src, const std::string& out_path, std::optional<std::uint64_t> seed,
                        std::ostream& out) {
  ExperimentConfig cfg = src.load();
  if (seed) cfg.instance.seed = *seed;
  const ClusterInstance inst = generate_cluster_instance(cfg.instance.options());
  if (const auto parent = fs::path(out_path).parent_path(); !parent.empty()) fs::create_directories(parent);
  save_instance(inst, out_path);
  out << "wrote instance (n=" << inst.n << ", m=" << inst.m << ", gamma=" << inst.gamma << ") to " << out_path
      << "\n";
  return kExitOk;
}

inline int cmd_run(const RunRequest& req, std::ostream& out, std::ostream& err) {
  ExperimentConfig cfg = req.source.load();
  apply_overrides(cfg, req);
  validate_config(cfg);
  const int jobs = resolve_jobs(req.jobs);

  std::vector<PolicyConfig> selected;
  if (req.policy == "all") selected = cfg.policies;
  else selected.push_back(cfg.policy(req.policy));

  const ClusterInstance inst =
      req.instance_path.empty() ? generate_cluster_instance(cfg.instance.options()) : load_instance(req.instance_path);
  if (!req.instance_path.empty() && inst.d != cfg.instance.d)
    throw ConfigError("--instance", "instance dimension does not match the configuration");

  const fs::path root(cfg.run.output);
  fs::create_directories(root);
  save_config(cfg, (root / "config.json").string());
  save_instance(inst, (root / "instance.json").string());

  nlohmann::json manifest;
  manifest["experiment"] = cfg.name;
  manifest["T"] = cfg.run.T;
  manifest["replications"] = cfg.run.replications;
  manifest["seed"] = cfg.run.seed;
  manifest["policies"] = nlohmann::json::array();
  bool complete = true;

  for (const PolicyConfig& p : selected) {
    const fs::path dir = root / p.name;
    fs::create_directories(dir);
    const auto warnings = p.kind == PolicyKind::Oracle ? std::vector<std::string>{} : validate(p, inst.price_bounds);
    for (const auto& w : warnings) err << "warning: " << p.name << ": " << w << "\n";

    const ExperimentRun run = run_experiment(
        inst, p, cfg.run_options(), cfg.run.seed, cfg.run.replications, jobs,
        [&](const RegretTrace& tr) { save_trace_csv(tr, (dir / trace_file_name(tr.rep)).string()); });

    nlohmann::json entry;
    entry["name"] = p.name;
    entry["completed"] = run.traces.size();
    entry["failures"] = nlohmann::json::array();
    for (const auto& [rep, msg] : run.failures) {
      entry["failures"].push_back({{"rep", rep}, {"error", msg}});
      err << "error: " << p.name << " replication " << rep << ": " << msg << "\n";
    }
    if (run.complete()) {
      ExperimentSummary s = aggregate(run.traces, cfg.run.checkpoints);
      s.warnings.insert(s.warnings.begin(), warnings.begin(), warnings.end());
      save_summary(s, (dir / "summary.json").string());
      entry["summary"] = (fs::path(p.name) / "summary.json").generic_string();
      out << format_report(s);
    } else {
      complete = false;
      entry["summary"] = nullptr;
    }
    manifest["policies"].push_back(entry);
  }

  manifest["status"] = complete ? "complete" : "incomplete";
  std::ofstream mf(root / "MANIFEST", std::ios::binary);
  mf << manifest.dump(2) << "\n";
  if (!complete) {
    err << "run incomplete; see " << (root / "MANIFEST").string() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

inline int cmd_compare(const std::vector<std::string>& paths, std::ostream& out) {
  if (paths.size() < 2) throw ConfigError("summaries", "compare needs at least two summary files");
  std::vector<ExperimentSummary> summaries;
  for (const auto& p : paths) summaries.push_back(load_summary(p));
  out << compare_summaries(summaries);
  return kExitOk;
}

/// Accepts summary files or run directories (every summary listed in MANIFEST).
inline int cmd_report(const std::vector<std::string>& paths, std::ostream& out) {
  for (const auto& p : paths) {
    if (fs::is_directory(p)) {
      std::ifstream in(fs::path(p) / "MANIFEST", std::ios::binary);
      if (!in) throw ConfigError("report", "no MANIFEST in '" + p + "'");
      const auto manifest = nlohmann::json::parse(in, nullptr, false);
      if (manifest.is_discarded() || !manifest.contains("policies"))
        throw ConfigError("report", "unreadable MANIFEST in '" + p + "'");
      out << "experiment " << manifest.value("experiment", std::string("?")) << " ("
          << manifest.value("status", std::string("?")) << ")\n";
      for (const auto& e : manifest["policies"]) {
        if (e["summary"].is_null()) {
          out << "policy " << e.value("name", std::string("?")) << ": incomplete, no summary\n";
          continue;
        }
        out << format_report(load_summary((fs::path(p) / e["summary"].get<std::string>()).string()));
      }
    } else {
      out << format_report(load_summary(p));
    }
  }
  return kExitOk;
}

/// Entry point shared by the executable and the tests.
inline int main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Clustered dynamic pricing simulator"};
  app.require_subcommand(1);

  ConfigSource gen_src;
  std::string gen_out;
  std::optional<std::uint64_t> gen_seed;
  auto* gen = app.add_subcommand("generate", "Generate a problem instance and write it as JSON");
  gen->add_option("--config", gen_src.config_path, "Experiment config (JSON)");
  gen->add_option("--preset", gen_src.preset, "Built-in experiment preset");
  gen->add_option("--out,-o", gen_out, "Instance output path")->required();
  gen->add_option("--seed", gen_seed, "Override the instance seed");

  RunRequest req;
  auto* run = app.add_subcommand("run", "Run replications and write traces plus summaries");
  run->add_option("--config", req.source.config_path, "Experiment config (JSON)");
  run->add_option("--preset", req.source.preset, "Built-in experiment preset");
  run->add_option("--instance", req.instance_path, "Use this instance file instead of generating one");
  run->add_option("--policy", req.policy, "Policy name from the config, or 'all'");
  run->add_option("--T", req.T, "Horizon override");
  run->add_option("--reps", req.reps, "Replication count override");
  run->add_option("--seed", req.seed, "Master seed override");
  run->add_option("--jobs,-j", req.jobs, "Worker threads (PRICESIM_JOBS takes precedence)");
  run->add_option("--out,-o", req.out, "Output directory");

  std::vector<std::string> cmp_paths;
  auto* cmp = app.add_subcommand("compare", "Tabulate mean loss across summaries (CSV on stdout)");
  cmp->add_option("summaries", cmp_paths, "Summary JSON files")->required();

  std::vector<std::string> rep_paths;
  auto* rep = app.add_subcommand("report", "Print summaries as text");
  rep->add_option("paths", rep_paths, "Summary files or run directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (*gen) return cmd_generate(gen_src, gen_out, gen_seed, out);
    if (*run) return cmd_run(req, out, err);
    if (*cmp) return cmd_compare(cmp_paths, out);
    if (*rep) return cmd_report(rep_paths, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}

} // namespace pricesim::cli
