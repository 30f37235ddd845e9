// sweepforge command-line front end: run, resume, inspect, plot.
//
// Exit codes: 0 success, 1 finished with failed units, 2 config error,
// 3 checkpoint error, 4 I/O error, 130 interrupted.

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "sweepforge/sweepforge.hpp"

namespace fs = std::filesystem;
using namespace sweepforge;

namespace {

enum Exit { ok = 0, failed_units = 1, config_error = 2, checkpoint_error = 3, io_error = 4, interrupted = 130 };

std::atomic<bool> g_stop{false};

extern "C" void on_sigint(int) { g_stop.store(true); }

struct RunFlags {
  std::string config_path;
  std::string checkpoint;
  std::optional<unsigned> workers;
  std::string out = ".";
  std::string task;
  std::optional<std::uint64_t> stop_after;
  bool quiet = false;
  bool gnuplot = false;
};

unsigned resolve_workers(const RunFlags& f, const Config& config) {
  if (f.workers) return *f.workers;
  if (const char* env = std::getenv("SWEEPFORGE_WORKERS"); env && *env) {
    auto n = parse_integer<unsigned>(env);
    if (!n || *n == 0 || *n > 4096) throw ConfigError("SWEEPFORGE_WORKERS must be an integer in [1, 4096]");
    return *n;
  }
  if (config.task.workers) return *config.task.workers;
  return std::max(1u, std::thread::hardware_concurrency());
}

fs::path checkpoint_path(const RunFlags& f, const Config& config) {
  if (!f.checkpoint.empty()) return f.checkpoint;
  if (config.checkpoint.path) return *config.checkpoint.path;
  return fs::path(f.out) / (config.task.name + ".ckpt");
}

fs::path sidecar_path(const fs::path& ckpt) { return ckpt.string() + ".config"; }

/// Lines only in `a` prefixed "-", lines only in `b` prefixed "+".
std::string line_diff(const std::string& a, const std::string& b) {
  auto lines = [](const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
  };
  auto la = lines(a), lb = lines(b);
  std::multiset<std::string> sa(la.begin(), la.end()), sb(lb.begin(), lb.end());
  std::string out;
  for (const auto& l : la)
    if (!sb.count(l)) out += "- " + l + "\n";
  for (const auto& l : lb)
    if (!sa.count(l)) out += "+ " + l + "\n";
  return out;
}

void print_config_error(const std::string& path, const ConfigError& e) {
  for (const auto& d : e.diagnostics()) {
    std::cerr << "error: " << path;
    if (d.line) std::cerr << ":" << d.line;
    if (d.column) std::cerr << ":" << d.column;
    std::cerr << ": " << d.message << "\n";
  }
}

int execute_run(const RunFlags& f, bool resuming) {
  Config config;
  try {
    config = load_config(f.config_path);
  } catch (const ConfigError& e) {
    print_config_error(f.config_path, e);
    return config_error;
  }

  demo::TaskRegistry registry;
  demo::register_demo_tasks(registry);
  const std::string task = f.task.empty() ? config.task.name : f.task;
  auto factory = registry.find(task);
  if (factory == registry.end()) {
    std::cerr << "error: unknown task '" << task << "' (use --task; known:";
    for (const auto& [name, _] : registry) std::cerr << " " << name;
    std::cerr << ")\n";
    return config_error;
  }

  RunOptions options;
  options.workers = resolve_workers(f, config);
  fs::create_directories(f.out);
  const fs::path ckpt = checkpoint_path(f, config);
  if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
  options.checkpoint_path = ckpt;
  options.interval_seconds = config.checkpoint.interval_seconds;
  options.keep = config.checkpoint.keep;
  options.events = f.quiet ? nullptr : &std::cerr;
  options.diagnostics = &std::cerr;
  options.stop = &g_stop;
  options.kill_after_commits = f.stop_after;

  std::optional<Checkpoint> loaded;
  if (resuming) {
    loaded = load_checkpoint(ckpt);
    if (loaded->config_hash != canonical_hash(config)) {
      std::cerr << "error: config changed since checkpoint\n";
      try {
        std::cerr << line_diff(read_file(sidecar_path(ckpt)), experiment_text(config));
      } catch (const IoError&) {
        std::cerr << "(no saved config next to the checkpoint; cannot show a diff)\n";
      }
      return checkpoint_error;
    }
  } else {
    atomic_write(sidecar_path(ckpt), experiment_text(config));
  }

  std::signal(SIGINT, on_sigint);
  RunReport report = run_experiment(config, factory->second, options, loaded ? &*loaded : nullptr);
  std::signal(SIGINT, SIG_DFL);

  if (report.interrupted) {
    std::cerr << "interrupted: " << report.state.committed().size() << "/" << report.ledger.units_total
              << " units committed; resume from " << ckpt.string() << "\n";
    return interrupted;
  }

  const auto tables = report.tables();
  const auto plot = emit_plot(config, tables, report.state.committed().size(), f.out);
  if (f.gnuplot) {
    const std::string cmd = "cd '" + fs::absolute(f.out).string() + "' && gnuplot '" + plot.script_file + "'";
    if (std::system(cmd.c_str()) != 0) std::cerr << "warning: gnuplot did not run cleanly\n";
  }
  std::cout << "done units=" << report.state.committed().size() << " failed=" << report.ledger.failed.size()
            << " cells=" << report.cell_count() << "\n";
  return report.ledger.failed.empty() ? ok : failed_units;
}

int inspect(const std::string& path) {
  Checkpoint cp = load_checkpoint(path);
  const auto done = cp.completed_count();
  const double pct = cp.units_total ? 100.0 * static_cast<double>(done) / static_cast<double>(cp.units_total) : 100.0;
  char pct_text[32];
  std::snprintf(pct_text, sizeof pct_text, "%.1f", pct);
  std::cout << "version " << cp.format_version << "\n"
            << "config_hash " << cp.config_hash << "\n"
            << "master_seed " << cp.master_seed << "\n"
            << "units_total " << cp.units_total << "\n"
            << "completed " << done << "/" << cp.units_total << " (" << pct_text << "%)\n";
  for (const auto& rule : cp.rules) {
    std::set<CellKey> cells;
    for (const auto& e : rule.entries) cells.insert(e.key);
    std::cout << "rule " << rule.rule_id << " cells " << cells.size() << "\n";
  }
  return ok;
}

int plot_from_checkpoint(const RunFlags& f) {
  Config config;
  try {
    config = load_config(f.config_path);
  } catch (const ConfigError& e) {
    print_config_error(f.config_path, e);
    return config_error;
  }
  const fs::path ckpt = checkpoint_path(f, config);
  Resumption r = resume(load_checkpoint(ckpt), config);
  fs::create_directories(f.out);
  const auto plot = emit_plot(config, r.state.finalize_all(), r.completed.size(), f.out);
  std::cout << "wrote " << (fs::path(f.out) / plot.script_file).string() << "\n";
  return ok;
}

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--workers,-w", f.workers,
                  "worker threads (default: $SWEEPFORGE_WORKERS, then [task] workers, then core count)")
      ->check(CLI::Range(1, 4096));
  cmd->add_option("--out,-o", f.out, "directory for tables, scripts and the default checkpoint");
  cmd->add_option("--task,-t", f.task, "registered task to run (default: [task] name)");
  cmd->add_option("--checkpoint,-c", f.checkpoint,
                  "checkpoint file (default: [checkpoint] path, then <out>/<name>.ckpt)");
  cmd->add_option("--stop-after", f.stop_after, "stop abruptly after this many unit commits (testing aid)");
  cmd->add_flag("--quiet,-q", f.quiet, "do not print EVT lines");
  cmd->add_flag("--gnuplot", f.gnuplot, "run gnuplot on the emitted script");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sweepforge: parameter sweeps with checkpointing and gnuplot output"};
  app.require_subcommand(1);

  RunFlags run_flags;
  auto* run = app.add_subcommand("run", "execute every run unit of a configuration");
  run->add_option("config", run_flags.config_path, "configuration file")->required();
  add_run_flags(run, run_flags);

  RunFlags resume_flags;
  auto* res = app.add_subcommand("resume", "continue a run from its checkpoint");
  res->add_option("config", resume_flags.config_path, "configuration file")->required();
  std::string resume_positional;
  res->add_option("checkpoint_file", resume_positional, "checkpoint file (same as --checkpoint)");
  add_run_flags(res, resume_flags);

  std::string inspect_path;
  auto* ins = app.add_subcommand("inspect", "summarize a checkpoint file");
  ins->add_option("checkpoint", inspect_path, "checkpoint file")->required();

  RunFlags plot_flags;
  auto* plt = app.add_subcommand("plot", "emit tables and a gnuplot script from a checkpoint");
  plt->add_option("config", plot_flags.config_path, "configuration file")->required();
  plt->add_option("--checkpoint,-c", plot_flags.checkpoint, "checkpoint file");
  plt->add_option("--out,-o", plot_flags.out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return execute_run(run_flags, false);
    if (res->parsed()) {
      if (!resume_positional.empty()) resume_flags.checkpoint = resume_positional;
      return execute_run(resume_flags, true);
    }
    if (ins->parsed()) return inspect(inspect_path);
    if (plt->parsed()) return plot_from_checkpoint(plot_flags);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return config_error;
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return checkpoint_error;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return io_error;
  } catch (const PlotError& e) {
    std::cerr << "error: plot template: " << e.what() << "\n";
    return config_error;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return io_error;
  }
  return ok;
}
