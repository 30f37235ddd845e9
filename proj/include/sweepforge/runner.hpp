#pragma once

// Runs a whole experiment: plan (or resume), execute, commit into the
// aggregation state, checkpoint on an interval, finalize.

#include <atomic>
#include <chrono>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "sweepforge/aggregate.hpp"
#include "sweepforge/checkpoint.hpp"
#include "sweepforge/config.hpp"
#include "sweepforge/engine.hpp"

namespace sweepforge {

struct RunOptions {
  unsigned workers = 1;
  std::optional<std::filesystem::path> checkpoint_path;
  double interval_seconds = 60;  // 0 = after every commit
  unsigned keep = 2;
  std::ostream* events = nullptr;       // EVT lines
  std::ostream* diagnostics = nullptr;  // warnings such as failed checkpoint writes
  const std::atomic<bool>* stop = nullptr;
  /// Test seam: stop abruptly after this many commits in this session (and
  /// any checkpoint write they trigger), with no final checkpoint, as if the
  /// process had been killed.
  std::optional<std::uint64_t> kill_after_commits;
  RecorderSet recorders;
  TaskHook task_hook;
};

struct RunReport {
  RunLedger ledger;
  AggState state;
  bool interrupted = false;
  bool killed = false;
  std::uint64_t checkpoints_written = 0;
  std::vector<std::string> checkpoint_errors;

  std::vector<ResultTable> tables() const { return state.finalize_all(); }
  std::size_t cell_count() const {
    std::size_t n = 0;
    for (std::size_t r = 0; r < state.rules().size(); ++r) n += state.cells(r).size();
    return n;
  }
};

inline RunReport run_experiment(const Config& config, const TaskFactory& factory, const RunOptions& options,
                                const Checkpoint* resume_from = nullptr) {
  RunReport report;
  std::vector<RunUnit> units;
  if (resume_from) {
    Resumption r = resume(*resume_from, config);
    units = std::move(r.remaining);
    report.state = std::move(r.state);
    report.ledger.completed = std::move(r.completed);
  } else {
    units = plan(config.space, config.task.repeats, config.task.seed);
    report.state = AggState(config.rules);
  }
  report.ledger.units_total = units_total(config);

  using clock = std::chrono::steady_clock;
  auto last_write = clock::now();
  auto write = [&] {
    if (!options.checkpoint_path) return;
    try {
      write_checkpoint(snapshot(report.state.committed(), report.state, config), *options.checkpoint_path,
                       options.keep);
      ++report.checkpoints_written;
    } catch (const std::exception& e) {
      report.checkpoint_errors.push_back(e.what());
      if (options.diagnostics) *options.diagnostics << "warning: checkpoint write failed: " << e.what() << '\n';
    }
    last_write = clock::now();
  };

  write();
  if (options.kill_after_commits && *options.kill_after_commits == 0) {
    report.killed = report.interrupted = true;
    return report;
  }

  ExecuteOptions exec;
  exec.workers = options.workers;
  exec.max_steps = config.task.max_steps;
  exec.rules = config.rules;
  exec.recorders = options.recorders;
  exec.task_hook = options.task_hook;
  exec.events = options.events;
  exec.stop = options.stop;

  std::uint64_t commits = 0;
  auto sink = [&](UnitOutcome& out) {
    report.state.commit(out.contribution);
    ++commits;
    const std::chrono::duration<double> since = clock::now() - last_write;
    if (options.interval_seconds <= 0 || since.count() >= options.interval_seconds) write();
    if (options.kill_after_commits && commits >= *options.kill_after_commits) {
      report.killed = true;
      return CommitAction::stop;
    }
    return CommitAction::proceed;
  };

  execute(config.space, units, factory, exec, report.ledger, sink);
  report.interrupted = report.ledger.interrupted;
  if (!report.killed) write();
  return report;
}

}  // namespace sweepforge
