#pragma once

// Schedules run units onto a worker pool and drives the default task flow:
//
//   before_task (coordinator, once per parameter point)
//     before_run -> init_run -> { before_step -> step -> after_step }* ->
//     finish_run -> after_run -> commit          (worker, once per repeat)
//   after_task (coordinator, after the point's last unit resolves)
//
// A "task" is one parameter point; a run unit is one repeat of it.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <ctime>
#include <deque>
#include <exception>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "sweepforge/aggregate.hpp"
#include "sweepforge/error.hpp"
#include "sweepforge/rng.hpp"
#include "sweepforge/space.hpp"
#include "sweepforge/timepoint.hpp"

namespace sweepforge {

struct RunUnit {
  std::uint64_t unit_index = 0;
  std::uint64_t point_index = 0;
  std::uint64_t repeat_index = 0;
  std::uint64_t seed = 0;

  friend bool operator==(const RunUnit&, const RunUnit&) = default;
};

/// unit_index = point_index * repeats + repeat_index.
inline RunUnit unit_at(std::uint64_t unit_index, std::uint64_t repeats, std::uint64_t master_seed) {
  return {unit_index, unit_index / repeats, unit_index % repeats, derive_seed(master_seed, unit_index)};
}

inline std::vector<RunUnit> plan(std::uint64_t point_count, std::uint64_t repeats, std::uint64_t master_seed) {
  if (repeats == 0) throw std::invalid_argument("repeats must be at least 1");
  if (point_count != 0 && repeats > kMaxIndex / point_count)
    throw std::length_error("points x repeats exceeds 2^53 units");
  std::vector<RunUnit> units;
  units.reserve(point_count * repeats);
  for (std::uint64_t i = 0; i < point_count * repeats; ++i) units.push_back(unit_at(i, repeats, master_seed));
  return units;
}

inline std::vector<RunUnit> plan(const ParameterSpace& space, std::uint64_t repeats, std::uint64_t master_seed) {
  return plan(space.point_count(), repeats, master_seed);
}

struct RunLedger {
  std::uint64_t units_total = 0;
  std::set<std::uint64_t> completed;
  std::set<std::uint64_t> in_flight;
  std::map<std::uint64_t, std::string> failed;
  bool interrupted = false;
};

class RunContext;

/// User task logic. A fresh instance is created for every run unit.
class TaskLogic {
 public:
  virtual ~TaskLogic() = default;

  virtual void init_run(RunContext&) {}
  /// One step; return false to end the run.
  virtual bool step(RunContext& ctx) = 0;
  virtual void finish_run(RunContext&) {}
  /// Called whenever a time point fires during this unit (built-in or user);
  /// the place to call ctx.record().
  virtual void collect(const TimePoint&, RunContext&) {}
};

using TaskFactory = std::function<std::unique_ptr<TaskLogic>()>;
using Recorder = std::function<void(RunContext&)>;

/// Extra recorders bound to time points, run after TaskLogic::collect.
class RecorderSet {
 public:
  void add(TimePoint tp, Recorder r) { entries_.emplace_back(std::move(tp), std::move(r)); }

  template <typename F>
  void for_each(const TimePoint& tp, F&& f) const {
    for (const auto& [at, rec] : entries_)
      if (at == tp) f(rec);
  }

 private:
  std::vector<std::pair<TimePoint, Recorder>> entries_;
};

/// What a coordinator-side hook sees at before_task / after_task.
struct TaskEvent {
  TimePoint timepoint;
  const ParameterPoint& point;
  std::uint64_t committed_runs = 0;
};
using TaskHook = std::function<void(const TaskEvent&)>;

class RunContext {
 public:
  RunContext(const RunUnit& unit, const ParameterPoint& point, std::optional<std::uint64_t> max_steps)
      : unit_(unit), point_(point), max_steps_(max_steps), rng_(unit.seed) {}

  RunContext(const RunContext&) = delete;
  RunContext& operator=(const RunContext&) = delete;

  const RunUnit& unit() const noexcept { return unit_; }
  const ParameterPoint& point() const noexcept { return point_; }
  std::uint64_t repeat_index() const noexcept { return unit_.repeat_index; }
  std::uint64_t step_index() const noexcept { return step_index_; }
  std::optional<std::uint64_t> max_steps() const noexcept { return max_steps_; }
  Rng& rng() noexcept { return rng_; }

  /// The time point being fired, or nullptr outside of a fire.
  const TimePoint* current_timepoint() const noexcept { return current_; }

  /// Adds a value to this unit's observation buffer, tagged with the time
  /// point currently firing. Only valid inside collect() or a recorder.
  void record(std::string_view name, double value) {
    if (!current_) throw std::logic_error("record('" + std::string(name) + "') called outside a time point");
    observations_.push_back({*current_, std::string(name), value});
  }

  /// Fires a user-defined time point from task code.
  void fire(std::string_view user_point) {
    if (!is_identifier(user_point)) throw std::invalid_argument("invalid time point name");
    fire(TimePoint::user(std::string(user_point)));
  }

  void fire(const TimePoint& tp) {
    const TimePoint* saved = current_;
    current_ = &tp;
    struct Restore {
      const TimePoint*& slot;
      const TimePoint* value;
      ~Restore() { slot = value; }
    } restore{current_, saved};
    if (logic_) logic_->collect(tp, *this);
    if (recorders_) recorders_->for_each(tp, [&](const Recorder& r) { r(*this); });
  }

  const Value& param(std::string_view name) const {
    const Value* v = point_.find(name);
    if (!v) throw std::invalid_argument("no parameter '" + std::string(name) + "'");
    return *v;
  }
  bool has_param(std::string_view name) const noexcept { return point_.find(name) != nullptr; }
  double real(std::string_view name) const {
    auto d = as_number(param(name));
    if (!d) throw std::invalid_argument("parameter '" + std::string(name) + "' is not numeric");
    return *d;
  }
  double real(std::string_view name, double fallback) const { return has_param(name) ? real(name) : fallback; }
  std::int64_t integer(std::string_view name) const {
    const Value& v = param(name);
    if (const auto* i = std::get_if<std::int64_t>(&v)) return *i;
    throw std::invalid_argument("parameter '" + std::string(name) + "' is not an integer");
  }
  std::int64_t integer(std::string_view name, std::int64_t fallback) const {
    return has_param(name) ? integer(name) : fallback;
  }
  std::string text(std::string_view name) const { return display_text(param(name)); }
  std::string text(std::string_view name, std::string fallback) const {
    return has_param(name) ? text(name) : fallback;
  }

  const std::vector<Observation>& observations() const noexcept { return observations_; }
  std::vector<Observation> take_observations() noexcept { return std::move(observations_); }

 private:
  friend struct UnitDriver;

  RunUnit unit_;
  const ParameterPoint& point_;
  std::optional<std::uint64_t> max_steps_;
  Rng rng_;
  std::uint64_t step_index_ = 0;
  const TimePoint* current_ = nullptr;
  TaskLogic* logic_ = nullptr;
  const RecorderSet* recorders_ = nullptr;
  std::vector<Observation> observations_;
};

/// Result of one successfully executed unit, handed to the commit sink.
struct UnitOutcome {
  RunUnit unit;
  std::vector<Observation> observations;
  UnitContribution contribution;
  std::uint64_t steps = 0;
};

/// Runs a single unit through the per-run flow. Throws whatever the task,
/// a recorder or rule reduction throws.
struct UnitDriver {
  static UnitOutcome run(const RunUnit& unit, const ParameterPoint& point, const TaskFactory& factory,
                         const RecorderSet* recorders, std::optional<std::uint64_t> max_steps,
                         const std::vector<AggregationRule>& rules) {
    RunContext ctx(unit, point, max_steps);
    std::unique_ptr<TaskLogic> logic = factory();
    if (!logic) throw std::logic_error("task factory returned no logic");
    ctx.logic_ = logic.get();
    ctx.recorders_ = recorders;

    ctx.fire(TimePoint::Builtin::before_run);
    logic->init_run(ctx);
    while (!max_steps || ctx.step_index_ < *max_steps) {
      ctx.fire(TimePoint::Builtin::before_step);
      bool more = logic->step(ctx);
      ctx.fire(TimePoint::Builtin::after_step);
      ++ctx.step_index_;
      if (!more) break;
    }
    logic->finish_run(ctx);
    ctx.fire(TimePoint::Builtin::after_run);

    UnitOutcome out;
    out.unit = unit;
    out.steps = ctx.step_index_;
    out.observations = ctx.take_observations();
    out.contribution = reduce_unit(rules, point, unit.unit_index, out.observations);
    return out;
  }
};

inline UnitOutcome run_unit(const RunUnit& unit, const ParameterPoint& point, const TaskFactory& factory,
                            std::optional<std::uint64_t> max_steps = std::nullopt,
                            const std::vector<AggregationRule>& rules = {}, const RecorderSet* recorders = nullptr) {
  return UnitDriver::run(unit, point, factory, recorders, max_steps, rules);
}

struct ExecuteOptions {
  unsigned workers = 1;
  std::optional<std::uint64_t> max_steps;
  std::vector<AggregationRule> rules;
  RecorderSet recorders;
  TaskHook task_hook;
  std::ostream* events = nullptr;            // EVT lines
  const std::atomic<bool>* stop = nullptr;   // graceful interruption request
};

enum class CommitAction { proceed, stop };

/// Called on the coordinator thread, once per successful unit, in completion
/// order. Returning stop interrupts the execution after this commit.
using CommitSink = std::function<CommitAction(UnitOutcome&)>;

namespace detail {

inline std::string iso8601_now() {
  using namespace std::chrono;
  auto now = system_clock::now();
  std::time_t t = system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  auto ms = duration_cast<milliseconds>(now.time_since_epoch()).count() % 1000;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

class EventLog {
 public:
  explicit EventLog(std::ostream* out) : out_(out) {}

  void emit(std::string_view kind, const RunUnit& u, std::string_view extra = {}) {
    if (!out_) return;
    std::string line = "EVT " + iso8601_now() + " " + std::string(kind) + " unit=" + std::to_string(u.unit_index) +
                       " point=" + std::to_string(u.point_index) + " repeat=" + std::to_string(u.repeat_index);
    if (!extra.empty()) line += " " + std::string(extra);
    line += '\n';
    std::lock_guard lock(mutex_);
    *out_ << line << std::flush;
  }

 private:
  std::ostream* out_;
  std::mutex mutex_;
};

struct Finished {
  RunUnit unit;
  std::optional<UnitOutcome> outcome;
  std::string error;
};

/// Shared queue consumed in unit order plus a result channel back to the
/// coordinator. The destructor stops and joins the workers.
class WorkerPool {
 public:
  template <typename Work>
  WorkerPool(unsigned n, Work work) {
    for (unsigned i = 0; i < n; ++i) {
      threads_.emplace_back([this, work] {
        for (;;) {
          const RunUnit* unit = nullptr;
          {
            std::unique_lock lock(mutex_);
            work_cv_.wait(lock, [&] { return closing_ || !queue_.empty(); });
            if (closing_) return;
            unit = queue_.front();
            queue_.pop_front();
          }
          Finished f = work(*unit);
          {
            std::lock_guard lock(mutex_);
            results_.push_back(std::move(f));
          }
          done_cv_.notify_one();
        }
      });
    }
  }

  ~WorkerPool() {
    {
      std::lock_guard lock(mutex_);
      closing_ = true;
      queue_.clear();
    }
    work_cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  void push(const RunUnit* unit) {
    {
      std::lock_guard lock(mutex_);
      queue_.push_back(unit);
    }
    work_cv_.notify_one();
  }

  /// Drops queued (not yet started) units and returns them.
  std::vector<const RunUnit*> drain_queue() {
    std::lock_guard lock(mutex_);
    std::vector<const RunUnit*> out(queue_.begin(), queue_.end());
    queue_.clear();
    return out;
  }

  Finished next_result() {
    std::unique_lock lock(mutex_);
    done_cv_.wait(lock, [&] { return !results_.empty(); });
    Finished f = std::move(results_.front());
    results_.pop_front();
    return f;
  }

 private:
  std::mutex mutex_;
  std::condition_variable work_cv_;
  std::condition_variable done_cv_;
  std::deque<const RunUnit*> queue_;
  std::deque<Finished> results_;
  bool closing_ = false;
  std::vector<std::thread> threads_;
};

}  // namespace detail

/// Executes `units` (any subset of a plan, in unit order) on `options.workers`
/// threads. Every successful unit goes through `sink` exactly once and is then
/// marked completed in `ledger`; failures land in `ledger.failed`. Units still
/// queued or running when execution is interrupted are discarded.
inline void execute(const ParameterSpace& space, std::span<const RunUnit> units, const TaskFactory& factory,
                    const ExecuteOptions& options, RunLedger& ledger, const CommitSink& sink) {
  if (options.workers == 0) throw std::invalid_argument("workers must be at least 1");
  if (units.empty()) return;

  struct Group {
    ParameterPoint point;
    std::vector<const RunUnit*> units;
    std::uint64_t remaining = 0;
    std::uint64_t committed = 0;
  };
  std::vector<Group> groups;
  std::map<std::uint64_t, std::size_t> group_of;
  for (const auto& u : units) {
    auto [it, fresh] = group_of.try_emplace(u.point_index, groups.size());
    if (fresh) groups.push_back({space.point(u.point_index), {}, 0, 0});
    groups[it->second].units.push_back(&u);
    ++groups[it->second].remaining;
  }

  detail::EventLog log(options.events);
  auto fire_task = [&](TimePoint tp, const Group& g) {
    if (options.task_hook) options.task_hook(TaskEvent{tp, g.point, g.committed});
  };

  auto work = [&](const RunUnit& unit) -> detail::Finished {
    detail::Finished f{unit, std::nullopt, {}};
    log.emit("started", unit);
    try {
      const Group& g = groups[group_of.at(unit.point_index)];
      f.outcome = run_unit(unit, g.point, factory, options.max_steps, options.rules, &options.recorders);
    } catch (const std::exception& e) {
      f.error = e.what();
    } catch (...) {
      f.error = "unknown exception";
    }
    if (f.error.empty() && !f.outcome) f.error = "no outcome";
    return f;
  };

  const unsigned n_threads = static_cast<unsigned>(std::min<std::size_t>(options.workers, units.size()));
  detail::WorkerPool pool(n_threads, work);

  const std::size_t watermark = 2 * static_cast<std::size_t>(n_threads);
  std::size_t next_group = 0;
  std::size_t outstanding = 0;
  auto release = [&] {
    while (next_group < groups.size() && outstanding < watermark) {
      Group& g = groups[next_group++];
      fire_task(TimePoint::Builtin::before_task, g);
      for (const RunUnit* u : g.units) {
        ledger.in_flight.insert(u->unit_index);
        pool.push(u);
        ++outstanding;
      }
    }
  };
  auto stop_requested = [&] { return options.stop && options.stop->load(); };

  release();
  bool stopping = false;
  while (outstanding > 0) {
    detail::Finished f = pool.next_result();
    --outstanding;
    ledger.in_flight.erase(f.unit.unit_index);
    if (stopping) continue;  // discarded: ran past the interruption point

    Group& g = groups[group_of.at(f.unit.point_index)];
    CommitAction action = CommitAction::proceed;
    if (f.outcome) {
      action = sink(*f.outcome);
      ledger.completed.insert(f.unit.unit_index);
      ++g.committed;
      log.emit("committed", f.unit);
    } else {
      ledger.failed[f.unit.unit_index] = f.error;
      log.emit("failed", f.unit, "error=" + f.error);
    }
    if (--g.remaining == 0) fire_task(TimePoint::Builtin::after_task, g);

    if (action == CommitAction::stop || stop_requested()) {
      stopping = true;
      ledger.interrupted = true;
      for (const RunUnit* u : pool.drain_queue()) {
        ledger.in_flight.erase(u->unit_index);
        --outstanding;
      }
      continue;
    }
    release();
  }
}

}  // namespace sweepforge
