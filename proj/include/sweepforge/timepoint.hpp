#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "sweepforge/value.hpp"

namespace sweepforge {

/// Where in the task flow values are collected. The six built-in points follow
/// the default flow: before/after a task (one parameter point), before/after
/// each repeated run, and before/after each step of a run. User points are
/// fired by task code.
class TimePoint {
 public:
  enum class Builtin { before_task, before_run, before_step, after_step, after_run, after_task, user };

  TimePoint(Builtin b = Builtin::after_run) : kind_(b) {}

  static TimePoint user(std::string name) {
    TimePoint tp(Builtin::user);
    tp.user_name_ = std::move(name);
    return tp;
  }

  Builtin kind() const noexcept { return kind_; }
  bool is_user() const noexcept { return kind_ == Builtin::user; }
  bool is_task_level() const noexcept {
    return kind_ == Builtin::before_task || kind_ == Builtin::after_task;
  }
  const std::string& user_name() const noexcept { return user_name_; }

  std::string to_string() const {
    switch (kind_) {
      case Builtin::before_task: return "before_task";
      case Builtin::before_run: return "before_run";
      case Builtin::before_step: return "before_step";
      case Builtin::after_step: return "after_step";
      case Builtin::after_run: return "after_run";
      case Builtin::after_task: return "after_task";
      case Builtin::user: return "user:" + user_name_;
    }
    return {};
  }

  static std::optional<TimePoint> parse(std::string_view s) {
    constexpr std::string_view names[] = {"before_task", "before_run", "before_step",
                                          "after_step",  "after_run",  "after_task"};
    for (int i = 0; i < 6; ++i)
      if (s == names[i]) return TimePoint(static_cast<Builtin>(i));
    if (s.substr(0, 5) == "user:" && is_identifier(s.substr(5)))
      return user(std::string(s.substr(5)));
    return std::nullopt;
  }

  friend bool operator==(const TimePoint&, const TimePoint&) = default;

 private:
  Builtin kind_;
  std::string user_name_;
};

}  // namespace sweepforge
