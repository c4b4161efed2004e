#pragma once

#include "psgi/task.hpp"

namespace psgi {

enum class Phase : std::uint8_t { Adaptation, Test };

struct EnvState {
  Bits x;  // completion
  Bits e;  // eligibility
  int step = 0;
  int step_phase = 0;

  bool operator==(const EnvState&) const = default;
};

inline Bits compute_eligibility(const TaskInstance& task, const Bits& x) { return task.truth_model.eligibility(x); }

inline EnvState reset(const TaskInstance& task, Phase phase = Phase::Adaptation) {
  EnvState s;
  s.x = Bits(task.num_subtasks());
  s.e = compute_eligibility(task, s.x);
  s.step = phase == Phase::Test ? task.budgets.test_horizon : task.budgets.episode_steps;
  s.step_phase = phase == Phase::Adaptation ? task.budgets.adaptation_steps : 0;
  return s;
}

struct StepResult {
  EnvState state;  // after auto-reset, when one happened
  Bits next_x;     // completion reached by the step itself
  double reward = 0.0;
  bool done = false;
  bool executed = false;
};

/// Executes one option. Ineligible options fail: x is unchanged but the step
/// is still charged. In the adaptation phase a finished episode resets.
inline StepResult step(const TaskInstance& task, const EnvState& state, std::size_t option,
                       Phase phase = Phase::Adaptation) {
  if (state.step <= 0) throw Error(ErrorCode::EpisodeExhausted, "step called with no steps remaining");
  if (option >= task.num_options())
    throw Error(ErrorCode::InvalidArgument, "option index " + std::to_string(option) + " out of range");
  StepResult r;
  r.state = state;
  r.executed = state.e.test(option);
  if (r.executed) {
    r.state.x = task.truth_model.apply(option, state.x);
    if (!state.x.test(task.reward_subtask) && r.state.x.test(task.reward_subtask)) r.reward = task.reward_magnitude;
    r.state.e = compute_eligibility(task, r.state.x);
  }
  r.next_x = r.state.x;
  r.state.step -= 1;
  if (phase == Phase::Adaptation && r.state.step_phase > 0) r.state.step_phase -= 1;
  r.done = r.reward > 0.0 || r.state.step == 0;
  if (r.done && phase == Phase::Adaptation) {
    const int remaining = r.state.step_phase;
    r.state = reset(task, Phase::Adaptation);
    r.state.step_phase = remaining;
  }
  return r;
}

/// One transition; next_x is the completion after the step, before any reset.
struct TransitionRecord {
  Bits x;
  Bits e;
  std::size_t option = 0;
  double reward = 0.0;
  bool done = false;
  Bits next_x;
};

struct Trajectory {
  std::vector<TransitionRecord> records;
  Bits final_x;
  Bits final_e;

  std::size_t size() const noexcept { return records.size(); }
  bool empty() const noexcept { return records.empty(); }
};

}  // namespace psgi
