// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "opsched/graph.hpp"

namespace opsched {

/// An execution order covering every operator exactly once.
using Schedule = std::vector<OperatorId>;

struct TraceStep {
  OperatorId op{};
  TensorSet resident;
  std::uint64_t bytes = 0;

  friend bool operator==(const TraceStep &, const TraceStep &) = default;
};

/// Per-step working set of a schedule.
struct MemoryTrace {
  std::vector<TraceStep> steps;
  std::uint64_t peak_bytes = 0;
  std::size_t peak_step = 0;
  std::uint64_t flash_bytes = 0;

  friend bool operator==(const MemoryTrace &, const MemoryTrace &) = default;
};

struct TraceOptions {
  /// Treat flash tensors as resident for the whole run.
  bool count_flash_as_ram = false;
};

/// Throws NotAPermutation or NotTopological if `schedule` is not a valid
/// execution order of `graph`.
void check_schedule(const Graph &graph, const Schedule &schedule);

/// Working set at every step of `schedule`.
///
/// A ram tensor is resident from its production (step 0 for graph inputs)
/// through its last consumer (the final step for graph outputs). An
/// in-place operator whose designated input dies at that step is credited
/// the size of its output.
MemoryTrace working_set_trace(const Graph &graph, const Schedule &schedule,
                              const TraceOptions &options = {});

std::uint64_t peak_memory(const Graph &graph, const Schedule &schedule,
                          const TraceOptions &options = {});

struct DpResult {
  std::uint64_t min_peak_bytes = 0;
  Schedule schedule;
  std::uint64_t states_explored = 0;
  std::uint64_t memo_entries = 0;

  friend bool operator==(const DpResult &, const DpResult &) = default;
};

struct DpOptions {
  std::size_t max_operators = 62;
  std::size_t max_memo_entries = std::size_t{1} << 26;
  bool count_flash_as_ram = false;
};

/// Minimum peak working set over all schedules, via memoized recursion over
/// the set of tensors that must be resident, undoing one producer at a time.
/// Runs in O(|V| 2^|V|) for |V| operators.
DpResult min_peak_memory(const Graph &graph, const DpOptions &options = {});

struct EnumerationOptions {
  std::size_t max_operators = 12;
  bool count_flash_as_ram = false;
};

/// Calls `visit` with every topological order in lexicographic order of
/// operator ids. Returning false from `visit` stops the enumeration.
/// Returns the number of schedules visited.
std::uint64_t for_each_schedule(
    const Graph &graph, const std::function<bool(const Schedule &)> &visit,
    const EnumerationOptions &options = {});

std::vector<Schedule> enumerate_schedules(const Graph &graph,
                                          const EnumerationOptions &options = {});

/// Exhaustive minimum over enumerate_schedules; ties go to the
/// lexicographically smallest schedule.
DpResult brute_force_min_peak(const Graph &graph,
                              const EnumerationOptions &options = {});

} // namespace opsched
