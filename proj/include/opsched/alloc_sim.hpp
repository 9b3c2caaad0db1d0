// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "opsched/graph.hpp"
#include "opsched/scheduler.hpp"

namespace opsched {

struct ArenaConfig {
  std::optional<std::uint64_t> capacity_bytes; // unbounded when absent
  std::uint64_t alignment_bytes = 4;
};

/// alias: an in-place operator's output takes over its input's buffer.
enum class EventKind { alloc, free, move, alias };

struct AllocationEvent {
  std::size_t step = 0;
  EventKind kind = EventKind::alloc;
  TensorId tensor{};
  std::optional<std::uint64_t> from_offset;
  std::optional<std::uint64_t> to_offset;
  std::uint64_t size = 0;

  friend bool operator==(const AllocationEvent &, const AllocationEvent &) = default;
};

struct Placement {
  TensorId tensor{};
  std::uint64_t offset = 0;
  std::uint64_t size = 0;

  friend bool operator==(const Placement &, const Placement &) = default;
};

struct AllocationReport {
  std::vector<AllocationEvent> events;
  std::uint64_t peak_address_bytes = 0;
  std::uint64_t total_moved_bytes = 0;
  std::uint64_t move_count = 0;
  /// Layout while each step's operator executes (after its output is placed).
  std::vector<std::vector<Placement>> per_step_layout;
};

/// Simulates a contiguous arena with first-fit placement and a compaction
/// pass after every operator that slides live buffers toward offset 0.
///
/// Graph inputs are placed at step 0 in id order. Inputs whose last
/// consumer just ran are freed before compaction. Throws CapacityExceeded
/// if any allocation ends past config.capacity_bytes.
AllocationReport simulate_compacting(const Graph &graph,
                                     const Schedule &schedule,
                                     const ArenaConfig &config = {});

/// Arena size when every ram tensor holds its own region for the whole run.
std::uint64_t simulate_static(const Graph &graph, const ArenaConfig &config = {});

struct CompareOptions {
  /// Framework bookkeeping per ram tensor; reported as overhead_bytes.
  std::uint64_t overhead_per_tensor = 0;
  /// Add overhead_bytes to every headline peak.
  bool include_overhead = false;
  bool count_flash_as_ram = false;
  DpOptions dp;
};

struct ComparisonReport {
  std::uint64_t default_order_peak = 0;
  std::uint64_t optimal_order_peak = 0;
  std::uint64_t static_peak = 0;
  std::uint64_t dynamic_peak_default = 0;
  std::uint64_t dynamic_peak_optimal = 0;
  std::uint64_t moved_bytes_default = 0;
  std::uint64_t moved_bytes_optimal = 0;
  std::uint64_t flash_bytes = 0;
  std::uint64_t savings_bytes = 0;
  double savings_percent = 0.0;
  std::uint64_t overhead_bytes = 0;
  Schedule optimal_schedule;
};

ComparisonReport compare_strategies(const Graph &graph,
                                    const ArenaConfig &config = {},
                                    const CompareOptions &options = {});

} // namespace opsched
