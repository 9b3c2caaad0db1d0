// SPDX-License-Identifier: Apache-2.0
#include "opsched/alloc_sim.hpp"

#include <algorithm>
#include <bit>

namespace opsched {

namespace {

void check_config(const ArenaConfig &config) {
  if (config.alignment_bytes == 0 || !std::has_single_bit(config.alignment_bytes))
    throw Error(ErrorKind::InvalidConfig,
                "alignment must be a power of two, got " +
                    std::to_string(config.alignment_bytes));
  if (config.capacity_bytes && *config.capacity_bytes == 0)
    throw Error(ErrorKind::InvalidConfig, "capacity must be positive");
}

std::uint64_t align_up(std::uint64_t value, std::uint64_t alignment) {
  return (value + alignment - 1) & ~(alignment - 1);
}

class Arena {
public:
  Arena(const ArenaConfig &config, AllocationReport &report)
      : config_(config), report_(report) {}

  void allocate(std::size_t step, TensorId tensor, std::uint64_t size) {
    std::uint64_t candidate = 0;
    for (const auto &b : live_) {
      if (candidate + size <= b.offset)
        break;
      candidate = std::max(candidate, align_up(b.offset + b.size, config_.alignment_bytes));
    }
    if (config_.capacity_bytes && candidate + size > *config_.capacity_bytes)
      throw CapacityExceeded(step, size, live_bytes(), *config_.capacity_bytes);

    const Placement p{tensor, candidate, size};
    live_.insert(std::upper_bound(live_.begin(), live_.end(), p,
                                  [](const Placement &a, const Placement &b) {
                                    return a.offset != b.offset ? a.offset < b.offset
                                                                : a.size < b.size;
                                  }),
                 p);
    report_.events.push_back({step, EventKind::alloc, tensor, std::nullopt, candidate, size});
    note_extent();
  }

  void alias(std::size_t step, TensorId from, TensorId to) {
    auto &b = find(from);
    b.tensor = to;
    report_.events.push_back({step, EventKind::alias, to, b.offset, b.offset, b.size});
  }

  void release(std::size_t step, TensorId tensor) {
    auto it = std::find_if(live_.begin(), live_.end(),
                           [&](const Placement &p) { return p.tensor == tensor; });
    report_.events.push_back({step, EventKind::free, tensor, it->offset, std::nullopt, it->size});
    live_.erase(it);
  }

  // Slides every buffer down to the lowest aligned offset, keeping order.
  void compact(std::size_t step) {
    std::uint64_t cursor = 0;
    for (auto &b : live_) {
      const std::uint64_t target = align_up(cursor, config_.alignment_bytes);
      if (target != b.offset) {
        report_.events.push_back({step, EventKind::move, b.tensor, b.offset, target, b.size});
        report_.total_moved_bytes += b.size;
        ++report_.move_count;
        b.offset = target;
      }
      cursor = b.offset + b.size;
    }
  }

  const std::vector<Placement> &layout() const { return live_; }

private:
  Placement &find(TensorId tensor) {
    return *std::find_if(live_.begin(), live_.end(),
                         [&](const Placement &p) { return p.tensor == tensor; });
  }

  std::uint64_t live_bytes() const {
    std::uint64_t total = 0;
    for (const auto &b : live_)
      total += b.size;
    return total;
  }

  void note_extent() {
    for (const auto &b : live_)
      if (b.size > 0)
        report_.peak_address_bytes =
            std::max(report_.peak_address_bytes, b.offset + b.size);
  }

  const ArenaConfig &config_;
  AllocationReport &report_;
  std::vector<Placement> live_; // sorted by offset, then size
};

} // namespace

AllocationReport simulate_compacting(const Graph &graph,
                                     const Schedule &schedule,
                                     const ArenaConfig &config) {
  check_config(config);
  check_schedule(graph, schedule);

  const std::size_t n = schedule.size();
  std::vector<std::size_t> pos(graph.operator_count());
  for (std::size_t k = 0; k < n; ++k)
    pos[index(schedule[k])] = k;
  auto last_use = [&](TensorId t) {
    std::size_t last = 0;
    for (OperatorId c : graph.consumers(t))
      last = std::max(last, pos[index(c)]);
    return last;
  };

  AllocationReport report;
  Arena arena(config, report);

  for (const auto &t : graph.tensors())
    if (graph.is_graph_input(t.id) && n > 0)
      arena.allocate(0, t.id, t.size_bytes);

  for (std::size_t k = 0; k < n; ++k) {
    const auto &node = graph.op(schedule[k]);
    std::optional<TensorId> aliased;
    if (node.inplace_input) {
      const TensorId d = node.inputs[*node.inplace_input];
      if (last_use(d) == k)
        aliased = d;
    }
    if (aliased)
      arena.alias(k, *aliased, node.output);
    else
      arena.allocate(k, node.output, graph.tensor(node.output).size_bytes);

    report.per_step_layout.push_back(arena.layout());

    for (TensorId in : node.inputs)
      if (in != aliased && graph.tensor(in).storage == Storage::ram &&
          last_use(in) == k)
        arena.release(k, in);

    arena.compact(k);
  }
  return report;
}

std::uint64_t simulate_static(const Graph &graph, const ArenaConfig &config) {
  check_config(config);
  std::uint64_t total = 0;
  for (const auto &t : graph.tensors())
    if (t.storage == Storage::ram)
      total += align_up(t.size_bytes, config.alignment_bytes);
  return total;
}

ComparisonReport compare_strategies(const Graph &graph,
                                    const ArenaConfig &config,
                                    const CompareOptions &options) {
  ArenaConfig unbounded = config;
  unbounded.capacity_bytes.reset();

  const Schedule default_order = graph.default_schedule();
  DpOptions dp = options.dp;
  dp.count_flash_as_ram = false;
  const DpResult best = min_peak_memory(graph, dp);

  const AllocationReport dyn_default = simulate_compacting(graph, default_order, unbounded);
  const AllocationReport dyn_optimal = simulate_compacting(graph, best.schedule, unbounded);

  ComparisonReport r;
  r.flash_bytes = flash_bytes(graph);
  r.default_order_peak = peak_memory(graph, default_order);
  r.optimal_order_peak = best.min_peak_bytes;
  r.static_peak = simulate_static(graph, unbounded);
  r.dynamic_peak_default = dyn_default.peak_address_bytes;
  r.dynamic_peak_optimal = dyn_optimal.peak_address_bytes;
  r.moved_bytes_default = dyn_default.total_moved_bytes;
  r.moved_bytes_optimal = dyn_optimal.total_moved_bytes;
  r.optimal_schedule = best.schedule;

  std::size_t ram_tensors = 0;
  for (const auto &t : graph.tensors())
    if (t.storage == Storage::ram)
      ++ram_tensors;
  r.overhead_bytes = options.overhead_per_tensor * ram_tensors;

  std::uint64_t extra = 0;
  if (options.count_flash_as_ram)
    extra += r.flash_bytes;
  if (options.include_overhead)
    extra += r.overhead_bytes;
  for (std::uint64_t *v : {&r.default_order_peak, &r.optimal_order_peak, &r.static_peak,
                           &r.dynamic_peak_default, &r.dynamic_peak_optimal})
    *v += extra;

  r.savings_bytes = r.default_order_peak - r.optimal_order_peak;
  r.savings_percent = r.default_order_peak == 0
                          ? 0.0
                          : 100.0 * static_cast<double>(r.savings_bytes) /
                                static_cast<double>(r.default_order_peak);
  return r;
}

} // namespace opsched
