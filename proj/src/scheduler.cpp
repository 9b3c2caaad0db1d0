// SPDX-License-Identifier: Apache-2.0
#include "opsched/scheduler.hpp"

#include <algorithm>
#include <optional>
#include <sstream>
#include <unordered_map>

namespace opsched {

namespace {

// Step interval [start, end] during which each tensor is resident.
struct Lifetimes {
  std::vector<std::size_t> start;
  std::vector<std::size_t> end;
};

Lifetimes compute_lifetimes(const Graph &g, const Schedule &schedule) {
  const std::size_t n = schedule.size();
  std::vector<std::size_t> pos(g.operator_count());
  for (std::size_t k = 0; k < n; ++k)
    pos[index(schedule[k])] = k;

  Lifetimes life;
  life.start.assign(g.tensor_count(), 0);
  life.end.assign(g.tensor_count(), 0);
  for (const auto &t : g.tensors()) {
    const std::size_t i = index(t.id);
    life.start[i] = t.producer ? pos[index(*t.producer)] : 0;
    const auto consumers = g.consumers(t.id);
    if (consumers.empty()) {
      life.end[i] = n == 0 ? 0 : n - 1;
    } else {
      std::size_t last = 0;
      for (OperatorId c : consumers)
        last = std::max(last, pos[index(c)]);
      life.end[i] = last;
    }
  }
  return life;
}

// Size of the output credited at step `k` when the operator writes in place.
std::uint64_t inplace_credit(const Graph &g, const OperatorNode &node,
                             const Lifetimes &life, std::size_t k) {
  if (!node.inplace_input)
    return 0;
  const TensorId d = node.inputs[*node.inplace_input];
  if (life.end[index(d)] != k)
    return 0;
  return g.tensor(node.output).size_bytes;
}

// Per-step bytes of ram tensors, via a difference array over lifetimes.
std::vector<std::uint64_t> step_bytes(const Graph &g, const Schedule &schedule,
                                      const Lifetimes &life) {
  const std::size_t n = schedule.size();
  std::vector<std::int64_t> delta(n + 1, 0);
  for (const auto &t : g.tensors()) {
    if (t.storage != Storage::ram || n == 0)
      continue;
    const auto size = static_cast<std::int64_t>(t.size_bytes);
    delta[life.start[index(t.id)]] += size;
    delta[life.end[index(t.id)] + 1] -= size;
  }
  std::vector<std::uint64_t> bytes(n, 0);
  std::int64_t running = 0;
  for (std::size_t k = 0; k < n; ++k) {
    running += delta[k];
    bytes[k] = static_cast<std::uint64_t>(running) -
               inplace_credit(g, g.op(schedule[k]), life, k);
  }
  return bytes;
}

} // namespace

void check_schedule(const Graph &graph, const Schedule &schedule) {
  const std::size_t n = graph.operator_count();
  if (schedule.size() != n)
    throw Error(ErrorKind::NotAPermutation,
                "schedule has " + std::to_string(schedule.size()) +
                    " entries for " + std::to_string(n) + " operators");
  std::vector<std::size_t> pos(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = index(schedule[k]);
    if (i >= n)
      throw Error(ErrorKind::NotAPermutation,
                  "schedule names unknown operator id " + std::to_string(i));
    if (pos[i] != n)
      throw Error(ErrorKind::NotAPermutation,
                  "schedule repeats operator " +
                      std::to_string(graph.label(schedule[k])));
    pos[i] = k;
  }
  for (std::size_t k = 0; k < n; ++k) {
    const auto &node = graph.op(schedule[k]);
    for (TensorId t : node.inputs) {
      const auto &p = graph.tensor(t).producer;
      if (p && pos[index(*p)] > k)
        throw Error(ErrorKind::NotTopological,
                    "operator " + std::to_string(graph.label(node.id)) +
                        " is scheduled before operator " +
                        std::to_string(graph.label(*p)) +
                        ", which produces its input tensor " +
                        std::to_string(graph.label(t)));
    }
  }
}

MemoryTrace working_set_trace(const Graph &graph, const Schedule &schedule,
                              const TraceOptions &options) {
  check_schedule(graph, schedule);
  const Lifetimes life = compute_lifetimes(graph, schedule);
  const std::vector<std::uint64_t> bytes = step_bytes(graph, schedule, life);

  MemoryTrace trace;
  trace.flash_bytes = flash_bytes(graph);
  const std::uint64_t flash_extra =
      options.count_flash_as_ram ? trace.flash_bytes : 0;

  trace.steps.reserve(schedule.size());
  for (std::size_t k = 0; k < schedule.size(); ++k) {
    TraceStep step;
    step.op = schedule[k];
    step.resident = TensorSet(graph.tensor_count());
    for (const auto &t : graph.tensors()) {
      const bool flash = t.storage == Storage::flash;
      if (flash ? options.count_flash_as_ram
                : life.start[index(t.id)] <= k && k <= life.end[index(t.id)])
        step.resident.insert(t.id);
    }
    step.bytes = bytes[k] + flash_extra;
    if (step.bytes > trace.peak_bytes) {
      trace.peak_bytes = step.bytes;
      trace.peak_step = k;
    }
    trace.steps.push_back(std::move(step));
  }
  return trace;
}

std::uint64_t peak_memory(const Graph &graph, const Schedule &schedule,
                          const TraceOptions &options) {
  return working_set_trace(graph, schedule, options).peak_bytes;
}

namespace {

class PeakSearch {
public:
  PeakSearch(const Graph &graph, const DpOptions &options)
      : graph_(graph), options_(options) {}

  DpResult run() {
    TensorSet outputs(graph_.tensor_count());
    for (const auto &t : graph_.tensors())
      if (t.storage == Storage::ram && graph_.is_graph_output(t.id))
        outputs.insert(t.id);

    const Entry best = solve(outputs);

    DpResult result;
    result.min_peak_bytes = best.peak;
    if (options_.count_flash_as_ram)
      result.min_peak_bytes += flash_bytes(graph_);

    TensorSet cur = outputs;
    while (true) {
      const Entry &e = memo_.at(cur);
      if (!e.choice)
        break;
      result.schedule.push_back(graph_.tensor(*e.choice).producer.value());
      cur = undo(cur, *e.choice);
    }
    std::reverse(result.schedule.begin(), result.schedule.end());
    result.states_explored = states_;
    result.memo_entries = memo_.size();
    return result;
  }

private:
  struct Entry {
    std::uint64_t peak = 0;
    // Sum of step bytes along the chosen path; secondary tie-break.
    std::uint64_t sum = 0;
    std::optional<TensorId> choice;
  };

  // Resident set before the producer of `x` runs.
  TensorSet undo(const TensorSet &live, TensorId x) const {
    TensorSet before = live;
    before.erase(x);
    const auto &node = graph_.op(*graph_.tensor(x).producer);
    for (TensorId in : node.inputs)
      if (graph_.tensor(in).storage == Storage::ram)
        before.insert(in);
    return before;
  }

  std::uint64_t bytes_of(const TensorSet &s) const {
    std::uint64_t total = 0;
    s.for_each([&](TensorId t) { total += graph_.tensor(t).size_bytes; });
    return total;
  }

  Entry solve(const TensorSet &live) {
    ++states_;
    if (auto it = memo_.find(live); it != memo_.end())
      return it->second;

    std::vector<TensorId> activations;
    OperatorSet needed_later(graph_.operator_count());
    live.for_each([&](TensorId t) {
      if (const auto &p = graph_.tensor(t).producer) {
        activations.push_back(t);
        needed_later |= graph_.predecessor_set(*p);
      }
    });

    Entry best;
    if (!activations.empty()) {
      bool found = false;
      OperatorId best_op{};
      for (TensorId x : activations) {
        const OperatorId producer = *graph_.tensor(x).producer;
        // Undoing an operator that another resident tensor still depends on
        // would require running it twice.
        if (needed_later.contains(producer))
          continue;

        const TensorSet before = undo(live, x);
        const Entry sub = solve(before);

        const auto &node = graph_.op(producer);
        std::uint64_t footprint = bytes_of(before) + graph_.tensor(x).size_bytes;
        if (node.inplace_input &&
            !live.contains(node.inputs[*node.inplace_input]))
          footprint -= graph_.tensor(x).size_bytes;

        Entry candidate{std::max(sub.peak, footprint), sub.sum + footprint, x};
        if (!found || candidate.peak < best.peak ||
            (candidate.peak == best.peak &&
             (candidate.sum < best.sum ||
              (candidate.sum == best.sum && producer < best_op)))) {
          best = candidate;
          best_op = producer;
          found = true;
        }
      }
      if (!found)
        throw std::logic_error("no operator can be undone from a reachable state");
    }

    if (memo_.size() >= options_.max_memo_entries)
      throw Error(ErrorKind::MemoBudgetExceeded,
                  "memo table reached its cap of " +
                      std::to_string(options_.max_memo_entries) + " entries");
    memo_.emplace(live, best);
    return best;
  }

  const Graph &graph_;
  const DpOptions &options_;
  std::unordered_map<TensorSet, Entry> memo_;
  std::uint64_t states_ = 0;
};

void require_size(const Graph &graph, std::size_t limit, const char *what) {
  if (graph.operator_count() > limit) {
    std::ostringstream os;
    os << graph.operator_count() << " operators exceed the " << what
       << " limit of " << limit
       << "; exhaustive search grows as O(|V| * 2^|V|) or worse";
    throw Error(ErrorKind::GraphTooLarge, os.str());
  }
}

} // namespace

DpResult min_peak_memory(const Graph &graph, const DpOptions &options) {
  require_size(graph, options.max_operators, "dynamic-programming");
  return PeakSearch(graph, options).run();
}

std::uint64_t for_each_schedule(
    const Graph &graph, const std::function<bool(const Schedule &)> &visit,
    const EnumerationOptions &options) {
  require_size(graph, options.max_operators, "enumeration");

  const std::size_t n = graph.operator_count();
  std::vector<std::size_t> missing(n, 0);
  for (const auto &node : graph.operators())
    for (TensorId t : node.inputs)
      if (graph.tensor(t).producer)
        ++missing[index(node.id)];

  Schedule current;
  current.reserve(n);
  std::vector<bool> done(n, false);
  std::uint64_t count = 0;
  bool stop = false;

  // Depth-first over ready operators in increasing id order.
  std::function<void()> extend = [&] {
    if (current.size() == n) {
      ++count;
      stop = !visit(current);
      return;
    }
    for (std::size_t i = 0; i < n && !stop; ++i) {
      if (done[i] || missing[i] != 0)
        continue;
      const auto id = static_cast<OperatorId>(i);
      done[i] = true;
      current.push_back(id);
      const auto consumers = graph.consumers(graph.op(id).output);
      for (OperatorId c : consumers)
        --missing[index(c)];
      extend();
      for (OperatorId c : consumers)
        ++missing[index(c)];
      current.pop_back();
      done[i] = false;
    }
  };
  extend();
  return count;
}

std::vector<Schedule> enumerate_schedules(const Graph &graph,
                                          const EnumerationOptions &options) {
  std::vector<Schedule> all;
  for_each_schedule(
      graph,
      [&](const Schedule &s) {
        all.push_back(s);
        return true;
      },
      options);
  return all;
}

DpResult brute_force_min_peak(const Graph &graph,
                              const EnumerationOptions &options) {
  DpResult best;
  bool found = false;
  const std::uint64_t visited = for_each_schedule(
      graph,
      [&](const Schedule &s) {
        const Lifetimes life = compute_lifetimes(graph, s);
        const auto bytes = step_bytes(graph, s, life);
        const std::uint64_t peak =
            bytes.empty() ? 0 : *std::max_element(bytes.begin(), bytes.end());
        if (!found || peak < best.min_peak_bytes) {
          best.min_peak_bytes = peak;
          best.schedule = s;
          found = true;
        }
        return true;
      },
      options);
  if (options.count_flash_as_ram)
    best.min_peak_bytes += flash_bytes(graph);
  best.states_explored = visited;
  best.memo_entries = 0;
  return best;
}

} // namespace opsched
