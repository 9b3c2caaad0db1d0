// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "opsched/alloc_sim.hpp"
#include "opsched/graph.hpp"
#include "opsched/scheduler.hpp"

namespace opsched::testing {

inline std::string fixture_path(const std::string &name) {
  return std::string(OPSCHED_SOURCE_DIR) + "/fixtures/" + name;
}

inline std::string golden_path(const std::string &name) {
  return std::string(OPSCHED_SOURCE_DIR) + "/tests/golden/" + name;
}

inline TensorId T(std::uint32_t i) { return static_cast<TensorId>(i); }
inline OperatorId O(std::uint32_t i) { return static_cast<OperatorId>(i); }

/// The seven-operator branching example. Operator k (1-based label) has
/// dense id k-1; tensor k is the output of operator k and t0 the input.
inline Graph two_branch_graph() {
  const std::uint64_t sizes[] = {1568, 3136, 1568, 512, 512, 256, 256, 512};
  std::vector<TensorInfo> tensors;
  for (std::uint32_t i = 0; i < 8; ++i)
    tensors.push_back({T(i), sizes[i], Storage::ram, std::nullopt});
  auto conv = [](std::uint32_t label, std::uint32_t in) {
    return OperatorNode{O(label - 1), "Conv2D", {T(in)}, T(label), std::nullopt};
  };
  std::vector<OperatorNode> ops = {conv(1, 0), conv(2, 1), conv(3, 2), conv(4, 1),
                                   conv(5, 3), conv(6, 4),
                                   {O(6), "Concat", {T(5), T(6)}, T(7), std::nullopt}};
  return validate(Graph(std::move(tensors), std::move(ops), "two_branch",
                        IdLabels{{0, 1, 2, 3, 4, 5, 6, 7}, {1, 2, 3, 4, 5, 6, 7}}));
}

/// Converts 1-based operator labels of the fixture into a dense schedule.
inline Schedule two_branch_schedule(std::initializer_list<std::uint32_t> labels) {
  Schedule s;
  for (std::uint32_t l : labels)
    s.push_back(O(l - 1));
  return s;
}

/// Chain of `n` operators over tensors of the given sizes (n+1 entries).
inline Graph chain_graph(const std::vector<std::uint64_t> &sizes) {
  std::vector<TensorInfo> tensors;
  for (std::uint32_t i = 0; i < sizes.size(); ++i)
    tensors.push_back({T(i), sizes[i], Storage::ram, std::nullopt});
  std::vector<OperatorNode> ops;
  for (std::uint32_t i = 0; i + 1 < sizes.size(); ++i)
    ops.push_back({O(i), "Op", {T(i)}, T(i + 1), std::nullopt});
  return validate(Graph(std::move(tensors), std::move(ops)));
}

struct RandomDagOptions {
  std::size_t min_ops = 1;
  std::size_t max_ops = 8;
  std::uint64_t min_size = 1;
  std::uint64_t max_size = 1000;
  bool flash = false;
  bool inplace = false;
};

/// Random valid graph: list order is topological, operator ids are a random
/// permutation of list positions.
inline Graph random_dag(std::mt19937_64 &rng, const RandomDagOptions &opt = {}) {
  std::uniform_int_distribution<std::size_t> n_ops_dist(opt.min_ops, opt.max_ops);
  std::uniform_int_distribution<std::uint64_t> size_dist(opt.min_size, opt.max_size);
  std::bernoulli_distribution coin(0.5);
  std::bernoulli_distribution rare(0.2);

  const std::size_t n_ops = n_ops_dist(rng);
  const std::size_t n_inputs = 1 + (coin(rng) ? 1 : 0);

  std::vector<TensorInfo> tensors;
  std::vector<TensorId> available;
  auto add_tensor = [&](std::uint64_t size, Storage storage) {
    const auto id = static_cast<TensorId>(tensors.size());
    tensors.push_back({id, size, storage, std::nullopt});
    return id;
  };
  for (std::size_t i = 0; i < n_inputs; ++i)
    available.push_back(add_tensor(size_dist(rng), Storage::ram));

  std::vector<std::uint32_t> op_ids(n_ops);
  std::iota(op_ids.begin(), op_ids.end(), 0u);
  std::shuffle(op_ids.begin(), op_ids.end(), rng);

  std::vector<OperatorNode> ops;
  for (std::size_t k = 0; k < n_ops; ++k) {
    std::vector<TensorId> pool = available;
    std::shuffle(pool.begin(), pool.end(), rng);
    std::uniform_int_distribution<std::size_t> fan_in(1, std::min<std::size_t>(3, pool.size()));
    std::vector<TensorId> inputs(pool.begin(),
                                 pool.begin() + static_cast<std::ptrdiff_t>(fan_in(rng)));
    // Favour recent tensors so chains and branches both appear.
    if (k > 0 && coin(rng) &&
        std::find(inputs.begin(), inputs.end(), available.back()) == inputs.end())
      inputs[0] = available.back();

    if (opt.flash && rare(rng))
      inputs.push_back(add_tensor(size_dist(rng), Storage::flash));

    std::optional<std::size_t> inplace;
    std::uint64_t out_size = size_dist(rng);
    if (opt.inplace && rare(rng)) {
      inplace = 0;
      out_size = tensors[index(inputs[0])].size_bytes;
    }
    const TensorId out = add_tensor(out_size, Storage::ram);
    ops.push_back({static_cast<OperatorId>(op_ids[k]), "Op" + std::to_string(k),
                   std::move(inputs), out, inplace});
    available.push_back(out);
  }
  return validate(Graph(std::move(tensors), std::move(ops)));
}

/// Reachability by breadth-first search backwards from `op`.
inline std::vector<bool> bfs_predecessors(const Graph &g, OperatorId op) {
  std::vector<bool> seen(g.operator_count(), false);
  std::deque<OperatorId> queue{op};
  while (!queue.empty()) {
    const OperatorId cur = queue.front();
    queue.pop_front();
    for (TensorId t : g.op(cur).inputs)
      if (const auto &p = g.tensor(t).producer; p && !seen[index(*p)]) {
        seen[index(*p)] = true;
        queue.push_back(*p);
      }
  }
  return seen;
}

/// Working set computed literally from its definition: the pending
/// operator's output and ram inputs, plus every ram tensor already
/// available whose uses are not finished, plus graph outputs once produced.
inline std::vector<std::uint64_t> literal_step_bytes(const Graph &g, const Schedule &s) {
  std::vector<std::uint64_t> out;
  std::vector<bool> produced(g.tensor_count(), false);
  for (const auto &t : g.tensors())
    produced[index(t.id)] = !t.producer;
  for (std::size_t k = 0; k < s.size(); ++k) {
    const auto &node = g.op(s[k]);
    produced[index(node.output)] = true;
    auto has_consumer_after = [&](TensorId t, std::size_t from) {
      for (std::size_t j = from; j < s.size(); ++j) {
        const auto &ins = g.op(s[j]).inputs;
        if (std::find(ins.begin(), ins.end(), t) != ins.end())
          return true;
      }
      return false;
    };
    std::uint64_t bytes = 0;
    for (const auto &t : g.tensors()) {
      if (t.storage != Storage::ram || !produced[index(t.id)])
        continue;
      const bool is_io =
          t.id == node.output ||
          std::find(node.inputs.begin(), node.inputs.end(), t.id) != node.inputs.end();
      if (is_io || has_consumer_after(t.id, k + 1) || g.consumers(t.id).empty())
        bytes += t.size_bytes;
    }
    if (node.inplace_input && !has_consumer_after(node.inputs[*node.inplace_input], k + 1))
      bytes -= g.tensor(node.output).size_bytes;
    out.push_back(bytes);
  }
  return out;
}

/// Replays allocation events and reports the first overlap, out-of-range
/// buffer, size change or order violation. Empty string when consistent.
inline std::string replay_events(const AllocationReport &report) {
  struct Buf {
    std::uint64_t off, size;
  };
  std::map<std::uint32_t, Buf> live;
  auto overlaps = [&](std::uint32_t self, std::uint64_t off, std::uint64_t size) {
    if (size == 0)
      return false;
    for (const auto &[id, b] : live)
      if (id != self && b.size > 0 && off < b.off + b.size && b.off < off + size)
        return true;
    return false;
  };
  for (const auto &e : report.events) {
    const auto id = static_cast<std::uint32_t>(e.tensor);
    switch (e.kind) {
    case EventKind::alloc:
      if (overlaps(id, *e.to_offset, e.size))
        return "alloc overlaps at step " + std::to_string(e.step);
      live[id] = {*e.to_offset, e.size};
      break;
    case EventKind::alias: {
      auto it = std::find_if(live.begin(), live.end(), [&](const auto &kv) {
        return kv.second.off == *e.from_offset && kv.second.size == e.size;
      });
      if (it == live.end())
        return "alias without source at step " + std::to_string(e.step);
      live.erase(it);
      live[id] = {*e.to_offset, e.size};
      break;
    }
    case EventKind::free:
      if (!live.count(id) || live[id].off != *e.from_offset)
        return "free of unknown buffer at step " + std::to_string(e.step);
      live.erase(id);
      break;
    case EventKind::move: {
      if (!live.count(id) || live[id].off != *e.from_offset || live[id].size != e.size)
        return "inconsistent move at step " + std::to_string(e.step);
      if (*e.to_offset >= *e.from_offset)
        return "move away from the arena start at step " + std::to_string(e.step);
      // No live buffer may sit between the destination and the source.
      for (const auto &[other, b] : live)
        if (other != id && b.size > 0 && b.off < *e.from_offset && b.off + b.size > *e.to_offset)
          return "move reorders or overlaps buffers at step " + std::to_string(e.step);
      live[id].off = *e.to_offset;
      break;
    }
    }
    for (const auto &[_, b] : live)
      if (b.size > 0 && b.off + b.size > report.peak_address_bytes)
        return "buffer beyond peak address at step " + std::to_string(e.step);
  }
  return {};
}

/// True if the graph admits more than one topological order.
inline bool is_branching(const Graph &g) {
  EnumerationOptions opt;
  opt.max_operators = 64;
  std::uint64_t seen = 0;
  for_each_schedule(g, [&](const Schedule &) { return ++seen < 2; }, opt);
  return seen >= 2;
}

} // namespace opsched::testing
