// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include "support/test_support.hpp"

using namespace opsched;
using namespace opsched::testing;

namespace {

ArenaConfig packed() { return ArenaConfig{std::nullopt, 1}; }

} // namespace

TEST_CASE("fixture arena peaks match the working set") {
  const Graph g = two_branch_graph();
  const auto opt = simulate_compacting(g, two_branch_schedule({1, 4, 6, 2, 3, 5, 7}), packed());
  CHECK(opt.peak_address_bytes == 4960);
  CHECK(replay_events(opt).empty());
  const auto def = simulate_compacting(g, g.default_schedule(), packed());
  CHECK(def.peak_address_bytes == 5216);
  CHECK(replay_events(def).empty());
  CHECK(def.per_step_layout.size() == 7);

  // Hand simulation of the default order, step 0: t0 at 0, t1 at 1568; t0
  // freed, t1 slides down by 1568.
  REQUIRE(def.per_step_layout[0].size() == 2);
  CHECK(def.per_step_layout[0][0] == Placement{T(0), 0, 1568});
  CHECK(def.per_step_layout[0][1] == Placement{T(1), 1568, 3136});
  // Step 2 (op3): t1 at 0, t2 at 3136, t3 at 4704.
  CHECK(def.per_step_layout[2] ==
        std::vector<Placement>{{T(1), 0, 3136}, {T(2), 3136, 1568}, {T(3), 4704, 512}});
}

TEST_CASE("single operator arena") {
  const Graph g = chain_graph({100, 50});
  const auto r = simulate_compacting(g, {O(0)}, packed());
  REQUIRE(r.events.size() == 4);
  CHECK(r.events[0] == AllocationEvent{0, EventKind::alloc, T(0), std::nullopt, 0, 100});
  CHECK(r.events[1] == AllocationEvent{0, EventKind::alloc, T(1), std::nullopt, 100, 50});
  CHECK(r.events[2] == AllocationEvent{0, EventKind::free, T(0), 0, std::nullopt, 100});
  // Freeing the input leaves a hole at the start; compaction slides the output down.
  CHECK(r.events[3] == AllocationEvent{0, EventKind::move, T(1), 100, 0, 50});
  CHECK(r.peak_address_bytes == 150);
  CHECK(r.total_moved_bytes == 50);
  CHECK(r.move_count == 1);
}

TEST_CASE("capacity") {
  const Graph g = two_branch_graph();
  ArenaConfig cfg{4000, 1};
  try {
    simulate_compacting(g, two_branch_schedule({1, 4, 6, 2, 3, 5, 7}), cfg);
    FAIL("expected CapacityExceeded");
  } catch (const CapacityExceeded &e) {
    CHECK(e.kind() == ErrorKind::CapacityExceeded);
    CHECK(e.step() == 0);
    CHECK(e.attempted_size() == 3136);
    CHECK(e.live_bytes() == 1568);
  }
  // Exactly the optimal peak fits; the default order does not.
  ArenaConfig tight{4960, 1};
  CHECK_NOTHROW(simulate_compacting(g, two_branch_schedule({1, 4, 6, 2, 3, 5, 7}), tight));
  try {
    simulate_compacting(g, g.default_schedule(), tight);
    FAIL("expected CapacityExceeded");
  } catch (const CapacityExceeded &e) {
    CHECK(e.step() == 2);
  }
}

TEST_CASE("config validation") {
  const Graph g = two_branch_graph();
  CHECK_THROWS_AS(simulate_compacting(g, g.default_schedule(), {std::nullopt, 3}), Error);
  CHECK_THROWS_AS(simulate_static(g, {std::nullopt, 0}), Error);
  CHECK_THROWS_AS(simulate_compacting(g, two_branch_schedule({2, 1, 3, 4, 5, 6, 7})), Error);
}

TEST_CASE("alignment pads offsets") {
  const Graph g = chain_graph({3, 5, 7});
  const auto r = simulate_compacting(g, g.default_schedule(), {std::nullopt, 4});
  CHECK(replay_events(r).empty());
  for (const auto &layout : r.per_step_layout)
    for (const auto &p : layout)
      CHECK(p.offset % 4 == 0);
  // Step 1: t1 (5 B) at 0, t2 at 8.
  CHECK(r.peak_address_bytes == 15);
  CHECK(simulate_static(g, {std::nullopt, 4}) == 4 + 8 + 8);
  CHECK(simulate_static(g, packed()) == 15);
}

TEST_CASE("in-place operators reuse the input buffer") {
  Graph raw({{T(0), 16, Storage::ram, std::nullopt},
             {T(1), 64, Storage::ram, std::nullopt},
             {T(2), 64, Storage::ram, std::nullopt}},
            {{O(0), "A", {T(0)}, T(1), {}}, {O(1), "Relu", {T(1)}, T(2), 0}});
  const Graph g = validate(raw);
  const auto r = simulate_compacting(g, {O(0), O(1)}, packed());
  CHECK(replay_events(r).empty());
  const auto alias = std::find_if(r.events.begin(), r.events.end(), [](const auto &e) {
    return e.kind == EventKind::alias;
  });
  REQUIRE(alias != r.events.end());
  CHECK(alias->tensor == T(2));
  CHECK(std::none_of(r.events.begin(), r.events.end(), [](const auto &e) {
    return e.kind == EventKind::alloc && e.tensor == T(2);
  }));
  CHECK(r.peak_address_bytes == peak_memory(g, {O(0), O(1)}));
}

TEST_CASE("static allocation") {
  CHECK(simulate_static(two_branch_graph()) == 8320);
  CHECK(simulate_static(two_branch_graph(), packed()) == 8320);
  CHECK(simulate_static(chain_graph({100, 50})) == 152);
  CHECK(simulate_static(chain_graph({100, 50}), packed()) == 150);
  CHECK(simulate_static(chain_graph({0, 0, 0})) == 0);
}

TEST_CASE("arena simulation agrees with the working set on random graphs") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 300; ++trial) {
    const Graph g = random_dag(rng, {1, 8, 0, 1000, trial % 2 == 0, trial % 3 == 0});
    std::size_t checked = 0;
    for_each_schedule(g, [&](const Schedule &s) {
      const auto r = simulate_compacting(g, s, packed());
      REQUIRE(r.peak_address_bytes == peak_memory(g, s));
      const std::string problem = replay_events(r);
      REQUIRE_MESSAGE(problem.empty(), problem);
      for (const auto &e : r.events)
        if (e.kind == EventKind::move)
          REQUIRE(e.size == g.tensor(e.tensor).size_bytes);
      return ++checked < 40;
    });
    const std::uint64_t best_dynamic =
        simulate_compacting(g, min_peak_memory(g).schedule, packed()).peak_address_bytes;
    REQUIRE(simulate_static(g, packed()) >= best_dynamic);
  }
}

TEST_CASE("figures are monotone in tensor sizes") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<std::uint64_t> bump(1, 500);
  for (int trial = 0; trial < 100; ++trial) {
    const Graph g = random_dag(rng, {1, 8});
    std::vector<TensorInfo> tensors(g.tensors().begin(), g.tensors().end());
    std::uniform_int_distribution<std::size_t> pick(0, tensors.size() - 1);
    tensors[pick(rng)].size_bytes += bump(rng);
    const Graph bigger =
        validate(Graph(tensors, {g.operators().begin(), g.operators().end()}));
    const auto a = compare_strategies(g, packed());
    const auto b = compare_strategies(bigger, packed());
    CHECK(b.default_order_peak >= a.default_order_peak);
    CHECK(b.optimal_order_peak >= a.optimal_order_peak);
    CHECK(b.static_peak >= a.static_peak);
    CHECK(b.dynamic_peak_default >= a.dynamic_peak_default);
    CHECK(b.dynamic_peak_optimal >= a.dynamic_peak_optimal);
  }
}

TEST_CASE("comparison report on the fixture") {
  const auto r = compare_strategies(two_branch_graph(), packed());
  CHECK(r.default_order_peak == 5216);
  CHECK(r.optimal_order_peak == 4960);
  CHECK(r.savings_bytes == 256);
  CHECK(r.savings_percent == doctest::Approx(100.0 * 256 / 5216));
  CHECK(r.static_peak == 8320);
  CHECK(r.dynamic_peak_default == 5216);
  CHECK(r.dynamic_peak_optimal == 4960);
  CHECK(r.flash_bytes == 0);
  CHECK(r.overhead_bytes == 0);

  CompareOptions opt;
  opt.overhead_per_tensor = 16;
  const auto with = compare_strategies(two_branch_graph(), packed(), opt);
  CHECK(with.overhead_bytes == 16 * 8);
  CHECK(with.optimal_order_peak == 4960);
  opt.include_overhead = true;
  CHECK(compare_strategies(two_branch_graph(), packed(), opt).optimal_order_peak == 4960 + 128);
}

TEST_CASE("comparison on a chain has no savings") {
  const auto r = compare_strategies(chain_graph({10, 20, 30}), packed());
  CHECK(r.default_order_peak == r.optimal_order_peak);
  CHECK(r.savings_bytes == 0);
  CHECK(r.savings_percent == 0.0);
}

TEST_CASE("zero-size buffers never move") {
  const Graph g = validate(Graph(
      {{T(0), 100, Storage::ram, std::nullopt},
       {T(1), 0, Storage::ram, O(0)},
       {T(2), 50, Storage::ram, O(1)}},
      {{O(0), "Shape", {T(0)}, T(1), std::nullopt},
       {O(1), "Reshape", {T(0), T(1)}, T(2), std::nullopt}}));
  const auto r = simulate_compacting(g, g.default_schedule(), packed());
  CHECK(replay_events(r).empty());
  for (const auto &e : r.events)
    CHECK_FALSE((e.kind == EventKind::move && e.tensor == T(1)));
  CHECK(r.move_count == 1);
  CHECK(r.peak_address_bytes == 150);
}
