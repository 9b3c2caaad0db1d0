// SPDX-License-Identifier: Apache-2.0
#include "opsched/cli.hpp"

#include <charconv>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "opsched/alloc_sim.hpp"
#include "opsched/io.hpp"
#include "opsched/scheduler.hpp"

namespace opsched {

namespace {

struct GlobalFlags {
  bool strict = false;
  bool verbose = false;
  bool count_flash_as_ram = false;
  std::size_t dp_limit = DpOptions{}.max_operators;
  std::size_t enum_limit = EnumerationOptions{}.max_operators;
};

class UsageError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

Schedule resolve_schedule(const Graph &graph, const std::string &spec) {
  if (spec.empty() || spec == "default" || spec == "embedded")
    return graph.default_schedule();

  std::map<std::int64_t, OperatorId> by_label;
  for (std::size_t i = 0; i < graph.operator_count(); ++i)
    by_label.emplace(graph.label(static_cast<OperatorId>(i)), static_cast<OperatorId>(i));

  Schedule schedule;
  std::stringstream items(spec);
  std::string item;
  while (std::getline(items, item, ',')) {
    std::int64_t value = 0;
    const auto [end, ec] = std::from_chars(item.data(), item.data() + item.size(), value);
    if (ec != std::errc() || end != item.data() + item.size())
      throw UsageError("--schedule expects default, embedded or a comma list of "
                       "operator ids, got \"" + item + "\"");
    auto it = by_label.find(value);
    if (it == by_label.end())
      throw Error(ErrorKind::UnknownOperator,
                  "schedule names unknown operator " + std::to_string(value));
    schedule.push_back(it->second);
  }
  return schedule;
}

std::string schedule_string(const Graph &graph, const Schedule &schedule) {
  std::string out;
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    if (i)
      out += ',';
    out += std::to_string(graph.label(schedule[i]));
  }
  return out;
}

std::string percent(double value) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << value << '%';
  return os.str();
}

Graph load(const std::string &path, const GlobalFlags &flags, std::ostream &err) {
  LoadOptions options;
  options.strict = flags.strict;
  options.verbose = flags.verbose ? &err : nullptr;
  return load_graph(path, options);
}

void print_trace(std::ostream &out, const Graph &graph, const MemoryTrace &trace) {
  out << std::left << std::setw(6) << "step" << std::setw(10) << "operator"
      << std::setw(16) << "opcode" << std::setw(24) << "resident tensors"
      << "bytes\n";
  for (std::size_t k = 0; k < trace.steps.size(); ++k) {
    const auto &step = trace.steps[k];
    std::string resident = "{";
    bool first = true;
    step.resident.for_each([&](TensorId t) {
      resident += (first ? "" : ", ") + std::to_string(graph.label(t));
      first = false;
    });
    resident += "}";
    out << std::setw(6) << k << std::setw(10) << graph.label(step.op)
        << std::setw(16) << graph.op(step.op).opcode << std::setw(24) << resident
        << step.bytes << '\n';
  }
  out << std::right;
  if (!trace.steps.empty())
    out << "peak: " << trace.peak_bytes << " B at step " << trace.peak_step
        << " (operator " << graph.label(trace.steps[trace.peak_step].op) << ")\n";
  else
    out << "peak: 0 B\n";
  out << "flash: " << trace.flash_bytes << " B\n";
}

} // namespace

int run_cli(const std::vector<std::string> &args, std::ostream &out,
            std::ostream &err) {
  CLI::App app{"Peak-memory-aware operator scheduling for small-memory inference"};
  app.name("opsched");
  app.require_subcommand(1);

  GlobalFlags flags;
  app.add_flag("--strict", flags.strict, "Reject unknown fields in graph files");
  app.add_flag("--verbose", flags.verbose, "Print id densification to stderr");
  app.add_flag("--count-flash-as-ram", flags.count_flash_as_ram,
               "Count flash tensors as resident for the whole run");
  app.add_option("--dp-limit", flags.dp_limit, "Maximum operators for the exact search")
      ->check(CLI::PositiveNumber);
  app.add_option("--enum-limit", flags.enum_limit,
                 "Maximum operators for exhaustive enumeration")
      ->check(CLI::PositiveNumber);

  std::string graph_path;
  std::string schedule_spec = "default";

  auto *analyze = app.add_subcommand("analyze", "Working-set trace and peak for one order");
  std::string trace_path, plot_path;
  analyze->add_option("graph", graph_path, "Graph JSON file")->required();
  analyze->add_option("--schedule", schedule_spec,
                      "default, embedded or comma-separated operator ids");
  analyze->add_option("--trace", trace_path, "Write the trace as CSV");
  analyze->add_option("--plot", plot_path, "Write the trace as SVG");

  auto *optimize = app.add_subcommand("optimize", "Find the peak-memory-minimal order");
  std::string reordered_path, report_path;
  optimize->add_option("graph", graph_path, "Graph JSON file")->required();
  optimize->add_option("-o,--output", reordered_path, "Write the reordered graph");
  optimize->add_option("--report", report_path, "Write a JSON report");

  auto *verify = app.add_subcommand("verify", "Cross-check the exact search by enumeration");
  verify->add_option("graph", graph_path, "Graph JSON file")->required();

  auto *simulate = app.add_subcommand("simulate", "Simulate a compacting tensor arena");
  std::optional<std::uint64_t> capacity;
  std::uint64_t alignment = ArenaConfig{}.alignment_bytes;
  simulate->add_option("graph", graph_path, "Graph JSON file")->required();
  simulate->add_option("--schedule", schedule_spec,
                       "default, embedded or comma-separated operator ids");
  simulate->add_option("--capacity", capacity, "Arena capacity in bytes")
      ->check(CLI::PositiveNumber);
  simulate->add_option("--alignment", alignment, "Buffer alignment in bytes");

  auto *compare = app.add_subcommand("compare", "Compare orders and allocation strategies");
  std::uint64_t overhead_per_tensor = 0;
  bool include_overhead = false, as_json = false;
  compare->add_option("graph", graph_path, "Graph JSON file")->required();
  compare->add_option("--overhead-per-tensor", overhead_per_tensor,
                      "Bookkeeping bytes per ram tensor");
  compare->add_flag("--include-overhead", include_overhead,
                    "Add the bookkeeping overhead to every peak");
  compare->add_option("--alignment", alignment, "Buffer alignment in bytes");
  compare->add_flag("--json", as_json, "Print the report as JSON");

  for (auto *sub : {analyze, optimize, verify, simulate, compare})
    sub->fallthrough();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  DpOptions dp;
  dp.max_operators = flags.dp_limit;
  dp.count_flash_as_ram = flags.count_flash_as_ram;
  EnumerationOptions en;
  en.max_operators = flags.enum_limit;
  en.count_flash_as_ram = flags.count_flash_as_ram;
  TraceOptions trace_options{flags.count_flash_as_ram};

  try {
    const Graph graph = load(graph_path, flags, err);

    if (analyze->parsed()) {
      const Schedule schedule = resolve_schedule(graph, schedule_spec);
      const MemoryTrace trace = working_set_trace(graph, schedule, trace_options);
      print_trace(out, graph, trace);
      if (!trace_path.empty())
        emit_trace(graph, trace, TraceFormat::csv, trace_path);
      if (!plot_path.empty())
        emit_trace(graph, trace, TraceFormat::svg, plot_path);
      return kExitOk;
    }

    if (optimize->parsed()) {
      const DpResult best = min_peak_memory(graph, dp);
      const std::uint64_t default_peak =
          peak_memory(graph, graph.default_schedule(), trace_options);
      const std::uint64_t savings = default_peak - best.min_peak_bytes;
      const double pct = default_peak == 0 ? 0.0
                                           : 100.0 * static_cast<double>(savings) /
                                                 static_cast<double>(default_peak);
      out << "default order peak: " << default_peak << " B\n"
          << "optimal order peak: " << best.min_peak_bytes << " B\n"
          << "savings: " << savings << " B (" << percent(pct) << ")\n"
          << "schedule: " << schedule_string(graph, best.schedule) << '\n'
          << "states explored: " << best.states_explored
          << ", memo entries: " << best.memo_entries << '\n';
      if (!reordered_path.empty())
        save_graph_with_schedule(graph, best.schedule, reordered_path);
      if (!report_path.empty()) {
        nlohmann::ordered_json report;
        report["min_peak_bytes"] = best.min_peak_bytes;
        report["default_peak_bytes"] = default_peak;
        report["savings_bytes"] = savings;
        report["savings_percent"] = pct;
        report["schedule"] = nlohmann::ordered_json::array();
        for (OperatorId id : best.schedule)
          report["schedule"].push_back(graph.label(id));
        report["states_explored"] = best.states_explored;
        report["memo_entries"] = best.memo_entries;
        write_file_atomic(report_path, report.dump(2) + "\n");
      }
      return kExitOk;
    }

    if (verify->parsed()) {
      const DpResult dp_result = min_peak_memory(graph, dp);
      const DpResult brute = brute_force_min_peak(graph, en);
      const std::uint64_t achieved =
          peak_memory(graph, dp_result.schedule, trace_options);
      const bool pass = dp_result.min_peak_bytes == brute.min_peak_bytes &&
                        achieved == dp_result.min_peak_bytes;
      out << "dp peak: " << dp_result.min_peak_bytes << " B (schedule "
          << schedule_string(graph, dp_result.schedule) << ")\n"
          << "brute-force peak: " << brute.min_peak_bytes << " B (schedule "
          << schedule_string(graph, brute.schedule) << ")\n"
          << "schedules enumerated: " << brute.states_explored << '\n'
          << (pass ? "PASS" : "FAIL") << '\n';
      return pass ? kExitOk : kExitDomainError;
    }

    if (simulate->parsed()) {
      const Schedule schedule = resolve_schedule(graph, schedule_spec);
      ArenaConfig config{capacity, alignment};
      try {
        const AllocationReport report = simulate_compacting(graph, schedule, config);
        out << "peak address: " << report.peak_address_bytes << " B\n"
            << "working-set peak: " << peak_memory(graph, schedule) << " B\n"
            << "moved bytes: " << report.total_moved_bytes << " B in "
            << report.move_count << " moves\n"
            << "static allocation: " << simulate_static(graph, config) << " B\n";
      } catch (const CapacityExceeded &e) {
        out << "out of memory at step " << e.step() << " (operator "
            << graph.label(schedule[e.step()]) << ")\n";
        err << "error: " << e.what() << '\n';
        return kExitDomainError;
      }
      return kExitOk;
    }

    if (compare->parsed()) {
      CompareOptions options;
      options.overhead_per_tensor = overhead_per_tensor;
      options.include_overhead = include_overhead;
      options.count_flash_as_ram = flags.count_flash_as_ram;
      options.dp = dp;
      const ComparisonReport r =
          compare_strategies(graph, ArenaConfig{std::nullopt, alignment}, options);
      if (as_json) {
        nlohmann::ordered_json j;
        j["default_order_peak"] = r.default_order_peak;
        j["optimal_order_peak"] = r.optimal_order_peak;
        j["static_peak"] = r.static_peak;
        j["dynamic_peak_default"] = r.dynamic_peak_default;
        j["dynamic_peak_optimal"] = r.dynamic_peak_optimal;
        j["moved_bytes_default"] = r.moved_bytes_default;
        j["moved_bytes_optimal"] = r.moved_bytes_optimal;
        j["flash_bytes"] = r.flash_bytes;
        j["savings_bytes"] = r.savings_bytes;
        j["savings_percent"] = r.savings_percent;
        j["overhead_bytes"] = r.overhead_bytes;
        j["optimal_schedule"] = nlohmann::ordered_json::array();
        for (OperatorId id : r.optimal_schedule)
          j["optimal_schedule"].push_back(graph.label(id));
        out << j.dump(2) << '\n';
      } else {
        const bool excl = !options.include_overhead && !options.count_flash_as_ram;
        auto row = [&](const std::string &label, const std::string &value) {
          out << "  " << std::left << std::setw(27) << label + ":" << value << '\n';
        };
        auto bytes = [](std::uint64_t b) { return std::to_string(b) + " B"; };
        out << "Peak memory usage" << (excl ? " (excl. overheads)" : "") << '\n';
        row("default order", bytes(r.default_order_peak));
        row("optimal order", bytes(r.optimal_order_peak));
        row("savings", bytes(r.savings_bytes) + " (" + percent(r.savings_percent) + ")");
        row("static alloc.", bytes(r.static_peak));
        row("dynamic alloc. (default)",
            bytes(r.dynamic_peak_default) + ", " + bytes(r.moved_bytes_default) + " moved");
        row("dynamic alloc. (optimal)",
            bytes(r.dynamic_peak_optimal) + ", " + bytes(r.moved_bytes_optimal) + " moved");
        row("flash (model size)", bytes(r.flash_bytes));
        row("bookkeeping overhead", bytes(r.overhead_bytes));
        row("optimal schedule", schedule_string(graph, r.optimal_schedule));
      }
      return kExitOk;
    }
  } catch (const UsageError &e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error &e) {
    err << "error: " << e.what() << '\n';
    return kExitDomainError;
  }
  return kExitUsage;
}

} // namespace opsched
