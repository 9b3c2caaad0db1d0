// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

#include "opsched/graph.hpp"
#include "opsched/scheduler.hpp"

namespace opsched {

struct LoadOptions {
  /// Reject unknown JSON fields instead of ignoring them.
  bool strict = false;
  /// Receives the id densification mapping when set.
  std::ostream *verbose = nullptr;
};

/// Parses a version 1 graph document and returns the validated graph.
///
/// Tensor and operator ids may be sparse; they are densified in increasing
/// order and the original ids are kept as the graph's labels. The operator
/// array order becomes the default schedule.
Graph parse_graph(std::string_view json_text, const LoadOptions &options = {});

Graph load_graph(const std::filesystem::path &path, const LoadOptions &options = {});

/// Serializes `graph` with its operator array in `schedule` order.
std::string graph_to_json(const Graph &graph, const Schedule &schedule);

void save_graph_with_schedule(const Graph &graph, const Schedule &schedule,
                              const std::filesystem::path &path);

enum class TraceFormat { csv, svg };

void write_trace_csv(std::ostream &os, const Graph &graph, const MemoryTrace &trace);

/// Bar chart of bytes per step with the peak marked, 800x400 viewport.
void write_trace_svg(std::ostream &os, const Graph &graph, const MemoryTrace &trace);

void emit_trace(const Graph &graph, const MemoryTrace &trace, TraceFormat format,
                const std::filesystem::path &path);

/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path &path, std::string_view content);

} // namespace opsched
