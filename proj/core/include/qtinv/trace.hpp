#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace qtinv::rt {

/// Trace vertex id; 0 stands for the main program (no producer).
using VertexId = std::uint64_t;

struct TraceRecord {
  enum class Kind { task, join };

  VertexId id = 0;
  Kind kind = Kind::task;
  std::string name;
  /// Task that registered this one (0 for the main program).
  VertexId parent = 0;
  /// Producers of the inputs, plus the parent for tasks.
  std::vector<VertexId> deps;
  std::uint32_t depth = 0;
  int worker = -1;
  /// Body start, relative to the start of execute().
  std::int64_t start_ns = 0;
  std::int64_t duration_ns = 0;
  std::uint64_t bytes_fetched = 0;
};

struct Trace {
  std::vector<TraceRecord> records;
};

/// Longest dependency chain in the trace, counting task vertices (joins weigh 0).
/// Throws std::logic_error if the recorded dependencies contain a cycle.
std::uint64_t trace_longest_path(const Trace& trace);

/// Same chain computation weighted by task durations.
double trace_longest_path_seconds(const Trace& trace);

/// One JSON object per line.
void write_trace_jsonl(const Trace& trace, std::ostream& out);

}  // namespace qtinv::rt
