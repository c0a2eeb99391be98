#include "qtinv/trace.hpp"

#include <algorithm>
#include <ostream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

namespace qtinv::rt {

namespace {

// Longest path ending at each vertex, by Kahn-style ordering over the
// recorded dependencies. Vertices not present in the trace (producers from
// earlier runs, the main program) contribute nothing.
template <class Weight>
double longest_path(const Trace& trace, Weight weight) {
  const auto& recs = trace.records;
  std::unordered_map<VertexId, std::size_t> index;
  index.reserve(recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) index.emplace(recs[i].id, i);

  std::vector<std::vector<std::size_t>> children(recs.size());
  std::vector<std::size_t> indegree(recs.size(), 0);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    for (VertexId d : recs[i].deps) {
      auto it = index.find(d);
      if (it == index.end()) continue;
      children[it->second].push_back(i);
      ++indegree[i];
    }
  }

  std::vector<double> best(recs.size(), 0.0);
  std::vector<std::size_t> ready;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (indegree[i] == 0) ready.push_back(i);
  }
  std::size_t visited = 0;
  double longest = 0.0;
  while (!ready.empty()) {
    const std::size_t v = ready.back();
    ready.pop_back();
    ++visited;
    const double end = best[v] + weight(recs[v]);
    longest = std::max(longest, end);
    for (std::size_t c : children[v]) {
      best[c] = std::max(best[c], end);
      if (--indegree[c] == 0) ready.push_back(c);
    }
  }
  if (visited != recs.size()) throw std::logic_error("trace contains a dependency cycle");
  return longest;
}

}  // namespace

std::uint64_t trace_longest_path(const Trace& trace) {
  const double len = longest_path(trace, [](const TraceRecord& r) {
    return r.kind == TraceRecord::Kind::task ? 1.0 : 0.0;
  });
  return static_cast<std::uint64_t>(len);
}

double trace_longest_path_seconds(const Trace& trace) {
  return longest_path(trace, [](const TraceRecord& r) {
    return static_cast<double>(r.duration_ns) * 1e-9;
  });
}

void write_trace_jsonl(const Trace& trace, std::ostream& out) {
  for (const auto& r : trace.records) {
    nlohmann::json j = {
        {"id", r.id},
        {"kind", r.kind == TraceRecord::Kind::task ? "task" : "join"},
        {"name", r.name},
        {"parent", r.parent},
        {"deps", r.deps},
        {"depth", r.depth},
        {"worker", r.worker},
        {"start_ns", r.start_ns},
        {"duration_ns", r.duration_ns},
        {"bytes_fetched", r.bytes_fetched},
    };
    out << j.dump() << '\n';
  }
}

}  // namespace qtinv::rt
