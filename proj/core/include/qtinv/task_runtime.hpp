#pragma once

// Chunks-and-tasks style runtime.
//
// Data lives in immutable chunks addressed by ChunkId. Work is expressed as
// tasks: a task names its input chunks, runs once all of them are available,
// and produces exactly one output chunk. A task body never waits for anything;
// it may register further tasks and hand their (still pending) output back as
// its own result. The main program drives everything through execute(), which
// blocks until every registered task has run.
//
// Each executed task gets a depth: one more than the largest depth among its
// inputs' producers and the task that registered it. The largest depth seen in
// an execute() call is the critical path length of that run, counted in tasks.

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "qtinv/trace.hpp"

namespace qtinv::rt {

class Runtime;
class TaskContext;

namespace detail {
struct Slot;
struct RuntimeImpl;
}  // namespace detail

/// Base class of every chunk payload.
class ChunkData {
 public:
  virtual ~ChunkData() = default;
  /// Bytes that move when a worker other than the producer reads the chunk.
  virtual std::size_t size_bytes() const = 0;

  /// Worker that registered the payload (main program counts as worker 0).
  int producer_worker() const noexcept { return producer_worker_.load(std::memory_order_acquire); }

 private:
  friend struct detail::RuntimeImpl;
  mutable std::atomic<int> producer_worker_{-1};
  mutable std::atomic<std::uint64_t> fetched_by_{0};
};

using ChunkPtr = std::shared_ptr<const ChunkData>;

struct ScalarChunk final : ChunkData {
  explicit ScalarChunk(double v) : value(v) {}
  std::size_t size_bytes() const override { return sizeof(double); }
  double value;
};

/// Handle to a chunk, possibly one that a pending task has not produced yet.
///
/// A default constructed ChunkId is the null chunk (an all-zero matrix, an
/// absent value). Copies share the same chunk; the chunk is released when the
/// last handle goes away.
class ChunkId {
 public:
  ChunkId() = default;

  /// Unique numeric id, 0 for the null handle. Never reused.
  std::uint64_t value() const noexcept;
  bool ready() const noexcept;
  /// True for the null handle or a ready chunk that resolved to null.
  /// Must only be asked once ready() holds.
  bool is_null() const;

  friend bool operator==(const ChunkId& a, const ChunkId& b) noexcept {
    return a.value() == b.value();
  }

 private:
  friend struct detail::RuntimeImpl;
  friend class Runtime;
  friend class TaskContext;
  explicit ChunkId(std::shared_ptr<detail::Slot> slot) : slot_(std::move(slot)) {}
  std::shared_ptr<detail::Slot> slot_;
};

/// What a task body hands back: a fresh payload, null, or another chunk whose
/// contents become this task's output once available.
class TaskResult {
 public:
  static TaskResult chunk(ChunkPtr payload) { return TaskResult(std::move(payload), {}, false); }
  static TaskResult null() { return TaskResult(nullptr, {}, false); }
  static TaskResult forward(ChunkId id) { return TaskResult(nullptr, std::move(id), true); }

  template <class T, class... Args>
  static TaskResult make(Args&&... args) {
    return chunk(std::make_shared<const T>(std::forward<Args>(args)...));
  }

  bool is_forward() const noexcept { return forward_; }
  const ChunkPtr& payload() const noexcept { return payload_; }
  const ChunkId& target() const noexcept { return target_; }

 private:
  TaskResult(ChunkPtr p, ChunkId t, bool fwd)
      : payload_(std::move(p)), target_(std::move(t)), forward_(fwd) {}
  ChunkPtr payload_;
  ChunkId target_;
  bool forward_;
};

using TaskBody = std::function<TaskResult(TaskContext&)>;
/// Builds a payload from resolved parts (null parts are default ChunkIds).
/// Returning nullptr makes the join resolve to null.
using JoinFn = std::function<ChunkPtr(std::span<const ChunkId>)>;

/// Where new chunks and tasks get registered: the main program or a running task.
class Scope {
 public:
  virtual ~Scope() = default;

  virtual ChunkId register_chunk(ChunkPtr payload) = 0;
  /// `name` must have static storage duration (it is kept for tracing).
  virtual ChunkId register_task(std::string_view name, std::vector<ChunkId> inputs,
                                TaskBody body) = 0;
  /// A chunk assembled from `parts` once all of them are available. Joins are
  /// bookkeeping, not tasks: they add nothing to the critical path.
  virtual ChunkId join(std::vector<ChunkId> parts, JoinFn make) = 0;

  template <class T, class... Args>
  ChunkId make_chunk(Args&&... args) {
    return register_chunk(std::make_shared<const T>(std::forward<Args>(args)...));
  }
};

/// View a task body gets of its inputs and of the runtime.
class TaskContext final : public Scope {
 public:
  std::size_t input_count() const noexcept { return inputs_.size(); }
  const ChunkId& input_id(std::size_t i) const { return inputs_.at(i); }
  bool input_is_null(std::size_t i) const;
  const ChunkData* input_data(std::size_t i) const;
  ChunkPtr input_ptr(std::size_t i) const;

  /// Typed access; throws std::logic_error on a null input or a type mismatch.
  template <class T>
  const T& input(std::size_t i) const {
    const ChunkData* d = input_data(i);
    if (d == nullptr) throw std::logic_error("task input " + std::to_string(i) + " is null");
    const T* t = dynamic_cast<const T*>(d);
    if (t == nullptr) throw std::logic_error("task input " + std::to_string(i) + " has unexpected type");
    return *t;
  }

  int worker() const noexcept { return worker_; }
  std::uint32_t depth() const noexcept { return depth_; }
  VertexId vertex() const noexcept { return vertex_; }

  ChunkId register_chunk(ChunkPtr payload) override;
  ChunkId register_task(std::string_view name, std::vector<ChunkId> inputs, TaskBody body) override;
  ChunkId join(std::vector<ChunkId> parts, JoinFn make) override;

 private:
  friend struct detail::RuntimeImpl;
  TaskContext(detail::RuntimeImpl& rt, int worker, std::uint32_t depth, double weighted_depth,
              VertexId vertex, const std::vector<ChunkId>& inputs)
      : rt_(rt), worker_(worker), depth_(depth), weighted_depth_(weighted_depth), vertex_(vertex),
        inputs_(inputs) {}

  detail::RuntimeImpl& rt_;
  int worker_;
  std::uint32_t depth_;
  double weighted_depth_;
  VertexId vertex_;
  const std::vector<ChunkId>& inputs_;
};

struct RunStats {
  std::uint64_t tasks_executed = 0;
  /// Longest dependency chain, counted in tasks.
  std::uint64_t critical_path_len = 0;
  /// Longest dependency chain weighted by measured task durations.
  double weighted_critical_path_seconds = 0.0;
  /// Payload bytes fetched by a worker that did not produce them.
  std::uint64_t bytes_moved = 0;
  std::vector<std::uint64_t> per_worker_bytes;
  std::vector<std::uint64_t> per_worker_tasks;
  std::uint64_t steals = 0;
  double wall_seconds = 0.0;
  int workers = 0;
};

struct ExecuteResult {
  ChunkId output;
  RunStats stats;
};

/// A task body threw. Carries the task's name and trace vertex.
class TaskFailure : public std::runtime_error {
 public:
  TaskFailure(std::string task, VertexId vertex, std::exception_ptr cause);

  const std::string& task() const noexcept { return task_; }
  VertexId vertex() const noexcept { return vertex_; }
  std::exception_ptr cause() const noexcept { return cause_; }
  [[noreturn]] void rethrow_cause() const { std::rethrow_exception(cause_); }

 private:
  std::string task_;
  VertexId vertex_;
  std::exception_ptr cause_;
};

/// Raised when a task would depend on a chunk registered after it.
class CyclicDependency : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct RuntimeOptions {
  int workers = 1;
  bool record_trace = false;
  std::uint64_t seed = 0x5eed;
};

class Runtime final : public Scope {
 public:
  static constexpr int kMaxWorkers = 64;

  explicit Runtime(RuntimeOptions options = {});
  ~Runtime() override;
  Runtime(const Runtime&) = delete;
  Runtime& operator=(const Runtime&) = delete;

  ChunkId register_chunk(ChunkPtr payload) override;
  ChunkId register_task(std::string_view name, std::vector<ChunkId> inputs, TaskBody body) override;
  ChunkId join(std::vector<ChunkId> parts, JoinFn make) override;

  /// Runs every registered task on `workers` threads and returns once `root`
  /// and everything it depends on is done. Rethrows a failing task as TaskFailure.
  ExecuteResult execute(const ChunkId& root, int workers);
  ExecuteResult execute(const ChunkId& root) { return execute(root, options_.workers); }

  /// Payload of a ready chunk; nullptr for null. Throws std::logic_error if
  /// the chunk is still pending or holds another type.
  template <class T>
  std::shared_ptr<const T> get(const ChunkId& id) const {
    ChunkPtr p = payload(id);
    if (!p) return nullptr;
    auto t = std::dynamic_pointer_cast<const T>(p);
    if (!t) throw std::logic_error("chunk " + std::to_string(id.value()) + " has unexpected type");
    return t;
  }
  ChunkPtr payload(const ChunkId& id) const;

  int workers() const noexcept { return options_.workers; }
  void set_workers(int workers);
  bool recording_trace() const noexcept { return options_.record_trace; }
  void set_record_trace(bool on) { options_.record_trace = on; }
  /// Trace of the most recent execute() (empty unless tracing is on).
  const Trace& last_trace() const noexcept;

 private:
  RuntimeOptions options_;
  std::unique_ptr<detail::RuntimeImpl> impl_;
};

}  // namespace qtinv::rt
