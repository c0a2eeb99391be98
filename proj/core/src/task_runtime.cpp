#include "qtinv/task_runtime.hpp"

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <random>
#include <thread>

namespace qtinv::rt {

namespace detail {

struct Waiter {
  virtual ~Waiter() = default;
  virtual void on_ready(RuntimeImpl& rt, int worker) = 0;
};

struct Slot {
  explicit Slot(std::uint64_t slot_id) : id(slot_id) {}

  const std::uint64_t id;
  std::mutex mu;
  std::atomic<bool> ready{false};
  // Written once, before `ready` is released.
  ChunkPtr payload;
  VertexId producer = 0;
  std::uint32_t depth = 0;
  double weighted_depth = 0.0;
  std::uint64_t epoch = 0;
  std::vector<std::shared_ptr<Waiter>> waiters;
};

struct TaskRecord final : Waiter, std::enable_shared_from_this<TaskRecord> {
  VertexId vertex = 0;
  std::string_view name;
  VertexId parent = 0;
  std::uint32_t spawn_depth = 0;
  double spawn_weighted_depth = 0.0;
  std::vector<ChunkId> inputs;
  TaskBody body;
  std::shared_ptr<Slot> output;
  std::atomic<int> pending{0};

  void on_ready(RuntimeImpl& rt, int worker) override;
};

using TaskPtr = std::shared_ptr<TaskRecord>;

struct ForwardWaiter final : Waiter {
  std::shared_ptr<Slot> target;
  std::shared_ptr<Slot> source;
  VertexId task_vertex = 0;
  std::uint32_t task_depth = 0;
  double task_weighted_depth = 0.0;

  void on_ready(RuntimeImpl& rt, int worker) override;
};

struct JoinWaiter final : Waiter {
  std::shared_ptr<Slot> target;
  std::vector<ChunkId> parts;
  JoinFn make;
  std::atomic<int> pending{0};

  void on_ready(RuntimeImpl& rt, int worker) override;
};

struct WorkerState {
  std::mutex mu;
  std::deque<TaskPtr> queue;
  std::mt19937_64 rng;
  std::uint64_t tasks = 0;
  std::uint64_t bytes = 0;
  std::uint64_t steals = 0;
  std::uint32_t max_depth = 0;
  double max_weighted_depth = 0.0;
  std::vector<TraceRecord> trace;
};

struct RuntimeImpl {
  explicit RuntimeImpl(const RuntimeOptions& opts) : options(opts) {}

  RuntimeOptions options;
  std::atomic<std::uint64_t> next_slot{1};
  std::atomic<VertexId> next_vertex{1};
  std::uint64_t epoch = 1;

  std::mutex inject_mu;
  std::vector<TaskPtr> injected;

  std::vector<std::unique_ptr<WorkerState>> workers;
  std::atomic<std::int64_t> outstanding{0};
  std::atomic<std::int64_t> queued{0};
  std::atomic<bool> failed{false};
  std::mutex idle_mu;
  std::condition_variable idle_cv;

  std::mutex failure_mu;
  std::exception_ptr failure;
  std::string failure_task;
  VertexId failure_vertex = 0;

  Trace last_trace;
  std::chrono::steady_clock::time_point run_start;

  std::shared_ptr<Slot> new_slot() { return std::make_shared<Slot>(next_slot.fetch_add(1)); }

  bool tracing() const { return options.record_trace; }

  // Depth of a ready slot as seen by the current execute() call.
  std::uint32_t depth_of(const Slot& s) const { return s.epoch == epoch ? s.depth : 0; }
  double weighted_depth_of(const Slot& s) const { return s.epoch == epoch ? s.weighted_depth : 0.0; }
  VertexId producer_of(const Slot& s) const { return s.epoch == epoch ? s.producer : 0; }

  void claim(const ChunkPtr& payload, int worker) {
    if (!payload) return;
    int expected = -1;
    payload->producer_worker_.compare_exchange_strong(expected, std::max(worker, 0),
                                                      std::memory_order_acq_rel);
  }

  void resolve(const std::shared_ptr<Slot>& slot, ChunkPtr payload, VertexId producer,
               std::uint32_t depth, double weighted_depth, int worker) {
    std::vector<std::shared_ptr<Waiter>> waiters;
    {
      std::lock_guard lock(slot->mu);
      slot->payload = std::move(payload);
      slot->producer = producer;
      slot->depth = depth;
      slot->weighted_depth = weighted_depth;
      slot->epoch = epoch;
      slot->ready.store(true, std::memory_order_release);
      waiters.swap(slot->waiters);
    }
    for (auto& w : waiters) w->on_ready(*this, worker);
  }

  // Registers `w` on `slot`; false when the slot is already ready.
  static bool subscribe(Slot& slot, std::shared_ptr<Waiter> w) {
    if (slot.ready.load(std::memory_order_acquire)) return false;
    std::lock_guard lock(slot.mu);
    if (slot.ready.load(std::memory_order_acquire)) return false;
    slot.waiters.push_back(std::move(w));
    return true;
  }

  void enqueue(TaskPtr task, int worker) {
    if (worker < 0 || workers.empty()) {
      std::lock_guard lock(inject_mu);
      injected.push_back(std::move(task));
      return;
    }
    auto& ws = *workers[static_cast<std::size_t>(worker)];
    {
      std::lock_guard lock(ws.mu);
      ws.queue.push_back(std::move(task));
    }
    queued.fetch_add(1, std::memory_order_release);
    idle_cv.notify_one();
  }

  ChunkId register_chunk(ChunkPtr payload, int worker, VertexId producer, std::uint32_t depth,
                         double weighted_depth) {
    claim(payload, worker);
    auto slot = new_slot();
    slot->payload = std::move(payload);
    slot->producer = producer;
    slot->depth = depth;
    slot->weighted_depth = weighted_depth;
    slot->epoch = epoch;
    slot->ready.store(true, std::memory_order_release);
    return ChunkId(std::move(slot));
  }

  ChunkId register_task(std::string_view name, std::vector<ChunkId> inputs, TaskBody body, int worker,
                        VertexId parent, std::uint32_t spawn_depth, double spawn_weighted_depth) {
    auto task = std::make_shared<TaskRecord>();
    task->output = new_slot();
    for (const ChunkId& in : inputs) {
      if (in.value() >= task->output->id) {
        throw CyclicDependency("task '" + std::string(name) + "' depends on chunk " +
                               std::to_string(in.value()) + " registered after it");
      }
    }
    task->vertex = next_vertex.fetch_add(1);
    task->name = name;
    task->parent = parent;
    task->spawn_depth = spawn_depth;
    task->spawn_weighted_depth = spawn_weighted_depth;
    task->inputs = std::move(inputs);
    task->body = std::move(body);
    ChunkId out(task->output);

    outstanding.fetch_add(1, std::memory_order_acq_rel);
    task->pending.store(static_cast<int>(task->inputs.size()) + 1, std::memory_order_relaxed);
    int ready_now = 1;  // the guard
    for (const ChunkId& in : task->inputs) {
      if (!in.slot_ || !subscribe(*in.slot_, task)) ++ready_now;
    }
    if (task->pending.fetch_sub(ready_now, std::memory_order_acq_rel) == ready_now) {
      enqueue(task, worker);
    }
    return out;
  }

  ChunkId join(std::vector<ChunkId> parts, JoinFn make, int worker) {
    auto jw = std::make_shared<JoinWaiter>();
    jw->target = new_slot();
    jw->parts = std::move(parts);
    jw->make = std::move(make);
    ChunkId out(jw->target);
    jw->pending.store(static_cast<int>(jw->parts.size()) + 1, std::memory_order_relaxed);
    int ready_now = 1;
    for (const ChunkId& p : jw->parts) {
      if (!p.slot_ || !subscribe(*p.slot_, jw)) ++ready_now;
    }
    if (jw->pending.fetch_sub(ready_now, std::memory_order_acq_rel) == ready_now) {
      finish_join(*jw, worker);
    }
    return out;
  }

  void finish_join(JoinWaiter& jw, int worker) {
    std::vector<ChunkId> resolved;
    resolved.reserve(jw.parts.size());
    std::uint32_t depth = 0;
    double wdepth = 0.0;
    std::vector<VertexId> deps;
    for (const ChunkId& p : jw.parts) {
      if (!p.slot_) {
        resolved.emplace_back();
        continue;
      }
      const Slot& s = *p.slot_;
      depth = std::max(depth, depth_of(s));
      wdepth = std::max(wdepth, weighted_depth_of(s));
      if (tracing() && producer_of(s) != 0) deps.push_back(producer_of(s));
      if (s.payload) resolved.push_back(p);
      else resolved.emplace_back();
    }
    ChunkPtr payload = jw.make(resolved);
    claim(payload, worker);
    VertexId vertex = 0;
    if (tracing() && !deps.empty()) {
      vertex = next_vertex.fetch_add(1);
      record_join(vertex, "join", std::move(deps), depth, worker);
    }
    jw.parts.clear();
    jw.make = nullptr;
    resolve(jw.target, std::move(payload), vertex, depth, wdepth, worker);
  }

  void forward(const std::shared_ptr<Slot>& target, const ChunkId& source, VertexId task_vertex,
               std::uint32_t task_depth, double task_wdepth, int worker) {
    if (!source.slot_) {
      resolve(target, nullptr, task_vertex, task_depth, task_wdepth, worker);
      return;
    }
    auto fw = std::make_shared<ForwardWaiter>();
    fw->target = target;
    fw->source = source.slot_;
    fw->task_vertex = task_vertex;
    fw->task_depth = task_depth;
    fw->task_weighted_depth = task_wdepth;
    if (!subscribe(*source.slot_, fw)) fw->on_ready(*this, worker);
  }

  void finish_forward(ForwardWaiter& fw, int worker) {
    const Slot& s = *fw.source;
    const std::uint32_t depth = std::max(fw.task_depth, depth_of(s));
    const double wdepth = std::max(fw.task_weighted_depth, weighted_depth_of(s));
    VertexId producer = fw.task_vertex;
    const VertexId src_producer = producer_of(s);
    if (tracing() && src_producer != 0 && src_producer != fw.task_vertex) {
      // The output needs both the forwarding task and the chunk it points at.
      producer = next_vertex.fetch_add(1);
      record_join(producer, "forward", {fw.task_vertex, src_producer}, depth, worker);
    }
    ChunkPtr payload = s.payload;
    fw.source.reset();
    resolve(fw.target, std::move(payload), producer, depth, wdepth, worker);
  }

  void record_join(VertexId vertex, const char* name, std::vector<VertexId> deps, std::uint32_t depth,
                   int worker) {
    TraceRecord rec;
    rec.id = vertex;
    rec.kind = TraceRecord::Kind::join;
    rec.name = name;
    rec.deps = std::move(deps);
    rec.depth = depth;
    rec.worker = worker;
    if (worker >= 0 && !workers.empty()) {
      workers[static_cast<std::size_t>(worker)]->trace.push_back(std::move(rec));
    } else {
      std::lock_guard lock(inject_mu);
      pre_execute_trace.push_back(std::move(rec));
    }
  }

  std::vector<TraceRecord> pre_execute_trace;

  TaskPtr pop_local(int w) {
    auto& ws = *workers[static_cast<std::size_t>(w)];
    std::lock_guard lock(ws.mu);
    if (ws.queue.empty()) return nullptr;
    TaskPtr t = std::move(ws.queue.back());
    ws.queue.pop_back();
    queued.fetch_sub(1, std::memory_order_acq_rel);
    return t;
  }

  TaskPtr steal(int w) {
    const int n = static_cast<int>(workers.size());
    if (n <= 1) return nullptr;
    auto& self = *workers[static_cast<std::size_t>(w)];
    std::uniform_int_distribution<int> pick(0, n - 2);
    const int start = pick(self.rng);
    for (int i = 0; i < n - 1; ++i) {
      int victim = (start + i) % (n - 1);
      if (victim >= w) ++victim;
      auto& vs = *workers[static_cast<std::size_t>(victim)];
      std::lock_guard lock(vs.mu);
      if (vs.queue.empty()) continue;
      TaskPtr t = std::move(vs.queue.front());
      vs.queue.pop_front();
      queued.fetch_sub(1, std::memory_order_acq_rel);
      ++self.steals;
      return t;
    }
    return nullptr;
  }

  void run_task(const TaskPtr& task, int w) {
    auto& ws = *workers[static_cast<std::size_t>(w)];
    std::uint32_t depth = task->spawn_depth;
    double wdepth = task->spawn_weighted_depth;
    std::uint64_t fetched = 0;
    std::vector<VertexId> deps;
    if (tracing() && task->parent != 0) deps.push_back(task->parent);
    const std::uint64_t bit = std::uint64_t{1} << w;
    for (const ChunkId& in : task->inputs) {
      if (!in.slot_) continue;
      const Slot& s = *in.slot_;
      depth = std::max(depth, depth_of(s));
      wdepth = std::max(wdepth, weighted_depth_of(s));
      if (tracing() && producer_of(s) != 0) deps.push_back(producer_of(s));
      if (s.payload && s.payload->producer_worker() != w) {
        const std::uint64_t before = s.payload->fetched_by_.fetch_or(bit, std::memory_order_acq_rel);
        if ((before & bit) == 0) fetched += s.payload->size_bytes();
      }
    }
    depth += 1;

    const auto t0 = std::chrono::steady_clock::now();
    TaskContext ctx(*this, w, depth, wdepth, task->vertex, task->inputs);
    TaskResult result = TaskResult::null();
    try {
      result = task->body(ctx);
    } catch (...) {
      fail(task->name, task->vertex, std::current_exception());
      return;
    }
    const auto t1 = std::chrono::steady_clock::now();
    const auto ns = std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count();
    const double finish = wdepth + static_cast<double>(ns) * 1e-9;

    ++ws.tasks;
    ws.bytes += fetched;
    ws.max_depth = std::max(ws.max_depth, depth);
    ws.max_weighted_depth = std::max(ws.max_weighted_depth, finish);
    if (tracing()) {
      TraceRecord rec;
      rec.id = task->vertex;
      rec.kind = TraceRecord::Kind::task;
      rec.name = std::string(task->name);
      rec.parent = task->parent;
      rec.deps = std::move(deps);
      rec.depth = depth;
      rec.worker = w;
      rec.start_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(t0 - run_start).count();
      rec.duration_ns = ns;
      rec.bytes_fetched = fetched;
      ws.trace.push_back(std::move(rec));
    }

    // Release inputs and captured state before resolving.
    task->inputs.clear();
    task->body = nullptr;

    try {
      if (result.is_forward()) {
        forward(task->output, result.target(), task->vertex, depth, finish, w);
      } else {
        claim(result.payload(), w);
        resolve(task->output, result.payload(), task->vertex, depth, finish, w);
      }
    } catch (...) {
      fail(task->name, task->vertex, std::current_exception());
      return;
    }

    if (outstanding.fetch_sub(1, std::memory_order_acq_rel) == 1) {
      std::lock_guard lock(idle_mu);
      idle_cv.notify_all();
    }
  }

  void fail(std::string_view name, VertexId vertex, std::exception_ptr e) {
    {
      std::lock_guard lock(failure_mu);
      if (!failure) {
        failure = std::move(e);
        failure_task = std::string(name);
        failure_vertex = vertex;
      }
    }
    failed.store(true, std::memory_order_release);
    std::lock_guard lock(idle_mu);
    idle_cv.notify_all();
  }

  void worker_loop(int w) {
    using namespace std::chrono_literals;
    while (!failed.load(std::memory_order_acquire)) {
      TaskPtr t = pop_local(w);
      if (!t) t = steal(w);
      if (t) {
        run_task(t, w);
        continue;
      }
      if (outstanding.load(std::memory_order_acquire) == 0) break;
      std::unique_lock lock(idle_mu);
      idle_cv.wait_for(lock, 200us, [&] {
        return queued.load(std::memory_order_acquire) > 0 ||
               outstanding.load(std::memory_order_acquire) == 0 ||
               failed.load(std::memory_order_acquire);
      });
    }
  }
};

void TaskRecord::on_ready(RuntimeImpl& rt, int worker) {
  if (pending.fetch_sub(1, std::memory_order_acq_rel) == 1) rt.enqueue(shared_from_this(), worker);
}

void ForwardWaiter::on_ready(RuntimeImpl& rt, int worker) { rt.finish_forward(*this, worker); }

void JoinWaiter::on_ready(RuntimeImpl& rt, int worker) {
  if (pending.fetch_sub(1, std::memory_order_acq_rel) == 1) rt.finish_join(*this, worker);
}

}  // namespace detail

// ---------------------------------------------------------------------------

std::uint64_t ChunkId::value() const noexcept { return slot_ ? slot_->id : 0; }

bool ChunkId::ready() const noexcept {
  return !slot_ || slot_->ready.load(std::memory_order_acquire);
}

bool ChunkId::is_null() const {
  if (!slot_) return true;
  if (!ready()) throw std::logic_error("chunk " + std::to_string(slot_->id) + " is not ready");
  return slot_->payload == nullptr;
}

bool TaskContext::input_is_null(std::size_t i) const { return input_id(i).is_null(); }

const ChunkData* TaskContext::input_data(std::size_t i) const {
  const ChunkId& id = input_id(i);
  return id.slot_ ? id.slot_->payload.get() : nullptr;
}

ChunkPtr TaskContext::input_ptr(std::size_t i) const {
  const ChunkId& id = input_id(i);
  return id.slot_ ? id.slot_->payload : nullptr;
}

ChunkId TaskContext::register_chunk(ChunkPtr payload) {
  return rt_.register_chunk(std::move(payload), worker_, vertex_, depth_, weighted_depth_);
}

ChunkId TaskContext::register_task(std::string_view name, std::vector<ChunkId> inputs, TaskBody body) {
  return rt_.register_task(name, std::move(inputs), std::move(body), worker_, vertex_, depth_,
                           weighted_depth_);
}

ChunkId TaskContext::join(std::vector<ChunkId> parts, JoinFn make) {
  return rt_.join(std::move(parts), std::move(make), worker_);
}

TaskFailure::TaskFailure(std::string task, VertexId vertex, std::exception_ptr cause)
    : std::runtime_error([&] {
        std::string msg = "task '" + task + "' (vertex " + std::to_string(vertex) + ") failed";
        try {
          if (cause) std::rethrow_exception(cause);
        } catch (const std::exception& e) {
          msg += ": ";
          msg += e.what();
        } catch (...) {
          msg += ": unknown exception";
        }
        return msg;
      }()),
      task_(std::move(task)),
      vertex_(vertex),
      cause_(std::move(cause)) {}

Runtime::Runtime(RuntimeOptions options)
    : options_(options), impl_(std::make_unique<detail::RuntimeImpl>(options)) {
  set_workers(options.workers);
}

Runtime::~Runtime() = default;

void Runtime::set_workers(int workers) {
  if (workers < 1 || workers > kMaxWorkers) {
    throw std::invalid_argument("worker count must be in [1, " + std::to_string(kMaxWorkers) + "]");
  }
  options_.workers = workers;
}

ChunkId Runtime::register_chunk(ChunkPtr payload) {
  return impl_->register_chunk(std::move(payload), -1, 0, 0, 0.0);
}

ChunkId Runtime::register_task(std::string_view name, std::vector<ChunkId> inputs, TaskBody body) {
  return impl_->register_task(name, std::move(inputs), std::move(body), -1, 0, 0, 0.0);
}

ChunkId Runtime::join(std::vector<ChunkId> parts, JoinFn make) {
  return impl_->join(std::move(parts), std::move(make), -1);
}

ChunkPtr Runtime::payload(const ChunkId& id) const {
  if (!id.slot_) return nullptr;
  if (!id.ready()) throw std::logic_error("chunk " + std::to_string(id.value()) + " is not ready");
  return id.slot_->payload;
}

const Trace& Runtime::last_trace() const noexcept { return impl_->last_trace; }

ExecuteResult Runtime::execute(const ChunkId& root, int workers) {
  if (workers < 1 || workers > kMaxWorkers) {
    throw std::invalid_argument("worker count must be in [1, " + std::to_string(kMaxWorkers) + "]");
  }
  auto& rt = *impl_;
  rt.options.record_trace = options_.record_trace;
  rt.failed.store(false);
  rt.failure = nullptr;
  rt.last_trace.records.clear();

  rt.workers.clear();
  for (int w = 0; w < workers; ++w) {
    auto ws = std::make_unique<detail::WorkerState>();
    ws->rng.seed(options_.seed + static_cast<std::uint64_t>(w) * 0x9e3779b97f4a7c15ULL);
    rt.workers.push_back(std::move(ws));
  }
  {
    std::lock_guard lock(rt.inject_mu);
    auto& q = rt.workers.front()->queue;
    for (auto& t : rt.injected) q.push_back(std::move(t));
    rt.queued.store(static_cast<std::int64_t>(q.size()));
    rt.injected.clear();
    for (auto& rec : rt.pre_execute_trace) rt.workers.front()->trace.push_back(std::move(rec));
    rt.pre_execute_trace.clear();
  }

  const auto t0 = std::chrono::steady_clock::now();
  rt.run_start = t0;
  if (rt.outstanding.load() > 0) {
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) threads.emplace_back([&rt, w] { rt.worker_loop(w); });
    for (auto& t : threads) t.join();
  }
  const auto t1 = std::chrono::steady_clock::now();

  RunStats stats;
  stats.workers = workers;
  stats.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
  for (auto& ws : rt.workers) {
    stats.tasks_executed += ws->tasks;
    stats.bytes_moved += ws->bytes;
    stats.steals += ws->steals;
    stats.critical_path_len = std::max<std::uint64_t>(stats.critical_path_len, ws->max_depth);
    stats.weighted_critical_path_seconds =
        std::max(stats.weighted_critical_path_seconds, ws->max_weighted_depth);
    stats.per_worker_bytes.push_back(ws->bytes);
    stats.per_worker_tasks.push_back(ws->tasks);
    for (auto& rec : ws->trace) rt.last_trace.records.push_back(std::move(rec));
  }
  std::sort(rt.last_trace.records.begin(), rt.last_trace.records.end(),
            [](const TraceRecord& a, const TraceRecord& b) { return a.id < b.id; });
  rt.workers.clear();
  ++rt.epoch;

  if (rt.failed.load()) {
    rt.outstanding.store(0);
    rt.queued.store(0);
    throw TaskFailure(rt.failure_task, rt.failure_vertex, rt.failure);
  }
  if (!root.ready()) {
    throw std::logic_error("execute finished but chunk " + std::to_string(root.value()) +
                           " was never produced");
  }
  return ExecuteResult{root, std::move(stats)};
}

}  // namespace qtinv::rt
