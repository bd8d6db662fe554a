// Agents driven by timers or by blackboard triggers.
//
// An agent has an optional init hook and a body. Timed agents run the body
// every period; triggered agents run it once per delivered write to a key.
// Bodies of one agent never overlap. A body may call
// ctx.finish_after(d, fn): the agent stays busy for d and then runs fn, which
// models slow work (inference, speech) without blocking other agents.
// Writes arriving while a triggered agent is busy queue up in its mailbox,
// and with Delivery::kLatest only the newest survives.
//
// ThreadedHost gives every agent its own thread and real time.
// ManualHost runs every agent cooperatively on a VirtualClock, so a whole
// scenario is a deterministic function of its inputs.

#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stop_token>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "oneshot/blackboard.hpp"
#include "oneshot/clock.hpp"

namespace oneshot {

using LogSink = std::function<void(std::string_view)>;

inline LogSink& agent_log_sink() {
  static LogSink sink = [](std::string_view msg) { std::cerr << "[agent] " << msg << '\n'; };
  return sink;
}

class AgentContext {
 public:
  virtual ~AgentContext() = default;
  virtual TimePoint now() const = 0;
  // Keep the agent busy for `delay`, then run `then` on the agent's context.
  virtual void finish_after(Duration delay, std::function<void()> then) = 0;
};

struct AgentStats {
  std::atomic<std::uint64_t> runs{0};
  std::atomic<std::uint64_t> errors{0};
};

class AgentHandle {
 public:
  AgentHandle() = default;
  AgentHandle(std::function<void()> stopper, std::shared_ptr<AgentStats> stats)
      : state_(std::make_shared<State>(std::move(stopper))), stats_(std::move(stats)) {}

  // Idempotent; waits for an in-flight body unless called from the agent itself.
  void stop() {
    if (!state_) return;
    std::lock_guard lock(state_->mutex);
    state_->stopper();
  }

  std::uint64_t runs() const { return stats_ ? stats_->runs.load() : 0; }
  std::uint64_t errors() const { return stats_ ? stats_->errors.load() : 0; }

 private:
  struct State {
    explicit State(std::function<void()> s) : stopper(std::move(s)) {}
    std::function<void()> stopper;
    std::recursive_mutex mutex;
  };
  std::shared_ptr<State> state_;
  std::shared_ptr<AgentStats> stats_;
};

template <class Value>
class AgentHost {
 public:
  using Body = std::function<void(AgentContext&)>;
  using TriggerBody = std::function<void(AgentContext&, const Value&)>;

  virtual ~AgentHost() = default;
  virtual Space<Value>& space() = 0;
  virtual AgentHandle spawn_timed(Duration period, Body body, Body init = {}) = 0;
  virtual AgentHandle spawn_triggered(std::string key, TriggerBody body, Delivery delivery = Delivery::kLatest,
                                      Body init = {}) = 0;
  virtual void stop_all() = 0;
};

namespace detail {

template <class F>
void guarded(AgentStats& stats, std::string_view what, F&& f) {
  try {
    f();
    ++stats.runs;
  } catch (const std::exception& e) {
    ++stats.errors;
    agent_log_sink()(std::string(what) + " failed: " + e.what());
  } catch (...) {
    ++stats.errors;
    agent_log_sink()(std::string(what) + " failed with a non-standard exception");
  }
}

}  // namespace detail

template <class Value>
class ThreadedHost final : public AgentHost<Value> {
 public:
  explicit ThreadedHost(Space<Value>& space) : space_(space) {}
  ~ThreadedHost() override { stop_all(); }

  Space<Value>& space() override { return space_; }

  AgentHandle spawn_timed(Duration period, typename AgentHost<Value>::Body body,
                          typename AgentHost<Value>::Body init = {}) override {
    if (period.count() <= 0) throw UsageError("timer period must be positive");
    auto agent = std::make_shared<Agent>(space_);
    // The thread borrows the agent; the handle owns it and joins before release.
    agent->thread = std::jthread([agent = agent.get(), period, body = std::move(body),
                                  init = std::move(init)](std::stop_token stop) {
      if (init) detail::guarded(*agent->stats, "init", [&] { init(*agent); });
      auto next = std::chrono::steady_clock::now();
      while (!stop.stop_requested()) {
        detail::guarded(*agent->stats, "timed body", [&] { body(*agent); });
        agent->run_continuation(stop);
        next += period;
        const auto now = std::chrono::steady_clock::now();
        if (next < now) next = now;
        if (!agent->sleep_until(stop, next)) break;
      }
    });
    return track(agent);
  }

  AgentHandle spawn_triggered(std::string key, typename AgentHost<Value>::TriggerBody body,
                              Delivery delivery = Delivery::kLatest,
                              typename AgentHost<Value>::Body init = {}) override {
    auto agent = std::make_shared<Agent>(space_);
    // Subscribe before the thread starts so no write after spawn is missed.
    agent->subscription = space_.subscribe(key, {}, delivery);
    agent->thread = std::jthread([agent = agent.get(), body = std::move(body),
                                  init = std::move(init)](std::stop_token stop) {
      if (init) detail::guarded(*agent->stats, "init", [&] { init(*agent); });
      while (!stop.stop_requested()) {
        auto value = agent->subscription.mailbox().wait_pop(stop);
        if (!value) break;
        detail::guarded(*agent->stats, "triggered body", [&] { body(*agent, *value); });
        agent->run_continuation(stop);
      }
    });
    return track(agent);
  }

  void stop_all() override {
    std::vector<AgentHandle> handles;
    {
      std::lock_guard lock(mutex_);
      handles.swap(handles_);
    }
    for (auto& h : handles) h.stop();
  }

 private:
  struct Agent final : AgentContext {
    explicit Agent(Space<Value>& s) : space(s) {}

    TimePoint now() const override { return space.now(); }

    void finish_after(Duration delay, std::function<void()> then) override {
      continuation = {delay, std::move(then)};
    }

    void run_continuation(std::stop_token stop) {
      if (!continuation) return;
      auto [delay, then] = std::move(*continuation);
      continuation.reset();
      if (!sleep_until(stop, std::chrono::steady_clock::now() + delay)) return;
      if (then) detail::guarded(*stats, "continuation", then);
    }

    // False when interrupted by stop.
    bool sleep_until(std::stop_token stop, std::chrono::steady_clock::time_point when) {
      std::unique_lock lock(sleep_mutex);
      sleeper.wait_until(lock, stop, when, [] { return false; });
      return !stop.stop_requested();
    }

    Space<Value>& space;
    Subscription<Value> subscription;
    std::shared_ptr<AgentStats> stats = std::make_shared<AgentStats>();
    std::optional<std::pair<Duration, std::function<void()>>> continuation;
    std::mutex sleep_mutex;
    std::condition_variable_any sleeper;
    // Last member: destroyed (stopped and joined) before everything it uses.
    std::jthread thread;
  };

  AgentHandle track(const std::shared_ptr<Agent>& agent) {
    // The handle keeps the agent alive until it has been stopped and joined.
    AgentHandle handle(
        [agent]() mutable {
          agent->thread.request_stop();
          if (agent->thread.joinable() && agent->thread.get_id() != std::this_thread::get_id()) {
            agent->thread.join();
          }
        },
        agent->stats);
    std::lock_guard lock(mutex_);
    handles_.push_back(handle);
    return handle;
  }

  Space<Value>& space_;
  std::mutex mutex_;
  std::vector<AgentHandle> handles_;
};

// Cooperative runtime on virtual time. Not thread-safe: drive it from one thread.
template <class Value>
class ManualHost final : public AgentHost<Value> {
 public:
  ManualHost(Space<Value>& space, std::shared_ptr<VirtualClock> clock)
      : space_(space), clock_(std::move(clock)) {}

  Space<Value>& space() override { return space_; }
  TimePoint now() const { return clock_->now(); }

  AgentHandle spawn_timed(Duration period, typename AgentHost<Value>::Body body,
                          typename AgentHost<Value>::Body init = {}) override {
    if (period.count() <= 0) throw UsageError("timer period must be positive");
    auto agent = std::make_shared<Agent>(*this);
    agent->period = period;
    agent->next_fire = clock_->now();
    agent->timed_body = std::move(body);
    return add(agent, init);
  }

  AgentHandle spawn_triggered(std::string key, typename AgentHost<Value>::TriggerBody body,
                              Delivery delivery = Delivery::kLatest,
                              typename AgentHost<Value>::Body init = {}) override {
    auto agent = std::make_shared<Agent>(*this);
    agent->subscription = space_.subscribe(key, {}, delivery);
    agent->trigger_body = std::move(body);
    return add(agent, init);
  }

  void stop_all() override {
    for (auto& a : agents_) a->stopped = true;
  }

  // Runs everything that is due at the current instant until nothing is.
  void settle() {
    for (std::size_t round = 0;; ++round) {
      if (round > kMaxSettleRounds) throw Error("agents did not settle; feedback loop at a single instant");
      bool progressed = run_due_continuations();
      for (auto& a : agents_) {
        if (a->stopped || a->busy()) continue;
        if (a->trigger_body) {
          if (auto v = a->subscription.mailbox().try_pop()) {
            detail::guarded(*a->stats, "triggered body", [&] { a->trigger_body(*a, *v); });
            progressed = true;
          }
        }
      }
      if (!progressed) return;
    }
  }

  void run_until(TimePoint end) {
    settle();
    for (;;) {
      const auto next = next_event_time();
      if (!next || *next > end) break;
      step_to(*next);
    }
    step_to(end);
  }

  void run_for(Duration d) { run_until(clock_->now() + d); }

  // Advances to the next pending event, if any; returns false when none exists.
  bool run_next() {
    settle();
    const auto next = next_event_time();
    if (!next) return false;
    step_to(*next);
    return true;
  }

  // True when no agent is busy and no delivered write is waiting.
  bool idle() const {
    return std::none_of(agents_.begin(), agents_.end(), [](const auto& a) {
      return !a->stopped && (a->busy() || (a->trigger_body && a->subscription.pending() > 0));
    });
  }

  // Latest time at which some agent is still busy, if any.
  std::optional<TimePoint> busy_until() const {
    std::optional<TimePoint> latest;
    for (const auto& a : agents_) {
      if (!a->stopped && a->continuation && (!latest || a->continuation->when > *latest)) {
        latest = a->continuation->when;
      }
    }
    return latest;
  }

 private:
  static constexpr std::size_t kMaxSettleRounds = 100000;

  struct Pending {
    TimePoint when;
    std::uint64_t seq;
    std::function<void()> then;
  };

  struct Agent final : AgentContext {
    explicit Agent(ManualHost& h) : host(h) {}

    TimePoint now() const override { return host.clock_->now(); }

    void finish_after(Duration delay, std::function<void()> then) override {
      continuation = Pending{now() + delay, host.seq_++, std::move(then)};
    }

    bool busy() const { return continuation.has_value(); }

    ManualHost& host;
    bool stopped = false;
    Duration period{};
    TimePoint next_fire{};
    typename AgentHost<Value>::Body timed_body;
    typename AgentHost<Value>::TriggerBody trigger_body;
    Subscription<Value> subscription;
    std::optional<Pending> continuation;
    std::shared_ptr<AgentStats> stats = std::make_shared<AgentStats>();
  };

  AgentHandle add(const std::shared_ptr<Agent>& agent, const typename AgentHost<Value>::Body& init) {
    agents_.push_back(agent);
    if (init) detail::guarded(*agent->stats, "init", [&] { init(*agent); });
    std::weak_ptr<Agent> weak = agent;
    return AgentHandle(
        [weak] {
          if (auto a = weak.lock()) {
            a->stopped = true;
            a->continuation.reset();
          }
        },
        agent->stats);
  }

  void step_to(TimePoint t) {
    clock_->advance_to(t);
    run_due_continuations();
    fire_due_timers();
    settle();
  }

  bool run_due_continuations() {
    bool ran = false;
    for (;;) {
      Agent* due = nullptr;
      for (auto& a : agents_) {
        if (a->stopped || !a->continuation || a->continuation->when > clock_->now()) continue;
        if (!due || std::pair(a->continuation->when, a->continuation->seq) <
                        std::pair(due->continuation->when, due->continuation->seq)) {
          due = a.get();
        }
      }
      if (!due) return ran;
      auto then = std::move(due->continuation->then);
      due->continuation.reset();
      if (then) detail::guarded(*due->stats, "continuation", then);
      ran = true;
    }
  }

  void fire_due_timers() {
    const TimePoint t = clock_->now();
    for (auto& a : agents_) {
      if (a->stopped || !a->timed_body || a->next_fire > t) continue;
      // A timer tick that lands while the agent is busy is skipped.
      if (!a->busy()) detail::guarded(*a->stats, "timed body", [&] { a->timed_body(*a); });
      while (a->next_fire <= t) a->next_fire += a->period;
    }
  }

  std::optional<TimePoint> next_event_time() const {
    std::optional<TimePoint> next;
    for (const auto& a : agents_) {
      if (a->stopped) continue;
      if (a->continuation && (!next || a->continuation->when < *next)) next = a->continuation->when;
      if (a->timed_body && (!next || a->next_fire < *next)) next = a->next_fire;
    }
    return next;
  }

  Space<Value>& space_;
  std::shared_ptr<VirtualClock> clock_;
  std::vector<std::shared_ptr<Agent>> agents_;
  std::uint64_t seq_ = 0;
};

}  // namespace oneshot
