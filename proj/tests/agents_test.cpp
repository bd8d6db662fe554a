#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <thread>

#include "oneshot/agents.hpp"

namespace {

using namespace oneshot;
using namespace std::chrono_literals;

class QuietLog : public ::testing::Test {
 protected:
  void SetUp() override {
    saved_ = agent_log_sink();
    agent_log_sink() = [this](std::string_view msg) { messages_.emplace_back(msg); };
  }
  void TearDown() override { agent_log_sink() = saved_; }

  LogSink saved_;
  std::vector<std::string> messages_;
};

// ---- threaded host, real time ----

using ThreadedAgents = QuietLog;

TEST_F(ThreadedAgents, TimedAgentRunsAtLeastFiveTimesInHundredMs) {
  Space<int> space;
  ThreadedHost<int> host(space);
  std::atomic<int> ticks{0};
  auto h = host.spawn_timed(10ms, [&](AgentContext&) { ++ticks; });
  std::this_thread::sleep_for(100ms);
  h.stop();
  EXPECT_GE(ticks.load(), 5);
  const int after = ticks.load();
  std::this_thread::sleep_for(30ms);
  EXPECT_EQ(ticks.load(), after);
}

TEST_F(ThreadedAgents, StopIsIdempotent) {
  Space<int> space;
  ThreadedHost<int> host(space);
  auto h = host.spawn_timed(5ms, [](AgentContext&) {});
  h.stop();
  h.stop();
  host.stop_all();
  host.stop_all();
  AgentHandle empty;
  empty.stop();
}

TEST_F(ThreadedAgents, InitRunsBeforeBody) {
  Space<int> space;
  ThreadedHost<int> host(space);
  std::atomic<bool> initialized{false};
  std::atomic<bool> order_ok{true};
  auto h = host.spawn_timed(
      5ms, [&](AgentContext&) { if (!initialized) order_ok = false; },
      [&](AgentContext&) { initialized = true; });
  std::this_thread::sleep_for(30ms);
  h.stop();
  EXPECT_TRUE(initialized);
  EXPECT_TRUE(order_ok);
}

TEST_F(ThreadedAgents, TriggeredAgentSeesEveryWriteWhileIdle) {
  Space<int> space;
  ThreadedHost<int> host(space);
  std::mutex m;
  std::vector<int> seen;
  auto h = host.spawn_triggered(
      "camera",
      [&](AgentContext&, const int& v) {
        std::lock_guard lock(m);
        seen.push_back(v);
      },
      Delivery::kFifo);
  for (int i = 0; i < 20; ++i) {
    space.write("camera", i);
    std::this_thread::sleep_for(2ms);
  }
  const auto deadline = std::chrono::steady_clock::now() + 2s;
  for (;;) {
    {
      std::lock_guard lock(m);
      if (seen.size() == 20 || std::chrono::steady_clock::now() > deadline) break;
    }
    std::this_thread::sleep_for(1ms);
  }
  h.stop();
  std::lock_guard lock(m);
  ASSERT_EQ(seen.size(), 20u);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(seen[i], i);
}

TEST_F(ThreadedAgents, ExceptionsAreCountedAndAgentKeepsRunning) {
  Space<int> space;
  ThreadedHost<int> host(space);
  std::atomic<int> calls{0};
  auto h = host.spawn_timed(5ms, [&](AgentContext&) {
    if (++calls % 2 == 1) throw std::runtime_error("boom");
  });
  std::this_thread::sleep_for(60ms);
  h.stop();
  EXPECT_GE(h.errors(), 1u);
  EXPECT_GE(h.runs(), 1u);
  EXPECT_FALSE(messages_.empty());
}

TEST_F(ThreadedAgents, StopFromInsideBody) {
  Space<int> space;
  ThreadedHost<int> host(space);
  std::atomic<int> runs{0};
  AgentHandle h;
  std::mutex hm;
  {
    std::lock_guard lock(hm);
    h = host.spawn_triggered("k", [&](AgentContext&, const int&) {
      ++runs;
      std::lock_guard lock2(hm);
      h.stop();
    });
  }
  space.write("k", 1);
  std::this_thread::sleep_for(20ms);
  space.write("k", 2);
  std::this_thread::sleep_for(20ms);
  EXPECT_EQ(runs.load(), 1);
  h.stop();
}

TEST_F(ThreadedAgents, FinishAfterKeepsAgentBusy) {
  Space<int> space;
  ThreadedHost<int> host(space);
  std::mutex m;
  std::vector<int> handled;
  auto h = host.spawn_triggered("frame", [&](AgentContext& ctx, const int& v) {
    ctx.finish_after(40ms, [&, v] {
      std::lock_guard lock(m);
      handled.push_back(v);
    });
  });
  space.write("frame", 0);
  std::this_thread::sleep_for(5ms);
  for (int i = 1; i <= 10; ++i) {
    space.write("frame", i);
    std::this_thread::sleep_for(1ms);
  }
  std::this_thread::sleep_for(150ms);
  h.stop();
  std::lock_guard lock(m);
  ASSERT_EQ(handled.size(), 2u);
  EXPECT_EQ(handled[0], 0);
  EXPECT_EQ(handled[1], 10);
}

TEST_F(ThreadedAgents, HostDestructionStopsAgents) {
  Space<int> space;
  std::atomic<int> ticks{0};
  {
    ThreadedHost<int> host(space);
    host.spawn_timed(1ms, [&](AgentContext&) { ++ticks; });
    std::this_thread::sleep_for(10ms);
  }
  const int after = ticks.load();
  std::this_thread::sleep_for(10ms);
  EXPECT_EQ(ticks.load(), after);
}

// ---- manual host, virtual time ----

struct Manual {
  std::shared_ptr<VirtualClock> clock = std::make_shared<VirtualClock>();
  Space<int> space{clock};
  ManualHost<int> host{space, clock};
};

using ManualAgents = QuietLog;

TEST_F(ManualAgents, TimedAgentFiresEveryPeriodFromSpawn) {
  Manual m;
  std::vector<double> at;
  m.host.spawn_timed(seconds(0.1), [&](AgentContext& ctx) { at.push_back(to_seconds(ctx.now())); });
  m.host.run_until(TimePoint(seconds(0.35)));
  ASSERT_EQ(at.size(), 4u);
  for (std::size_t i = 0; i < at.size(); ++i) EXPECT_NEAR(at[i], 0.1 * i, 1e-9);
  EXPECT_NEAR(to_seconds(m.host.now()), 0.35, 1e-9);
}

TEST_F(ManualAgents, TriggeredLatestDropsIntermediateWhileBusy) {
  Manual m;
  std::vector<std::pair<int, double>> done;
  m.host.spawn_triggered("camera", [&](AgentContext& ctx, const int& v) {
    ctx.finish_after(seconds(0.05), [&, v, &ctx2 = ctx] { done.emplace_back(v, to_seconds(ctx2.now())); });
  });
  // A camera writing every 10 ms into an agent that needs 50 ms per frame.
  m.host.spawn_timed(seconds(0.01), [&, i = 0](AgentContext&) mutable { m.space.write("camera", i++); });
  m.host.run_until(TimePoint(seconds(0.205)));
  ASSERT_GE(done.size(), 3u);
  EXPECT_EQ(done[0].first, 0);
  EXPECT_NEAR(done[0].second, 0.05, 1e-9);
  for (std::size_t i = 1; i < done.size(); ++i) {
    EXPECT_GT(done[i].first, done[i - 1].first + 1);
    EXPECT_NEAR(done[i].second - done[i - 1].second, 0.05, 1e-9);
  }
}

TEST_F(ManualAgents, FifoKeepsEveryWrite) {
  Manual m;
  std::vector<int> seen;
  m.host.spawn_triggered("k", [&](AgentContext& ctx, const int& v) {
    ctx.finish_after(seconds(0.1), [&, v] { seen.push_back(v); });
  }, Delivery::kFifo);
  for (int i = 0; i < 5; ++i) m.space.write("k", i);
  m.host.run_until(TimePoint(seconds(1.0)));
  EXPECT_EQ(seen, (std::vector<int>{0, 1, 2, 3, 4}));
}

TEST_F(ManualAgents, ExceptionsCounted) {
  Manual m;
  auto h = m.host.spawn_triggered("k", [](AgentContext&, const int& v) {
    if (v < 0) throw std::invalid_argument("negative");
  }, Delivery::kFifo);
  m.space.write("k", -1);
  m.space.write("k", 1);
  m.host.settle();
  EXPECT_EQ(h.errors(), 1u);
  EXPECT_EQ(h.runs(), 1u);
  ASSERT_EQ(messages_.size(), 1u);
  EXPECT_NE(messages_[0].find("negative"), std::string::npos);
}

TEST_F(ManualAgents, StoppedAgentIsInert) {
  Manual m;
  int runs = 0;
  auto h = m.host.spawn_timed(seconds(0.1), [&](AgentContext&) { ++runs; });
  m.host.run_until(TimePoint(seconds(0.15)));
  h.stop();
  h.stop();
  m.host.run_until(TimePoint(seconds(1.0)));
  EXPECT_EQ(runs, 2);
  EXPECT_TRUE(m.host.idle());
}

TEST_F(ManualAgents, ChainedTriggersSettleAtOneInstant) {
  Manual m;
  std::vector<std::string> order;
  m.host.spawn_triggered("a", [&](AgentContext&, const int& v) {
    order.push_back("a" + std::to_string(v));
    m.space.write("b", v + 1);
  });
  m.host.spawn_triggered("b", [&](AgentContext&, const int& v) { order.push_back("b" + std::to_string(v)); });
  m.space.write("a", 1);
  m.host.settle();
  EXPECT_EQ(order, (std::vector<std::string>{"a1", "b2"}));
  EXPECT_EQ(m.host.now(), TimePoint{});
}

TEST_F(ManualAgents, RunawayFeedbackIsReported) {
  Manual m;
  m.host.spawn_triggered("k", [&](AgentContext&, const int& v) { m.space.write("k", v + 1); });
  m.space.write("k", 0);
  EXPECT_THROW(m.host.settle(), Error);
}

TEST_F(ManualAgents, Deterministic) {
  auto run = [] {
    Manual m;
    std::vector<std::pair<int, long long>> trace;
    m.host.spawn_triggered("x", [&](AgentContext& ctx, const int& v) {
      ctx.finish_after(seconds(0.013 * (v % 3 + 1)),
                       [&, v, &c = ctx] { trace.emplace_back(v, c.now().time_since_epoch().count()); });
    });
    m.host.spawn_timed(seconds(0.007), [&, i = 0](AgentContext&) mutable { m.space.write("x", i++); });
    m.host.run_until(TimePoint(seconds(1.0)));
    return trace;
  };
  EXPECT_EQ(run(), run());
}

}  // namespace
