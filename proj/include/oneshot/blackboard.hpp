// Blackboard ("space") shared by agents.
//
// Every key holds at most one entry: a value, the priority it was written
// with, and an optional expiry. Reads never block and fall back to a default
// once an entry is absent or expired. A write is accepted when the key holds
// no live entry or when its priority is >= the live entry's priority;
// otherwise it is dropped without any side effect. Accepted writes are
// delivered to the key's subscriptions after the entry becomes visible.
//
//   Space<int> space(clock);
//   space.write("a", 2);
//   space.read("b", -1);                                  // -1
//   space.write("c", 2, {.validity = 0.5, .priority = 2.0});
//   space.write("c", 3, {.validity = 2.0, .priority = 1.5}); // rejected

#pragma once

#include <algorithm>
#include <condition_variable>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stop_token>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "oneshot/clock.hpp"
#include "oneshot/error.hpp"

namespace oneshot {

struct WriteOptions {
  // Seconds until the entry disappears; unlimited when unset.
  std::optional<double> validity;
  double priority = 1.0;
};

enum class WriteStatus { kAccepted, kRejected };

// How pending notifications queue up for a subscriber that is still busy.
enum class Delivery {
  kLatest,  // one slot; a newer value replaces an undelivered one
  kFifo,    // every accepted write is kept, in order
};

// Pending notifications for one subscription. Thread-safe.
template <class Value>
class Mailbox {
 public:
  explicit Mailbox(Delivery delivery) : delivery_(delivery) {}

  void push(const Value& value) {
    {
      std::lock_guard lock(mutex_);
      if (delivery_ == Delivery::kLatest) queue_.clear();
      queue_.push_back(value);
    }
    ready_.notify_all();
  }

  std::optional<Value> try_pop() {
    std::lock_guard lock(mutex_);
    if (queue_.empty()) return std::nullopt;
    Value v = std::move(queue_.front());
    queue_.pop_front();
    return v;
  }

  // Blocks until a value arrives or stop is requested.
  std::optional<Value> wait_pop(std::stop_token stop) {
    std::unique_lock lock(mutex_);
    if (!ready_.wait(lock, stop, [&] { return !queue_.empty(); })) return std::nullopt;
    Value v = std::move(queue_.front());
    queue_.pop_front();
    return v;
  }

  std::size_t pending() const {
    std::lock_guard lock(mutex_);
    return queue_.size();
  }

  Delivery delivery() const noexcept { return delivery_; }

 private:
  Delivery delivery_;
  mutable std::mutex mutex_;
  std::condition_variable_any ready_;
  std::deque<Value> queue_;
};

// Owns a mailbox registered with a space; unregisters on destruction.
// The callback runs on whichever thread calls dispatch(), never on the writer's.
template <class Value>
class Subscription {
 public:
  using Callback = std::function<void(const Value&)>;

  Subscription() = default;
  Subscription(std::shared_ptr<Mailbox<Value>> mailbox, Callback callback)
      : mailbox_(std::move(mailbox)), callback_(std::move(callback)) {}

  bool active() const noexcept { return mailbox_ != nullptr; }
  Mailbox<Value>& mailbox() const { return *mailbox_; }
  std::size_t pending() const { return mailbox_ ? mailbox_->pending() : 0; }

  // Runs the callback for every pending value; returns how many ran.
  std::size_t dispatch() {
    std::size_t count = 0;
    while (mailbox_) {
      auto v = mailbox_->try_pop();
      if (!v) break;
      if (callback_) callback_(*v);
      ++count;
    }
    return count;
  }

  void reset() { mailbox_.reset(); }

 private:
  std::shared_ptr<Mailbox<Value>> mailbox_;
  Callback callback_;
};

template <class Value>
class Space {
 public:
  explicit Space(std::shared_ptr<const Clock> clock = std::make_shared<SteadyClock>())
      : clock_(std::move(clock)) {}

  Space(const Space&) = delete;
  Space& operator=(const Space&) = delete;

  const Clock& clock() const noexcept { return *clock_; }
  TimePoint now() const { return clock_->now(); }

  WriteStatus write(std::string_view key, Value value, const WriteOptions& opts = {}) {
    if (key.empty()) throw UsageError("blackboard key is empty");
    if (opts.validity && !(*opts.validity > 0.0)) throw UsageError("validity must be positive");
    std::lock_guard lock(mutex_);
    const TimePoint t = clock_->now();
    auto it = entries_.find(key);
    if (it != entries_.end()) {
      if (!expired(it->second, t) && opts.priority < it->second.priority) return WriteStatus::kRejected;
    }
    std::optional<TimePoint> expiry;
    if (opts.validity) expiry = t + seconds(*opts.validity);
    if (it == entries_.end()) {
      it = entries_.emplace(std::string(key), Entry{std::move(value), opts.priority, expiry}).first;
    } else {
      it->second = Entry{std::move(value), opts.priority, expiry};
    }
    // Delivered under the lock so every subscriber sees one total order per key.
    notify_locked(it->first, it->second.value);
    return WriteStatus::kAccepted;
  }

  // nullopt when the key is absent or expired.
  std::optional<Value> read(std::string_view key) const {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(key);
    if (it == entries_.end() || expired(it->second, clock_->now())) return std::nullopt;
    return it->second.value;
  }

  Value read(std::string_view key, Value fallback) const {
    auto v = read(key);
    return v ? std::move(*v) : std::move(fallback);
  }

  bool contains(std::string_view key) const { return read(key).has_value(); }

  Subscription<Value> subscribe(std::string_view key, typename Subscription<Value>::Callback callback = {},
                                Delivery delivery = Delivery::kFifo) {
    if (key.empty()) throw UsageError("blackboard key is empty");
    auto mailbox = std::make_shared<Mailbox<Value>>(delivery);
    std::lock_guard lock(mutex_);
    auto& list = subscribers_[std::string(key)];
    std::erase_if(list, [](const auto& weak) { return weak.expired(); });
    list.push_back(mailbox);
    return Subscription<Value>(std::move(mailbox), std::move(callback));
  }

  // Drops expired entries. Correctness never depends on calling this.
  std::size_t sweep() {
    std::lock_guard lock(mutex_);
    const TimePoint t = clock_->now();
    return std::erase_if(entries_, [&](const auto& kv) { return expired(kv.second, t); });
  }

  std::size_t stored_entries() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
  }

 private:
  struct Entry {
    Value value;
    double priority;
    std::optional<TimePoint> expiry;
  };

  struct StringHash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const noexcept { return std::hash<std::string_view>{}(s); }
  };

  static bool expired(const Entry& e, TimePoint t) { return e.expiry && t >= *e.expiry; }

  void notify_locked(const std::string& key, const Value& value) {
    auto it = subscribers_.find(key);
    if (it == subscribers_.end()) return;
    for (const auto& weak : it->second) {
      if (auto mailbox = weak.lock()) mailbox->push(value);
    }
  }

  std::shared_ptr<const Clock> clock_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, Entry, StringHash, std::equal_to<>> entries_;
  std::unordered_map<std::string, std::vector<std::weak_ptr<Mailbox<Value>>>, StringHash, std::equal_to<>>
      subscribers_;
};

}  // namespace oneshot
