#pragma once

#include <condition_variable>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

namespace dpvqa {

// Blocking FIFO with a fixed capacity. close() wakes every waiter; pop()
// then drains the remaining elements and returns nullopt once empty.
template <class V>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

  /// Returns false when the queue was closed before the value could be stored.
  bool push(V value) {
    std::unique_lock<std::mutex> lock(mutex_);
    not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
    if (closed_) return false;
    items_.push_back(std::move(value));
    not_empty_.notify_one();
    return true;
  }

  std::optional<V> pop() {
    std::unique_lock<std::mutex> lock(mutex_);
    not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
    if (items_.empty()) return std::nullopt;
    std::optional<V> out(std::in_place, std::move(items_.front()));
    items_.pop_front();
    not_full_.notify_one();
    return out;
  }

  void close() {
    std::lock_guard<std::mutex> lock(mutex_);
    closed_ = true;
    not_full_.notify_all();
    not_empty_.notify_all();
  }

  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  std::mutex mutex_;
  std::condition_variable not_full_;
  std::condition_variable not_empty_;
  std::deque<V> items_;
  bool closed_ = false;
};

// Produces make(0), make(1), … make(n-1) in index order. Worker w prepares the
// indices congruent to w modulo the worker count into its own bounded queue
// and the consumer visits the queues round-robin, so the output order does
// not depend on scheduling. With zero workers everything runs inline.
template <class V>
class OrderedLoader {
 public:
  OrderedLoader(std::size_t n, std::size_t workers, std::size_t capacity,
                std::function<V(std::size_t)> make)
      : n_(n), make_(std::move(make)) {
    for (std::size_t w = 0; w < workers && w < n; ++w) {
      queues_.push_back(std::make_unique<BoundedQueue<Slot>>(capacity));
    }
    for (std::size_t w = 0; w < queues_.size(); ++w) {
      threads_.emplace_back([this, w] {
        for (std::size_t i = w; i < n_; i += queues_.size()) {
          Slot slot;
          try {
            slot.value = make_(i);
          } catch (...) {
            slot.error = std::current_exception();
          }
          bool failed = static_cast<bool>(slot.error);
          if (!queues_[w]->push(std::move(slot)) || failed) break;
        }
      });
    }
  }

  ~OrderedLoader() {
    for (auto& q : queues_) q->close();
    for (auto& t : threads_) t.join();
  }

  OrderedLoader(const OrderedLoader&) = delete;
  OrderedLoader& operator=(const OrderedLoader&) = delete;

  /// Next value in index order; nullopt after the last one. Rethrows worker errors.
  std::optional<V> next() {
    if (next_ >= n_) return std::nullopt;
    const std::size_t i = next_++;
    if (queues_.empty()) return make_(i);
    auto slot = queues_[i % queues_.size()]->pop();
    if (!slot) return std::nullopt;
    if (slot->error) std::rethrow_exception(slot->error);
    return std::move(slot->value);
  }

 private:
  struct Slot {
    std::optional<V> value;
    std::exception_ptr error;
  };

  std::size_t n_;
  std::size_t next_ = 0;
  std::function<V(std::size_t)> make_;
  std::vector<std::unique_ptr<BoundedQueue<Slot>>> queues_;
  std::vector<std::thread> threads_;
};

}  // namespace dpvqa
