#pragma once

#include <condition_variable>
#include <deque>
#include <mutex>

namespace cuatree {

// Unbounded multi-producer queue with a blocking receive.
template <class T>
class Channel {
 public:
  void send(T message) {
    {
      std::lock_guard lock(mutex_);
      queue_.push_back(std::move(message));
    }
    ready_.notify_one();
  }

  T receive() {
    std::unique_lock lock(mutex_);
    ready_.wait(lock, [this] { return !queue_.empty(); });
    T message = std::move(queue_.front());
    queue_.pop_front();
    return message;
  }

 private:
  std::mutex mutex_;
  std::condition_variable ready_;
  std::deque<T> queue_;
};

}  // namespace cuatree
