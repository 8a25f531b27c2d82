#pragma once

#include "gridmcp/error.hpp"

#include <condition_variable>
#include <deque>
#include <functional>
#include <future>
#include <mutex>
#include <thread>

namespace gridmcp::mcp {

/// One worker thread draining a bounded FIFO. All engine work goes through
/// here, so tool calls never interleave.
class SerialExecutor {
public:
    explicit SerialExecutor(std::size_t capacity = 64);
    ~SerialExecutor();
    SerialExecutor(const SerialExecutor&) = delete;
    SerialExecutor& operator=(const SerialExecutor&) = delete;

    /// Queues `fn` and blocks until it ran. Called from the worker itself it
    /// runs inline. Throws EngineBusy when the queue is full.
    template <typename F>
    auto run(F&& fn) -> decltype(fn())
    {
        using R = decltype(fn());
        if (std::this_thread::get_id() == worker_.get_id()) {
            return fn();
        }
        auto task = std::make_shared<std::packaged_task<R()>>(std::forward<F>(fn));
        auto future = task->get_future();
        enqueue([task] { (*task)(); });
        return future.get();
    }

    std::size_t capacity() const { return capacity_; }
    std::size_t pending() const;

private:
    void enqueue(std::function<void()> job);
    void loop();

    std::size_t capacity_;
    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<std::function<void()>> queue_;
    bool stopping_ = false;
    std::thread worker_;
};

} // namespace gridmcp::mcp
