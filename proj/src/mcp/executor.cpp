#include "gridmcp/mcp/executor.hpp"

namespace gridmcp::mcp {

SerialExecutor::SerialExecutor(std::size_t capacity)
    : capacity_(capacity == 0 ? 1 : capacity)
{
    worker_ = std::thread([this] { loop(); });
}

SerialExecutor::~SerialExecutor()
{
    {
        std::lock_guard lock(mutex_);
        stopping_ = true;
    }
    cv_.notify_all();
    worker_.join();
}

std::size_t SerialExecutor::pending() const
{
    std::lock_guard lock(mutex_);
    return queue_.size();
}

void SerialExecutor::enqueue(std::function<void()> job)
{
    {
        std::lock_guard lock(mutex_);
        if (queue_.size() >= capacity_) {
            throw Error(ErrorCode::EngineBusy, "engine queue is full (" + std::to_string(capacity_) + " pending)");
        }
        queue_.push_back(std::move(job));
    }
    cv_.notify_one();
}

void SerialExecutor::loop()
{
    while (true) {
        std::function<void()> job;
        {
            std::unique_lock lock(mutex_);
            cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
            if (queue_.empty()) {
                return;
            }
            job = std::move(queue_.front());
            queue_.pop_front();
        }
        job();
    }
}

} // namespace gridmcp::mcp
