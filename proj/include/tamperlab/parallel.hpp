#pragma once

// Fixed-partition worker pool. Work over [0,n) is split into contiguous
// chunks; every element is produced by exactly one thread running the same
// per-element code as the serial path, so results are identical for any
// thread count (including 1). FORGE_THREADS overrides the worker count.

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace tlab {

class WorkerPool {
public:
    static WorkerPool& instance() {
        static WorkerPool pool;
        return pool;
    }

    std::size_t workers() const { return threads_.size() + 1; }

    // fn(begin, end) over chunked [0, n). Runs inline when n is small or the
    // pool is already in use (nested calls degrade to serial).
    void parallel_for(std::size_t n, std::size_t grain,
                      const std::function<void(std::size_t, std::size_t)>& fn) {
        if (n == 0) return;
        bool expected = false;
        if (workers() == 1 || n <= grain ||
            !active_.compare_exchange_strong(expected, true)) {
            fn(0, n);
            return;
        }
        const std::size_t chunks = std::min(workers(), (n + grain - 1) / grain);
        const std::size_t step = (n + chunks - 1) / chunks;
        {
            std::unique_lock<std::mutex> lk(mu_);
            job_ = [&fn, step, n](std::size_t idx) {
                const std::size_t b = idx * step;
                if (b >= n) return;
                fn(b, std::min(n, b + step));
            };
            jobs_left_ = threads_.size();
            ++generation_;
        }
        cv_.notify_all();
        job_(0);
        {
            std::unique_lock<std::mutex> lk(mu_);
            done_cv_.wait(lk, [this] { return jobs_left_ == 0; });
            job_ = nullptr;
        }
        active_.store(false);
    }

    ~WorkerPool() {
        {
            std::unique_lock<std::mutex> lk(mu_);
            stop_ = true;
            ++generation_;
        }
        cv_.notify_all();
        for (auto& t : threads_) t.join();
    }

private:
    WorkerPool() {
        std::size_t n = std::thread::hardware_concurrency();
        if (const char* env = std::getenv("FORGE_THREADS")) {
            const long v = std::atol(env);
            if (v >= 1) n = static_cast<std::size_t>(v);
        }
        if (n < 1) n = 1;
        for (std::size_t i = 1; i < n; ++i)
            threads_.emplace_back([this, i] { worker_loop(i); });
    }

    void worker_loop(std::size_t idx) {
        std::uint64_t seen = 0;
        for (;;) {
            std::function<void(std::size_t)> job;
            {
                std::unique_lock<std::mutex> lk(mu_);
                cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
                seen = generation_;
                if (stop_) return;
                job = job_;
            }
            if (job) job(idx);
            {
                std::unique_lock<std::mutex> lk(mu_);
                if (--jobs_left_ == 0) done_cv_.notify_all();
            }
        }
    }

    std::vector<std::thread> threads_;
    std::mutex mu_;
    std::condition_variable cv_, done_cv_;
    std::function<void(std::size_t)> job_;
    std::size_t jobs_left_ = 0;
    std::uint64_t generation_ = 0;
    bool stop_ = false;
    std::atomic<bool> active_{false};
};

inline void parallel_for(std::size_t n, std::size_t grain,
                         const std::function<void(std::size_t, std::size_t)>& fn) {
    WorkerPool::instance().parallel_for(n, grain, fn);
}

} // namespace tlab
