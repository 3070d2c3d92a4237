#pragma once

#include <condition_variable>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace resiren {

// Bounded fork-join pool. Size is min(hardware, RESIREN_THREADS); the pool is
// created lazily and reused for the whole process (spawning threads per batch
// would dominate desk-scale training steps).
//
// Determinism contract: parallel_for partitions [0, n) into contiguous ranges,
// and every callee writes only to locations owned by its indices. No reduction
// happens inside the pool, so results are bitwise independent of the worker
// count; callers that need sums reduce fixed-size chunks in index order.
class ThreadPool {
public:
    static ThreadPool& instance() {
        static ThreadPool pool;
        return pool;
    }

    std::size_t size() const { return workers_.size() + 1; } // + caller thread

    // fn(begin, end) over a contiguous index range. Calls from inside a pool
    // worker run inline (no nested scheduling, no deadlock).
    void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
        if (n == 0) return;
        const std::size_t parts = std::min(n, size());
        if (parts <= 1 || in_worker()) {
            fn(0, n);
            return;
        }
        const std::size_t base = n / parts, extra = n % parts;
        {
            std::unique_lock lock(mu_);
            jobs_.clear();
            std::size_t begin = 0;
            for (std::size_t p = 0; p < parts; ++p) {
                const std::size_t len = base + (p < extra ? 1 : 0);
                jobs_.push_back({begin, begin + len});
                begin += len;
            }
            fn_ = &fn;
            next_job_ = 1; // job 0 runs on the caller thread
            pending_ = parts - 1;
            ++generation_;
        }
        cv_work_.notify_all();
        fn(jobs_[0].first, jobs_[0].second);
        std::unique_lock lock(mu_);
        cv_done_.wait(lock, [&] { return pending_ == 0; });
        fn_ = nullptr;
    }

private:
    ThreadPool() {
        std::size_t n = std::thread::hardware_concurrency();
        if (n == 0) n = 1;
        if (const char* env = std::getenv("RESIREN_THREADS")) {
            const long v = std::strtol(env, nullptr, 10);
            if (v >= 1) n = static_cast<std::size_t>(v);
        }
        for (std::size_t i = 1; i < n; ++i) workers_.emplace_back([this] { worker_loop(); });
    }

    ~ThreadPool() {
        {
            std::unique_lock lock(mu_);
            stop_ = true;
        }
        cv_work_.notify_all();
        for (auto& t : workers_) t.join();
    }

    static bool& in_worker() {
        thread_local bool flag = false;
        return flag;
    }

    void worker_loop() {
        in_worker() = true;
        std::uint64_t seen = 0;
        for (;;) {
            std::pair<std::size_t, std::size_t> job;
            const std::function<void(std::size_t, std::size_t)>* fn = nullptr;
            {
                std::unique_lock lock(mu_);
                cv_work_.wait(lock, [&] { return stop_ || (fn_ && generation_ != seen && next_job_ < jobs_.size()); });
                if (stop_) return;
                job = jobs_[next_job_++];
                fn = fn_;
                if (next_job_ >= jobs_.size()) seen = generation_;
            }
            (*fn)(job.first, job.second);
            {
                std::unique_lock lock(mu_);
                if (--pending_ == 0) cv_done_.notify_one();
            }
        }
    }

    std::vector<std::thread> workers_;
    std::mutex mu_;
    std::condition_variable cv_work_, cv_done_;
    std::vector<std::pair<std::size_t, std::size_t>> jobs_;
    const std::function<void(std::size_t, std::size_t)>* fn_ = nullptr;
    std::size_t next_job_ = 0, pending_ = 0;
    std::uint64_t generation_ = 0;
    bool stop_ = false;
};

inline void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
    ThreadPool::instance().parallel_for(n, fn);
}

} // namespace resiren
