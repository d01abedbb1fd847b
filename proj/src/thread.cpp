#include "finr/thread.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace finr {

struct ThreadPool::Impl {
    std::vector<std::thread> workers;
    std::mutex mu;
    std::condition_variable cv_work;
    std::condition_variable cv_done;
    bool stop = false;

    // Current job; generation increments per run_chunks call.
    uint64_t generation = 0;
    int64_t n_chunks = 0;
    const std::function<void(int64_t)>* fn = nullptr;
    std::atomic<int64_t> next{0};
    std::atomic<int64_t> done{0};
    std::exception_ptr error;

    void worker_loop() {
        uint64_t seen = 0;
        for (;;) {
            {
                std::unique_lock<std::mutex> lk(mu);
                cv_work.wait(lk, [&] { return stop || generation != seen; });
                if (stop) return;
                seen = generation;
            }
            drain();
        }
    }

    void drain() {
        for (;;) {
            const int64_t c = next.fetch_add(1, std::memory_order_relaxed);
            if (c >= n_chunks) break;
            try {
                (*fn)(c);
            } catch (...) {
                std::lock_guard<std::mutex> lk(mu);
                if (!error) error = std::current_exception();
            }
            if (done.fetch_add(1, std::memory_order_acq_rel) + 1 == n_chunks) {
                std::lock_guard<std::mutex> lk(mu);
                cv_done.notify_all();
            }
        }
    }
};

ThreadPool& ThreadPool::instance() {
    static ThreadPool pool;
    return pool;
}

ThreadPool::ThreadPool() : impl_(new Impl) {
    int n = static_cast<int>(std::thread::hardware_concurrency());
    if (n < 1) n = 1;
    if (const char* env = std::getenv("FINR_THREADS")) {
        const int v = std::atoi(env);
        if (v >= 1) n = v;
    }
    set_num_threads(n);
}

ThreadPool::~ThreadPool() {
    {
        std::lock_guard<std::mutex> lk(impl_->mu);
        impl_->stop = true;
        impl_->cv_work.notify_all();
    }
    for (auto& w : impl_->workers) w.join();
    delete impl_;
}

void ThreadPool::set_num_threads(int n) {
    if (n < 1) n = 1;
    {
        std::lock_guard<std::mutex> lk(impl_->mu);
        impl_->stop = true;
        impl_->cv_work.notify_all();
    }
    for (auto& w : impl_->workers) w.join();
    impl_->workers.clear();
    impl_->stop = false;
    num_threads_ = n;
    // The calling thread participates in run_chunks, so spawn n-1 workers.
    for (int i = 0; i < n - 1; ++i) {
        impl_->workers.emplace_back([this] { impl_->worker_loop(); });
    }
}

void ThreadPool::run_chunks(int64_t n_chunks, const std::function<void(int64_t)>& fn) {
    if (n_chunks <= 0) return;
    if (num_threads_ == 1 || n_chunks == 1) {
        for (int64_t c = 0; c < n_chunks; ++c) fn(c);
        return;
    }
    {
        std::lock_guard<std::mutex> lk(impl_->mu);
        impl_->n_chunks = n_chunks;
        impl_->fn = &fn;
        impl_->next.store(0, std::memory_order_relaxed);
        impl_->done.store(0, std::memory_order_relaxed);
        impl_->error = nullptr;
        ++impl_->generation;
        impl_->cv_work.notify_all();
    }
    impl_->drain();
    {
        std::unique_lock<std::mutex> lk(impl_->mu);
        impl_->cv_done.wait(lk, [&] { return impl_->done.load(std::memory_order_acquire) == impl_->n_chunks; });
        impl_->fn = nullptr;
        if (impl_->error) {
            auto err = impl_->error;
            impl_->error = nullptr;
            std::rethrow_exception(err);
        }
    }
}

}  // namespace finr
