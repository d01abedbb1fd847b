#pragma once

#include <cstdint>
#include <functional>

namespace finr {

// Worker pool for data-parallel kernels. Work is always split into chunks
// whose boundaries depend only on the problem size, never on the worker
// count, and reductions combine chunk partials in chunk order. Results are
// therefore bit-identical for any thread count, including 1.
class ThreadPool {
public:
    static ThreadPool& instance();

    // Number of worker threads (>= 1). Defaults to the hardware count,
    // overridable via the FINR_THREADS environment variable.
    int num_threads() const { return num_threads_; }
    void set_num_threads(int n);

    // Runs fn(chunk_index) for chunk_index in [0, n_chunks); blocks until all
    // chunks complete. Chunks must be independent. Exceptions thrown by fn
    // are rethrown on the calling thread.
    void run_chunks(int64_t n_chunks, const std::function<void(int64_t)>& fn);

    ~ThreadPool();

private:
    ThreadPool();
    struct Impl;
    Impl* impl_;
    int num_threads_ = 1;
};

// Splits [0, n) into fixed chunks of size chunk_size (last chunk short) and
// runs fn(chunk_index, begin, end) on the pool.
template <class Fn>
void parallel_for_chunks(int64_t n, int64_t chunk_size, Fn&& fn) {
    if (n <= 0) return;
    const int64_t n_chunks = (n + chunk_size - 1) / chunk_size;
    if (n_chunks == 1) {
        fn(int64_t{0}, int64_t{0}, n);
        return;
    }
    ThreadPool::instance().run_chunks(n_chunks, [&](int64_t c) {
        const int64_t b = c * chunk_size;
        const int64_t e = b + chunk_size < n ? b + chunk_size : n;
        fn(c, b, e);
    });
}

}  // namespace finr
