#pragma once

#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace ccgen {

// Error taxonomy mirrors the CLI exit codes: usage 1, data 2, numerical 3.
class usage_error : public std::runtime_error {
public:
    explicit usage_error(const std::string& msg) : std::runtime_error(msg) {}
};

class data_error : public std::runtime_error {
public:
    explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
};

class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Worker count comes from CCGEN_THREADS; anything else about execution is
// per-call. Falls back to the hardware concurrency.
inline int thread_count() {
    if (const char* env = std::getenv("CCGEN_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<int>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Chunked index-parallel loop. Bodies must write disjoint outputs so the
// result does not depend on scheduling. The first worker exception is
// rethrown on the calling thread.
template <class F>
void parallel_for(std::int64_t n, F&& body) {
    const int workers = thread_count();
    if (workers <= 1 || n < 2 * workers) {
        for (std::int64_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::exception_ptr error;
    std::mutex error_mutex;
    const std::int64_t chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        const std::int64_t lo = w * chunk;
        const std::int64_t hi = std::min<std::int64_t>(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &body, &error, &error_mutex] {
            try {
                for (std::int64_t i = lo; i < hi; ++i) body(i);
            } catch (...) {
                const std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

std::uint64_t fnv1a64(const void* data, std::size_t size);
std::uint64_t fnv1a64_file(const std::filesystem::path& path);

}  // namespace ccgen
