#include "dare/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace dare {

namespace {
std::atomic<int> g_threads{1};
}

void set_num_threads(int n) {
    if (n <= 0) {
        n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    }
    g_threads = n;
}

int num_threads() { return g_threads; }

void parallel_for(int begin, int end, const std::function<void(int)> &body) {
    const int count = end - begin;
    const int workers = std::min(num_threads(), count);
    if (workers <= 1) {
        for (int b = begin; b < end; ++b) {
            body(b);
        }
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        const int lo = begin + count * w / workers;
        const int hi = begin + count * (w + 1) / workers;
        pool.emplace_back([lo, hi, &body] {
            for (int b = lo; b < hi; ++b) {
                body(b);
            }
        });
    }
    for (auto &t : pool) {
        t.join();
    }
}

} // namespace dare
