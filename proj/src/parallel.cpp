#include "gmfg/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace gmfg {

int effective_threads(int requested)
{
    int threads = std::max(1, requested);
    if (const char* env = std::getenv("GMFG_THREADS")) {
        try {
            int cap = std::stoi(env);
            if (cap >= 1) threads = std::min(threads, cap);
        } catch (const std::exception&) {
            // unparsable cap is ignored
        }
    }
    return threads;
}

void parallel_for(std::size_t count, int threads,
                  const std::function<void(std::size_t, std::size_t)>& body)
{
    if (count == 0) return;
    std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, threads)), count);
    if (workers == 1) {
        body(0, count);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    pool.reserve(workers - 1);
    auto chunk = [&](std::size_t w) {
        std::size_t begin = count * w / workers;
        std::size_t end = count * (w + 1) / workers;
        try {
            body(begin, end);
        } catch (...) {
            errors[w] = std::current_exception();
        }
    };
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(chunk, w);
    chunk(0);
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace gmfg
