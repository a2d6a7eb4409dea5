#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace ttpmine {

/// Splits [0, count) into `threads` contiguous chunks and runs
/// `fn(chunk, begin, end)` for each, one thread per chunk. Chunk results must be
/// combined in chunk order by the caller to stay independent of scheduling.
template <typename Fn>
void for_each_chunk(std::size_t count, unsigned threads, Fn&& fn) {
    const std::size_t chunks = std::max<std::size_t>(1, std::min<std::size_t>(threads, count));
    if (chunks == 1) {
        fn(std::size_t{0}, std::size_t{0}, count);
        return;
    }
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(chunks);
    const std::size_t step = (count + chunks - 1) / chunks;
    for (std::size_t c = 0; c < chunks; ++c) {
        const std::size_t begin = std::min(count, c * step);
        const std::size_t end = std::min(count, begin + step);
        workers.emplace_back([&, c, begin, end] {
            try {
                fn(c, begin, end);
            } catch (...) {
                errors[c] = std::current_exception();
            }
        });
    }
    for (auto& worker : workers) {
        worker.join();
    }
    for (const auto& error : errors) {
        if (error) {
            std::rethrow_exception(error);
        }
    }
}

inline std::size_t chunk_count(std::size_t count, unsigned threads) {
    return std::max<std::size_t>(1, std::min<std::size_t>(threads, count));
}

}  // namespace ttpmine
