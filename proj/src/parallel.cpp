#include "convexlab/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace convexlab {

namespace {

std::atomic<unsigned> g_threads{0};

unsigned default_threads()
{
    if (const char* env = std::getenv("CONVEXLAB_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v > 0) return static_cast<unsigned>(v);
        } catch (const std::exception&) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace

void set_thread_count(unsigned n) { g_threads.store(n); }

unsigned thread_count()
{
    const unsigned n = g_threads.load();
    return n ? n : default_threads();
}

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body)
{
    if (n == 0) return;
    const std::size_t workers = std::min<std::size_t>(thread_count(), n);
    if (workers <= 1) {
        body(0, n);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            const std::size_t begin = n * w / workers, end = n * (w + 1) / workers;
            pool.emplace_back([&, w, begin, end] {
                try {
                    body(begin, end);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

double ordered_sum(std::span<const double> xs)
{
    double sum = 0.0, comp = 0.0;
    for (double x : xs) {
        const double t = sum + x;
        if (std::abs(sum) >= std::abs(x))
            comp += (sum - t) + x;
        else
            comp += (x - t) + sum;
        sum = t;
    }
    return sum + comp;
}

double weighted_average(std::span<const double> xs, std::span<const double> ws)
{
    if (xs.empty() || xs.size() != ws.size()) throw std::invalid_argument("weighted_average: size mismatch");
    if (std::all_of(xs.begin(), xs.end(), [&](double x) { return x == xs[0]; })) return xs[0];
    std::vector<double> prod(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) prod[i] = xs[i] * ws[i];
    return ordered_sum(prod) / ordered_sum(ws);
}

}  // namespace convexlab
