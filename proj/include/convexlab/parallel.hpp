#pragma once

// Static-chunk parallel loops. Callers write per-index results and reduce
// them afterwards in index order, so outputs do not depend on the worker
// count.

#include <cstddef>
#include <functional>
#include <span>

namespace convexlab {

/// Worker count used by parallel_for; 0 restores the default
/// (CONVEXLAB_THREADS, else hardware concurrency).
void set_thread_count(unsigned n);
unsigned thread_count();

/// Calls body(begin, end) on disjoint chunks covering [0, n).
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

/// Neumaier-compensated sum in index order.
double ordered_sum(std::span<const double> xs);

/// sum w_i x_i / sum w_i in index order; returns x_0 unchanged when all
/// values coincide.
double weighted_average(std::span<const double> xs, std::span<const double> ws);

}  // namespace convexlab
