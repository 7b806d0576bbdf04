#include "rpmeas/parallel.hpp"

#include <cstdlib>

namespace rpmeas {

namespace {

int initial_workers() {
  if (const char* env = std::getenv("RPMEAS_WORKERS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1, omp_get_max_threads());
}

int& workers() {
  static int n = initial_workers();
  return n;
}

}  // namespace

int worker_count() { return workers(); }

void set_worker_count(int n) { workers() = std::max(1, n); }

}  // namespace rpmeas
