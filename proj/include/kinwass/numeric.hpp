#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace kinwass {

// Neumaier variant of Kahan summation; order-dependent but deterministic.
class CompensatedSum {
 public:
  void add(double x);
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

double compensated_sum(const std::vector<double>& xs);

// Shortest round-trip decimal representation.
std::string format_double(double x);

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t h);

// Least-squares line y = a + b x.
struct LinearFit {
  double intercept = 0.0;
  double slope = 0.0;
  double r2 = 0.0;
};
LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y);

// Cumulative trapezoid rule; out[0] = 0.
std::vector<double> cumulative_trapezoid(const std::vector<double>& t,
                                         const std::vector<double>& f);

}  // namespace kinwass

namespace kinwass {

// Runs fn(i) for i in [0, n) on up to `threads` workers, strided by worker id.
// Exceptions are rethrown for the lowest failing index.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

// --threads value, else KINWASS_THREADS, else 1.
int resolve_threads(int requested);

}  // namespace kinwass
