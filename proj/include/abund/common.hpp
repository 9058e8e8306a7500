// Shared basic types: panel-shaped containers and error classes.
#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace abund {

// Input/validation failure. The CLI maps this to exit status 1.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// n_regions x n_years panel of doubles, year-slice contiguous.
struct Field {
  int n = 0;
  int T = 0;
  std::vector<double> data;

  Field() = default;
  Field(int n_, int T_, double fill = 0.0)
      : n(n_), T(T_), data(static_cast<size_t>(n_) * T_, fill) {}

  double& operator()(int i, int t) { return data[static_cast<size_t>(t) * n + i]; }
  double operator()(int i, int t) const { return data[static_cast<size_t>(t) * n + i]; }
  double* slice(int t) { return data.data() + static_cast<size_t>(t) * n; }
  const double* slice(int t) const { return data.data() + static_cast<size_t>(t) * n; }
  bool empty() const { return data.empty(); }
};

// Integer-valued panel (counts, populations).
struct IntField {
  int n = 0;
  int T = 0;
  std::vector<long long> data;

  IntField() = default;
  IntField(int n_, int T_, long long fill = 0)
      : n(n_), T(T_), data(static_cast<size_t>(n_) * T_, fill) {}

  long long& operator()(int i, int t) { return data[static_cast<size_t>(t) * n + i]; }
  long long operator()(int i, int t) const { return data[static_cast<size_t>(t) * n + i]; }
  bool empty() const { return data.empty(); }
};

// splitmix64 step; used to derive chain/replicate seeds from one base seed.
inline uint64_t mix_seed(uint64_t base, uint64_t stream) {
  uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace abund
